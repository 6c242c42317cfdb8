"""
LIBSVM text datasets, train/test splits, CSV/JSON outputs and run manifests.
"""

import csv
import json
import os
import platform
import sys
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import __version__
from .linalg import DesignMatrix

OUTPUT_ENV = "NOISYPLR_OUTPUT_DIR"


class LibsvmFormatError(ValueError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass
class Dataset:
    X: DesignMatrix
    y: np.ndarray

    @property
    def n(self):
        return self.X.n

    def take(self, index):
        return Dataset(self.X.take(index), self.y[np.asarray(index)])


def parse_libsvm(stream, dims=None):
    """Parse ``label idx:val ...`` lines (1-based, strictly increasing indices).

    Labels greater than zero map to 1, all others to 0. The column count is
    the largest index seen unless ``dims`` is given.
    """
    if isinstance(stream, (str, os.PathLike)):
        with open(stream) as fh:
            return parse_libsvm(fh, dims)
    labels, indptr, indices, values = [], [0], [], []
    max_idx = 0
    for lineno, line in enumerate(stream, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmFormatError(lineno, f"non-numeric label {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmFormatError(lineno, f"expected index:value, got {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmFormatError(lineno, f"non-numeric entry {tok!r}") from None
            if idx <= prev:
                raise LibsvmFormatError(lineno, f"index {idx} not strictly increasing")
            if not np.isfinite(val):
                raise LibsvmFormatError(lineno, f"non-finite value {val_s!r}")
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        max_idx = max(max_idx, prev)
        labels.append(1 if label > 0 else 0)
        indptr.append(len(indices))
    if not labels:
        raise ValueError("no rows in LIBSVM input")
    d = max_idx if dims is None else int(dims)
    if d < max_idx:
        raise ValueError(f"dims={dims} smaller than largest feature index {max_idx}")
    X = sp.csr_matrix((np.asarray(values, float), np.asarray(indices, np.int64),
                       np.asarray(indptr, np.int64)), shape=(len(labels), d))
    return Dataset(DesignMatrix(X), np.asarray(labels, dtype=np.int64))


def write_libsvm(stream, X, y):
    """Write a dataset in LIBSVM format with 17 significant digits."""
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, "w") as fh:
            return write_libsvm(fh, X, y)
    X = X if isinstance(X, DesignMatrix) else DesignMatrix(X)
    M = sp.csr_matrix(X.data)
    for i in range(M.shape[0]):
        lo, hi = M.indptr[i], M.indptr[i + 1]
        feats = " ".join(f"{j + 1}:{v:.17g}" for j, v in zip(M.indices[lo:hi], M.data[lo:hi]))
        stream.write(f"{'+1' if y[i] > 0 else '-1'} {feats}".rstrip() + "\n")


def split_indices(n, n_train, seed):
    """Seeded uniform split of ``range(n)`` into sorted train and test indices."""
    if not 0 < n_train < n:
        raise ValueError(f"n_train must lie in (0, {n}), got {n_train}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_train_test(data, n_train, seed):
    """Seeded uniform split without replacement into train and test sets."""
    tr, te = split_indices(data.n, n_train, seed)
    return data.take(tr), data.take(te)


def output_dir(path=None):
    path = path or os.environ.get(OUTPUT_ENV) or "runs"
    os.makedirs(path, exist_ok=True)
    return path


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_default)
        fh.write("\n")


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        from dataclasses import asdict
        return asdict(o)
    return str(o)


def write_manifest(outdir, command, config, seeds, extra=None):
    """Record everything needed to re-run a command bit-identically."""
    import scipy
    manifest = {
        "command": command,
        "argv": sys.argv,
        "config": config,
        "seeds": seeds,
        "versions": {
            "noisyplr": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    write_json(os.path.join(outdir, "manifest.json"), manifest)
    return manifest
