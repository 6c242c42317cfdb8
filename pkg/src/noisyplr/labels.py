"""
Posterior-driven manual labels: single expert, m experts (Multinomial), and
overdispersed experts (Dirichlet-Multinomial, which for two classes is the
Beta-Binomial).

Vote counts are stored as the number of experts voting class 1 together with
the number of experts ``m``; truth labels are the ``m = 1`` case.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import expit

from .linalg import as_design, matvec

#: rows per derived generator when drawing counts for a whole dataset


@dataclass(frozen=True)
class PosteriorPair:
    p1: float

    def __post_init__(self):
        if not 0.0 <= self.p1 <= 1.0:
            raise ValueError(f"p1={self.p1} outside [0, 1]")

    @property
    def p2(self):
        return 1.0 - self.p1


@dataclass(frozen=True)
class Truth:
    m: int = 1


@dataclass(frozen=True)
class Multinomial:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")


@dataclass(frozen=True)
class DirichletMultinomial:
    m: int
    alpha0: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")


NoiseModel = Union[Truth, Multinomial, DirichletMultinomial]


@dataclass
class CountVector:
    """Votes for class 1 per item, out of ``m`` experts."""

    counts: np.ndarray
    m: int
    imputed: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.counts.size and (self.counts.min() < 0 or self.counts.max() > self.m):
            raise ValueError(f"counts must lie in [0, {self.m}]")
        if self.imputed is not None:
            self.imputed = np.asarray(self.imputed, dtype=bool).reshape(-1)
            if self.imputed.shape != self.counts.shape:
                raise ValueError("imputed flags must match counts")

    def __len__(self):
        return self.counts.size

    @classmethod
    def from_labels(cls, y):
        """Truth labels in {0, 1} as an ``m = 1`` count vector."""
        return cls(np.asarray(y, dtype=np.int64), 1)

    def take(self, index):
        imp = None if self.imputed is None else self.imputed[index]
        return CountVector(self.counts[index], self.m, imp)

    def concat(self, other):
        if other.m != self.m:
            raise ValueError("cannot concatenate counts with different m")
        a = np.zeros(len(self), bool) if self.imputed is None else self.imputed
        b = np.zeros(len(other), bool) if other.imputed is None else other.imputed
        return CountVector(np.concatenate([self.counts, other.counts]), self.m,
                           np.concatenate([a, b]))


def sigmoid(t):
    return expit(t)


def posterior(x, beta):
    """Posterior of class 1 for one feature vector."""
    return PosteriorPair(float(expit(np.dot(x, beta))))


def label_error_prob(p):
    """Probability that a label drawn from the posterior disagrees with the truth."""
    p1 = p.p1 if isinstance(p, PosteriorPair) else np.asarray(p, dtype=float)
    return 1.0 - p1 ** 2 - (1.0 - p1) ** 2


def entropy(p):
    """Binary entropy in bits, with 0 log 0 = 0."""
    p1 = p.p1 if isinstance(p, PosteriorPair) else np.asarray(p, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    out = np.zeros_like(p1)
    for q in (p1, 1.0 - p1):
        nz = q > 0
        out[nz] -= q[nz] * np.log2(q[nz])
    return float(out) if out.ndim == 0 else out


def moments(m, alpha0, p1):
    """Mean and variance of the class-1 vote count under the Dirichlet-Multinomial."""
    if m < 1 or not alpha0 > 0:
        raise ValueError("need m >= 1 and alpha0 > 0")
    mean = m * p1
    var = m * p1 * (1.0 - p1) * (m + alpha0) / (1.0 + alpha0)
    return mean, var


def _beta_draw(rng, a, b, p1):
    # Beta(a, b) as Gamma(a) / (Gamma(a) + Gamma(b)). For tiny shapes both gammas
    # underflow to zero; the limiting law then puts mass p1 at 1 and 1 - p1 at 0.
    ga = np.where(a > 0, rng.standard_gamma(np.maximum(a, 1e-300)), 0.0)
    gb = np.where(b > 0, rng.standard_gamma(np.maximum(b, 1e-300)), 0.0)
    tot = ga + gb
    u = rng.random(np.shape(p1))
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(tot > 0, ga / np.where(tot > 0, tot, 1.0), (u < p1).astype(float))
    return q


def draw_counts(p, model, rng, label=None):
    """Draw the class-1 vote count(s) for posterior(s) ``p``.

    ``p`` may be a :class:`PosteriorPair`, a float, or an array of class-1
    probabilities; the result has the matching shape. The ``Truth`` model
    needs ``label`` and returns ``m * label``.
    """
    p1 = p.p1 if isinstance(p, PosteriorPair) else p
    p1 = np.asarray(p1, dtype=float)
    if isinstance(model, Truth):
        if label is None:
            raise ValueError("the Truth noise model needs the true label")
        out = model.m * np.asarray(label, dtype=np.int64)
    elif isinstance(model, Multinomial):
        out = rng.binomial(model.m, np.clip(p1, 0.0, 1.0))
    elif isinstance(model, DirichletMultinomial):
        q = _beta_draw(rng, model.alpha0 * p1, model.alpha0 * (1.0 - p1), p1)
        out = rng.binomial(model.m, np.clip(q, 0.0, 1.0))
    else:
        raise TypeError(f"unknown noise model {model!r}")
    out = np.asarray(out, dtype=np.int64)
    return int(out) if out.ndim == 0 else out


def row_generator(seed, row):
    """Generator for absolute row ``row``, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(row,)))


def draw_counts_rows(p1, model, seed, labels=None, row_offset=0):
    """Draw counts for consecutive rows starting at absolute index ``row_offset``.

    Every row has its own generator derived from ``seed`` and its absolute
    index, so a row's draw does not depend on how rows are chunked, on the
    order chunks are processed, or on the posteriors of other rows.
    """
    p1 = np.asarray(p1, dtype=float).reshape(-1)
    n = p1.size
    if isinstance(model, Truth):
        if labels is None:
            raise ValueError("the Truth noise model needs the true labels")
        return model.m * np.asarray(labels, dtype=np.int64).reshape(-1)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = draw_counts(p1[i], model, row_generator(seed, row_offset + i))
    return out


def generate_dataset_counts(X, beta_ref, model, seed, labels=None, row_offset=0):
    """Simulate expert vote counts for every row of ``X`` from ``beta_ref`` posteriors."""
    X = as_design(X)
    beta_ref = getattr(beta_ref, "values", beta_ref)
    p1 = expit(matvec(X, beta_ref))
    counts = draw_counts_rows(p1, model, seed, labels=labels, row_offset=row_offset)
    return CountVector(counts, model.m)


def impute_missing(X_missing, beta_fit, model, seed, row_offset=0):
    """Fill unlabeled rows with simulated votes from a fitted coefficient vector."""
    X_missing = as_design(X_missing)
    if X_missing.n == 0:
        return CountVector(np.zeros(0, np.int64), model.m, np.zeros(0, bool))
    if isinstance(model, Truth):
        raise ValueError("cannot impute with the Truth model: no labels exist")
    cv = generate_dataset_counts(X_missing, beta_fit, model, seed, row_offset=row_offset)
    cv.imputed = np.ones(len(cv), dtype=bool)
    return cv


def write_counts(path, cv):
    with open(path, "w") as fh:
        fh.write(f"m={cv.m}\n")
        for c in cv.counts:
            fh.write(f"{int(c)}\n")


def read_counts(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("m="):
            raise ValueError(f"{path}: expected header 'm=<int>', got {header!r}")
        m = int(header[2:])
        counts = [int(line) for line in fh if line.strip()]
    return CountVector(np.asarray(counts, dtype=np.int64), m)
