"""
Dense / CSR design matrices and the few products the ADMM solvers need.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    pass


class DesignMatrix:
    """Row-major feature matrix, either a dense ndarray or a CSR matrix.

    The wrapped array is treated as read-only after construction, so one
    instance can be shared between worker threads.
    """

    def __init__(self, data, check=True):
        if isinstance(data, DesignMatrix):
            data = data.data
        if sp.issparse(data):
            data = sp.csr_matrix(data, dtype=np.float64)
            if not data.has_sorted_indices:
                data = data.sorted_indices()
        else:
            data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
            if data.ndim != 2:
                raise DimensionError(f"design matrix must be 2-D, got shape {data.shape}")
        self.data = data
        if check:
            self.validate()

    @property
    def sparse(self):
        return sp.issparse(self.data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def validate(self):
        if self.sparse:
            X = self.data
            if len(X.indptr) != X.shape[0] + 1 or X.indptr[-1] != X.nnz:
                raise ValueError("inconsistent CSR row offsets")
            if not np.all(np.isfinite(X.data)):
                raise ValueError("design matrix contains non-finite values")
            if X.nnz and X.indices.max() >= X.shape[1]:
                raise ValueError("column index out of range")
            for i in range(X.shape[0]):
                cols = X.indices[X.indptr[i]:X.indptr[i + 1]]
                if cols.size > 1 and np.any(np.diff(cols) <= 0):
                    raise ValueError(f"row {i}: column indices not strictly increasing")
        elif not np.all(np.isfinite(self.data)):
            raise ValueError("design matrix contains non-finite values")

    def rows(self, start, stop):
        """View of rows ``[start, stop)`` as a new DesignMatrix (no copy for dense)."""
        return DesignMatrix(self.data[start:stop], check=False)

    def take(self, index):
        return DesignMatrix(self.data[np.asarray(index)], check=False)

    def toarray(self):
        return self.data.toarray() if self.sparse else np.array(self.data)

    def column_stack_ones(self):
        """Return a copy with a trailing constant-1 column (intercept)."""
        if self.sparse:
            ones = sp.csr_matrix(np.ones((self.n, 1)))
            return DesignMatrix(sp.hstack([self.data, ones], format="csr"), check=False)
        return DesignMatrix(np.hstack([self.data, np.ones((self.n, 1))]), check=False)

    def __repr__(self):
        kind = "csr" if self.sparse else "dense"
        return f"DesignMatrix(n={self.n}, d={self.d}, {kind})"


def as_design(X):
    return X if isinstance(X, DesignMatrix) else DesignMatrix(X)


def matvec(X, beta):
    """Compute ``X @ beta``."""
    X = as_design(X)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (X.d,):
        raise DimensionError(f"beta has shape {beta.shape}, expected ({X.d},)")
    return np.asarray(X.data @ beta)


def tmatvec(X, z):
    """Compute ``X.T @ z``."""
    X = as_design(X)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (X.n,):
        raise DimensionError(f"z has shape {z.shape}, expected ({X.n},)")
    return np.asarray(X.data.T @ z)


@dataclass
class SpectralEstimate:
    value: float
    iterations: int
    converged: bool


def estimate_eta(X, mu=1.0, tol=1e-6, safety=1.01, max_iter=1000, seed=0):
    """Upper estimate of the largest eigenvalue of ``mu * X.T @ X``.

    Power iteration on ``b -> mu X^T (X b)`` from a seeded random unit vector,
    stopping once the Rayleigh quotient changes by at most ``tol`` relative.
    The returned value is the final Rayleigh quotient times ``safety``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if safety < 1:
        raise ValueError("safety must be >= 1")
    X = as_design(X)
    if X.n == 0 or X.d == 0:
        return SpectralEstimate(0.0, 0, True)

    rng = np.random.default_rng(seed)
    b = rng.standard_normal(X.d)
    b /= np.linalg.norm(b)
    rq = 0.0
    for it in range(1, max_iter + 1):
        Ab = mu * tmatvec(X, matvec(X, b))
        rq_new = float(b @ Ab)
        norm = np.linalg.norm(Ab)
        if norm == 0.0:
            return SpectralEstimate(0.0, it, True)
        b = Ab / norm
        if it > 1 and abs(rq_new - rq) <= tol * abs(rq_new):
            return SpectralEstimate(safety * rq_new, it, True)
        rq = rq_new
    return SpectralEstimate(safety * rq, max_iter, False)
