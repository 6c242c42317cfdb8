"""
Regularization path over lambda with warm starts and a high-dimensional BIC
selector.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import as_design
from .model import Coefficients, counts_grad, counts_nll, phi_prime
from .solver import AdmmConfig, solve


def hbic_score(X, S, beta, lam=None):
    """``2/n * NLL + |support| * log(log n) * log(d) / n``.

    ``lam`` is accepted for selector-interface symmetry and not used.
    """
    X = as_design(X)
    n, d = X.n, X.d
    if n <= math.e:
        raise ValueError("HBIC needs n > e (log log n undefined)")
    beta = beta if isinstance(beta, Coefficients) else Coefficients(beta)
    k = beta.support.size
    return 2.0 / n * counts_nll(X, S, beta) + k * math.log(math.log(n)) * math.log(d) / n


def lambda_max(X, S, w):
    """Smallest lambda at which beta = 0 satisfies the optimality conditions.

    Zero-weight (unpenalized) coordinates are ignored.
    """
    w = np.asarray(getattr(w, "w", w), dtype=float)
    g = np.abs(counts_grad(X, S, np.zeros(as_design(X).d)))
    pen = w > 0
    if not np.any(pen):
        raise ValueError("all coordinates are unpenalized")
    return float(np.max(g[pen] / w[pen]))


@dataclass
class TuningResult:
    lambdas: np.ndarray
    scores: np.ndarray
    coefs: list
    iterations: np.ndarray
    converged: np.ndarray
    traces: Optional[list] = field(default=None, repr=False)
    best: int = field(init=False)

    def __post_init__(self):
        # ties go to the larger lambda, i.e. the earlier grid point
        self.best = int(np.argmin(self.scores))

    @property
    def chosen_lambda(self):
        return float(self.lambdas[self.best])

    @property
    def chosen(self):
        return self.coefs[self.best]

    @property
    def total_iterations(self):
        return int(np.sum(self.iterations))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lambda", "score", "support_size", "converged"])
            for lam, sc, cf, cv in zip(self.lambdas, self.scores, self.coefs, self.converged):
                wr.writerow([repr(float(lam)), repr(float(sc)), cf.support.size, bool(cv)])


def lambda_path(X, S, w, config=None, grid_size=20, ratio=1e-4, warm_start=True,
                criterion=hbic_score, solver=solve, lambdas=None):
    """Fit along a log-spaced descending lambda grid and score each fit.

    ``solver`` may be any callable with the signature of
    :func:`noisyplr.solver.solve` (e.g. a partial of
    :func:`noisyplr.parallel.solve_parallel`).
    """
    if grid_size < 2 and lambdas is None:
        raise ValueError("grid_size must be >= 2")
    X = as_design(X)
    config = (config or AdmmConfig()).resolved(X, S.m)
    if lambdas is None:
        lmax = lambda_max(X, S, w)
        if lmax <= 0.0:
            # beta = 0 is optimal for every lambda >= 0; any positive scale will do
            lmax = 1.0
        lambdas = lmax * np.logspace(0.0, math.log10(ratio), grid_size)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda grid must be strictly descending")

    coefs, scores, iters, conv, traces = [], [], [], [], []
    init = None
    for lam in lambdas:
        coef, trace = solver(X, S, lam, w, config, init=init)
        if warm_start:
            init = trace.final_state
        coefs.append(coef)
        scores.append(criterion(X, S, coef, lam))
        iters.append(trace.n_iter)
        conv.append(trace.converged)
        traces.append(trace)
    return TuningResult(lambdas, np.asarray(scores), coefs, np.asarray(iters), np.asarray(conv),
                        traces)
