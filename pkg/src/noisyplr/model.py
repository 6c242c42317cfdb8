"""
Counts-based logistic likelihood, the unpenalized pilot fit and adaptive
LASSO weights.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .labels import CountVector
from .linalg import DimensionError, as_design, matvec, tmatvec


class SeparationError(RuntimeError):
    """The unpenalized likelihood has no finite minimizer (or looks like it)."""


@dataclass
class Coefficients:
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("coefficients must be finite")

    @property
    def support(self):
        return np.flatnonzero(self.values != 0.0)

    def __len__(self):
        return self.values.size

    def to_json(self):
        return json.dumps({
            "values": [float(v) for v in self.values],
            "support": [int(j) for j in self.support],
            "meta": self.meta,
        }, indent=2, default=_json_default)

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        coef = cls(np.asarray(obj["values"], dtype=float), obj.get("meta", {}))
        if list(coef.support) != list(obj.get("support", coef.support)):
            raise ValueError("support field disagrees with values")
        return coef


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _values(beta):
    return beta.values if isinstance(beta, Coefficients) else np.asarray(beta, dtype=float)


def _counts(S):
    if isinstance(S, CountVector):
        return S.counts.astype(np.float64), S.m
    raise TypeError("S must be a CountVector")


def phi(t, m):
    """m * log(1 + exp(t)), overflow-safe."""
    t = np.asarray(t, dtype=float)
    # equals t + log1p(exp(-t)) for t > 0, so exp never overflows
    out = m * (np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t))))
    return float(out) if out.ndim == 0 else out


def phi_prime(t, m):
    return m * expit(t)


def phi_double_prime(t, m):
    s = expit(t)
    return m * s * (1.0 - s)


def counts_nll(X, S, beta):
    """Negative log-likelihood ``sum_i [phi(x_i'b) - S_i x_i'b]`` of the vote counts."""
    X = as_design(X)
    s, m = _counts(S)
    if s.size != X.n:
        raise DimensionError(f"{s.size} counts for {X.n} rows")
    r = matvec(X, _values(beta))
    return float(np.sum(phi(r, m) - s * r))


def counts_grad(X, S, beta):
    X = as_design(X)
    s, m = _counts(S)
    r = matvec(X, _values(beta))
    return tmatvec(X, phi_prime(r, m) - s)


def penalized_objective(X, S, beta, lam, w):
    w = getattr(w, "w", w)
    b = _values(beta)
    return counts_nll(X, S, b) + lam * float(np.sum(np.asarray(w) * np.abs(b)))


def fit_pilot(X, S, ridge=0.0, max_iter=100, tol_scale=1e-8, sep_norm=1e6):
    """Unpenalized (or lightly ridge-penalized) maximum likelihood fit.

    Damped Newton with step halving. A jitter of 1e-8 is added to the Hessian
    diagonal for numerical stability only; ``ridge`` adds a genuine
    ``ridge/2 * |b|^2`` term to the objective.

    Raises
    ------
    SeparationError
        If the coefficient norm exceeds ``sep_norm`` or Newton stalls, which
        happens when the aggregated labels separate the data. Refit with
        ``ridge=1e-6`` in that case.
    """
    X = as_design(X)
    s, m = _counts(S)
    n, d = X.n, X.d
    tol = tol_scale * (1.0 + m * n)
    beta = np.zeros(d)

    def objective(b):
        r = matvec(X, b)
        return float(np.sum(phi(r, m) - s * r)) + 0.5 * ridge * float(b @ b)

    f = objective(beta)
    for it in range(1, max_iter + 1):
        r = matvec(X, beta)
        g = tmatvec(X, phi_prime(r, m) - s) + ridge * beta
        if np.max(np.abs(g)) <= tol:
            break
        D = phi_double_prime(r, m)
        if X.sparse:
            H = np.asarray((X.data.T @ X.data.multiply(D[:, None])).todense())
        else:
            H = X.data.T @ (X.data * D[:, None])
        H[np.diag_indices_from(H)] += ridge + 1e-8
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta - t * step
            f_cand = objective(cand)
            if f_cand <= f + 1e-12 * abs(f) or t < 1e-10:
                break
            t *= 0.5
        beta, f = cand, f_cand
        if np.linalg.norm(beta) > sep_norm:
            raise SeparationError(
                "pilot coefficients diverge (separated data); refit with ridge=1e-6")
    else:
        r = matvec(X, beta)
        g = tmatvec(X, phi_prime(r, m) - s) + ridge * beta
        if np.max(np.abs(g)) > tol:
            # Newton stalls only on (quasi-)separated problems
            if ridge == 0.0:
                raise SeparationError(
                    "pilot Newton did not reach stationarity; refit with ridge=1e-6")
    # the gradient can underflow before the norm blows up on separated data;
    # at a finite minimizer moving further along the ray never helps
    if ridge == 0.0 and np.any(beta) and objective(2.0 * beta) < f - 1e-12 * max(1.0, abs(f)):
        raise SeparationError("objective keeps decreasing along the fitted direction "
                              "(separated data); refit with ridge=1e-6")
    return Coefficients(beta, {"pilot": True, "ridge": ridge, "iterations": it})


def fit_pilot_with_fallback(X, S, ridge=1e-6):
    """:func:`fit_pilot`, refitting with a tiny ridge penalty on separation."""
    try:
        return fit_pilot(X, S)
    except SeparationError:
        coef = fit_pilot(X, S, ridge=ridge, max_iter=200)
        coef.meta["ridge_fallback"] = True
        return coef


@dataclass
class AdaptiveWeights:
    w: np.ndarray
    gamma: float
    pilot: Coefficients
    cap: float


def adaptive_weights(pilot, gamma=1.0, cap=1e8, unpenalized=()):
    """Weights ``min(|pilot_j|^-gamma, cap)``; indices in ``unpenalized`` get 0."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not isinstance(pilot, Coefficients):
        pilot = Coefficients(pilot)
    a = np.abs(pilot.values)
    with np.errstate(divide="ignore", over="ignore"):
        w = np.where(a > 0, a ** (-gamma), np.inf)
    w = np.minimum(w, cap)
    w[list(unpenalized)] = 0.0
    return AdaptiveWeights(w, gamma, pilot, cap)
