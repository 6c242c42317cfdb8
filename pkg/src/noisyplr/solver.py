"""
Linearized ADMM for adaptive-LASSO logistic regression on vote counts.

The problem ``min sum_i [phi(r_i) - S_i r_i] + lam * |w * beta|_1`` subject to
``r = X beta`` is split into a linearized beta step (a weighted soft-threshold),
a linearized closed-form r step and a dual ascent step on ``u``.
"""

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .labels import CountVector
from .linalg import as_design, estimate_eta, matvec, tmatvec
from .model import Coefficients, phi, phi_double_prime, phi_prime


class EtaTooSmallError(RuntimeError):
    pass


@dataclass
class AdmmConfig:
    """Solver parameters. ``mu=None`` means ``mu_per_expert * m``; ``eta=None``
    means the spectral bound of ``mu X^T X`` times ``eta_safety``."""

    mu: Optional[float] = None
    c0: float = 1e-2
    eta: Optional[float] = None
    eps_abs: float = 1e-6
    eps_rel: float = 1e-5
    max_iter: int = 5000
    eta_safety: float = 1.01
    keep_iterates: bool = False
    mu_per_expert: float = 1e-2

    def __post_init__(self):
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def resolved(self, X, m=1):
        """Copy with ``mu`` and ``eta`` filled in for data ``X`` with ``m`` experts."""
        cfg = self
        if cfg.mu is None:
            cfg = replace(cfg, mu=cfg.mu_per_expert * m)
        if cfg.eta is None:
            est = estimate_eta(X, cfg.mu, safety=cfg.eta_safety)
            cfg = replace(cfg, eta=est.value if est.value > 0 else 1.0)
        return cfg


@dataclass
class AdmmState:
    beta: np.ndarray
    r: np.ndarray
    u: np.ndarray
    k: int = 0

    @classmethod
    def zeros(cls, n, d):
        return cls(np.zeros(d), np.zeros(n), np.zeros(n), 0)

    def copy(self):
        return AdmmState(self.beta.copy(), self.r.copy(), self.u.copy(), self.k)


@dataclass
class IterationTrace:
    primal_res: list = field(default_factory=list)
    dual_res: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    h_step: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    converged: bool = False
    final_state: Optional[AdmmState] = None
    eta: Optional[float] = None
    G: Optional[int] = None
    eta_g: Optional[list] = None

    @property
    def n_iter(self):
        return len(self.primal_res)

    def rows(self):
        for k in range(self.n_iter):
            yield k + 1, self.primal_res[k], self.dual_res[k], self.objective[k], self.h_step[k]

    def to_csv(self, path, extra=None):
        """Write ``iter, primal_res, dual_res, objective, h_step`` (+ extra constant columns).

        Traces from the parallel solver also get a ``G`` column.
        """
        extra = dict(extra or {})
        if self.G is not None:
            extra.setdefault("G", self.G)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iter", "primal_res", "dual_res", "objective", "h_step", *extra])
            for row in self.rows():
                wr.writerow([row[0], *(repr(float(v)) for v in row[1:]), *extra.values()])


def soft_threshold(z, tau):
    """sign(z) * max(|z| - tau, 0), elementwise; emits exact zeros."""
    z = np.asarray(z, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("thresholds must be nonnegative")
    # + 0.0 turns -0.0 into 0.0
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0) + 0.0


def _weights(w):
    return np.asarray(getattr(w, "w", w), dtype=float)


def beta_update(state, X, config, lam, w):
    mu, eta = config.mu, config.eta
    xi = mu * tmatvec(X, matvec(X, state.beta) - state.r - state.u / mu) / eta
    return central_beta_step(state.beta, xi, lam, w, eta)


def central_beta_step(beta, xi_sum, lam, w, eta):
    """Weighted soft-threshold of ``beta - xi_sum`` at level ``lam * w / eta``."""
    return soft_threshold(beta - xi_sum, lam * _weights(w) / eta)


def _r_closed_form(r, target, s, m, mu, c0):
    # target = X beta_new - u / mu
    p = expit(r)
    curv = m * p * (1.0 - p) + c0
    return (mu * target + curv * r - m * p + s) / (curv + mu)


def r_update(state, X, S, config, beta_new):
    target = matvec(X, beta_new) - state.u / config.mu
    return _r_closed_form(state.r, target, S.counts.astype(float), S.m, config.mu, config.c0)


def u_update(state, X, config, beta_new, r_new):
    return state.u - config.mu * (matvec(X, beta_new) - r_new)


def h_norm_sq(d_beta, d_Xbeta, d_r, d_u, config):
    eta, mu, c0 = config.eta, config.mu, config.c0
    b_part = eta * float(d_beta @ d_beta) - mu * float(d_Xbeta @ d_Xbeta)
    q = b_part + (mu + c0) * float(d_r @ d_r) + float(d_u @ d_u) / mu
    scale = eta * float(d_beta @ d_beta) + (mu + c0) * float(d_r @ d_r) + float(d_u @ d_u) / mu
    if b_part < -1e-10 * max(scale, 1e-300):
        raise EtaTooSmallError(
            "eta I - mu X^T X is not positive semidefinite along this step; "
            "recompute eta with a larger safety factor")
    return max(q, 0.0)


def h_norm_step(state_k, state_k1, X, config):
    """H-norm of the difference between two iterates."""
    db = state_k.beta - state_k1.beta
    return float(np.sqrt(h_norm_sq(db, matvec(X, db), state_k.r - state_k1.r,
                                   state_k.u - state_k1.u, config)))


class _Shard:
    """Rows of the problem owned by one worker; also used (as a single shard) by
    the serial solver so both paths share the same floating-point arithmetic."""

    def __init__(self, X, s, m, r, u):
        self.X = X
        self.s = s
        self.m = m
        self.r = r
        self.u = u
        self.Xb = None

    def start(self, beta, mu, eta):
        """Linearization term ``xi = mu X^T (X beta - r - u / mu) / eta`` at the start."""
        self.Xb = np.asarray(self.X.data @ beta)
        return mu * np.asarray(self.X.data.T @ (self.Xb - self.r - self.u / mu)) / eta

    def step(self, beta_new, mu, c0, eta):
        X = self.X.data
        Xb_new = np.asarray(X @ beta_new)
        r_old, u_old, Xb_old = self.r, self.u, self.Xb
        r_new = _r_closed_form(r_old, Xb_new - u_old / mu, self.s, self.m, mu, c0)
        res = Xb_new - r_new
        u_new = u_old - mu * res
        d_r = r_old - r_new
        stacked = np.column_stack([Xb_new - r_new - u_new / mu, d_r, u_new])
        prods = np.asarray(X.T @ stacked)
        d_Xb = Xb_old - Xb_new
        d_u = u_old - u_new
        stats = np.array([
            res @ res,
            Xb_new @ Xb_new,
            r_new @ r_new,
            np.sum(phi(Xb_new, self.m) - self.s * Xb_new),
            d_Xb @ d_Xb,
            d_r @ d_r,
            d_u @ d_u,
        ])
        self.r, self.u, self.Xb = r_new, u_new, Xb_new
        return mu * prods[:, 0] / eta, prods[:, 1], prods[:, 2], stats


def _check_problem(X, S, w, init):
    X = as_design(X)
    if not isinstance(S, CountVector):
        raise TypeError("S must be a CountVector")
    if len(S) != X.n:
        raise ValueError(f"{len(S)} counts for {X.n} rows")
    w = _weights(w)
    if w.shape != (X.d,):
        raise ValueError("weights must have length d")
    init = AdmmState.zeros(X.n, X.d) if init is None else init
    if init.beta.shape != (X.d,) or init.r.shape != (X.n,) or init.u.shape != (X.n,):
        raise ValueError("initial state has wrong dimensions")
    return X, w, init


def run_iterations(shards, beta0, lam, w, config, n, d, reduce_map=map):
    """Drive the coordinator loop over ``shards`` in fixed ascending order.

    ``reduce_map(fn, shards)`` runs ``fn`` on each shard and returns results in
    shard order; passing an executor's ``map`` runs workers concurrently.
    """
    mu, c0, eta = config.mu, config.c0, config.eta
    pen = lambda b: lam * float(np.sum(w * np.abs(b)))
    trace = IterationTrace(eta=eta)

    xi_sum = _ordered_sum(list(reduce_map(lambda sh: sh.start(beta0, mu, eta), shards)))
    beta = beta0.copy()
    sqrt_n, sqrt_d = np.sqrt(n), np.sqrt(d)
    for k in range(config.max_iter):
        beta_new = central_beta_step(beta, xi_sum, lam, w, eta)
        outs = list(reduce_map(lambda sh: sh.step(beta_new, mu, c0, eta), shards))
        xi_sum = _ordered_sum([o[0] for o in outs])
        xt_dr = _ordered_sum([o[1] for o in outs])
        xt_u = _ordered_sum([o[2] for o in outs])
        st = _ordered_sum([o[3] for o in outs])
        d_beta = beta - beta_new
        primal = np.sqrt(st[0])
        dual = mu * np.linalg.norm(xt_dr)
        b_part = eta * float(d_beta @ d_beta) - mu * st[4]
        scale = eta * float(d_beta @ d_beta) + (mu + c0) * st[5] + st[6] / mu
        if b_part < -1e-10 * max(scale, 1e-300):
            raise EtaTooSmallError(
                "eta I - mu X^T X is not positive semidefinite along this step; "
                "recompute eta with a larger safety factor")
        h2 = max(b_part + (mu + c0) * st[5] + st[6] / mu, 0.0)
        trace.primal_res.append(float(primal))
        trace.dual_res.append(float(dual))
        trace.objective.append(float(st[3]) + pen(beta_new))
        trace.h_step.append(float(np.sqrt(h2)))
        if config.keep_iterates:
            trace.iterates.append(beta_new.copy())
        beta = beta_new
        eps_pri = sqrt_n * config.eps_abs + config.eps_rel * max(np.sqrt(st[1]), np.sqrt(st[2]))
        eps_dual = sqrt_d * config.eps_abs + config.eps_rel * np.linalg.norm(xt_u)
        if primal <= eps_pri and dual <= eps_dual:
            trace.converged = True
            break
    return beta, trace


def _ordered_sum(parts):
    total = parts[0].copy() if isinstance(parts[0], np.ndarray) else parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def solve(X, S, lam, w, config=None, init=None):
    """Fit adaptive-LASSO logistic regression on vote counts by linearized ADMM.

    Parameters
    ----------
    X : DesignMatrix or array_like, shape (n, d)
    S : CountVector
        Class-1 vote counts; truth labels are ``CountVector.from_labels(y)``.
    lam : float
        Penalty level.
    w : AdaptiveWeights or array_like, shape (d,)
    config : AdmmConfig, optional
        ``eta`` is estimated from ``X`` when left as None.
    init : AdmmState, optional
        Starting iterate (default all zeros).

    Returns
    -------
    coef : Coefficients
        Final beta (exact zeros off the support); ``coef.meta`` records
        ``converged``, ``iterations`` and ``lambda``.
    trace : IterationTrace
        Per-iteration residuals, objective and H-norm steps, plus the final
        ``(beta, r, u)`` state for warm starts.
    """
    X, w, init = _check_problem(X, S, w, init)
    config = (config or AdmmConfig()).resolved(X, S.m)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    shard = _Shard(X, S.counts.astype(float), S.m, init.r.copy(), init.u.copy())
    beta, trace = run_iterations([shard], init.beta.copy(), lam, w, config, X.n, X.d)
    trace.final_state = AdmmState(beta, shard.r, shard.u, init.k + trace.n_iter)
    coef = Coefficients(beta, {"lambda": lam, "converged": trace.converged,
                               "iterations": trace.n_iter, "eta": config.eta})
    return coef, trace
