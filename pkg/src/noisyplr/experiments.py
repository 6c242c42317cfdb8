"""
Simulation harnesses: synthetic data, support-recovery metrics, conditional
error rates and the (asymptotic) relative efficiency of fitting on noisy
expert votes versus truth labels.
"""

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .labels import CountVector, DirichletMultinomial, generate_dataset_counts
from .io import split_indices
from .linalg import DesignMatrix, as_design, matvec
from .model import adaptive_weights, fit_pilot_with_fallback
from .parallel import Shared, SumShards, make_partition, solve_parallel
from .solver import AdmmConfig, solve
from .tuning import lambda_path

log = logging.getLogger(__name__)

BETA_STAR = np.array([3.0, 0.0, 0.0, 1.5, 0.0, 0.0, 7.0, 0.0, 0.0])


@dataclass
class SyntheticSpec:
    n: int
    beta_star: np.ndarray = field(default_factory=lambda: BETA_STAR.copy())
    rho: float = 0.75
    seed: int = 0
    correlation: str = "equi"

    def __post_init__(self):
        self.beta_star = np.asarray(self.beta_star, dtype=float)
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.correlation not in ("equi", "ar1"):
            raise ValueError("correlation must be 'equi' or 'ar1'")

    @property
    def d(self):
        return self.beta_star.size


def gen_features(n, d, rho, rng, correlation="equi"):
    """Standard normal features with pairwise correlation ``rho``
    (``"equi"``) or ``rho**|i-j|`` (``"ar1"``)."""
    if correlation == "equi":
        z0 = rng.standard_normal((n, 1))
        return np.sqrt(rho) * z0 + np.sqrt(1.0 - rho) * rng.standard_normal((n, d))
    Z = rng.standard_normal((n, d))
    X = np.empty_like(Z)
    X[:, 0] = Z[:, 0]
    for j in range(1, d):
        X[:, j] = rho * X[:, j - 1] + np.sqrt(1.0 - rho ** 2) * Z[:, j]
    return X


def gen_synthetic(spec, rng=None):
    """Draw ``(X, y)`` with ``y ~ Bernoulli(sigmoid(x' beta_star))``."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    X = gen_features(spec.n, spec.d, spec.rho, rng, spec.correlation)
    y = (rng.random(spec.n) < expit(X @ spec.beta_star)).astype(np.int64)
    return DesignMatrix(X, check=False), y


def support_metrics(beta_hat, beta_star):
    """False positives, false negatives and l1 error of an estimate."""
    b = getattr(beta_hat, "values", beta_hat)
    b = np.asarray(b, dtype=float)
    bs = np.asarray(beta_star, dtype=float)
    if b.shape != bs.shape:
        raise ValueError("beta_hat and beta_star differ in length")
    fp = int(np.sum((bs == 0) & (b != 0)))
    fn = int(np.sum((bs != 0) & (b == 0)))
    return fp, fn, float(np.sum(np.abs(b - bs)))


ERROR_RULES = ("randomized", "plugin")


def conditional_error(beta, beta_star, X_eval, rule="randomized"):
    """Expected disagreement rate with labels drawn under ``beta_star``.

    ``rule="randomized"`` predicts ``Bernoulli(sigmoid(x' beta))``;
    ``rule="plugin"`` predicts ``1{x' beta > 0}``. Only the plug-in rule is
    minimised at ``beta_star``, so only its excess error is second order in
    ``beta - beta_star``.
    """
    b = np.asarray(getattr(beta, "values", beta), dtype=float)
    t_star = matvec(X_eval, np.asarray(beta_star, dtype=float))
    p_star = expit(t_star)
    if rule == "randomized":
        p_hat = expit(matvec(X_eval, b))
    elif rule == "plugin":
        p_hat = (matvec(X_eval, b) > 0).astype(float)
    else:
        raise ValueError(f"rule must be one of {ERROR_RULES}, got {rule!r}")
    return float(np.mean(p_hat * (1.0 - p_star) + (1.0 - p_hat) * p_star))


def theoretical_are(m, alpha0):
    if m < 1 or not alpha0 > 0:
        raise ValueError("need m >= 1 and alpha0 > 0")
    return m * (1.0 + alpha0) / (m + alpha0)


@dataclass
class FitOptions:
    """How one adaptive-LASSO fit is produced inside an experiment."""

    gamma: float = 1.0
    grid_size: int = 20
    ratio: float = 1e-4
    config: AdmmConfig = field(default_factory=AdmmConfig)
    unpenalized: tuple = ()


def fit_adaptive_lasso(X, S, opts=None, solver=solve):
    """Pilot fit, adaptive weights, warm-started lambda path, HBIC choice."""
    opts = opts or FitOptions()
    pilot = fit_pilot_with_fallback(X, S)
    w = adaptive_weights(pilot, opts.gamma, unpenalized=opts.unpenalized)
    path = lambda_path(X, S, w, opts.config, grid_size=opts.grid_size,
                       ratio=opts.ratio, solver=solver)
    coef = path.chosen
    coef.meta.update({"gamma": opts.gamma, "pilot_ridge_fallback":
                      bool(pilot.meta.get("ridge_fallback", False))})
    return coef, path


@dataclass
class ExperimentReport:
    FP: float
    FN: float
    AE: float
    Ite: float
    wall_time: float
    reps: int
    FP_se: float = 0.0
    FN_se: float = 0.0
    AE_sd: float = 0.0
    Ite_sd: float = 0.0
    wall_time_sd: float = 0.0
    per_rep: Optional[list] = field(default=None, repr=False)

    @classmethod
    def from_reps(cls, rows):
        a = np.asarray(rows, dtype=float)
        reps = a.shape[0]
        sd = a.std(axis=0, ddof=1) if reps > 1 else np.zeros(a.shape[1])
        se = sd / np.sqrt(reps)
        m = a.mean(axis=0)
        return cls(FP=m[0], FN=m[1], AE=m[2], Ite=m[3], wall_time=m[4], reps=reps,
                   FP_se=se[0], FN_se=se[1], AE_sd=sd[2], Ite_sd=sd[3], wall_time_sd=sd[4],
                   per_rep=[tuple(r) for r in rows])


def run_support_recovery(n, reps, seed=0, beta_star=BETA_STAR, rho=0.75, opts=None):
    """FP/FN/AE of HBIC-tuned fits on truth labels over ``reps`` seeded datasets."""
    rows = []
    for rep in range(reps):
        spec = SyntheticSpec(n, beta_star, rho, seed=_rep_seed(seed, rep))
        X, y = gen_synthetic(spec)
        t0 = time.perf_counter()
        coef, path = fit_adaptive_lasso(X, CountVector.from_labels(y), opts)
        dt = time.perf_counter() - t0
        fp, fn, ae = support_metrics(coef, spec.beta_star)
        rows.append((fp, fn, ae, path.iterations[path.best], dt))
    return ExperimentReport.from_reps(rows)


def _rep_seed(seed, rep):
    return int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])


@dataclass
class AreEstimate:
    simulated: float
    theoretical: float
    se: float
    n: int
    m: int
    alpha0: float
    reps: int
    n_eval: int
    excess_truth: float = 0.0
    excess_noisy: float = 0.0
    flagged: bool = False
    per_rep: Optional[list] = field(default=None, repr=False)

    def as_row(self):
        row = asdict(self)
        row.pop("per_rep")
        return row


def ratio_of_means(a, b):
    """Ratio ``mean(a) / mean(b)`` with its delta-method standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = a.size
    ma, mb = a.mean(), b.mean()
    ratio = ma / mb
    if k < 2:
        return ratio, float("nan")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    cab = np.cov(a, b, ddof=1)[0, 1]
    var = (va / mb ** 2 + ma ** 2 * vb / mb ** 4 - 2 * ma * cab / mb ** 3) / k
    return float(ratio), float(np.sqrt(max(var, 0.0)))


def simulate_are(n, m, alpha0, reps, beta_star=BETA_STAR, rho=0.75, seed=0,
                 opts=None, n_eval=100_000):
    """Monte Carlo relative efficiency of noisy-vote fits versus truth-label fits.

    Each replicate draws ``(X, y)``, fits on ``y`` and on Dirichlet-Multinomial
    votes generated from the ``beta_star`` posteriors of the same ``X``, and
    records both excess conditional error rates on a shared evaluation design.
    The estimate is the ratio of the mean excess errors (truth / noisy).
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    beta_star = np.asarray(beta_star, dtype=float)
    model = DirichletMultinomial(m, alpha0)
    eval_rng = np.random.default_rng(_rep_seed(seed, 10**9))
    X_eval = DesignMatrix(gen_features(n_eval, beta_star.size, rho, eval_rng), check=False)
    err_star = conditional_error(beta_star, beta_star, X_eval)

    exc_t, exc_s, rows = [], [], []
    for rep in range(reps):
        rseed = _rep_seed(seed, rep)
        X, y = gen_synthetic(SyntheticSpec(n, beta_star, rho, seed=rseed))
        coef_t, _ = fit_adaptive_lasso(X, CountVector.from_labels(y), opts)
        S = generate_dataset_counts(X, beta_star, model, seed=rseed + 1)
        coef_s, _ = fit_adaptive_lasso(X, S, opts)
        et = conditional_error(coef_t, beta_star, X_eval) - err_star
        es = conditional_error(coef_s, beta_star, X_eval) - err_star
        exc_t.append(et)
        exc_s.append(es)
        rows.append((et, es))
    ratio, se = ratio_of_means(exc_t, exc_s)
    flagged = not np.mean(exc_s) > 0
    if flagged:
        warnings.warn(f"non-positive mean excess error for noisy fits (m={m}, "
                      f"alpha0={alpha0}, n={n}); ARE estimate is not meaningful")
    return AreEstimate(ratio, theoretical_are(m, alpha0), se, n, m, alpha0, reps, n_eval,
                       float(np.mean(exc_t)), float(np.mean(exc_s)), flagged, rows)


def run_table_are(grid, reps, seed=0, opts=None, n_eval=100_000, progress=None):
    """One :class:`AreEstimate` row per ``(m, alpha0, n)`` cell."""
    if not grid:
        raise ValueError("empty grid")
    out = []
    for m, alpha0, n in grid:
        est = simulate_are(n, m, alpha0, reps, seed=seed, opts=opts, n_eval=n_eval)
        if progress:
            progress(est)
        out.append(est)
    return out


def run_parallel_bench(n, Gs, reps, eta="shared", seed=0, beta_star=BETA_STAR, rho=0.75,
                       opts=None, keep_iterates=False):
    """FP/FN/AE/Ite/time of the parallel solver for each worker count.

    Per replicate the penalty level is chosen once by HBIC on a serial path;
    every ``G`` then solves at that level from a zero start. Returns a dict
    ``G -> ExperimentReport`` and, if ``keep_iterates``, the beta iterates of
    each run under ``"iterates"`` (keyed by ``(rep, G)``).
    """
    opts = opts or FitOptions()
    reports, iterates = {}, {}
    rows = {G: [] for G in Gs}
    for rep in range(reps):
        spec = SyntheticSpec(n, beta_star, rho, seed=_rep_seed(seed, rep))
        X, y = gen_synthetic(spec)
        S = CountVector.from_labels(y)
        pilot = fit_pilot_with_fallback(X, S)
        w = adaptive_weights(pilot, opts.gamma)
        cfg = opts.config.resolved(X, S.m)
        path = lambda_path(X, S, w, cfg, grid_size=opts.grid_size, ratio=opts.ratio)
        lam = path.chosen_lambda
        cfg_run = AdmmConfig(**{**asdict(cfg), "keep_iterates": keep_iterates})
        for G in Gs:
            mode = Shared(cfg.eta) if eta == "shared" else SumShards()
            part = make_partition(X.n, G)
            t0 = time.perf_counter()
            coef, trace = solve_parallel(X, S, lam, w, cfg_run, part, mode)
            dt = time.perf_counter() - t0
            fp, fn, ae = support_metrics(coef, beta_star)
            rows[G].append((fp, fn, ae, trace.n_iter, dt))
            if keep_iterates:
                iterates[(rep, G)] = trace.iterates
            log.info("rep %d G=%d: ite=%d time=%.2fs", rep, G, trace.n_iter, dt)
    for G in Gs:
        reports[G] = ExperimentReport.from_reps(rows[G])
    if keep_iterates:
        reports["iterates"] = iterates
    return reports


def coefficient_curves(n, settings, reps, seed=0, beta_star=BETA_STAR, rho=0.75, opts=None):
    """Mean HBIC-tuned estimates on Dirichlet-Multinomial votes for each ``(m, alpha0)``."""
    out = []
    for m, alpha0 in settings:
        est = np.zeros(len(beta_star))
        for rep in range(reps):
            rseed = _rep_seed(seed, rep)
            X, _ = gen_synthetic(SyntheticSpec(n, beta_star, rho, seed=rseed))
            S = generate_dataset_counts(X, beta_star, DirichletMultinomial(m, alpha0), rseed + 1)
            coef, _ = fit_adaptive_lasso(X, S, opts)
            est += coef.values
        out.append((m, alpha0, est / reps))
    return out


def real_data_are(X, y, n_train, cells, reps, seed=0, opts=None, G=1):
    """Relative efficiency on a labelled dataset.

    The reference coefficients are the pilot fit on the full data. Each
    replicate re-splits the data, fits on the observed training labels and on
    simulated votes, and scores excess conditional error on the test rows.
    """
    X = as_design(X)
    y = np.asarray(y, dtype=np.int64)
    opts = opts or FitOptions()
    beta_ref = fit_pilot_with_fallback(X, CountVector.from_labels(y)).values
    solver = solve if G == 1 else _parallel_solver(X, n_train, G)
    results = []
    for m, alpha0 in cells:
        exc_t, exc_s = [], []
        for rep in range(reps):
            rseed = _rep_seed(seed, rep)
            tr, te = split_indices(X.n, n_train, rseed)
            X_tr, X_te = X.take(tr), X.take(te)
            err_ref = conditional_error(beta_ref, beta_ref, X_te)
            coef_t, _ = fit_adaptive_lasso(X_tr, CountVector.from_labels(y[tr]), opts, solver)
            S = generate_dataset_counts(X_tr, beta_ref, DirichletMultinomial(m, alpha0), rseed + 1)
            coef_s, _ = fit_adaptive_lasso(X_tr, S, opts, solver)
            exc_t.append(conditional_error(coef_t, beta_ref, X_te) - err_ref)
            exc_s.append(conditional_error(coef_s, beta_ref, X_te) - err_ref)
        ratio, se = ratio_of_means(exc_t, exc_s)
        results.append(AreEstimate(ratio, theoretical_are(m, alpha0), se, n_train, m, alpha0,
                                   reps, X.n - n_train, float(np.mean(exc_t)),
                                   float(np.mean(exc_s)), not np.mean(exc_s) > 0,
                                   list(zip(exc_t, exc_s))))
    return results


def _parallel_solver(X, n_train, G):
    def run(Xs, S, lam, w, config, init=None):
        return solve_parallel(Xs, S, lam, w, config, make_partition(Xs.n, G), SumShards(),
                              init=init, threads=True)
    return run
