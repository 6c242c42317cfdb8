"""
Figures written next to the CSV reports.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_are_table(rows, path):
    """Simulated vs theoretical relative efficiency, one line per (m, alpha0)."""
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    cells = sorted({(r.m, r.alpha0) for r in rows})
    for m, a0 in cells:
        sub = sorted((r for r in rows if (r.m, r.alpha0) == (m, a0)), key=lambda r: r.n)
        ns = [r.n for r in sub]
        line = ax.errorbar(ns, [r.simulated for r in sub], yerr=[r.se for r in sub],
                           marker="o", capsize=3, label=f"m={m}, alpha0={a0:g}")
        ax.axhline(sub[0].theoretical, ls="--", lw=0.8, color=line[0].get_color())
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("ARE")
    ax.legend(fontsize=7, ncol=2)
    return _finish(fig, path)


def plot_coefficient_curves(curves, beta_star, path, vary="m"):
    """Mean estimates of the nonzero coefficients as ``m`` or ``alpha0`` varies."""
    beta_star = np.asarray(beta_star)
    active = np.flatnonzero(beta_star)
    fig, axes = plt.subplots(1, len(active), figsize=(3.2 * len(active), 3.0), squeeze=False)
    xs = [c[0] if vary == "m" else c[1] for c in curves]
    for ax, j in zip(axes[0], active):
        ax.plot(xs, [c[2][j] for c in curves], marker="o")
        ax.axhline(beta_star[j], ls="--", color="k", lw=0.8)
        ax.set_title(f"beta{j + 1} (true {beta_star[j]:g})")
        ax.set_xlabel("m" if vary == "m" else "alpha0")
        if vary != "m":
            ax.set_xscale("log")
    return _finish(fig, path)


def plot_trace(trace, path):
    """Residuals and H-norm steps per iteration on log axes."""
    k = np.arange(1, trace.n_iter + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(k, trace.primal_res, label="primal residual")
    ax.semilogy(k, trace.dual_res, label="dual residual")
    ax.semilogy(k, np.maximum(trace.h_step, 1e-300), label="H-norm step")
    ax.set_xlabel("iteration")
    ax.legend()
    return _finish(fig, path)


def plot_parallel_bench(reports, path):
    Gs = sorted(g for g in reports if isinstance(g, int))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    a1.errorbar(Gs, [reports[g].wall_time for g in Gs],
                yerr=[reports[g].wall_time_sd for g in Gs], marker="o", capsize=3)
    a1.set_xlabel("G")
    a1.set_ylabel("time (s)")
    a2.plot(Gs, [reports[g].Ite for g in Gs], marker="o")
    a2.set_xlabel("G")
    a2.set_ylabel("iterations")
    return _finish(fig, path)


def plot_are_cells(rows, path):
    """Simulated relative efficiency per (m, alpha0) cell with theory markers."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    x = np.arange(len(rows))
    ax.errorbar(x, [r.simulated for r in rows], yerr=[r.se for r in rows], fmt="o",
                capsize=3, label="simulated")
    ax.plot(x, [r.theoretical for r in rows], "k_", ms=14, label="theoretical")
    ax.set_xticks(x, [f"m={r.m}\nalpha0={r.alpha0:g}" for r in rows], fontsize=8)
    ax.set_ylabel("ARE")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_path(result, path):
    """HBIC score and support size along the lambda grid."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    a1.semilogx(result.lambdas, result.scores, marker=".")
    a1.axvline(result.chosen_lambda, ls="--", color="k", lw=0.8)
    a1.set_xlabel("lambda")
    a1.set_ylabel("HBIC")
    a2.semilogx(result.lambdas, [c.support.size for c in result.coefs], marker=".")
    a2.set_xlabel("lambda")
    a2.set_ylabel("support size")
    return _finish(fig, path)


def plot_counts_hist(hist, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(np.arange(len(hist)), hist)
    ax.set_xlabel("votes for class 1")
    ax.set_ylabel("rows")
    return _finish(fig, path)
