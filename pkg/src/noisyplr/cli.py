"""
Command-line entry point.

Every subcommand writes its CSV/JSON artifacts, a PNG figure and a
``manifest.json`` into the output directory (``--out``, else the
``NOISYPLR_OUTPUT_DIR`` environment variable, else ``./runs``). Options may
also come from a JSON ``--config`` file; flags given on the command line win.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io, plotting
from .experiments import (BETA_STAR, FitOptions, SyntheticSpec, coefficient_curves,
                          fit_adaptive_lasso, gen_synthetic, real_data_are,
                          run_parallel_bench, run_table_are, simulate_are, support_metrics)
from .labels import (CountVector, DirichletMultinomial, Multinomial, Truth,
                     generate_dataset_counts, write_counts)
from .model import Coefficients, adaptive_weights, fit_pilot_with_fallback
from .parallel import SumShards, make_partition, solve_parallel
from .solver import AdmmConfig, solve
from .tuning import lambda_path

log = logging.getLogger("noisyplr")

TABLE1_M = (5, 10, 50)
TABLE1_ALPHA0 = (1.0, 10.0, 100.0, 1000.0)


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _common(p):
    p.add_argument("--config", help="JSON file of option defaults (flags override)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def _solver_opts(p):
    p.add_argument("--mu", type=float, default=None, help="default: 0.01 * m")
    p.add_argument("--c0", type=float, default=1e-2)
    p.add_argument("--eta-value", dest="eta", type=float, default=None,
                   help="step bound; default: spectral estimate")
    p.add_argument("--eps-abs", type=float, default=1e-6)
    p.add_argument("--eps-rel", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--grid-size", type=int, default=20)
    p.add_argument("--ratio", type=float, default=1e-4)


def _data_opts(p):
    p.add_argument("--data", help="LIBSVM file; omit for synthetic data")
    p.add_argument("--dims", type=int, default=None, help="override feature count")
    p.add_argument("--intercept", action="store_true", help="append an unpenalized intercept")
    p.add_argument("--n", type=int, default=2000, help="synthetic sample size")
    p.add_argument("--rho", type=float, default=0.75)


def _noise_opts(p):
    p.add_argument("--noise", choices=("truth", "multinomial", "dm"), default="truth")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--alpha0", type=float, default=1.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="noisyplr", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="adaptive-LASSO fit with HBIC-tuned lambda")
    _common(p), _data_opts(p), _noise_opts(p), _solver_opts(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed penalty level (skips tuning)")
    p.add_argument("--G", type=int, default=1, help="number of row shards")

    p = sub.add_parser("labels", help="simulate expert vote counts")
    _common(p), _data_opts(p), _noise_opts(p)
    p.add_argument("--beta", help="coefficients JSON used for the posteriors "
                                  "(default: pilot fit on the data, or the synthetic truth)")

    p = sub.add_parser("tune", help="lambda path with HBIC scores")
    _common(p), _data_opts(p), _noise_opts(p), _solver_opts(p)

    p = sub.add_parser("are", help="simulated relative efficiency for one cell")
    _common(p), _solver_opts(p)
    p.add_argument("--m", type=int, default=None, help="experts (required)")
    p.add_argument("--alpha0", type=float, default=None, help="overdispersion (required)")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--n-eval", type=int, default=100_000)
    p.add_argument("--rho", type=float, default=0.75)

    p = sub.add_parser("bench-parallel", help="parallel solver across worker counts")
    _common(p), _solver_opts(p)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--G", type=_int_list, default=[1, 5, 10])
    p.add_argument("--eta", dest="eta_mode", choices=("shared", "sum"), default="shared")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--rho", type=float, default=0.75)

    p = sub.add_parser("table1", help="relative efficiency over the (m, alpha0, n) grid")
    _common(p), _solver_opts(p)
    p.add_argument("--m", dest="m_list", type=_int_list, default=list(TABLE1_M))
    p.add_argument("--alpha0", dest="alpha0_list", type=_float_list, default=list(TABLE1_ALPHA0))
    p.add_argument("--n", dest="n_list", type=_int_list, default=[2000])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--n-eval", type=int, default=100_000)

    p = sub.add_parser("table4", help="relative efficiency on a real dataset")
    _common(p), _solver_opts(p)
    p.add_argument("--data", default=None, help="LIBSVM file (required)")
    p.add_argument("--dims", type=int, default=None)
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--n-train", type=int, default=40_000)
    p.add_argument("--m", dest="m_list", type=_int_list, default=[5, 10])
    p.add_argument("--alpha0", dest="alpha0_list", type=_float_list, default=[1.0, 10.0])
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--G", type=int, default=1)

    p = sub.add_parser("curves", help="mean coefficient estimates as m or alpha0 varies")
    _common(p), _solver_opts(p)
    p.add_argument("--vary", choices=("m", "alpha0"), default="m")
    p.add_argument("--values", type=_float_list, default=None)
    p.add_argument("--fixed", type=float, default=None,
                   help="alpha0 when varying m, m when varying alpha0")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--reps", type=int, default=20)
    return parser


# required, but may be supplied through --config
REQUIRED = {"are": ("m", "alpha0"), "table4": ("data",)}


def parse_args(argv):
    """Parse ``argv``, applying ``--config`` JSON values as defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, ValueError) as exc:
            sub.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            sub.error("config file must hold a JSON object")
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, val in cfg.items():
            dest = key.replace("-", "_")
            dest = {"lambda": "lam"}.get(dest, dest)
            if dest not in known or dest in ("help", "config"):
                sub.error(f"unknown config key {key!r}")
            action = known[dest]
            if action.type is not None and not isinstance(val, list):
                val = action.type(str(val))
            defaults[dest] = val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [f"--{k.replace('_', '-')}" for k in REQUIRED.get(args.command, ())
               if getattr(args, k) is None]
    if missing:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.error(f"the following arguments are required: {', '.join(missing)}")
    return args


def _admm_config(args):
    return AdmmConfig(mu=args.mu, c0=args.c0, eta=args.eta, eps_abs=args.eps_abs,
                      eps_rel=args.eps_rel, max_iter=args.max_iter)


def _fit_options(args, unpenalized=()):
    return FitOptions(gamma=args.gamma, grid_size=args.grid_size, ratio=args.ratio,
                      config=_admm_config(args), unpenalized=tuple(unpenalized))


def _noise_model(args):
    if args.noise == "truth":
        if args.m != 1:
            raise UsageError("--noise truth requires --m 1")
        return Truth()
    if args.noise == "multinomial":
        return Multinomial(args.m)
    return DirichletMultinomial(args.m, args.alpha0)


def _load_data(args):
    """Design matrix, labels, reference coefficients (synthetic truth or None)."""
    if args.data:
        if not os.path.exists(args.data):
            raise UsageError(f"data file not found: {args.data}")
        ds = io.parse_libsvm(args.data, args.dims)
        X, y, beta_ref = ds.X, ds.y, None
    else:
        spec = SyntheticSpec(args.n, BETA_STAR, args.rho, seed=args.seed)
        X, y = gen_synthetic(spec)
        beta_ref = spec.beta_star
    if args.intercept:
        X = X.column_stack_ones()
        if beta_ref is not None:
            beta_ref = np.append(beta_ref, 0.0)
    return X, y, beta_ref


def _counts(args, X, y, beta_ref):
    model = _noise_model(args)
    if isinstance(model, Truth):
        return CountVector.from_labels(y), beta_ref
    if beta_ref is None:
        beta_ref = fit_pilot_with_fallback(X, CountVector.from_labels(y)).values
    return generate_dataset_counts(X, beta_ref, model, seed=args.seed + 1), beta_ref


def _unpenalized(args, X):
    return (X.d - 1,) if args.intercept else ()


def _manifest(outdir, args, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    io.write_manifest(outdir, args.command, cfg, {"seed": args.seed}, extra)


def cmd_fit(args, outdir):
    X, y, beta_ref = _load_data(args)
    S, beta_ref = _counts(args, X, y, beta_ref)
    opts = _fit_options(args, _unpenalized(args, X))
    solver = solve
    if args.G > 1:
        part = make_partition(X.n, args.G)

        def solver(Xs, Ss, lam, w, config, init=None):
            return solve_parallel(Xs, Ss, lam, w, config, part, SumShards(), init=init)

    if args.lam is None:
        coef, path = fit_adaptive_lasso(X, S, opts, solver)
        trace = path.traces[path.best]
        path.to_csv(os.path.join(outdir, "path.csv"))
    else:
        pilot = fit_pilot_with_fallback(X, S)
        w = adaptive_weights(pilot, opts.gamma, unpenalized=opts.unpenalized)
        coef, trace = solver(X, S, args.lam, w, opts.config)
    coef.meta["G"] = args.G
    if beta_ref is not None and not args.data:
        fp, fn, ae = support_metrics(coef, beta_ref)
        coef.meta.update({"FP": fp, "FN": fn, "AE": ae})
    with open(os.path.join(outdir, "coefficients.json"), "w", encoding="utf-8") as fh:
        fh.write(coef.to_json())
    trace.to_csv(os.path.join(outdir, "trace.csv"))
    plotting.plot_trace(trace, os.path.join(outdir, "trace.png"))
    _manifest(outdir, args, {"lambda": coef.meta.get("lambda"), "n": X.n, "d": X.d})
    print(f"lambda={coef.meta.get('lambda'):.6g} support={coef.support.tolist()} "
          f"iterations={trace.n_iter} converged={trace.converged}")


def cmd_labels(args, outdir):
    X, y, beta_ref = _load_data(args)
    model = _noise_model(args)
    if args.beta:
        with open(args.beta, encoding="utf-8") as fh:
            beta_ref = Coefficients.from_json(fh.read()).values
    if isinstance(model, Truth):
        S = CountVector.from_labels(y)
    else:
        if beta_ref is None:
            beta_ref = fit_pilot_with_fallback(X, CountVector.from_labels(y)).values
        if beta_ref.size != X.d:
            raise UsageError(f"coefficients have length {beta_ref.size}, data has d={X.d}")
        S = generate_dataset_counts(X, beta_ref, model, seed=args.seed + 1)
    write_counts(os.path.join(outdir, "counts.txt"), S)
    hist = np.bincount(S.counts, minlength=S.m + 1)
    io.write_csv(os.path.join(outdir, "counts_hist.csv"), ["votes", "rows"],
                 [(k, int(c)) for k, c in enumerate(hist)])
    plotting.plot_counts_hist(hist, os.path.join(outdir, "counts_hist.png"))
    _manifest(outdir, args, {"n": X.n, "d": X.d})
    print(f"wrote {len(S)} vote counts (m={S.m}), mean fraction {S.counts.mean() / S.m:.4f}")


def cmd_tune(args, outdir):
    X, y, beta_ref = _load_data(args)
    S, _ = _counts(args, X, y, beta_ref)
    opts = _fit_options(args, _unpenalized(args, X))
    pilot = fit_pilot_with_fallback(X, S)
    w = adaptive_weights(pilot, opts.gamma, unpenalized=opts.unpenalized)
    path = lambda_path(X, S, w, opts.config, grid_size=opts.grid_size, ratio=opts.ratio)
    path.to_csv(os.path.join(outdir, "path.csv"))
    plotting.plot_path(path, os.path.join(outdir, "path.png"))
    _manifest(outdir, args, {"lambdas": path.lambdas.tolist(), "n": X.n, "d": X.d})
    print(f"chosen lambda={path.chosen_lambda:.6g} support={path.chosen.support.tolist()}")


ARE_HEADER = ["m", "alpha0", "n", "reps", "simulated", "se", "theoretical",
              "excess_truth", "excess_noisy", "flagged"]


def _are_rows(ests):
    return [[e.m, e.alpha0, e.n, e.reps, e.simulated, e.se, e.theoretical,
             e.excess_truth, e.excess_noisy, e.flagged] for e in ests]


def cmd_are(args, outdir):
    est = simulate_are(args.n, args.m, args.alpha0, args.reps, BETA_STAR, args.rho,
                       args.seed, _fit_options(args), args.n_eval)
    io.write_csv(os.path.join(outdir, "are.csv"), ARE_HEADER, _are_rows([est]))
    io.write_csv(os.path.join(outdir, "are_reps.csv"), ["rep", "excess_truth", "excess_noisy"],
                 [(i, a, b) for i, (a, b) in enumerate(est.per_rep)])
    plotting.plot_are_table([est], os.path.join(outdir, "are.png"))
    _manifest(outdir, args)
    print(f"simulated={est.simulated:.3f} ({est.se:.3f}) theoretical={est.theoretical:.4f}")


def cmd_table1(args, outdir):
    grid = [(m, a, n) for n in args.n_list for a in args.alpha0_list for m in args.m_list]
    rows = []

    def progress(e):
        rows.append(e)
        io.write_csv(os.path.join(outdir, "table1.csv"), ARE_HEADER, _are_rows(rows))
        log.info("m=%d alpha0=%g n=%d: %.3f (%.3f)", e.m, e.alpha0, e.n, e.simulated, e.se)

    run_table_are(grid, args.reps, args.seed, _fit_options(args), args.n_eval, progress)
    plotting.plot_are_table(rows, os.path.join(outdir, "table1.png"))
    _manifest(outdir, args, {"grid": grid})
    for e in rows:
        print(f"m={e.m} alpha0={e.alpha0:g} n={e.n}: {e.simulated:.2f} ({e.se:.2f}) "
              f"theory {e.theoretical:.2f}")


def cmd_table4(args, outdir):
    if not os.path.exists(args.data):
        raise UsageError(f"data file not found: {args.data}")
    ds = io.parse_libsvm(args.data, args.dims)
    X = ds.X.column_stack_ones() if args.intercept else ds.X
    if not 0 < args.n_train < X.n:
        raise UsageError(f"--n-train must lie in (0, {X.n})")
    cells = [(m, a) for m in args.m_list for a in args.alpha0_list]
    opts = _fit_options(args, (X.d - 1,) if args.intercept else ())
    ests = real_data_are(X, ds.y, args.n_train, cells, args.reps, args.seed, opts, args.G)
    io.write_csv(os.path.join(outdir, "table4.csv"), ARE_HEADER, _are_rows(ests))
    plotting.plot_are_cells(ests, os.path.join(outdir, "table4.png"))
    _manifest(outdir, args, {"cells": cells, "n": X.n, "d": X.d})
    for e in ests:
        print(f"m={e.m} alpha0={e.alpha0:g}: {e.simulated:.3f} ({e.se:.3f}) "
              f"theory {e.theoretical:.2f}")


def cmd_bench(args, outdir):
    reps = run_parallel_bench(args.n, args.G, args.reps, args.eta_mode, args.seed,
                              rho=args.rho, opts=_fit_options(args))
    header = ["G", "FP", "FN", "AE", "AE_sd", "Ite", "Ite_sd", "time", "time_sd"]
    rows = [[G, r.FP, r.FN, r.AE, r.AE_sd, r.Ite, r.Ite_sd, r.wall_time, r.wall_time_sd]
            for G, r in sorted(reps.items())]
    io.write_csv(os.path.join(outdir, "bench.csv"), header, rows)
    plotting.plot_parallel_bench(reps, os.path.join(outdir, "bench.png"))
    _manifest(outdir, args)
    for row in rows:
        print("G={} FP={:.2f} FN={:.2f} AE={:.4f}({:.4f}) Ite={:.1f}({:.2f}) "
              "time={:.2f}s".format(*row[:8]))


def cmd_curves(args, outdir):
    if args.vary == "m":
        values = [int(v) for v in (args.values or [1, 2, 5, 10, 20, 50])]
        a0 = args.fixed if args.fixed is not None else 10.0
        settings = [(m, a0) for m in values]
    else:
        values = args.values or [0.1, 1.0, 10.0, 100.0, 1000.0]
        m = int(args.fixed) if args.fixed is not None else 10
        settings = [(m, a) for a in values]
    curves = coefficient_curves(args.n, settings, args.reps, args.seed, opts=_fit_options(args))
    d = len(BETA_STAR)
    io.write_csv(os.path.join(outdir, "curves.csv"),
                 ["m", "alpha0"] + [f"beta{j + 1}" for j in range(d)],
                 [[m, a] + list(est) for m, a, est in curves])
    plotting.plot_coefficient_curves(curves, BETA_STAR, os.path.join(outdir, "curves.png"),
                                     vary=args.vary)
    _manifest(outdir, args, {"settings": settings})
    print(f"wrote {len(curves)} settings")


COMMANDS = {
    "fit": cmd_fit,
    "labels": cmd_labels,
    "tune": cmd_tune,
    "are": cmd_are,
    "bench-parallel": cmd_bench,
    "table1": cmd_table1,
    "table4": cmd_table4,
    "curves": cmd_curves,
}


def main(argv=None):
    args = parse_args(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    outdir = io.output_dir(args.out)
    try:
        COMMANDS[args.command](args, outdir)
    except UsageError as exc:
        print(f"noisyplr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"noisyplr {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
