"""
Partition-insensitive parallel ADMM.

Rows are split into contiguous shards, one per worker. The coordinator owns
beta and performs the soft-threshold step on the fixed-order sum of the
workers' linearization terms; each worker owns its rows' ``r`` and ``u``.
Workers run as threads with one barrier per iteration (executor ``map``).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .labels import CountVector
from .linalg import as_design, estimate_eta
from .model import Coefficients
from .solver import (AdmmConfig, AdmmState, _Shard, _check_problem, central_beta_step,
                     run_iterations)

__all__ = ["Partition", "Shared", "SumShards", "Worker", "make_partition",
           "worker_register", "central_beta_step", "worker_step", "solve_parallel"]


@dataclass(frozen=True)
class Partition:
    ranges: tuple

    def __post_init__(self):
        prev = 0
        for a, b in self.ranges:
            if a != prev or b <= a:
                raise ValueError(f"invalid shard range ({a}, {b})")
            prev = b

    @property
    def G(self):
        return len(self.ranges)

    @property
    def n(self):
        return self.ranges[-1][1] if self.ranges else 0

    @property
    def sizes(self):
        return tuple(b - a for a, b in self.ranges)


def make_partition(n, G=None, sizes=None):
    """Contiguous row partition: ``G`` balanced shards or explicit ``sizes``.

    Balanced shards follow ``numpy.array_split``: the first ``n % G`` shards
    hold ``ceil(n / G)`` rows, the rest ``floor(n / G)``.
    """
    if sizes is None:
        if G is None or G < 1:
            raise ValueError("need G >= 1 or explicit sizes")
        if G > n:
            raise ValueError(f"cannot split {n} rows into {G} nonempty shards")
        q, rem = divmod(n, G)
        sizes = [q + 1 if g < rem else q for g in range(G)]
    sizes = [int(s) for s in sizes]
    if any(s <= 0 for s in sizes):
        raise ValueError("shard sizes must be positive")
    if sum(sizes) != n:
        raise ValueError(f"shard sizes sum to {sum(sizes)}, expected {n}")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return Partition(tuple((int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])))


@dataclass(frozen=True)
class Shared:
    eta: float


@dataclass(frozen=True)
class SumShards:
    pass


EtaMode = Union[Shared, SumShards]


class Worker(_Shard):
    """One local machine: its rows of ``X`` and ``S`` plus its ``r_g`` and ``u_g``."""

    def __init__(self, g, X_g, S_g, r_g, u_g):
        super().__init__(X_g, S_g.counts.astype(float), S_g.m, r_g, u_g)
        self.g = g
        self.eta_g = None
        self.xi_g = None

    def __repr__(self):
        return f"Worker(g={self.g}, n_g={self.X.n})"


def worker_register(worker, mu, safety=1.01):
    """Spectral bound of ``mu X_g^T X_g`` sent once to the coordinator."""
    est = estimate_eta(worker.X, mu, safety=safety)
    worker.eta_g = est.value
    return est.value


def worker_step(worker, beta_new, mu, c0, eta):
    """Local r and u updates followed by the new linearization term ``xi_g``."""
    out = worker.step(beta_new, mu, c0, eta)
    worker.xi_g = out[0]
    return worker.r, worker.u, worker.xi_g


def _make_workers(X, S, partition, init):
    workers = []
    for g, (a, b) in enumerate(partition.ranges):
        workers.append(Worker(g, X.rows(a, b), S.take(slice(a, b)),
                              init.r[a:b].copy(), init.u[a:b].copy()))
    return workers


def solve_parallel(X, S, lam, w, config=None, partition=None, eta_mode=None,
                   init=None, threads=True):
    """Parallel ADMM over row shards.

    With ``eta_mode=Shared(eta)`` and the same ``init`` the iterates coincide
    with :func:`noisyplr.solver.solve` for every partition, up to floating-point
    reassociation of the shard sums. ``SumShards()`` (default) uses the sum of
    per-shard spectral bounds as eta.

    Returns ``(Coefficients, IterationTrace)``; the trace carries ``G``.
    """
    X, w, init = _check_problem(X, S, w, init)
    config = config or AdmmConfig()
    if config.mu is None:
        config = replace(config, mu=config.mu_per_expert * S.m)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    partition = partition or make_partition(X.n, 1)
    if partition.n != X.n:
        raise ValueError("partition does not cover the rows of X")
    eta_mode = eta_mode or SumShards()

    workers = _make_workers(X, S, partition, init)
    eta_gs = [worker_register(wk, config.mu, config.eta_safety) for wk in workers]
    if isinstance(eta_mode, Shared):
        eta = float(eta_mode.eta)
    else:
        eta = float(sum(eta_gs)) or 1.0
    config = replace(config, eta=eta)

    if threads and partition.G > 1:
        with ThreadPoolExecutor(max_workers=partition.G) as pool:
            beta, trace = run_iterations(workers, init.beta.copy(), lam, w, config,
                                         X.n, X.d, reduce_map=pool.map)
    else:
        beta, trace = run_iterations(workers, init.beta.copy(), lam, w, config, X.n, X.d)

    trace.final_state = AdmmState(beta, np.concatenate([wk.r for wk in workers]),
                                  np.concatenate([wk.u for wk in workers]),
                                  init.k + trace.n_iter)
    trace.G = partition.G
    trace.eta_g = eta_gs
    coef = Coefficients(beta, {"lambda": lam, "converged": trace.converged,
                               "iterations": trace.n_iter, "eta": eta, "G": partition.G})
    return coef, trace
