"""Choice of the antenna-group partition ``(n_k, n_m)`` by average optimized bound."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import substream
from .errors import GensmError, NoFeasiblePartition, TooManySkipped
from .optimizer import AnalogOptParams, DigitalOptParams, optimize_hybrid, random_initial_point
from .system import SystemConfig

__all__ = ["PartitionCandidate", "enumerate_partitions", "select_params", "optimize_cell",
           "run_cells", "MAX_SKIP_FRACTION"]

MAX_SKIP_FRACTION = 0.10


@dataclass(frozen=True)
class PartitionCandidate:
    n_k: int
    n_m: int
    mean_rlb: float
    n_channels: int
    std_error: float
    n_skipped: int = 0


def enumerate_partitions(n_t: int, n_rf: int) -> list[tuple[int, int]]:
    """All ``(n_k, n_m)`` with ``n_k * n_m == n_t`` and ``n_m >= n_rf``, by ``n_m``."""
    if n_rf < 1 or n_t < n_rf:
        raise NoFeasiblePartition(f"need n_t >= n_rf >= 1, got n_t={n_t}, n_rf={n_rf}")
    out = [(n_t // m, m) for m in range(n_rf, n_t + 1) if n_t % m == 0]
    if not out:
        raise NoFeasiblePartition(f"no divisor n_m of {n_t} with n_m >= {n_rf}")
    return out


def optimize_cell(job):
    """Run one hybrid optimization; returns the final bound or None on failure.

    ``job`` is a picklable tuple so the function can be shipped to worker
    processes: ``(H, cfg, dparams, aparams, seed, counter, max_outer, eps_outer)``.
    """
    H, cfg, dparams, aparams, seed, counter, max_outer, eps_outer = job
    try:
        lam0, a0 = random_initial_point(cfg, substream(seed, *counter))
        res = optimize_hybrid(H, lam0, a0, cfg, dparams, aparams, max_outer, eps_outer)
    except (GensmError, np.linalg.LinAlgError):
        return None
    return res


def run_cells(fn, jobs, n_jobs: int = 1):
    """Map ``fn`` over ``jobs`` preserving order; processes when ``n_jobs > 1``."""
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    return [fn(j) for j in jobs]


def _rlb_only(job):
    res = optimize_cell(job)
    return None if res is None else res.rlb


def select_params(base_cfg: SystemConfig, channels, snr_db: float,
                  dparams: DigitalOptParams | None = None, aparams: AnalogOptParams | None = None,
                  seed: int = 0, max_outer: int = 30, eps_outer: float = 1e-4, n_jobs: int = 1,
                  partitions=None):
    """Pick the partition maximizing the mean optimized bound over ``channels``.

    Every candidate is evaluated on the same channels.  The initial point for
    channel ``k`` comes from ``substream(seed, 1, k)``.  Ties go to the
    smaller ``n_m``.  Returns ``(winner, table)`` with ``table`` ordered by
    ``n_m``.

    Raises
    ------
    TooManySkipped
        If more than 10% of the optimizations for any candidate fail.
    """
    if not channels:
        raise ValueError("channel ensemble is empty")
    dparams = dparams or DigitalOptParams()
    aparams = aparams or AnalogOptParams()
    cfg0 = base_cfg.with_rho(10.0 ** (snr_db / 10.0) * base_cfg.sigma_n_sq)
    parts = partitions or enumerate_partitions(cfg0.n_t, cfg0.n_rf)
    Hs = [np.asarray(getattr(c, "H", c)) for c in channels]
    jobs, owners = [], []
    for ci, (n_k, n_m) in enumerate(parts):
        cfg = cfg0.with_partition(n_k, n_m)
        for k, H in enumerate(Hs):
            jobs.append((H, cfg, dparams, aparams, seed, (1, k), max_outer, eps_outer))
            owners.append(ci)
    values = run_cells(_rlb_only, jobs, n_jobs)
    table = []
    for ci, (n_k, n_m) in enumerate(parts):
        v = [x for x, o in zip(values, owners) if o == ci and x is not None]
        skipped = len(Hs) - len(v)
        if skipped > MAX_SKIP_FRACTION * len(Hs):
            raise TooManySkipped(f"({n_k}, {n_m}): {skipped} of {len(Hs)} channels failed")
        v = np.asarray(v)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        table.append(PartitionCandidate(n_k, n_m, float(v.mean()), int(v.size), se, skipped))
    best = max(range(len(table)), key=lambda i: (table[i].mean_rlb, -table[i].n_m))
    return table[best], table
