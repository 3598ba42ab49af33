"""Experiment orchestration: configs, seeding, sweeps and CSV output.

Every experiment reads an ``ExperimentSpec``, derives all randomness from
``master_seed`` through counter-based substreams, evaluates its cells
(possibly in worker processes) and writes one CSV.  The file starts with
``#`` comment lines echoing the configuration and seed, followed by a header
row and data rows.  Floats are written with ``repr`` so reruns are
byte-identical.

Substream counters used here:

* ``(k,)``            channel ``k`` of the ensemble
* ``(1, k)``          initial point for channel ``k`` (partition selection)
* ``(1, k, i)``       initial point ``i`` on channel ``k``
* ``(2, k, j, tag)``  Monte-Carlo stream for channel ``k`` at SNR index ``j``
"""
from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .baselines import waterfilling_baseline
from .channel import ChannelParams, generate_ensemble, substream
from .errors import GensmError, TooManySkipped
from .metrics import constant_gap, rlb_bits, true_se_mc
from .optimizer import (AnalogOptParams, DigitalOptParams, grad_barrier_a, grad_barrier_lambda,
                        grad_rlb_a, grad_rlb_lambda, finite_diff_check, lp_norm,
                        optimize_hybrid, random_initial_point)
from .param_select import MAX_SKIP_FRACTION, run_cells, select_params
from .system import SystemConfig, derive_config, uniform_power, unit_phase_analog

__all__ = [
    "KINDS",
    "ExperimentSpec",
    "InvariantViolation",
    "load_spec",
    "spec_from_parser",
    "run_experiment",
    "gradient_suite",
]

log = logging.getLogger(__name__)

KINDS = ("bound_tightness", "convergence", "init_cdf", "se_sweep", "param_table", "evaluate")


class InvariantViolation(GensmError, AssertionError):
    """An asserted experiment-level property failed."""


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    system: SystemConfig
    channel: ChannelParams = field(default_factory=ChannelParams)
    digital: DigitalOptParams = field(default_factory=DigitalOptParams)
    analog: AnalogOptParams = field(default_factory=AnalogOptParams)
    snr_db: tuple[float, ...] = (5.0,)
    n_channels: int = 1
    mc_samples: int = 20000
    master_seed: int = 0
    out: str | None = None
    n_inits: int = 1
    n_jobs: int = 1
    max_outer: int = 30
    eps_outer: float = 1e-4
    norm_mode: str = "exact"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.n_channels < 1 or self.n_inits < 1:
            raise ValueError("n_channels and n_inits must be >= 1")
        if not self.snr_db:
            raise ValueError("snr grid is empty")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))

    def header(self) -> list[str]:
        """Comment lines echoing everything that determines the output."""
        lines = [f"gensm experiment={self.kind}", f"master_seed={self.master_seed}"]
        s = self.system
        lines.append("system " + " ".join(f"{k}={getattr(s, k)}" for k in
                                          ("n_t", "n_r", "n_k", "n_m", "n_rf", "n_s", "sigma_n_sq")))
        for name, obj in (("channel", self.channel), ("digital_opt", self.digital),
                          ("analog_opt", self.analog)):
            lines.append(name + " " + " ".join(f"{f.name}={getattr(obj, f.name)!r}" for f in fields(obj)))
        lines.append("experiment " + " ".join(
            f"{k}={getattr(self, k)!r}" for k in ("snr_db", "n_channels", "mc_samples", "n_inits",
                                                   "max_outer", "eps_outer", "norm_mode")))
        return lines


# --------------------------------------------------------------------------
# configuration files


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _typed(cls, section, skip=()):
    kw = {}
    for f in fields(cls):
        if f.name in skip or f.name not in section:
            continue
        raw = section[f.name]
        default = f.default
        if isinstance(default, bool):
            kw[f.name] = section.getboolean(f.name)
        elif isinstance(default, int):
            kw[f.name] = int(raw)
        elif isinstance(default, tuple):
            kw[f.name] = _floats(raw)
        elif f.name == "sigma_alpha_sq":
            vals = _floats(raw)
            kw[f.name] = vals[0] if len(vals) == 1 else vals
        else:
            kw[f.name] = None if raw.strip().lower() == "none" else float(raw)
    return kw


def spec_from_parser(cp: configparser.ConfigParser, **overrides) -> ExperimentSpec:
    """Build a spec from INI sections; keyword ``overrides`` win when not None."""
    sysd = cp["system"] if cp.has_section("system") else {}
    dims = {k: int(sysd[k]) for k in ("n_t", "n_r", "n_k", "n_m", "n_rf", "n_s") if k in sysd}
    base = dict(n_t=8, n_r=8, n_k=2, n_m=4, n_rf=2)
    base.update(dims)
    system = derive_config(**base, sigma_n_sq=float(sysd.get("sigma_n_sq", 1.0)))
    sec = {n: (cp[n] if cp.has_section(n) else {}) for n in
           ("channel", "digital_opt", "analog_opt", "experiment")}
    channel = ChannelParams(**_typed(ChannelParams, sec["channel"])) if sec["channel"] else ChannelParams()
    digital = DigitalOptParams(**_typed(DigitalOptParams, sec["digital_opt"]))
    analog = AnalogOptParams(**_typed(AnalogOptParams, sec["analog_opt"]))
    ex = sec["experiment"]
    kw = _typed(ExperimentSpec, ex, skip=("kind", "system", "channel", "digital", "analog",
                                          "out", "norm_mode"))
    for key in ("kind", "out", "norm_mode"):
        if key in ex:
            kw[key] = ex[key].strip()
    kw.setdefault("kind", "bound_tightness")
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec(system=system, channel=channel, digital=digital, analog=analog, **kw)


def load_spec(path, **overrides) -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        cp.read_file(fh)
    return spec_from_parser(cp, **overrides)


# --------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _write_csv(spec: ExperimentSpec, columns, rows) -> str:
    buf = io.StringIO()
    for line in spec.header():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    text = buf.getvalue()
    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            fh.write(text)
    return text


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _check_skips(n_failed, n_total, what):
    if n_failed > MAX_SKIP_FRACTION * n_total:
        raise TooManySkipped(f"{what}: {n_failed} of {n_total} cells failed")


# --------------------------------------------------------------------------
# cells (module level so they can be shipped to worker processes)


def _mc_cell(job):
    H, cfg, lam, a, n_samples, rng = job
    try:
        rlb = rlb_bits(H, lam, a, cfg)
        se = true_se_mc(H, lam, a, cfg, n_samples, rng)
    except (GensmError, np.linalg.LinAlgError) as exc:
        return None, str(exc)
    return (rlb, se.value, se.std_error), None


def _opt_cell(job):
    H, cfg, dparams, aparams, seed, counter, max_outer, eps_outer, mc = job
    try:
        lam0, a0 = random_initial_point(cfg, substream(seed, *counter))
        res = optimize_hybrid(H, lam0, a0, cfg, dparams, aparams, max_outer, eps_outer)
        extra = None
        if mc is not None:
            n_samples, rng = mc
            se_opt = true_se_mc(H, res.lam, res.a, cfg, n_samples, rng)
            se_init = true_se_mc(H, lam0, a0, cfg, n_samples, rng)
            extra = (se_opt.value, se_opt.std_error, se_init.value, se_init.std_error)
    except (GensmError, np.linalg.LinAlgError) as exc:
        return None, str(exc)
    return (res, rlb_bits(H, lam0, a0, cfg), extra), None


def _run(fn, jobs, spec, what):
    out = run_cells(fn, jobs, spec.n_jobs)
    failed = 0
    for i, (val, err) in enumerate(out):
        if val is None:
            failed += 1
            log.warning("%s cell %d skipped: %s", what, i, err)
    _check_skips(failed, len(jobs), what)
    return [v for v, _ in out]


def _channels(spec: ExperimentSpec, cfg: SystemConfig | None = None):
    cfg = cfg or spec.system
    return [c.H for c in generate_ensemble(cfg, spec.channel, spec.n_channels, spec.master_seed,
                                           spec.norm_mode)]


def _cfg_at(spec, snr_db, cfg=None):
    cfg = cfg or spec.system
    return cfg.with_rho(10.0 ** (snr_db / 10.0) * cfg.sigma_n_sq)


# --------------------------------------------------------------------------
# experiments


def _bound_tightness(spec: ExperimentSpec):
    """Unprecoded bound, shifted bound and MC SE versus SNR, averaged over channels."""
    Hs = _channels(spec)
    jobs, keys = [], []
    for j, snr in enumerate(spec.snr_db):
        cfg = _cfg_at(spec, snr)
        lam, a = uniform_power(cfg), unit_phase_analog(cfg)
        for k, H in enumerate(Hs):
            jobs.append((H, cfg, lam, a, spec.mc_samples, substream(spec.master_seed, 2, k, j, 0)))
            keys.append(j)
    vals = _run(_mc_cell, jobs, spec, "bound_tightness")
    gap = constant_gap(spec.system)
    rows = []
    for j, snr in enumerate(spec.snr_db):
        cell = [v for v, kj in zip(vals, keys) if kj == j and v is not None]
        rlb = [c[0] for c in cell]
        se = [c[1] for c in cell]
        mc_err = math.sqrt(sum(c[2] ** 2 for c in cell)) / len(cell)
        r_mean, r_se = _mean_se(rlb)
        s_mean, s_se = _mean_se(se)
        diff_mean, diff_se = _mean_se([b - gap - s for b, s in zip(rlb, se)])
        rows.append({"snr_db": snr, "R": s_mean, "R_std_error": s_se, "R_mc_std_error": mc_err,
                     "R_LB": r_mean, "R_LB_std_error": r_se, "R_approx": r_mean - gap,
                     "approx_minus_R": diff_mean, "approx_minus_R_std_error": diff_se,
                     "n_channels": len(cell), "n_samples": spec.mc_samples})
    cols = ["snr_db", "R", "R_std_error", "R_mc_std_error", "R_LB", "R_LB_std_error", "R_approx",
            "approx_minus_R", "approx_minus_R_std_error", "n_channels", "n_samples"]
    return cols, rows


def _evaluate(spec: ExperimentSpec):
    """Unprecoded bound and MC SE for every channel and SNR, one row each."""
    Hs = _channels(spec)
    gap = constant_gap(spec.system)
    jobs, keys = [], []
    for j, snr in enumerate(spec.snr_db):
        cfg = _cfg_at(spec, snr)
        lam, a = uniform_power(cfg), unit_phase_analog(cfg)
        for k, H in enumerate(Hs):
            jobs.append((H, cfg, lam, a, spec.mc_samples, substream(spec.master_seed, 2, k, j, 0)))
            keys.append((snr, k))
    vals = _run(_mc_cell, jobs, spec, "evaluate")
    rows = [{"snr_db": snr, "channel": k, "R_LB": v[0], "R_approx": v[0] - gap, "R": v[1],
             "std_error": v[2], "n_samples": spec.mc_samples}
            for (snr, k), v in zip(keys, vals) if v is not None]
    return ["snr_db", "channel", "R_LB", "R_approx", "R", "std_error", "n_samples"], rows


def _opt_jobs(spec, Hs, cfg, mc_tag=None, snr_index=0):
    jobs, keys = [], []
    for k, H in enumerate(Hs):
        for i in range(spec.n_inits):
            mc = None
            if mc_tag is not None:
                mc = (spec.mc_samples, substream(spec.master_seed, 2, k, snr_index, mc_tag, i))
            jobs.append((H, cfg, spec.digital, spec.analog, spec.master_seed, (1, k, i),
                         spec.max_outer, spec.eps_outer, mc))
            keys.append((k, i))
    return jobs, keys


def _convergence(spec: ExperimentSpec):
    """Full optimizer traces (one block of rows per channel, init and SNR)."""
    Hs = _channels(spec)
    gap = constant_gap(spec.system)
    cols = ["snr_db", "channel", "init", "iteration", "phase", "outer", "phase_step", "R_LB",
            "R_approx", "objective", "step", "grad_norm", "p"]
    rows = []
    for j, snr in enumerate(spec.snr_db):
        cfg = _cfg_at(spec, snr)
        jobs, keys = _opt_jobs(spec, Hs, cfg)
        vals = _run(_opt_cell, jobs, spec, "convergence")
        for (k, i), v in zip(keys, vals):
            if v is None:
                continue
            res, rlb0, _ = v
            base = {"snr_db": snr, "channel": k, "init": i}
            rows.append({**base, "iteration": -1, "phase": "init", "outer": 0, "phase_step": 0,
                         "R_LB": rlb0, "R_approx": rlb0 - gap, "objective": float("nan"),
                         "step": float("nan"), "grad_norm": float("nan"), "p": float("nan")})
            count = 0
            prev = None
            for r in res.trace.records:
                key = (r.outer, r.phase)
                if key != prev:
                    count += 1
                    prev = key
                rows.append({**base, "iteration": r.iteration, "phase": r.phase, "outer": r.outer,
                             "phase_step": count, "R_LB": r.cost, "R_approx": r.cost - gap,
                             "objective": r.objective, "step": r.step, "grad_norm": r.grad_norm,
                             "p": r.p})
    return cols, rows


def _init_cdf(spec: ExperimentSpec):
    """Empirical CDF of the final shifted bound over inits and channels."""
    Hs = _channels(spec)
    gap = constant_gap(spec.system)
    rows = []
    for j, snr in enumerate(spec.snr_db):
        cfg = _cfg_at(spec, snr)
        jobs, keys = _opt_jobs(spec, Hs, cfg)
        vals = _run(_opt_cell, jobs, spec, "init_cdf")
        pts = [(v[0].shifted, k, i, v[0].n_outer, v[1] - gap)
               for (k, i), v in zip(keys, vals) if v is not None]
        pts.sort(key=lambda t: (t[0], t[1], t[2]))
        n = len(pts)
        for rank, (val, k, i, n_outer, init_val) in enumerate(pts, 1):
            rows.append({"snr_db": snr, "channel": k, "init": i, "R_approx": val,
                         "R_approx_init": init_val, "n_outer": n_outer, "cdf": rank / n})
    return ["snr_db", "channel", "init", "R_approx", "R_approx_init", "n_outer", "cdf"], rows


def _param_table(spec: ExperimentSpec):
    """Average optimized bound for every partition at every SNR; marks the winner."""
    Hs = _channels(spec)
    rows = []
    for snr in spec.snr_db:
        best, table = select_params(spec.system, Hs, snr, spec.digital, spec.analog,
                                    spec.master_seed, spec.max_outer, spec.eps_outer, spec.n_jobs)
        for c in table:
            rows.append({"snr_db": snr, "n_k": c.n_k, "n_m": c.n_m, "mean_R_LB": c.mean_rlb,
                         "std_error": c.std_error, "n_channels": c.n_channels,
                         "n_skipped": c.n_skipped, "winner": int(c is best)})
    return ["snr_db", "n_k", "n_m", "mean_R_LB", "std_error", "n_channels", "n_skipped",
            "winner"], rows


def _se_sweep(spec: ExperimentSpec):
    """O-GenSM, NO-GenSM, no-precoding and water-filling SE versus SNR.

    The partition is chosen per SNR by the average optimized bound; the
    unoptimized scheme (NO-GenSM) uses the same partition and the optimizer's
    own random initial point.  Raises InvariantViolation when O-GenSM falls
    more than three standard errors below NO-GenSM.
    """
    Hs = _channels(spec)
    rows = []
    for j, snr in enumerate(spec.snr_db):
        best, _ = select_params(spec.system, Hs, snr, spec.digital, spec.analog, spec.master_seed,
                                spec.max_outer, spec.eps_outer, spec.n_jobs)
        cfg = _cfg_at(spec, snr, spec.system.with_partition(best.n_k, best.n_m))
        jobs, keys = _opt_jobs(spec, Hs, cfg, mc_tag=1, snr_index=j)
        vals = [v for v in _run(_opt_cell, jobs, spec, "se_sweep") if v is not None]
        o = [v[2][0] for v in vals]
        no = [v[2][2] for v in vals]
        mc_o = math.sqrt(sum(v[2][1] ** 2 for v in vals)) / len(vals)
        mc_no = math.sqrt(sum(v[2][3] ** 2 for v in vals)) / len(vals)
        lam, a = uniform_power(cfg), unit_phase_analog(cfg)
        tj = [(H, cfg, lam, a, spec.mc_samples, substream(spec.master_seed, 2, k, j, 2))
              for k, H in enumerate(Hs)]
        triv = [v for v in _run(_mc_cell, tj, spec, "se_sweep") if v is not None]
        wp = []
        for H in Hs:
            try:
                wp.append(waterfilling_baseline(H, cfg.n_s, cfg.rho, cfg.sigma_n_sq).value)
            except GensmError as exc:
                log.warning("water-filling skipped: %s", exc)
        _check_skips(len(Hs) - len(wp), len(Hs), "water-filling")
        o_m, o_se = _mean_se(o)
        no_m, no_se = _mean_se(no)
        # paired difference: both schemes see the same channels and inits
        d_m, d_se = _mean_se([x - y for x, y in zip(o, no)])
        tr_m, tr_se = _mean_se([t[1] for t in triv])
        wp_m, wp_se = _mean_se(wp)
        if d_m < -3.0 * math.hypot(d_se, math.hypot(mc_o, mc_no)):
            raise InvariantViolation(
                f"O-GenSM {o_m:.4f} below NO-GenSM {no_m:.4f} by more than 3 std errors at {snr} dB")
        rows.append({"snr_db": snr, "n_k": best.n_k, "n_m": best.n_m,
                     "O_GenSM": o_m, "O_GenSM_std_error": o_se,
                     "NO_GenSM": no_m, "NO_GenSM_std_error": no_se,
                     "no_precoding": tr_m, "no_precoding_std_error": tr_se,
                     "WP_MIMO": wp_m, "WP_MIMO_std_error": wp_se,
                     "n_channels": len(Hs), "n_inits": spec.n_inits, "n_samples": spec.mc_samples})
    cols = ["snr_db", "n_k", "n_m", "O_GenSM", "O_GenSM_std_error", "NO_GenSM", "NO_GenSM_std_error",
            "no_precoding", "no_precoding_std_error", "WP_MIMO", "WP_MIMO_std_error", "n_channels",
            "n_inits", "n_samples"]
    return cols, rows


_RUNNERS = {
    "bound_tightness": _bound_tightness,
    "convergence": _convergence,
    "init_cdf": _init_cdf,
    "se_sweep": _se_sweep,
    "param_table": _param_table,
    "evaluate": _evaluate,
}


def run_experiment(spec: ExperimentSpec) -> str:
    """Run ``spec`` and return the CSV text (also written to ``spec.out`` if set).

    Raises
    ------
    TooManySkipped
        If more than 10% of the cells of any stage fail.
    InvariantViolation
        If an asserted ordering between schemes fails.
    """
    cols, rows = _RUNNERS[spec.kind](spec)
    return _write_csv(spec, cols, rows)


# --------------------------------------------------------------------------
# gradient verification


def _random_instance(rng):
    """Random system with ``n_t <= 8``, ``n_r <= 8`` and ``M <= 4``."""
    while True:
        n_t = int(rng.choice([2, 4, 6, 8]))
        n_m = int(rng.choice([m for m in range(1, n_t + 1) if n_t % m == 0]))
        n_rf = int(rng.integers(1, n_m + 1))
        n_r = int(rng.integers(1, 9))
        cfg = derive_config(n_t, n_r, n_t // n_m, n_m, n_rf, rho=float(10 ** rng.uniform(-1, 1)))
        if cfg.M <= 4:
            break
    H = (rng.standard_normal((n_r, n_t)) + 1j * rng.standard_normal((n_r, n_t))) / math.sqrt(2)
    lam = rng.uniform(0.2, 2.0, cfg.dim_lambda)
    lam *= cfg.dim_lambda / lam.sum()
    a = rng.uniform(0.3, 1.0, n_t) * np.exp(1j * rng.uniform(-np.pi, np.pi, n_t)) / math.sqrt(cfg.n_k)
    return cfg, H, lam, a


def gradient_suite(n_instances: int = 50, seed: int = 0, h: float = 1e-6) -> dict[str, float]:
    """Worst finite-difference relative error of each analytic gradient.

    Runs ``n_instances`` random systems (``n_t, n_r <= 8``, ``M <= 4``) per
    gradient.  The barrier costs are evaluated in 50-digit arithmetic so the
    differences measure the analytic formula, not cancellation.
    """
    import mpmath

    rng = substream(seed, 0)
    worst = dict.fromkeys(("rlb_lambda", "rlb_a", "barrier_lambda", "barrier_a"), 0.0)
    with mpmath.workdps(50):
        for _ in range(n_instances):
            _check_instance(rng, worst, h)
    return worst


def _check_instance(rng, worst, h):
    import mpmath as mp

    cfg, H, lam, a = _random_instance(rng)
    worst["rlb_lambda"] = max(worst["rlb_lambda"], finite_diff_check(
        lambda x: rlb_bits(H, x, a, cfg), lambda x: grad_rlb_lambda(H, x, a, cfg), lam, h))
    worst["rlb_a"] = max(worst["rlb_a"], finite_diff_check(
        lambda x: rlb_bits(H, lam, x, cfg), lambda x: grad_rlb_a(H, lam, x, cfg), a, h))
    t_b = float(rng.uniform(1.0, 128.0))
    worst["barrier_lambda"] = max(worst["barrier_lambda"], finite_diff_check(
        lambda x: mp.fsum(mp.log(mp.mpf(v)) for v in x) / t_b,
        lambda x: grad_barrier_lambda(x, t_b), lam, h))
    p = float(rng.choice([2.0, 8.0, 32.0, 42.0, 64.0]))
    r = 1.0 / math.sqrt(cfg.n_k)
    b = a * (rng.uniform(0.3, 0.95) * r / lp_norm(a, p))

    def barrier_a(x):
        # |x_i| in double precision is exact enough; the mp sum avoids cancellation
        nrm = mp.fsum(mp.mpf(abs(v)) ** p for v in x) ** (1 / mp.mpf(p))
        return mp.log(r - nrm) / t_b

    worst["barrier_a"] = max(worst["barrier_a"], finite_diff_check(
        barrier_a, lambda x: grad_barrier_a(x, p, t_b, cfg.n_k), b, h))
