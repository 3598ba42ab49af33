"""Two-step hybrid precoder optimization of the SE lower bound.

* Digital step: barrier-method projected gradient ascent over the power
  vector ``lam`` on the simplex ``{lam > 0, sum(lam) = M n_s}``.  The bound is
  concave in ``lam``, so this converges to the global optimum of the barrier
  problem.
* Analog step: the unit-modulus constraint ``|a_i| = 1/sqrt(n_k)`` is relaxed
  to the max-modulus ball, which is approached through ``l_p`` balls of
  growing ``p`` with a log barrier; the final iterate is projected back onto
  the phases.
* The driver alternates the two until the projected bound stops improving.

Complex gradients follow the conjugate Wirtinger convention: for a real cost
``f(a)`` the returned ``g = df/d(conj a)``, so the real-coordinate gradient
is ``(2 Re g, 2 Im g)`` and ``g`` itself is an ascent direction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryViolation, DimensionMismatch
from .linalg import cholesky_hpd, logdet_from_cholesky, softmax
from .metrics import LOG2E, constant_gap, rlb_bits
from .system import SystemConfig, covariances, effective_channels

__all__ = [
    "DigitalOptParams",
    "AnalogOptParams",
    "TraceRecord",
    "OptTrace",
    "grad_rlb_lambda",
    "grad_rlb_a",
    "grad_barrier_lambda",
    "grad_barrier_a",
    "lp_norm",
    "project_tangent",
    "project_phases",
    "optimize_digital",
    "optimize_analog",
    "optimize_hybrid",
    "HybridResult",
    "random_initial_point",
    "finite_diff_check",
]


@dataclass(frozen=True)
class DigitalOptParams:
    t_b: float = 64.0
    eps_halt: float = 1e-3
    max_iters: int = 500
    alpha: float = 0.3
    beta: float = 0.7
    eta0: float = 1.0
    max_backtracks: int = 60

    def __post_init__(self):
        if self.t_b <= 0 or self.eps_halt <= 0:
            raise ValueError("t_b and eps_halt must be positive")
        if not 0 < self.alpha < 0.5 or not 0 < self.beta < 1:
            raise ValueError("line search needs 0 < alpha < 0.5 and 0 < beta < 1")


@dataclass(frozen=True)
class AnalogOptParams:
    p0: float = 32.0
    delta_p: float = 10.0
    p_max: float = 64.0
    t_b: float = 64.0
    # 1e-3 halts each p level after a few zigzag steps against the barrier
    eps_halt: float = 1e-4
    max_iters: int = 500
    alpha: float = 0.3
    beta: float = 0.7
    eta0: float = 1.0
    max_backtracks: int = 60

    def __post_init__(self):
        if self.p0 < 2 or self.delta_p <= 0 or self.p_max < self.p0:
            raise ValueError("need p0 >= 2, delta_p > 0 and p_max >= p0")
        if self.t_b <= 0 or self.eps_halt <= 0:
            raise ValueError("t_b and eps_halt must be positive")
        if not 0 < self.alpha < 0.5 or not 0 < self.beta < 1:
            raise ValueError("line search needs 0 < alpha < 0.5 and 0 < beta < 1")

    @property
    def schedule(self) -> list[float]:
        ps = [self.p0]
        while ps[-1] < self.p_max:
            ps.append(ps[-1] + self.delta_p)
        return ps


@dataclass
class TraceRecord:
    iteration: int
    phase: str
    outer: int
    cost: float  # R_LB; for the analog phase, of the phase-projected iterate
    objective: float  # barrier objective actually being ascended
    step: float
    grad_norm: float
    p: float = float("nan")


@dataclass
class OptTrace:
    records: list[TraceRecord] = field(default_factory=list)
    phase_costs: list[tuple[int, str, float]] = field(default_factory=list)
    converged: bool = True
    flags: list[str] = field(default_factory=list)

    def extend(self, other: "OptTrace", outer: int | None = None):
        offset = len(self.records)
        for r in other.records:
            self.records.append(TraceRecord(
                offset + r.iteration, r.phase, r.outer if outer is None else outer,
                r.cost, r.objective, r.step, r.grad_norm, r.p))
        self.flags.extend(other.flags)
        if not other.converged:
            self.converged = False

    @property
    def n_phases(self) -> int:
        return len(self.phase_costs)

    def to_csv(self, path_or_file, extra: dict | None = None):
        cols = ["iteration", "phase", "outer", "cost", "objective", "step", "grad_norm", "p"]
        extra = extra or {}
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(extra) + cols)
            for r in self.records:
                w.writerow(list(extra.values()) + [_fmt(getattr(r, c)) for c in cols])
        finally:
            if own:
                fh.close()


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


# --------------------------------------------------------------------------
# gradients


def _pair_state(H, lam, a, cfg: SystemConfig):
    H = np.asarray(H, dtype=complex)
    sig = covariances(H, lam, a, cfg)
    S = sig[:, None, :, :] + sig[None, :, :, :]
    chol = cholesky_hpd(S)
    W = softmax(-logdet_from_cholesky(chol), axis=1)
    return H, S, W


def grad_rlb_lambda(H, lam, a, cfg: SystemConfig) -> np.ndarray:
    """Gradient of the bound (bits) with respect to the power vector.

    Block ``m`` equals ``rho log2(e) / (M n_s)`` times
    ``sum_k (W_km + W_mk) diag[G_m^H (Sigma_m + Sigma_k)^-1 G_m]`` with
    ``G_m = H A C_m`` and ``W_nt`` the row-normalized ``|Sigma_n + Sigma_t|^-1``.
    The two sums over ``k`` are the two terms of the published expression,
    which finite differences confirm with a plus sign between them.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    H, S, W = _pair_state(H, lam, a, cfg)
    G = effective_channels(H, a, cfg)
    M = cfg.M
    Gb = np.broadcast_to(G[:, None, :, :], (M, M) + G.shape[1:])
    Y = np.linalg.solve(S, Gb)
    E = np.sum((np.conj(Gb) * Y).real, axis=2)  # (M, M, n_rf): E[m, k] = diag(G_m^H S_mk^-1 G_m)
    c = cfg.rho * LOG2E / (M * cfg.n_s)
    return c * np.einsum("mk,mki->mi", W + W.T, E).ravel()


def _block_profiles(lam, cfg: SystemConfig) -> np.ndarray:
    """``P_n = C_n diag(lam_n) C_n^T`` for each AGC, shape ``(M, n_t, n_t)``."""
    C = cfg.selection_matrices
    lam_b = np.asarray(lam, dtype=float).reshape(cfg.M, cfg.n_s)
    return (C * lam_b[:, None, :]) @ np.swapaxes(C, 1, 2)


def grad_rlb_a(H, lam, a, cfg: SystemConfig) -> np.ndarray:
    """Conjugate-Wirtinger gradient of the bound (bits) with respect to ``a``:

    ``rho log2(e)/(M n_s) sum_nt W_nt diag[H^H (Sigma_n+Sigma_t)^-1 H A (P_n + P_t)]``.
    """
    a = np.asarray(a, dtype=complex).ravel()
    H, S, W = _pair_state(H, lam, a, cfg)
    M = cfg.M
    Z = np.linalg.solve(S, np.broadcast_to(H, (M, M) + H.shape))
    K = H.conj().T @ Z
    P = _block_profiles(lam, cfg)
    Q = P[:, None] + P[None, :]
    T = np.einsum("nt,ntij->ij", W, K * Q)
    return cfg.rho * LOG2E / (M * cfg.n_s) * (T @ a)


def grad_barrier_lambda(lam, t_b: float) -> np.ndarray:
    """Gradient of ``sum(log lam) / t_b``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise BoundaryViolation("power vector must be strictly positive")
    return 1.0 / (t_b * lam)


def lp_norm(a, p: float) -> float:
    """``||a||_p`` scaled by ``max |a_i|`` so large ``p`` cannot overflow."""
    mod = np.abs(np.asarray(a))
    mx = float(mod.max(initial=0.0))
    if mx == 0.0:
        return 0.0
    return mx * float(np.sum((mod / mx) ** p)) ** (1.0 / p)


def grad_barrier_a(a, p: float, t_b: float, n_k: int) -> np.ndarray:
    """Conjugate-Wirtinger gradient of ``log(1/sqrt(n_k) - ||a||_p) / t_b``.

    Equals ``-||a||_p^(1-p) p_a / (2 t_b (n_k^-1/2 - ||a||_p))`` with
    ``p_a = a |a|^(p-2)``, evaluated as ``(|a|/||a||_p)^(p-2) a / ||a||_p``.
    """
    a = np.asarray(a, dtype=complex).ravel()
    r = 1.0 / math.sqrt(n_k)
    nrm = lp_norm(a, p)
    if nrm >= r:
        raise BoundaryViolation(f"||a||_{p:g} = {nrm:.6g} is not below 1/sqrt(n_k) = {r:.6g}")
    if nrm == 0.0:
        return np.zeros_like(a)
    dir_ = (np.abs(a) / nrm) ** (p - 2) * a / nrm
    return -dir_ / (2.0 * t_b * (r - nrm))


def project_tangent(g) -> np.ndarray:
    """Remove the mean: orthogonal projection onto ``{d : sum(d) = 0}``."""
    g = np.asarray(g, dtype=float)
    return g - g.mean()


def project_phases(a, n_k: int) -> np.ndarray:
    return np.exp(1j * np.angle(np.asarray(a, dtype=complex))) / math.sqrt(n_k)


# --------------------------------------------------------------------------
# line search


def _backtrack(f, x, fx, d, slope, feasible, params):
    """Backtracking line search for ascent; infeasible trials count as -inf."""
    eta = params.eta0
    for _ in range(params.max_backtracks):
        xn = x + eta * d
        if feasible(xn):
            fn = f(xn)
            if np.isfinite(fn) and fn >= fx + params.alpha * eta * slope:
                return eta, xn, fn
        eta *= params.beta
    return 0.0, x, fx


# --------------------------------------------------------------------------
# algorithms


def optimize_digital(H, a, lambda0, cfg: SystemConfig, params: DigitalOptParams | None = None,
                     outer: int = 0):
    """Maximize ``R_LB + sum(log lam)/t_b`` over the simplex.

    Returns ``(lam, trace)``.  ``trace.converged`` is False when ``max_iters``
    was hit; the last iterate is returned in that case.
    """
    params = params or DigitalOptParams()
    H = np.asarray(H, dtype=complex)
    a = np.asarray(a, dtype=complex).ravel()
    lam = np.array(lambda0, dtype=float).ravel()
    total = cfg.dim_lambda
    if lam.size != total:
        raise DimensionMismatch(f"lambda0 has length {lam.size}, expected {total}")
    if np.any(lam <= 0):
        raise BoundaryViolation("lambda0 must be strictly positive")
    lam *= total / lam.sum()
    trace = OptTrace()
    if total == 1:
        return lam, trace

    def obj(x):
        return rlb_bits(H, x, a, cfg) + np.sum(np.log(x)) / params.t_b

    fx = obj(lam)
    for it in range(params.max_iters):
        g = grad_rlb_lambda(H, lam, a, cfg) + grad_barrier_lambda(lam, params.t_b)
        d = project_tangent(g)
        dn = float(np.linalg.norm(d))
        eta, new, fnew = _backtrack(obj, lam, fx, d, dn * dn, lambda x: bool(np.all(x > 0)), params)
        stop = eta * dn <= params.eps_halt * np.linalg.norm(lam)
        if not stop:
            lam, fx = new, fnew
        trace.records.append(TraceRecord(it, "digital", outer, rlb_bits(H, lam, a, cfg), fx,
                                         eta, dn))
        if stop:
            break
    else:
        trace.converged = False
        trace.flags.append("digital: max_iters reached")
    lam *= total / lam.sum()
    return lam, trace


def _shrink_into_ball(a, p, r, factor=1e-3):
    nrm = lp_norm(a, p)
    if nrm >= (1.0 - factor) * r:
        a = a * ((1.0 - factor) * r / nrm)
    return a


def optimize_analog(H, lam, a0, cfg: SystemConfig, params: AnalogOptParams | None = None,
                    outer: int = 0):
    """Maximize ``R_LB(a) + log(1/sqrt(n_k) - ||a||_p)/t_b`` for growing ``p``.

    The starting point is scaled to sit strictly inside the ``l_p0`` ball
    (``1 - 1e-3`` of the radius) when it is not already.  The inner loop
    continues from the current iterate after each increase of ``p``.
    Returns the phase-projected vector and the trace.
    """
    params = params or AnalogOptParams()
    H = np.asarray(H, dtype=complex)
    lam = np.asarray(lam, dtype=float).ravel()
    r = 1.0 / math.sqrt(cfg.n_k)
    a = _shrink_into_ball(np.array(a0, dtype=complex).ravel(), params.p0, r)
    trace = OptTrace()
    it = 0
    for p in params.schedule:
        def obj(x, p=p):
            u = r - lp_norm(x, p)
            if u <= 0:
                return -np.inf
            return rlb_bits(H, lam, x, cfg) + math.log(u) / params.t_b

        def feasible(x, p=p):
            # an entry passing through zero would flip its phase by pi
            return lp_norm(x, p) < r and bool(np.all((np.conj(a) * x).real > 0))

        fx = obj(a)
        for _ in range(params.max_iters):
            g = grad_rlb_a(H, lam, a, cfg) + grad_barrier_a(a, p, params.t_b, cfg.n_k)
            gn = float(np.linalg.norm(g))
            # directional derivative of the real cost along g is 2 ||g||^2
            eta, new, fnew = _backtrack(obj, a, fx, g, 2.0 * gn * gn, feasible, params)
            stop = eta * gn <= params.eps_halt * np.linalg.norm(a)
            if not stop:
                a, fx = new, fnew
            trace.records.append(TraceRecord(
                it, "analog", outer, rlb_bits(H, lam, project_phases(a, cfg.n_k), cfg),
                fx, eta, gn, p))
            it += 1
            if stop:
                break
        else:
            trace.converged = False
            trace.flags.append(f"analog: max_iters reached at p={p:g}")
    return project_phases(a, cfg.n_k), trace


@dataclass
class HybridResult:
    lam: np.ndarray
    a: np.ndarray
    trace: OptTrace
    rlb: float
    shifted: float
    n_outer: int
    converged: bool = True

    def __iter__(self):
        return iter((self.lam, self.a, self.trace))


def random_initial_point(cfg: SystemConfig, rng: np.random.Generator):
    """Random start: uniform powers rescaled to the simplex, uniform phases."""
    lam = rng.uniform(0.0, 1.0, cfg.dim_lambda)
    while np.any(lam <= 0):
        lam = rng.uniform(0.0, 1.0, cfg.dim_lambda)
    lam *= cfg.dim_lambda / lam.sum()
    theta = rng.uniform(-np.pi, np.pi, cfg.n_t)
    return lam, np.exp(1j * theta) / math.sqrt(cfg.n_k)


def optimize_hybrid(H, lambda0, a0, cfg: SystemConfig, dparams: DigitalOptParams | None = None,
                    aparams: AnalogOptParams | None = None, max_outer: int = 30,
                    eps_outer: float = 1e-4) -> HybridResult:
    """Alternate the digital and analog steps.

    Stops once an outer iteration (digital then analog) changes the bound by
    less than ``eps_outer`` relative to the shifted bound, or after
    ``max_outer`` outer iterations.  ``trace.phase_costs`` holds the
    staircase: the bound after the initial point and after each phase.
    """
    dparams = dparams or DigitalOptParams()
    aparams = aparams or AnalogOptParams()
    H = np.asarray(H, dtype=complex)
    lam = np.array(lambda0, dtype=float).ravel()
    a = project_phases(a0, cfg.n_k)
    gap = constant_gap(cfg)
    trace = OptTrace()
    cost = rlb_bits(H, lam, a, cfg)
    trace.phase_costs.append((0, "init", cost))
    n_outer = 0
    for outer in range(1, max_outer + 1):
        n_outer = outer
        start = cost
        lam, dtr = optimize_digital(H, a, lam, cfg, dparams, outer)
        trace.extend(dtr, outer)
        cost = rlb_bits(H, lam, a, cfg)
        trace.phase_costs.append((len(trace.phase_costs), "digital", cost))
        a_new, atr = optimize_analog(H, lam, a, cfg, aparams, outer)
        trace.extend(atr, outer)
        cost_new = rlb_bits(H, lam, a_new, cfg)
        if cost_new >= cost:
            a, cost = a_new, cost_new
        else:
            trace.flags.append(f"outer {outer}: projected analog step rejected")
        trace.phase_costs.append((len(trace.phase_costs), "analog", cost))
        if abs(cost - start) <= eps_outer * max(abs(cost - gap), 1e-12):
            break
    else:
        trace.converged = False
        trace.flags.append("hybrid: max_outer reached")
        return HybridResult(lam, a, trace, cost, cost - gap, n_outer, False)
    return HybridResult(lam, a, trace, cost, cost - gap, n_outer, True)


# --------------------------------------------------------------------------
# verification


def finite_diff_check(cost, grad, x, h: float = 1e-6, relative_step: bool = True) -> float:
    """Largest relative error between an analytic gradient and central differences.

    ``x`` may be real or complex.  For complex ``x`` the coordinates are the
    stacked real and imaginary parts, and ``grad(x)`` is taken to be the
    conjugate-Wirtinger gradient, compared against numerics as
    ``(2 Re g, 2 Im g)``.  ``cost`` may return a high-precision scalar
    (e.g. an ``mpmath.mpf``); differences are formed before conversion.
    The error per coordinate is ``|analytic - numeric| / max(|numeric|, 1e-12)``.
    """
    x = np.asarray(x)
    is_complex = np.iscomplexobj(x)
    g = np.asarray(grad(x))
    if is_complex:
        coords = np.concatenate([x.real.ravel(), x.imag.ravel()])
        analytic = np.concatenate([2 * g.real.ravel(), 2 * g.imag.ravel()])
        n = x.size

        def rebuild(v):
            return (v[:n] + 1j * v[n:]).reshape(x.shape)
    else:
        coords = x.astype(float).ravel()
        analytic = g.astype(float).ravel()

        def rebuild(v):
            return v.reshape(x.shape)

    worst = 0.0
    for i in range(coords.size):
        step = h * max(abs(coords[i]), 1.0) if relative_step else h
        up = coords.copy()
        dn = coords.copy()
        up[i] += step
        dn[i] -= step
        numeric = float((cost(rebuild(up)) - cost(rebuild(dn))) / (up[i] - dn[i]))
        err = abs(analytic[i] - numeric) / max(abs(numeric), 1e-12)
        worst = max(worst, err)
    return worst
