"""Reference schemes: unprecoded GenSM, water-filling MIMO, conventional sub-connected."""
from __future__ import annotations

import math

import numpy as np

from .errors import InvalidDimensions, RankDeficient
from .metrics import LOG2E, SeEstimate, se_lower_bound, true_se_mc
from .system import SystemConfig, uniform_power, unit_phase_analog

__all__ = [
    "no_precoding_baseline",
    "waterfilling_powers",
    "waterfilling_baseline",
    "sub_connected_se",
]


def no_precoding_baseline(H, cfg: SystemConfig, n_samples: int = 20000, rng=None):
    """Bound and Monte-Carlo SE with ``D_m = I`` and ``A = I / sqrt(n_k)``.

    Returns ``(rlb, true_se)``.
    """
    lam = uniform_power(cfg)
    a = unit_phase_analog(cfg)
    return se_lower_bound(H, lam, a, cfg), true_se_mc(H, lam, a, cfg, n_samples, rng)


def waterfilling_powers(gains, total: float) -> np.ndarray:
    """Water-filling levels ``p_i = max(mu - 1/g_i, 0)`` with ``sum p_i = total``.

    ``gains`` are the per-mode SNR gains ``sigma_i^2 / noise``, all positive.
    Uses the usual active-set iteration: drop the weakest mode while its level
    would be negative.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g <= 0):
        raise RankDeficient("water-filling needs strictly positive mode gains")
    order = np.argsort(-g)
    inv = 1.0 / g[order]
    k = g.size
    while k > 0:
        mu = (total + inv[:k].sum()) / k
        if mu > inv[k - 1]:
            break
        k -= 1
    p_sorted = np.zeros_like(inv)
    p_sorted[:k] = mu - inv[:k]
    p = np.empty_like(p_sorted)
    p[order] = p_sorted
    return p


def waterfilling_baseline(H, n_s: int, rho: float, sigma_n_sq: float = 1.0) -> SeEstimate:
    """Capacity of the ``n_s`` strongest singular modes of ``H`` with power ``rho``."""
    s = np.linalg.svd(np.asarray(H, dtype=complex), compute_uv=False)
    if n_s > s.size or s[n_s - 1] <= s[0] * 1e-12:
        raise RankDeficient(f"channel has fewer than n_s={n_s} usable singular modes")
    g = s[:n_s] ** 2 / sigma_n_sq
    p = waterfilling_powers(g, rho)
    return SeEstimate(float(np.sum(np.log1p(p * g))) * LOG2E)


def sub_connected_se(H, lam, a, cfg: SystemConfig) -> SeEstimate:
    """Rate of a conventional sub-connected precoder, ``log2 |I + rho/(n_s sigma^2) F F^H|``.

    Only defined when every group is always active (``n_m == n_rf``); then
    ``F = H A C D`` with the single selection matrix ``C``.  Computed with a
    plain ``slogdet`` so it does not share code with the GenSM metrics.
    """
    if cfg.n_m != cfg.n_rf:
        raise InvalidDimensions("sub-connected evaluation needs n_m == n_rf")
    H = np.asarray(H, dtype=complex)
    a = np.asarray(a, dtype=complex).ravel()
    d = np.sqrt(np.asarray(lam, dtype=float).ravel())
    F = np.zeros((cfg.n_r, cfg.n_rf), dtype=complex)
    for r in range(cfg.n_rf):
        ants = slice(r * cfg.n_k, (r + 1) * cfg.n_k)
        F[:, r] = H[:, ants] @ a[ants] * d[r]
    G = np.eye(cfg.n_r) + cfg.rho / (cfg.n_s * cfg.sigma_n_sq) * F @ F.conj().T
    sign, logdet = np.linalg.slogdet(G)
    return SeEstimate(float(logdet) / math.log(2.0))
