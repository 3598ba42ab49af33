"""System model: dimensions, antenna-group combinations, precoders and covariances.

The transmitter has ``n_t = n_k * n_m`` antennas split into ``n_m`` groups of
``n_k`` antennas.  Each symbol period the space-domain bits pick one of ``M``
antenna-group combinations (AGCs), i.e. which ``n_rf`` groups the RF chains
drive.  The digital precoder is stored as the power vector ``lam`` of length
``M * n_s`` (block ``m`` holds the squared diagonal of ``D_m``) and the analog
precoder as the vector ``a`` of phase-shifter coefficients.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, InvalidDimensions, InvalidIndices

__all__ = [
    "SystemConfig",
    "PowerAllocation",
    "AnalogVector",
    "derive_config",
    "config_from_snr",
    "agc_count",
    "selection_matrix",
    "effective_channels",
    "covariance",
    "covariances",
    "sample_received",
    "uniform_power",
    "unit_phase_analog",
]


def agc_count(n_m: int, n_rf: int) -> int:
    """Number of usable AGCs, the largest power of two not above C(n_m, n_rf)."""
    return 1 << (math.comb(n_m, n_rf).bit_length() - 1)


@dataclass(frozen=True)
class SystemConfig:
    """Immutable system dimensions and power parameters.

    Use :func:`derive_config` to build one; it validates the dimensions.
    """

    n_t: int
    n_r: int
    n_k: int
    n_m: int
    n_rf: int
    n_s: int
    rho: float
    sigma_n_sq: float = 1.0
    agc_table: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        m = agc_count(self.n_m, self.n_rf)
        table = tuple(itertools.islice(
            itertools.combinations(range(1, self.n_m + 1), self.n_rf), m))
        object.__setattr__(self, "agc_table", table)

    @property
    def M(self) -> int:
        return len(self.agc_table)

    @property
    def dim_lambda(self) -> int:
        return self.M * self.n_s

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.rho / self.sigma_n_sq) if self.rho > 0 else -math.inf

    @cached_property
    def selection_matrices(self) -> np.ndarray:
        """Stacked AG-selection matrices, shape ``(M, n_t, n_rf)``."""
        return np.stack([selection_matrix(u, self.n_k, self.n_m) for u in self.agc_table])

    def with_rho(self, rho: float) -> "SystemConfig":
        return derive_config(self.n_t, self.n_r, self.n_k, self.n_m, self.n_rf,
                             self.n_s, rho, self.sigma_n_sq)

    def with_partition(self, n_k: int, n_m: int) -> "SystemConfig":
        return derive_config(self.n_t, self.n_r, n_k, n_m, self.n_rf, self.n_s,
                             self.rho, self.sigma_n_sq)

    def as_dict(self) -> dict:
        return {"n_t": self.n_t, "n_r": self.n_r, "n_k": self.n_k, "n_m": self.n_m,
                "n_rf": self.n_rf, "n_s": self.n_s, "rho": self.rho,
                "sigma_n_sq": self.sigma_n_sq, "M": self.M}


def derive_config(n_t, n_r, n_k, n_m, n_rf, n_s=None, rho=1.0, sigma_n_sq=1.0) -> SystemConfig:
    """Validate dimensions and build a :class:`SystemConfig`.

    ``n_s`` defaults to ``n_rf``.  Only ``n_s == n_rf`` is supported, since
    ``C_m`` has ``n_rf`` columns and ``D_m`` is ``n_s x n_s``.

    Raises
    ------
    InvalidDimensions
        Naming the violated constraint.
    """
    if n_s is None:
        n_s = n_rf
    for name, v in (("n_t", n_t), ("n_r", n_r), ("n_k", n_k), ("n_m", n_m),
                    ("n_rf", n_rf), ("n_s", n_s)):
        if int(v) != v or v < 1:
            raise InvalidDimensions(f"{name} must be a positive integer, got {v!r}")
    if n_k * n_m != n_t:
        raise InvalidDimensions(f"n_t = n_k * n_m violated: {n_t} != {n_k} * {n_m}")
    if n_m < n_rf:
        raise InvalidDimensions(f"n_m >= n_rf violated: {n_m} < {n_rf}")
    if n_s > n_rf:
        raise InvalidDimensions(f"n_s <= n_rf violated: {n_s} > {n_rf}")
    if n_s != n_rf:
        raise InvalidDimensions(f"only n_s == n_rf is supported, got n_s={n_s}, n_rf={n_rf}")
    if rho < 0:
        raise InvalidDimensions(f"rho must be nonnegative, got {rho}")
    if sigma_n_sq <= 0:
        raise InvalidDimensions(f"sigma_n_sq must be positive, got {sigma_n_sq}")
    return SystemConfig(int(n_t), int(n_r), int(n_k), int(n_m), int(n_rf), int(n_s),
                        float(rho), float(sigma_n_sq))


def config_from_snr(n_t, n_r, n_k, n_m, n_rf, snr_db, n_s=None) -> SystemConfig:
    """Config with ``sigma_n_sq = 1`` and ``rho = 10**(snr_db / 10)``."""
    return derive_config(n_t, n_r, n_k, n_m, n_rf, n_s, 10.0 ** (snr_db / 10.0), 1.0)


def selection_matrix(u_m, n_k: int, n_m: int) -> np.ndarray:
    """AG-selection matrix ``C_m = [e_u1, ..., e_uR] kron 1_{n_k}``.

    ``u_m`` holds 1-based, strictly increasing group indices.  Returns a 0/1
    float array of shape ``(n_k * n_m, len(u_m))``.
    """
    u = np.asarray(u_m, dtype=int).ravel()
    if u.size == 0 or u[0] < 1 or u[-1] > n_m or np.any(np.diff(u) <= 0):
        raise InvalidIndices(f"group indices must be strictly increasing in [1, {n_m}], got {u.tolist()}")
    eye = np.eye(n_m)[:, u - 1]
    return np.kron(eye, np.ones((n_k, 1)))


@dataclass(frozen=True)
class PowerAllocation:
    """Joint power allocation vector (squared digital-precoder diagonals)."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float).ravel()
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    def __array__(self, dtype=None, copy=None):
        return self.lam if dtype is None else self.lam.astype(dtype)

    def blocks(self, cfg: SystemConfig) -> np.ndarray:
        return self.lam.reshape(cfg.M, cfg.n_s)

    def digital_precoders(self, cfg: SystemConfig) -> np.ndarray:
        """The diagonal matrices ``D_m = diag(sqrt(lam_m))``, shape ``(M, n_s, n_s)``."""
        d = np.sqrt(self.blocks(cfg))
        return d[:, :, None] * np.eye(cfg.n_s)

    def is_feasible(self, cfg: SystemConfig, rtol: float = 1e-9) -> bool:
        total = cfg.dim_lambda
        return (self.lam.size == total and bool(np.all(self.lam >= 0))
                and abs(self.lam.sum() - total) <= rtol * total)


@dataclass(frozen=True)
class AnalogVector:
    """Analog precoder diagonal; ``mode`` is ``"relaxed"`` or ``"projected"``."""

    a: np.ndarray
    mode: str = "projected"

    def __post_init__(self):
        a = np.array(self.a, dtype=complex).ravel()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        if self.mode not in ("relaxed", "projected"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def __array__(self, dtype=None, copy=None):
        return self.a if dtype is None else self.a.astype(dtype)

    def is_feasible(self, n_k: int, rtol: float = 1e-12) -> bool:
        r = 1.0 / math.sqrt(n_k)
        mod = np.abs(self.a)
        if self.mode == "projected":
            return bool(np.all(np.abs(mod - r) <= rtol * r))
        return bool(np.all(mod <= r * (1 + rtol)))


def uniform_power(cfg: SystemConfig) -> np.ndarray:
    return np.ones(cfg.dim_lambda)


def unit_phase_analog(cfg: SystemConfig, phases=None) -> np.ndarray:
    """Analog vector of modulus ``1/sqrt(n_k)``; zero phases by default."""
    if phases is None:
        phases = np.zeros(cfg.n_t)
    return np.exp(1j * np.asarray(phases, dtype=float)) / math.sqrt(cfg.n_k)


def _check_shapes(H, lam, a, cfg):
    H = np.asarray(H, dtype=complex)
    lam = np.asarray(lam, dtype=float).ravel()
    a = np.asarray(a, dtype=complex).ravel()
    if H.shape != (cfg.n_r, cfg.n_t):
        raise DimensionMismatch(f"H has shape {H.shape}, expected {(cfg.n_r, cfg.n_t)}")
    if lam.size != cfg.dim_lambda:
        raise DimensionMismatch(f"lambda has length {lam.size}, expected {cfg.dim_lambda}")
    if a.size != cfg.n_t:
        raise DimensionMismatch(f"a has length {a.size}, expected {cfg.n_t}")
    return H, lam, a


def effective_channels(H, a, cfg: SystemConfig) -> np.ndarray:
    """``H A C_m`` for every AGC, shape ``(M, n_r, n_rf)``."""
    HA = np.asarray(H, dtype=complex) * np.asarray(a, dtype=complex).ravel()[None, :]
    return HA[None, :, :] @ cfg.selection_matrices


def covariances(H, lam, a, cfg: SystemConfig) -> np.ndarray:
    """All received-signal covariances ``Sigma_m``, shape ``(M, n_r, n_r)``."""
    H, lam, a = _check_shapes(H, lam, a, cfg)
    G = effective_channels(H, a, cfg)
    lam_b = lam.reshape(cfg.M, cfg.n_s)
    X = (G * lam_b[:, None, :]) @ np.conj(np.swapaxes(G, 1, 2))
    S = cfg.sigma_n_sq * np.eye(cfg.n_r) + (cfg.rho / cfg.n_s) * X
    return 0.5 * (S + np.conj(np.swapaxes(S, 1, 2)))


def covariance(H, a, C_m, lambda_m, cfg: SystemConfig) -> np.ndarray:
    """Covariance of ``y`` given AGC ``m``:
    ``sigma^2 I + (rho/n_s) H A C_m diag(lambda_m) C_m^H A^H H^H``.
    """
    H = np.asarray(H, dtype=complex)
    a = np.asarray(a, dtype=complex).ravel()
    C_m = np.asarray(C_m, dtype=float)
    lambda_m = np.asarray(lambda_m, dtype=float).ravel()
    if H.shape != (cfg.n_r, cfg.n_t) or a.size != cfg.n_t:
        raise DimensionMismatch("H or a inconsistent with cfg")
    if C_m.shape != (cfg.n_t, cfg.n_rf) or lambda_m.size != cfg.n_s:
        raise DimensionMismatch("C_m or lambda_m inconsistent with cfg")
    G = (H * a[None, :]) @ C_m
    S = cfg.sigma_n_sq * np.eye(cfg.n_r) + (cfg.rho / cfg.n_s) * (G * lambda_m) @ G.conj().T
    return 0.5 * (S + S.conj().T)


def sample_received(H, a, C_m, lambda_m, cfg: SystemConfig, rng: np.random.Generator,
                    size: int | None = None) -> np.ndarray:
    """Draw ``y = sqrt(rho) H A C_m D_m x + n`` with Gaussian ``x`` and ``n``.

    Returns shape ``(n_r,)``, or ``(size, n_r)`` when ``size`` is given.
    """
    H = np.asarray(H, dtype=complex)
    a = np.asarray(a, dtype=complex).ravel()
    d = np.sqrt(np.asarray(lambda_m, dtype=float).ravel())
    n = 1 if size is None else size
    x = _cn(rng, (n, cfg.n_s), 1.0 / cfg.n_s)
    noise = _cn(rng, (n, cfg.n_r), cfg.sigma_n_sq)
    B = math.sqrt(cfg.rho) * ((H * a[None, :]) @ np.asarray(C_m, dtype=float)) * d[None, :]
    y = x @ B.T + noise
    return y[0] if size is None else y


def _cn(rng, shape, var):
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    s = math.sqrt(var / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
