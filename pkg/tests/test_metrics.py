import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from gensm.errors import NumericalFailure
from gensm.metrics import (LOG2E, SeEstimate, conditional_mi, constant_gap, covariances,
                           se_lower_bound, shifted_approximation, spatial_mi_lower_bound,
                           spatial_mi_mc, true_se_mc)
from gensm.channel import ChannelParams, sample_channel, substream
from gensm.system import derive_config, uniform_power, unit_phase_analog
from util import complex_gaussian


def _instance(rng, cfg):
    H = complex_gaussian(rng, (cfg.n_r, cfg.n_t))
    lam = rng.uniform(0.1, 1.0, cfg.dim_lambda)
    lam *= cfg.dim_lambda / lam.sum()
    a = unit_phase_analog(cfg, rng.uniform(-np.pi, np.pi, cfg.n_t))
    return H, lam, a


def _naive_rlb(H, lam, a, cfg):
    sig = covariances(H, lam, a, cfg)
    M = cfg.M
    inner = [sum(1.0 / np.linalg.det(sig[n] + sig[t]).real for t in range(M)) for n in range(M)]
    return (math.log2(M / (math.e * cfg.sigma_n_sq) ** cfg.n_r)
            - np.mean([math.log2(v) for v in inner]))


def test_zero_power_bound(table_cfg, rng):
    cfg = table_cfg.with_rho(0.0)
    H, lam, a = _instance(rng, cfg)
    assert se_lower_bound(H, lam, a, cfg).value == pytest.approx(cfg.n_r * (1 - LOG2E), abs=1e-12)
    assert conditional_mi(H, lam, a, cfg).value == pytest.approx(0.0, abs=1e-12)
    assert shifted_approximation(se_lower_bound(H, lam, a, cfg), cfg).value == pytest.approx(0, abs=1e-12)


def test_matches_naive_determinants(table_cfg):
    cfg = table_cfg
    H = sample_channel(cfg, ChannelParams(), substream(11)).H
    lam = uniform_power(cfg)
    a = unit_phase_analog(cfg)
    assert se_lower_bound(H, lam, a, cfg).value == pytest.approx(_naive_rlb(H, lam, a, cfg), rel=1e-10)


def test_single_agc_collapse(rng):
    cfg = derive_config(4, 3, 2, 2, 2, rho=4.0)
    H, lam, a = _instance(rng, cfg)
    sig = covariances(H, lam, a, cfg)[0]
    expect = cfg.n_r * (1 - LOG2E) + math.log2(np.linalg.det(sig).real)
    r = se_lower_bound(H, lam, a, cfg).value
    assert r == pytest.approx(expect, rel=1e-12)
    se = true_se_mc(H, lam, a, cfg, 500, 1)
    assert se.value == conditional_mi(H, lam, a, cfg).value
    assert shifted_approximation(SeEstimate(r), cfg).value == pytest.approx(se.value, abs=1e-12)
    sp = spatial_mi_mc(H, lam, a, cfg, 500, 1)
    assert sp.value == 0.0 and sp.std_error == 0.0


def test_scalar_capacity():
    cfg = derive_config(1, 1, 1, 1, 1, rho=3.0)
    h = np.array([[0.6 - 0.8j]])
    val = conditional_mi(h, [1.0], [1.0], cfg).value
    assert val == pytest.approx(math.log2(1 + 3.0))


def test_decomposition_cross_check(table_cfg, rng):
    H, lam, a = _instance(rng, table_cfg)
    r = se_lower_bound(H, lam, a, table_cfg).value
    c = conditional_mi(H, lam, a, table_cfg).value
    i_lb = spatial_mi_lower_bound(H, lam, a, table_cfg).value
    assert r == pytest.approx(c + i_lb, rel=1e-12)


def test_shift_magnitude():
    assert -constant_gap(derive_config(8, 8, 2, 4, 2)) == pytest.approx(3.5416, abs=1e-4)
    with pytest.raises(ValueError):
        shifted_approximation(SeEstimate(1.0, "monte_carlo", 10, 0.1), derive_config(2, 1, 1, 2, 1))


def test_estimate_validation():
    with pytest.raises(ValueError):
        SeEstimate(1.0, "monte_carlo", 0, 0.1)
    with pytest.raises(ValueError):
        SeEstimate(1.0, "guess")
    rec = SeEstimate(2.0, "monte_carlo", 5, 0.1).as_record()
    assert rec == {"value": 2.0, "kind": "monte_carlo", "n_samples": 5, "std_error": 0.1}


def test_spatial_mi_against_quadrature():
    """Scalar receiver: the mixture entropy is a 1-D radial integral."""
    cfg = derive_config(2, 1, 1, 2, 1, rho=3.0)
    rng = np.random.default_rng(1)
    H = complex_gaussian(rng, (1, 2))
    lam, a = np.array([0.7, 1.3]), np.ones(2, complex)
    s = covariances(H, lam, a, cfg)[:, 0, 0].real

    def f(r):
        return np.mean([np.exp(-r * r / v) / (np.pi * v) for v in s], axis=0)

    h_mix = integrate.quad(lambda r: -f(r) * np.log(f(r)) * 2 * np.pi * r, 0, 12 * math.sqrt(s.max()),
                           limit=500)[0]
    h_comp = np.mean([math.log(math.pi * math.e * v) for v in s])
    exact = (h_mix - h_comp) * LOG2E
    est = spatial_mi_mc(H, lam, a, cfg, 100_000, 4)
    assert abs(est.value - exact) < 3 * est.std_error + 1e-3


def test_high_and_zero_snr_limits(table_cfg):
    H = sample_channel(table_cfg, ChannelParams(), substream(2)).H
    lam, a = uniform_power(table_cfg), unit_phase_analog(table_cfg)
    hi = spatial_mi_mc(H, lam, a, table_cfg.with_rho(1e6), 20000, 3)
    assert abs(hi.value - math.log2(table_cfg.M)) <= 3 * hi.std_error + 1e-9
    lo = spatial_mi_mc(H, lam, a, table_cfg.with_rho(0.0), 20000, 3)
    assert abs(lo.value) <= 3 * lo.std_error + 1e-12


def test_mc_deterministic_and_partition_invariant(table_cfg, rng):
    H, lam, a = _instance(rng, table_cfg)
    one = spatial_mi_mc(H, lam, a, table_cfg, 5000, 77, n_jobs=1)
    many = spatial_mi_mc(H, lam, a, table_cfg, 5000, 77, n_jobs=3)
    assert one == many
    other = spatial_mi_mc(H, lam, a, table_cfg, 5000, 78)
    assert other.value != one.value
    with pytest.raises(ValueError):
        spatial_mi_mc(H, lam, a, table_cfg, 50, 1)


def test_high_snr_constant_gap(table_cfg):
    H = sample_channel(table_cfg, ChannelParams(), substream(4)).H
    cfg = table_cfg.with_rho(1e6)
    lam, a = uniform_power(cfg), unit_phase_analog(cfg)
    se = true_se_mc(H, lam, a, cfg, 20000, 5)
    approx = shifted_approximation(se_lower_bound(H, lam, a, cfg), cfg).value
    assert abs(approx - se.value) <= max(3 * se.std_error, 0.02)


def test_log_domain_at_100_db(table_cfg):
    H = sample_channel(table_cfg, ChannelParams(), substream(4)).H
    cfg = table_cfg.with_rho(1e10)
    r = se_lower_bound(H, uniform_power(cfg), unit_phase_analog(cfg), cfg).value
    assert np.isfinite(r) and r > 50


def test_factorization_failure_raises(table_cfg, rng):
    H, lam, a = _instance(rng, table_cfg)
    with pytest.raises(NumericalFailure):
        se_lower_bound(H * np.nan, lam, a, table_cfg)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([-10.0, 0.0, 10.0]))
def test_lower_bound_property(seed, snr):
    rng = np.random.default_rng(seed)
    cfg = derive_config(4, 2, 1, 4, 2, rho=10 ** (snr / 10))
    H, lam, a = _instance(rng, cfg)
    se = true_se_mc(H, lam, a, cfg, 4000, seed)
    assert se_lower_bound(H, lam, a, cfg).value <= se.value + 3 * se.std_error


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0), st.floats(1.01, 10.0))
def test_conditional_mi_increases_with_power(seed, rho, factor):
    rng = np.random.default_rng(seed)
    cfg = derive_config(4, 2, 2, 2, 1, rho=rho)
    H, lam, a = _instance(rng, cfg)
    assert (conditional_mi(H, lam, a, cfg.with_rho(rho * factor)).value
            > conditional_mi(H, lam, a, cfg).value)
