"""How close is the shifted closed-form bound to the Monte-Carlo SE?

Draws a small ensemble of clustered channels, evaluates unprecoded GenSM at
a few SNRs and prints the bound, the shifted bound and the MC estimate side
by side.  The shifted bound is the quantity the optimizer works with.
"""
import numpy as np

from gensm import ChannelParams, derive_config, generate_ensemble
from gensm.metrics import constant_gap, se_lower_bound, true_se_mc
from gensm.system import uniform_power, unit_phase_analog

cfg = derive_config(n_t=8, n_r=8, n_k=2, n_m=4, n_rf=2)
channels = generate_ensemble(cfg, ChannelParams(), n=20, seed=11)
gap = constant_gap(cfg)
print(f"M = {cfg.M} AGCs, constant gap {gap:.3f} bit/s/Hz")
print(f"{'SNR':>5} {'R_LB':>8} {'shifted':>8} {'MC R':>8} {'diff':>7}")

for snr in (-20, -10, 0, 10):
    c = cfg.with_rho(10 ** (snr / 10))
    lam, a = uniform_power(c), unit_phase_analog(c)
    lb = np.mean([se_lower_bound(ch.H, lam, a, c).value for ch in channels])
    mc = np.mean([true_se_mc(ch.H, lam, a, c, 4000, k).value for k, ch in enumerate(channels)])
    print(f"{snr:5d} {lb:8.3f} {lb - gap:8.3f} {mc:8.3f} {lb - gap - mc:+7.3f}")

# The gap is exact only at the SNR extremes.  In between the shifted bound
# stays a few tenths of a bit below the true SE.
