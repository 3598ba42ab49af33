"""Which antenna-group partition (n_k, n_m) should be used at a given SNR?

More groups (large n_m) carry more spatial bits but each group has fewer
antennas for beamforming.  At low SNR beamforming wins, at high SNR the
spatial bits do.  Run with a handful of channels for a quick look.
"""
from gensm import ChannelParams, derive_config, generate_ensemble
from gensm.param_select import select_params

base = derive_config(8, 8, 2, 4, 1)
channels = generate_ensemble(base, ChannelParams(), n=4, seed=5)

for snr in (-5.0, 0.0, 5.0, 10.0):
    best, table = select_params(base, channels, snr, seed=5)
    cells = "  ".join(f"({c.n_k},{c.n_m}) {c.mean_rlb:6.3f}" for c in table)
    print(f"{snr:+5.1f} dB  {cells}   -> ({best.n_k},{best.n_m})")
