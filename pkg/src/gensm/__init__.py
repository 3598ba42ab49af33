"""GenSM-aided mmWave MIMO: channel model, SE metrics and hybrid precoder optimization."""
from .channel import ChannelParams, ChannelRealization, generate_ensemble, sample_channel, substream
from .errors import GensmError
from .metrics import (SeEstimate, constant_gap, conditional_mi, se_lower_bound, shifted_approximation,
                      spatial_mi_mc, true_se_mc)
from .optimizer import AnalogOptParams, DigitalOptParams, HybridResult, optimize_hybrid, random_initial_point
from .system import SystemConfig, config_from_snr, derive_config

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "ChannelRealization", "generate_ensemble", "sample_channel", "substream",
    "GensmError", "SeEstimate", "constant_gap", "conditional_mi", "se_lower_bound",
    "shifted_approximation", "spatial_mi_mc", "true_se_mc", "AnalogOptParams", "DigitalOptParams",
    "HybridResult", "optimize_hybrid", "random_initial_point", "SystemConfig", "config_from_snr",
    "derive_config",
]
