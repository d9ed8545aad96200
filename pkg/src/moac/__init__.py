"""Aggregating sensor data over a time- and phase-misaligned multiple-access channel."""

__version__ = "0.1.0"

from .model import (ChannelConfig, SymbolBlock, apply_channel, build_D,
                    decompose_convolutional, flatten, gain_diagonal, kernel_spectrum,
                    noise_sigma, reshape_samples, sum_target, unflatten)
from .estimators import (EstimatorOutput, PriorStats, WienerConfig, estimate_aligned,
                         estimate_lmmse, estimate_ls, wiener_deconvolve, wiener_filter)
from .metrics import estimation_snr_db, mse

__all__ = [
    "ChannelConfig", "SymbolBlock", "apply_channel", "build_D", "decompose_convolutional",
    "flatten", "gain_diagonal", "kernel_spectrum", "noise_sigma", "reshape_samples",
    "sum_target", "unflatten", "EstimatorOutput", "PriorStats", "WienerConfig",
    "estimate_aligned", "estimate_lmmse", "estimate_ls", "wiener_deconvolve",
    "wiener_filter", "estimation_snr_db", "mse",
]
