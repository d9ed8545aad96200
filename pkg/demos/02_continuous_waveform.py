"""
From waveforms to samples
=========================

The sampled model is derived from continuous rectangular pulses.  Here we
simulate the waveform on a fine grid, integrate it over the intervals
between consecutive arrivals and compare with the matrix model.
"""
import numpy as np

from moac.continuous import (add_waveform_noise, filter_bank, n0_for_snr,
                             sample_noise_variance, synthesize, wmfs_sample)
from moac.model import ChannelConfig, build_D, flatten

Q = 256  # bins per symbol period

# %%
# Delays on the Q-grid make the interval averages exact.
cfg = ChannelConfig.random(4, 16, seed=3, grid=Q)
print("delays:", cfg.tau)
bank = filter_bank(cfg, Q)
print("interval widths (bins):", bank.widths)

rng = np.random.default_rng(0)
s = rng.uniform(0, 10, (cfg.M, cfg.L))

# %%
# Noiseless: the oversampled path and D s agree to rounding.
w = synthesize(cfg, s, Q)
y_cont = wmfs_sample(w, cfg, Q)
y_mat = build_D(cfg) @ flatten(s)
print("max |difference| =", np.max(np.abs(y_cont - y_mat)))

# %%
# With noise, each sample's variance is N0 divided by its interval length,
# so short intervals are noisier.
N0 = n0_for_snr(cfg.replace(snr_db=10.0), s)
print("per-interval sample variance:", sample_noise_variance(cfg, N0, Q))
noisy = wmfs_sample(add_waveform_noise(w, N0, seed=1), cfg, Q)
print("sample error std:", np.std(noisy - y_mat))
