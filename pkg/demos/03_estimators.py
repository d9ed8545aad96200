"""
Recovering the aligned sum
==========================

Four ways to estimate s+ from misaligned samples, on one packet at 0 dB.
"""
import numpy as np

from moac.estimators import (PriorStats, estimate_aligned, estimate_lmmse, estimate_ls,
                             wiener_deconvolve)
from moac.metrics import estimation_snr_db, mse
from moac.model import ChannelConfig, apply_channel, noise_sigma, sum_target

M, L = 4, 32
prior = PriorStats(np.full(M, 10.0), np.ones(M))
cfg = ChannelConfig.random(M, L, snr_db=0.0, seed=11)

rng = np.random.default_rng(5)
s = prior.mean[:, None] + rng.standard_normal((M, L))
var = noise_sigma(cfg, s)
y = apply_channel(cfg, s, seed=6, noise_var=var)
truth = sum_target(s)

# %%
# The aligned reader ignores misalignment and picks the one sample per slot
# where all pulses overlap.  LS inverts D exactly.  LMMSE uses the prior.
# Wiener deconvolves the all-ones kernel in the frequency domain.
# One packet is a noisy comparison; 04_snr_sweep.py averages over many.
results = {
    "aligned": estimate_aligned(y, cfg),
    "ls": estimate_ls(y, cfg),
    "lmmse": estimate_lmmse(y, cfg, prior, noise_var=var),
    "wiener": wiener_deconvolve(y, cfg),
}
for name, out in results.items():
    print(f"{name:8s} mse {mse(out.s_plus_hat, truth):10.3f}  "
          f"snr {estimation_snr_db(out.s_plus_hat, truth):6.2f} dB  "
          f"{out.elapsed * 1e6:8.1f} us")
