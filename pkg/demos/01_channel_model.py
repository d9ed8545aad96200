"""
The misaligned multiple-access channel in the sampled domain
============================================================

M sensors send L real symbols each.  Their pulses arrive at different
delays and with different phases, so the receiver sees overlapping
staircases rather than one clean sum per slot.  This script builds the
sampling matrix for a tiny channel and checks that it is just a
convolution with an all-ones kernel.
"""
import numpy as np

from moac.model import (ChannelConfig, apply_channel, build_D, decompose_convolutional,
                        flatten, kernel_spectrum, sum_target)

# %%
# Two sensors, two slots.  Sensor 2 lags by half a period and arrives
# rotated by 90 degrees.
cfg = ChannelConfig(M=2, L=2, tau=[0.0, 0.5], h=[1, 1j])
s = np.array([[1.0, 3.0],
              [2.0, 4.0]])

D = build_D(cfg)
print("D =")
print(D)

# %%
# Symbols are interleaved slot by slot: s1[1], s2[1], s1[2], s2[2].
# Every interior row of D holds exactly M gains.
y = D @ flatten(s)
print("y =", y)

# %%
# The same samples come out of a plain linear convolution.
k, lam = decompose_convolutional(cfg)
print("conv matches D:", np.allclose(np.convolve(k, lam * flatten(s)), y))

# %%
# What the receiver actually wants is the aligned per-slot sum.
print("target s+ =", sum_target(s))

# %%
# The kernel's N-point spectrum never touches zero because M and
# N = M(L+1)-1 are coprime.  That is what makes the deconvolution safe.
for M, L in [(2, 2), (8, 64), (14, 256)]:
    K = kernel_spectrum(M, L)
    N = M * (L + 1) - 1
    print(f"M={M:2d} L={L:3d}  min|K| = {np.abs(K).min():.4f}  sin(pi/N) = {np.sin(np.pi / N):.4f}")

# %%
# Add noise at 10 dB and the samples scatter around the clean ones.
noisy = apply_channel(cfg.replace(snr_db=10.0), s, seed=0)
print("noisy y =", np.round(noisy, 3))
