"""Oversampled continuous-time simulation and the WMFS front end.

Time is discretized into Q bins per symbol period.  Sensor m's symbol l
(1-based) occupies [(l-1)T + tau_m, lT + tau_m) with a unit rectangular
pulse.  The whitened matched filter for interval m is realized as the bin
average over [(i-1)T + tau_m, (i-1)T + tau_{m+1}), with tau_{M+1} = T,
which is what sampling the matched-filter output at (i-1)T + tau_{m+1}
produces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ChannelConfig, SymbolBlock, _check_block, complex_noise

MIN_OVERSAMPLE = 64


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    Q: int
    T: float = 1.0

    @property
    def dt(self) -> float:
        return self.T / self.Q

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.t, self.samples.real, self.samples.imag]),
                   delimiter=",", header="t,re,im", comments="", fmt="%.17g")


@dataclass(frozen=True)
class WmfsFilterBank:
    """Bin offsets of the M filter intervals within one symbol period."""

    edges: np.ndarray  # length M+1, edges[0] == 0, edges[M] == Q
    Q: int

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def filter_bank(cfg: ChannelConfig, Q: int) -> WmfsFilterBank:
    """Snap the delays to the Q-grid; rejects grids too coarse to separate them."""
    if Q < MIN_OVERSAMPLE:
        raise ValueError(f"oversample factor must be >= {MIN_OVERSAMPLE}, got {Q}")
    bins = np.rint(cfg.tau / cfg.T * Q).astype(np.int64)
    edges = np.append(bins, Q)
    if np.any(np.diff(edges) < 1):
        raise ValueError(f"Q={Q} cannot separate the delays {cfg.tau.tolist()}")
    return WmfsFilterBank(edges=edges, Q=Q)


def synthesize(cfg: ChannelConfig, s, Q: int = 256) -> Waveform:
    """Noiseless received waveform sum_m h_m x_m(t - tau_m) on the Q-grid."""
    v = _check_block(cfg, s)
    bank = filter_bank(cfg, Q)
    M, L = cfg.M, cfg.L
    out = np.zeros(Q * (L + 1), dtype=np.complex128)
    for m in range(M):
        d = bank.edges[m]
        out[d:d + Q * L] += cfg.h[m] * np.repeat(v[m], Q)
    return Waveform(out, Q, cfg.T)


def wmfs_sample(w: Waveform, cfg: ChannelConfig, Q: int | None = None) -> np.ndarray:
    """Interval-average samples y_m[i] in the interleaved sample order."""
    Q = w.Q if Q is None else Q
    if Q != w.Q or w.samples.size != Q * (cfg.L + 1):
        raise ValueError("waveform does not match the channel config / oversample factor")
    bank = filter_bank(cfg, Q)
    periods = w.samples.reshape(cfg.L + 1, Q)
    sums = np.add.reduceat(periods, bank.edges[:-1], axis=1)
    y = (sums / bank.widths).reshape(-1)
    return y[: cfg.n_samples]


def add_waveform_noise(w: Waveform, N0: float, seed=None) -> Waveform:
    """Add white complex noise of PSD N0 (per-bin variance N0/dt)."""
    if N0 < 0:
        raise ValueError("N0 must be nonnegative")
    if N0 == 0:
        return w
    rng = np.random.default_rng(seed)
    noise = complex_noise(rng, N0 / w.dt, w.samples.size)
    return Waveform(w.samples + noise, w.Q, w.T)


def sample_noise_variance(cfg: ChannelConfig, N0: float, Q: int) -> np.ndarray:
    """Per-interval noise variance N0 / delta_tau_m after the WMFS average."""
    bank = filter_bank(cfg, Q)
    return N0 / (bank.widths * (cfg.T / Q))


def simulate_samples(cfg: ChannelConfig, s, Q: int = 256, N0: float = 0.0,
                     seed=None) -> np.ndarray:
    """synthesize -> add_waveform_noise -> wmfs_sample in one call."""
    w = synthesize(cfg, s, Q)
    w = add_waveform_noise(w, N0, seed)
    return wmfs_sample(w, cfg, Q)


def n0_for_snr(cfg: ChannelConfig, s) -> float:
    """Noise PSD giving the configured Es/N0 for a packet (symbol energy Es*T)."""
    v = s.values if isinstance(s, SymbolBlock) else np.asarray(s)
    if math.isinf(cfg.snr_db):
        return 0.0
    return float(np.mean(v ** 2)) * cfg.T / cfg.snr_linear
