"""Sampled-domain model of a time- and gain-misaligned OAC channel.

After whitened matched filtering and sampling, the base station observes

    y = D s + n = k * (Lambda_H s) + n

where ``s`` interleaves the sensors' symbols slot by slot, ``k`` is the
all-ones kernel of length M and ``Lambda_H`` repeats the channel gains along
the diagonal.  ``build_D`` materializes the matrix; everything else uses the
convolutional form.
"""
from __future__ import annotations

import functools
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# minimum delay separation, as a fraction of T
MIN_DELAY_GAP = 1e-3


class DegeneratePacketWarning(UserWarning):
    """An all-zero packet has no symbol energy to reference the SNR to."""


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype).reshape(-1)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ChannelConfig:
    """Full description of a misaligned multiple-access channel.

    ``tau`` holds absolute delays in units of time (sensor 1 is the
    reference, ``tau[0] == 0``), ``h`` the residual complex gains and
    ``snr_db`` the symbol-energy-to-noise ratio Es/N0.  ``snr_db=inf``
    means a noiseless channel.
    """

    M: int
    L: int
    tau: np.ndarray
    h: np.ndarray
    snr_db: float = math.inf
    T: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "L", int(self.L))
        if not self.T > 0:
            raise ValueError("symbol period T must be positive")
        tau = _frozen(self.tau, np.float64)
        h = _frozen(self.h, np.complex128)
        if tau.size != self.M or h.size != self.M:
            raise ValueError(
                f"expected {self.M} delays and gains, got {tau.size} and {h.size}"
            )
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(h))):
            raise ValueError("delays and gains must be finite")
        if tau[0] != 0.0:
            raise ValueError("tau[0] must be 0 (sensor 1 is the time reference)")
        gap = MIN_DELAY_GAP * self.T
        if np.any(np.diff(tau) < gap):
            raise ValueError(f"delays must increase by at least {gap:g}")
        if tau[-1] > self.T - gap:
            raise ValueError("all delays must be below T")
        if np.any(np.abs(h) == 0):
            raise ValueError("channel gains must be nonzero")
        snr = float(self.snr_db)
        if math.isnan(snr) or snr == -math.inf:
            raise ValueError(f"invalid snr_db {self.snr_db!r}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n_samples(self) -> int:
        return self.M * (self.L + 1) - 1

    @property
    def n_symbols(self) -> int:
        return self.M * self.L

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def replace(self, **changes) -> ChannelConfig:
        fields = dict(M=self.M, L=self.L, tau=self.tau, h=self.h,
                      snr_db=self.snr_db, T=self.T)
        fields.update(changes)
        return ChannelConfig(**fields)

    def __eq__(self, other):
        if not isinstance(other, ChannelConfig):
            return NotImplemented
        return (self.M == other.M and self.L == other.L and self.T == other.T
                and self.snr_db == other.snr_db
                and np.array_equal(self.tau, other.tau)
                and np.array_equal(self.h, other.h))

    @classmethod
    def random(cls, M, L, snr_db=math.inf, seed=None, phase_max=math.pi,
               T=1.0, grid=None) -> ChannelConfig:
        """Draw a channel the way the training protocol does.

        Delays are sorted uniforms on [0, T) with the first pinned to 0,
        gains are unit-modulus with phase uniform on [0, phase_max].  With
        ``grid`` set, delays are drawn on a ``grid``-point lattice per period
        (needed by the oversampled simulator).
        """
        rng = np.random.default_rng(seed)
        gap = MIN_DELAY_GAP * T
        if grid is not None:
            if grid < M:
                raise ValueError("grid too coarse for M distinct delays")
            bins = np.sort(rng.choice(np.arange(1, grid), size=M - 1, replace=False))
            tau = np.concatenate([[0.0], bins * (T / grid)])
        else:
            while True:
                tau = np.concatenate([[0.0], np.sort(rng.uniform(0.0, T, M - 1))])
                if np.all(np.diff(tau) >= gap) and tau[-1] <= T - gap:
                    break
        h = np.exp(1j * rng.uniform(0.0, phase_max, M))
        return cls(M=M, L=L, tau=tau, h=h, snr_db=snr_db, T=T)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "L": self.L,
            "T": self.T,
            "tau": self.tau.tolist(),
            "h_re": self.h.real.tolist(),
            "h_im": self.h.imag.tolist(),
            "snr_db": self.snr_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ChannelConfig:
        expected = {"M", "L", "T", "tau", "h_re", "h_im", "snr_db"}
        unknown = set(d) - expected
        if unknown:
            raise ValueError(f"unknown channel config keys: {sorted(unknown)}")
        missing = expected - {"T"} - set(d)
        if missing:
            raise ValueError(f"missing channel config keys: {sorted(missing)}")
        if len(d["h_re"]) != len(d["h_im"]):
            raise ValueError("h_re and h_im differ in length")
        h = np.asarray(d["h_re"], float) + 1j * np.asarray(d["h_im"], float)
        return cls(M=d["M"], L=d["L"], tau=d["tau"], h=h,
                   snr_db=d["snr_db"], T=d.get("T", 1.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> ChannelConfig:
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> ChannelConfig:
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class SymbolBlock:
    """M x L block of real, nonnegative transmitted symbols (sensor, time)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"symbols must be a nonempty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("symbols must be finite")
        if np.any(v < 0):
            raise ValueError("symbols must be nonnegative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def flatten(s) -> np.ndarray:
    """Interleave an M x L block into s_1[1], ..., s_M[1], s_1[2], ..."""
    v = s.values if isinstance(s, SymbolBlock) else np.asarray(s)
    return v.T.reshape(-1).copy()


def unflatten(vec, M: int) -> np.ndarray:
    """Inverse of :func:`flatten`; leading axes are treated as a batch."""
    vec = np.asarray(vec)
    if vec.ndim < 1 or vec.shape[-1] % M:
        raise ValueError(f"length {vec.shape[-1:]} is not a multiple of M={M}")
    return vec.reshape(*vec.shape[:-1], -1, M).swapaxes(-1, -2).copy()


def reshape_samples(y, M: int, L: int) -> np.ndarray:
    """Arrange samples as an M x L image, y_m[i] at (m, i); drops the L+1 tail."""
    y = np.asarray(y)
    if y.shape[-1] != M * (L + 1) - 1:
        raise ValueError(f"expected {M * (L + 1) - 1} samples, got {y.shape[-1]}")
    return unflatten(y[..., : M * L], M)


def _check_block(cfg: ChannelConfig, s) -> np.ndarray:
    v = s.values if isinstance(s, SymbolBlock) else np.asarray(s, dtype=np.float64)
    if v.shape != (cfg.M, cfg.L):
        raise ValueError(f"symbol block shape {v.shape} does not match ({cfg.M}, {cfg.L})")
    return v


def build_D(cfg: ChannelConfig) -> np.ndarray:
    """Dense (M(L+1)-1) x (ML) sampling matrix.

    Row ``(i-1)M + m`` holds ``h_k`` at column ``(i - [k > m] - 1)M + k``
    (1-based) for every k whose column falls inside the matrix.
    """
    M, L = cfg.M, cfg.L
    D = np.zeros((cfg.n_samples, cfg.n_symbols), dtype=np.complex128)
    m = np.arange(M)
    for i in range(L + 1):
        for mm in range(M):
            row = i * M + mm
            if row >= cfg.n_samples:
                break
            slot = i - (m > mm)
            cols = slot * M + m
            ok = (cols >= 0) & (cols < cfg.n_symbols)
            D[row, cols[ok]] = cfg.h[ok]
    return D


def gain_diagonal(cfg: ChannelConfig) -> np.ndarray:
    """Diagonal of Lambda_H: the gains repeated once per time slot."""
    return np.tile(cfg.h, cfg.L)


def decompose_convolutional(cfg: ChannelConfig):
    """Split D into the all-ones kernel and the gain diagonal."""
    return np.ones(cfg.M), gain_diagonal(cfg)


@functools.lru_cache(maxsize=64)
def kernel_spectrum(M: int, L: int) -> np.ndarray:
    """N-point DFT of the all-ones kernel zero-padded to N = M(L+1)-1 (read-only, cached)."""
    k = np.zeros(M * (L + 1) - 1)
    k[:M] = 1.0
    K = np.fft.fft(k)
    K.flags.writeable = False
    return K


def noise_sigma(cfg: ChannelConfig, s) -> float:
    """Per-sample complex noise variance Es / 10^(snr_db/10).

    Es is the empirical mean symbol energy of the packet.
    """
    v = _check_block(cfg, s)
    if math.isinf(cfg.snr_db):
        return 0.0
    es = float(np.mean(v ** 2))
    if es == 0.0:
        warnings.warn("all-zero packet: noise variance set to 0",
                      DegeneratePacketWarning, stacklevel=2)
        return 0.0
    return es / cfg.snr_linear


def complex_noise(rng: np.random.Generator, var: float, size) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples of variance ``var``."""
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def apply_channel(cfg: ChannelConfig, s, seed=None, noise_var=None) -> np.ndarray:
    """Noisy WMFS samples y = k * (Lambda_H s) + n.

    ``noise_var`` overrides the variance derived from ``cfg.snr_db``.
    """
    v = _check_block(cfg, s)
    x = gain_diagonal(cfg) * flatten(v)
    y = np.convolve(np.ones(cfg.M), x)
    var = noise_sigma(cfg, v) if noise_var is None else float(noise_var)
    if var < 0:
        raise ValueError("noise variance must be nonnegative")
    if var > 0:
        y = y + complex_noise(np.random.default_rng(seed), var, y.size)
    return y


def sum_target(s, average: bool = False) -> np.ndarray:
    """Aligned sum over sensors per slot, or the mean when ``average``."""
    v = s.values if isinstance(s, SymbolBlock) else np.asarray(s, dtype=np.float64)
    out = v.sum(axis=0)
    if average:
        out = out / v.shape[0]
    return out
