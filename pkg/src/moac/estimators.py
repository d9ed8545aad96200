"""Estimators of the aligned aggregate s_+ from misaligned WMFS samples.

All estimators share the signature ``f(y, cfg, ..., average=False)`` and
return an :class:`EstimatorOutput`.  Symbols are real, so each estimator
takes the real part as its final step.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import ChannelConfig, build_D, gain_diagonal, kernel_spectrum, unflatten

# dense D above this many bytes is refused rather than swapping the machine
DEFAULT_DENSE_LIMIT = 1.5 * 2 ** 30
MAX_CONDITION = 1e12


class EstimationError(RuntimeError):
    """Numerical failure inside an estimator."""


class ProblemTooLargeError(EstimationError, MemoryError):
    """The dense matrix an estimator needs does not fit the memory budget."""


@dataclass
class EstimatorOutput:
    s_plus_hat: np.ndarray
    s_hat: np.ndarray | None = None
    name: str = ""
    elapsed: float = 0.0
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PriorStats:
    """Per-sensor mean and variance of the transmitted symbols."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        var = np.asarray(self.var, dtype=np.float64).reshape(-1)
        if mean.shape != var.shape:
            raise ValueError("prior mean and variance differ in length")
        if not np.all(var > 0):
            raise ValueError("prior variances must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @classmethod
    def from_packets(cls, packets, floor: float = 1e-12) -> PriorStats:
        """Empirical per-sensor statistics over a stack of M x L packets."""
        arr = np.asarray(packets, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        flat = np.moveaxis(arr, 1, 0).reshape(arr.shape[1], -1)
        return cls(flat.mean(axis=1), np.maximum(flat.var(axis=1), floor))

    def energy(self) -> float:
        """Mean symbol energy E|s|^2 implied by the prior."""
        return float(np.mean(self.mean ** 2 + self.var))


@dataclass(frozen=True)
class WienerConfig:
    """Constant noise-to-signal spectral ratio used by the Wiener filter."""

    reg: float = 0.0

    def __post_init__(self):
        if not self.reg >= 0:
            raise ValueError(f"Wiener regularization must be >= 0, got {self.reg}")

    @classmethod
    def from_channel(cls, cfg: ChannelConfig) -> WienerConfig:
        return cls(0.0 if math.isinf(cfg.snr_db) else 1.0 / cfg.snr_linear)


def _check_samples(y, cfg: ChannelConfig, batch: bool = False) -> np.ndarray:
    y = np.asarray(y)
    ok = y.ndim >= 1 and y.shape[-1] == cfg.n_samples if batch else y.shape == (cfg.n_samples,)
    if not ok:
        raise ValueError(f"expected {cfg.n_samples} samples, got shape {y.shape}")
    return y


def _dense_D(cfg: ChannelConfig, limit) -> np.ndarray:
    need = cfg.n_samples * cfg.n_symbols * 16
    if limit is not None and need > limit:
        raise ProblemTooLargeError(
            f"dense D for M={cfg.M}, L={cfg.L} needs {need / 2 ** 30:.1f} GiB "
            f"(limit {limit / 2 ** 30:.1f} GiB)")
    return build_D(cfg)


def _finish(name, s_complex, cfg, average, t0, **meta):
    s_hat = unflatten(np.real(s_complex), cfg.M)
    s_plus = s_hat.sum(axis=-2)
    if average:
        s_plus = s_plus / cfg.M
    if not np.all(np.isfinite(s_plus)):
        raise EstimationError(f"{name} produced non-finite estimates")
    return EstimatorOutput(s_plus, s_hat, name, time.perf_counter() - t0, meta)


def estimate_aligned(y, cfg: ChannelConfig, average: bool = False) -> EstimatorOutput:
    """Read the fully-overlapped sample y_M[i] of each period.

    Accepts a batch of sample vectors stacked along leading axes.
    """
    t0 = time.perf_counter()
    y = _check_samples(y, cfg, batch=True)
    s_plus = np.real(y[..., cfg.M - 1: cfg.n_symbols: cfg.M]).copy()
    if average:
        s_plus /= cfg.M
    return EstimatorOutput(s_plus, None, "aligned", time.perf_counter() - t0)


def solve_ls(D: np.ndarray, y: np.ndarray, max_condition: float = MAX_CONDITION):
    """Least-squares solution of D s = y by Householder QR.

    Returns the complex solution and the 1-norm condition estimate of R.
    """
    qhy, R = sla.qr_multiply(D, y[None, :], mode="right", conjugate=True)
    rcond, info = sla.lapack.ztrcon(R, norm="1")
    cond = math.inf if rcond == 0 else 1.0 / rcond
    if info != 0 or cond > max_condition:
        raise EstimationError(f"D is ill-conditioned (condition estimate {cond:.3g})")
    return sla.solve_triangular(R, qhy[0]), cond


def estimate_ls(y, cfg: ChannelConfig, average: bool = False,
                weights=None, dense_limit=DEFAULT_DENSE_LIMIT) -> EstimatorOutput:
    """Maximum-likelihood (weighted least-squares) estimate.

    ``weights`` are optional per-sample inverse noise variances; with the
    whitened iid noise of the sampled model they are all equal and the
    default (None) is ordinary least squares.
    """
    t0 = time.perf_counter()
    y = _check_samples(y, cfg)
    D = _dense_D(cfg, dense_limit)
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=np.float64))
        D, y = D * w[:, None], y * w
    s, cond = solve_ls(D, y.astype(np.complex128))
    return _finish("ls", s, cfg, average, t0, condition=cond)


def estimate_lmmse(y, cfg: ChannelConfig, prior: PriorStats, average: bool = False,
                   noise_var=None, dense_limit=DEFAULT_DENSE_LIMIT) -> EstimatorOutput:
    """Linear MMSE estimate under an independent per-sensor Gaussian prior.

    s = mu + C D^H (D C D^H + sigma^2 I)^-1 (y - D mu).  ``noise_var`` is the
    per-sample noise variance known to the receiver; by default it is
    derived from the prior's symbol energy and ``cfg.snr_db``.
    """
    t0 = time.perf_counter()
    y = _check_samples(y, cfg)
    if prior.mean.size != cfg.M:
        raise ValueError(f"prior is for {prior.mean.size} sensors, channel has {cfg.M}")
    if noise_var is None:
        noise_var = 0.0 if math.isinf(cfg.snr_db) else prior.energy() / cfg.snr_linear
    D = _dense_D(cfg, dense_limit)
    mu = np.tile(prior.mean, cfg.L)
    c = np.tile(prior.var, cfg.L)
    DC = D * c
    S = DC @ D.conj().T
    S[np.diag_indices_from(S)] += noise_var
    try:
        factor = sla.cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("LMMSE innovation matrix is singular") from exc
    gain = sla.cho_solve(factor, y - D @ mu, check_finite=False)
    s = mu + DC.conj().T @ gain
    return _finish("lmmse", s, cfg, average, t0)


def wiener_filter(y, cfg: ChannelConfig, wcfg: WienerConfig | None = None) -> np.ndarray:
    """Complex interleaved Wiener estimate, gain-corrected, length M*L.

    The all-ones kernel is zero-padded to N = M(L+1)-1 so the N-point
    circular convolution equals the linear one.  Leading axes of ``y`` are
    a batch of packets.
    """
    y = _check_samples(y, cfg, batch=True)
    if wcfg is None:
        wcfg = WienerConfig.from_channel(cfg)
    K = kernel_spectrum(cfg.M, cfg.L)
    S = np.conj(K) * np.fft.fft(y, axis=-1) / (np.abs(K) ** 2 + wcfg.reg)
    return np.fft.ifft(S, axis=-1)[..., : cfg.n_symbols] / gain_diagonal(cfg)


def wiener_deconvolve(y, cfg: ChannelConfig, wcfg: WienerConfig | None = None,
                      average: bool = False) -> EstimatorOutput:
    """Frequency-domain Wiener deconvolution followed by gain correction."""
    t0 = time.perf_counter()
    s = wiener_filter(y, cfg, wcfg)
    return _finish("wiener", s, cfg, average, t0)


# estimators that take a stack of packets in one call
BATCHED = frozenset({"aligned", "wiener"})

ESTIMATORS = {
    "aligned": estimate_aligned,
    "ls": estimate_ls,
    "lmmse": estimate_lmmse,
    "wiener": wiener_deconvolve,
}

# "wiener+denoiser" hands off to the learned stage through the interchange format
ESTIMATOR_NAMES = (*ESTIMATORS, "wiener+denoiser")


def run_estimator(name: str, y, cfg: ChannelConfig, prior: PriorStats | None = None,
                  average: bool = False, noise_var=None) -> EstimatorOutput:
    """Dispatch by name with the arguments each estimator needs."""
    if name == "aligned":
        return estimate_aligned(y, cfg, average=average)
    if name == "ls":
        return estimate_ls(y, cfg, average=average)
    if name == "lmmse":
        if prior is None:
            raise ValueError("the lmmse estimator needs prior statistics")
        return estimate_lmmse(y, cfg, prior, average=average, noise_var=noise_var)
    if name == "wiener":
        return wiener_deconvolve(y, cfg, average=average)
    raise ValueError(f"unknown estimator {name!r}; valid: {', '.join(ESTIMATORS)}")
