"""MSE metrics, Monte-Carlo SNR sweeps and estimator timing."""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import BATCHED, ESTIMATORS, PriorStats, run_estimator
from .model import ChannelConfig, apply_channel, noise_sigma, sum_target

RESULT_COLUMNS = ("estimator", "snr_db", "trial", "mse", "elapsed_us")
AGGREGATE_COLUMNS = ("estimator", "snr_db", "mean_mse", "se_mse", "median_mse")


def mse(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b) ** 2))


def estimation_snr_db(est, truth) -> float:
    """Signal-to-error ratio of an estimate, treating the error as noise."""
    est = np.asarray(est)
    truth = np.asarray(truth)
    if est.shape != truth.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {truth.shape}")
    signal = float(np.sum(np.abs(truth) ** 2))
    if signal == 0:
        raise ValueError("truth is all zero; estimation SNR undefined")
    err = float(np.sum(np.abs(est - truth) ** 2))
    if err == 0:
        return math.inf
    return 10.0 * math.log10(signal / err)


@dataclass
class TrialResult:
    estimator: str
    snr_db: float
    trial: int
    mse: float
    elapsed: float
    error: str = ""


@dataclass
class SweepSpec:
    """A Monte-Carlo MSE-versus-SNR experiment.

    ``data`` is ``"gaussian"`` (iid per-sensor Gaussian symbols drawn from
    ``prior``), ``"synthetic"`` (correlated field from
    :func:`moac.dataio.gen_synthetic`) or an array of M x L packets that is
    cycled through.  The channel (tau, h) is fixed for the whole sweep; the
    data and noise change per trial.
    """

    snr_grid: list
    estimators: list
    trials: int
    channel: ChannelConfig
    data: object = "gaussian"
    prior: PriorStats | None = None
    seed: int = 0
    average: bool = False
    synthetic_params: dict = field(default_factory=lambda: {"rho_t": 0.9, "rho_s": 0.5})

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not len(self.snr_grid) or not len(self.estimators):
            raise ValueError("SNR grid and estimator list must be nonempty")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}; valid: {', '.join(ESTIMATORS)}")


def default_prior(M: int) -> PriorStats:
    """Positive-mean prior used for Gaussian test data (negatives ~10 sigma out)."""
    return PriorStats(np.full(M, 10.0), np.ones(M))


def _packets(spec: SweepSpec):
    cfg = spec.channel
    if isinstance(spec.data, str):
        if spec.data == "gaussian":
            prior = spec.prior or default_prior(cfg.M)
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
            z = rng.standard_normal((spec.trials, cfg.M, cfg.L))
            pk = prior.mean[:, None] + np.sqrt(prior.var)[:, None] * z
            return np.clip(pk, 0.0, None), prior
        if spec.data == "synthetic":
            from .dataio import gen_synthetic
            ps = gen_synthetic(cfg.M, cfg.L, spec.trials, seed=spec.seed,
                               **spec.synthetic_params)
            pk = np.stack([p.values for p in ps.packets])
            return pk, spec.prior or PriorStats.from_packets(pk)
        raise ValueError(f"unknown data source {spec.data!r}")
    pk = np.asarray([getattr(p, "values", p) for p in spec.data], dtype=np.float64)
    if pk.ndim != 3 or pk.shape[1:] != (cfg.M, cfg.L):
        raise ValueError(f"packets of shape {pk.shape[1:]} do not match ({cfg.M}, {cfg.L})")
    idx = np.arange(spec.trials) % len(pk)
    return pk[idx], spec.prior or PriorStats.from_packets(pk)


def _run_point(spec, packets, prior, snr, seeds):
    cfg = spec.channel.replace(snr_db=snr)
    rows = []
    for trial, (s, seed) in enumerate(zip(packets, seeds)):
        var = noise_sigma(cfg, s)
        y = apply_channel(cfg, s, seed=seed, noise_var=var)
        truth = sum_target(s, spec.average)
        for name in spec.estimators:
            try:
                out = run_estimator(name, y, cfg, prior=prior, average=spec.average,
                                    noise_var=var)
                rows.append(TrialResult(name, snr, trial, mse(out.s_plus_hat, truth),
                                        out.elapsed))
            except Exception as exc:  # recorded per row, sweep continues
                rows.append(TrialResult(name, snr, trial, math.nan, 0.0,
                                        f"{type(exc).__name__}: {exc}"))
    return rows


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("OAC_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[TrialResult]:
    """One row per (snr, trial, estimator), deterministic given ``spec.seed``.

    Each trial gets its own noise seed, shared across SNR points (common
    random numbers), so results do not depend on the number of workers.
    """
    packets, prior = _packets(spec)
    seeds = np.random.SeedSequence([spec.seed, 2]).spawn(spec.trials)
    jobs = [(float(snr), seeds) for snr in spec.snr_grid]
    workers = workers or _workers()
    if workers == 1:
        parts = [_run_point(spec, packets, prior, snr, seeds) for snr, seeds in jobs]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: _run_point(spec, packets, prior, *j), jobs))
    return [row for part in parts for row in part]


def aggregate(rows: list[TrialResult]) -> list[dict]:
    """Mean, standard error and median of the MSE per (estimator, snr) cell."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.estimator, r.snr_db), []).append(r.mse)
    out = []
    for (name, snr), vals in cells.items():
        v = np.asarray(vals)
        ok = v[np.isfinite(v)]
        n = ok.size
        out.append({
            "estimator": name,
            "snr_db": snr,
            "mean_mse": float(ok.mean()) if n else math.nan,
            "se_mse": float(ok.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
            "median_mse": float(np.median(ok)) if n else math.nan,
            "n": n,
            "failed": int(v.size - n),
        })
    return out


def results_csv(rows: list[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS + ("error",))
    for r in rows:
        w.writerow([r.estimator, repr(r.snr_db), r.trial, repr(r.mse),
                    f"{r.elapsed * 1e6:.1f}", r.error])
    return buf.getvalue()


def aggregate_csv(cells: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for c in cells:
        w.writerow([c["estimator"], repr(c["snr_db"]), repr(c["mean_mse"]),
                    repr(c["se_mse"]), repr(c["median_mse"])])
    return buf.getvalue()


@dataclass
class TimingRow:
    estimator: str
    M: int
    L: int
    median_s: float
    mean_s: float
    bytes_per_s: float
    error: str = ""


def time_estimator(name: str, grid, reps: int = 10, warmup: int = 1, seed: int = 0,
                   prior: PriorStats | None = None, batch: int = 1) -> list[TimingRow]:
    """Wall-clock timing of one estimator over a grid of (M, L) pairs.

    Times are per packet.  Estimators in ``BATCHED`` process ``batch``
    packets per call and the call time is divided by ``batch``; the others
    always run one packet per call.  Throughput counts the 4-byte-per-symbol
    payload of the packet.  Grid points that fail (e.g. dense matrices over
    the memory budget) come back with ``error`` set and NaN timings.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    B = batch if name in BATCHED else 1
    rows = []
    for M, L in grid:
        cfg = ChannelConfig.random(M, L, snr_db=10.0, seed=seed)
        p = prior or default_prior(M)
        rng = np.random.default_rng(seed)
        ys = []
        for b in range(B):
            s = np.clip(p.mean[:, None] + np.sqrt(p.var)[:, None] * rng.standard_normal((M, L)),
                        0, None)
            ys.append(apply_channel(cfg, s, seed=rng))
        y = ys[0] if B == 1 else np.stack(ys)
        try:
            for _ in range(warmup):
                run_estimator(name, y, cfg, prior=p)
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                run_estimator(name, y, cfg, prior=p)
                times.append((time.perf_counter() - t0) / B)
        except Exception as exc:
            rows.append(TimingRow(name, M, L, math.nan, math.nan, math.nan,
                                  f"{type(exc).__name__}: {exc}"))
            continue
        med = float(np.median(times))
        rows.append(TimingRow(name, M, L, med, float(np.mean(times)), M * L * 4 / med))
    return rows


def loglog_slope(sizes, times) -> float:
    """Least-squares slope of log(time) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=float))
    t = np.log(np.asarray(times, dtype=float))
    return float(np.polyfit(x, t, 1)[0])


def timing_csv(rows: list[TimingRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "M", "L", "median_s", "mean_s", "bytes_per_s", "error"])
    for r in rows:
        w.writerow([r.estimator, r.M, r.L, repr(r.median_s), repr(r.mean_s),
                    repr(r.bytes_per_s), r.error])
    return buf.getvalue()
