"""Sensor data ingestion, packetization, synthetic data and the interchange format.

Interchange directory layout (the contract with the denoiser stage)::

    manifest.json   {"version": 1, "M": int, "L": int, "count": int,
                     "dtype": "f32le",
                     "channels": ["re_stilde", "im_stilde", "re_y", "im_y"],
                     "snr_db": [float, ...], "ids": [int, ...]}
    data.bin        count records back to back, each
                    x (4*M*L) | target_s (M*L) | target_splus (L)
                    as little-endian float32, x channel-major, then sensor,
                    then time.
"""
from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .model import SymbolBlock, reshape_samples

CHANNELS = ["re_stilde", "im_stilde", "re_y", "im_y"]
FORMAT_VERSION = 1
F32LE = np.dtype("<f4")


class InterchangeError(ValueError):
    """Malformed or inconsistent interchange directory."""


@dataclass
class SensorSeries:
    readings: np.ndarray  # M x N
    labels: list
    dropped: int = 0

    @property
    def M(self) -> int:
        return self.readings.shape[0]

    @property
    def N(self) -> int:
        return self.readings.shape[1]


@dataclass
class PacketSet:
    packets: list
    offsets: list
    shift: float = 0.0
    sensors: list = field(default_factory=list)

    def __len__(self):
        return len(self.packets)

    def array(self) -> np.ndarray:
        return np.stack([p.values for p in self.packets])


def load_csv(path, columns=None) -> SensorSeries:
    """Read sensor columns from a headed CSV, dropping rows with bad values."""
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise ValueError(f"{path}: zero usable rows") from exc
    columns = list(df.columns) if columns is None else list(columns)
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    num = df[columns].apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    ok = num.notna().all(axis=1) & np.isfinite(num.to_numpy(dtype=float)).all(axis=1)
    kept = num[ok]
    if kept.empty:
        raise ValueError(f"{path}: zero usable rows")
    return SensorSeries(kept.to_numpy(dtype=np.float64).T.copy(), columns,
                        dropped=int((~ok).sum()))


def packetize(series: SensorSeries, M: int, L: int, stride: int | None = None,
              offset: str = "start", sensors=None, seed=None) -> PacketSet:
    """Cut contiguous length-L windows from the first M (or selected) sensors.

    ``offset="random"`` shifts the window grid by a random start in the
    leftover tail.  Series with negative values are shifted up by -min so
    every packet is a valid (nonnegative) symbol block.
    """
    stride = L if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rows = list(range(M)) if sensors is None else list(sensors)
    if len(rows) != M:
        raise ValueError(f"selected {len(rows)} sensors, expected {M}")
    if series.M < M or max(rows) >= series.M:
        raise ValueError(f"insufficient data: series has {series.M} sensors, need {M}")
    if series.N < L:
        raise ValueError(f"insufficient data: series has {series.N} steps, need {L}")
    data = series.readings[rows]
    lo = float(data.min())
    shift = -lo if lo < 0 else 0.0
    start = 0
    if offset == "random":
        slack = (series.N - L) % stride
        start = int(np.random.default_rng(seed).integers(0, slack + 1))
    elif offset != "start":
        raise ValueError(f"unknown offset policy {offset!r}")
    offsets = list(range(start, series.N - L + 1, stride))
    packets = [SymbolBlock(data[:, o:o + L] + shift) for o in offsets]
    return PacketSet(packets, offsets, shift, [series.labels[r] for r in rows])


def gen_synthetic(M: int, L: int, count: int, rho_t: float = 0.9, rho_s: float = 0.5,
                  seed=None) -> PacketSet:
    """Correlated Gaussian sensor field mapped into [0, 10].

    Each packet is a stationary AR(1) process in time (coefficient rho_t)
    whose innovations share a uniform cross-sensor correlation rho_s.  The
    packet is then mapped affinely onto [0, 10], which leaves its
    correlation structure untouched.
    """
    if not abs(rho_t) < 1:
        raise ValueError("rho_t must satisfy |rho_t| < 1")
    if not 0 <= rho_s < 1:
        raise ValueError("rho_s must lie in [0, 1)")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    cov = np.full((M, M), rho_s) + (1 - rho_s) * np.eye(M)
    chol = np.linalg.cholesky(cov)
    e = np.einsum("ij,cjl->cil", chol, rng.standard_normal((count, M, L)))
    z = np.empty_like(e)
    z[..., 0] = e[..., 0]
    a = np.sqrt(1 - rho_t ** 2)
    for t in range(1, L):
        z[..., t] = rho_t * z[..., t - 1] + a * e[..., t]
    lo = z.min(axis=(1, 2), keepdims=True)
    span = z.max(axis=(1, 2), keepdims=True) - lo
    x = np.where(span > 0, 10.0 * (z - lo) / np.where(span > 0, span, 1.0), 5.0)
    return PacketSet([SymbolBlock(p) for p in x], offsets=list(range(count)))


def lag1_autocorrelation(packets) -> float:
    """Pooled lag-1 autocorrelation over all (packet, sensor) rows."""
    x = np.asarray(packets, dtype=np.float64)
    x = x - x.mean(axis=-1, keepdims=True)
    num = np.sum(x[..., 1:] * x[..., :-1])
    den = np.sum(x * x)
    return float(num / den)


@dataclass
class InterchangeRecord:
    x: np.ndarray             # 4 x M x L float32
    target_s: np.ndarray      # M x L float32
    target_splus: np.ndarray  # L float32
    snr_db: float
    record_id: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.target_s = np.asarray(self.target_s, dtype=np.float32)
        self.target_splus = np.asarray(self.target_splus, dtype=np.float32)
        if self.x.ndim != 3 or self.x.shape[0] != 4:
            raise InterchangeError(f"x must be 4 x M x L, got {self.x.shape}")
        M, L = self.x.shape[1:]
        if self.target_s.shape != (M, L) or self.target_splus.shape != (L,):
            raise InterchangeError("target shapes do not match x")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.target_s))
                and np.all(np.isfinite(self.target_splus))):
            raise InterchangeError("record contains non-finite values")

    @property
    def M(self) -> int:
        return self.x.shape[1]

    @property
    def L(self) -> int:
        return self.x.shape[2]

    @classmethod
    def from_estimate(cls, s_tilde, y, M, L, target_s, average=True, snr_db=0.0,
                      record_id=0) -> InterchangeRecord:
        """Stack the Wiener output and the reshaped samples into 4 channels.

        ``s_tilde`` is the complex Wiener estimate (M x L, before the real
        part is taken), ``y`` the full sample vector.
        """
        yr = reshape_samples(y, M, L)
        s_tilde = np.asarray(s_tilde)
        x = np.stack([s_tilde.real, s_tilde.imag, yr.real, yr.imag])
        target_s = np.asarray(target_s, dtype=np.float64)
        splus = target_s.sum(axis=0)
        if average:
            splus = splus / M
        return cls(x, target_s, splus, float(snr_db), int(record_id))


def _record_floats(M: int, L: int) -> int:
    return 4 * M * L + M * L + L


def _implied_sensors(nbytes: int, count: int, L: int):
    # a record holds L * (5M + 1) floats
    if nbytes % (4 * count):
        return None
    per = nbytes // (4 * count)
    if per % L or (per // L - 1) % 5 or per // L < 6:
        return None
    return (per // L - 1) // 5


def _atomic_dir(out: Path):
    out = Path(out)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise FileExistsError(f"{out} exists and is not an empty directory")
    out.parent.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))


def commit_dir(tmp: Path, out: Path):
    """Move a fully written temp directory into place."""
    out = Path(out)
    if out.exists():
        out.rmdir()
    os.replace(tmp, out)


def write_records(records, out, extra_files=None):
    """Write records atomically; ``extra_files`` maps name -> writer(path)."""
    records = list(records)
    if not records:
        raise InterchangeError("no records to write")
    M, L = records[0].M, records[0].L
    for r in records:
        if (r.M, r.L) != (M, L):
            raise InterchangeError("all records must share M and L")
    tmp = _atomic_dir(Path(out))
    try:
        with open(tmp / "data.bin", "wb") as f:
            for r in records:
                for a in (r.x, r.target_s, r.target_splus):
                    f.write(np.ascontiguousarray(a, dtype=F32LE).tobytes())
        manifest = {
            "version": FORMAT_VERSION,
            "M": M,
            "L": L,
            "count": len(records),
            "dtype": "f32le",
            "channels": CHANNELS,
            "snr_db": [float(r.snr_db) for r in records],
            "ids": [int(r.record_id) for r in records],
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
        for name, writer in (extra_files or {}).items():
            writer(tmp / name)
        commit_dir(tmp, Path(out))
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return Path(out)


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InterchangeError(f"cannot read manifest in {path}: {exc}") from exc
    if manifest.get("version") != FORMAT_VERSION:
        raise InterchangeError(f"unsupported version {manifest.get('version')!r}")
    if manifest.get("dtype") != "f32le":
        raise InterchangeError(f"endianness/dtype marker mismatch: {manifest.get('dtype')!r}")
    if manifest.get("channels") != CHANNELS:
        raise InterchangeError(f"unexpected channel list {manifest.get('channels')!r}")
    for key in ("M", "L", "count"):
        if not isinstance(manifest.get(key), int) or manifest[key] < 1:
            raise InterchangeError(f"manifest field {key!r} missing or invalid")
    if len(manifest.get("snr_db", [])) != manifest["count"]:
        raise InterchangeError("snr_db list length does not match count")
    return manifest


def read_records(path):
    """Yield the records of an interchange directory."""
    path = Path(path)
    manifest = read_manifest(path)
    M, L, count = manifest["M"], manifest["L"], manifest["count"]
    per = _record_floats(M, L)
    raw = (path / "data.bin").read_bytes()
    expected = count * per * 4
    if len(raw) != expected:
        implied = _implied_sensors(len(raw), count, L)
        if implied is not None and implied != M:
            raise InterchangeError(
                f"shape mismatch: manifest says M={M} but data is sized for M={implied}")
        if len(raw) < expected:
            raise InterchangeError(f"truncated data: {len(raw)} bytes, expected {expected}")
        raise InterchangeError(f"trailing data: {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=F32LE).reshape(count, per)
    ids = manifest.get("ids", list(range(count)))
    for k in range(count):
        rec = data[k]
        x = rec[: 4 * M * L].reshape(4, M, L)
        ts = rec[4 * M * L: 5 * M * L].reshape(M, L)
        tp = rec[5 * M * L:]
        yield InterchangeRecord(x.astype(np.float32), ts.astype(np.float32),
                                tp.astype(np.float32), manifest["snr_db"][k], ids[k])


def build_record(cfg, s, y, average: bool = True, record_id: int = 0) -> InterchangeRecord:
    """Interchange record for packet ``s`` observed as ``y`` over ``cfg``."""
    from .estimators import WienerConfig, wiener_filter
    from .model import unflatten

    s_tilde = unflatten(wiener_filter(y, cfg, WienerConfig.from_channel(cfg)), cfg.M)
    v = s.values if isinstance(s, SymbolBlock) else s
    return InterchangeRecord.from_estimate(s_tilde, y, cfg.M, cfg.L, v, average=average,
                                           snr_db=cfg.snr_db, record_id=record_id)
