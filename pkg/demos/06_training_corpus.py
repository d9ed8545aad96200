"""
Handing packets to the learned stage
====================================

The denoiser lives outside this package.  It reads a directory holding a
JSON manifest and a flat float32 file.  Each record stacks the complex
Wiener estimate and the reshaped samples as four M x L channels.
"""
import tempfile
from pathlib import Path

import numpy as np

from moac.dataio import (build_record, gen_synthetic, lag1_autocorrelation, read_manifest,
                         read_records, write_records)
from moac.model import ChannelConfig, apply_channel

M, L = 8, 64
packets = gen_synthetic(M, L, 16, seed=2)
arr = packets.array()
print(f"lag-1 autocorrelation {lag1_autocorrelation(arr):.2f}, range [{arr.min():.1f}, {arr.max():.1f}]")

rng = np.random.default_rng(4)
records = []
for k, p in enumerate(packets.packets):
    cfg = ChannelConfig.random(M, L, snr_db=float(rng.uniform(-20, 20)), seed=rng)
    y = apply_channel(cfg, p.values, seed=rng)
    records.append(build_record(cfg, p.values, y, record_id=k))

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "corpus"
    write_records(records, out)
    man = read_manifest(out)
    print({k: man[k] for k in ("version", "M", "L", "count", "dtype", "channels")})
    back = list(read_records(out))
    print("round trip exact:", all(np.array_equal(a.x, b.x) for a, b in zip(records, back)))
