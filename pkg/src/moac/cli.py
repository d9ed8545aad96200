"""Command-line entry point: ``moac <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 numerical/runtime failure.
"""
from __future__ import annotations

import argparse
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .continuous import add_waveform_noise, n0_for_snr, synthesize, wmfs_sample
from .dataio import (InterchangeError, build_record, commit_dir, gen_synthetic,
                     load_csv, packetize, write_records)
from .estimators import (ESTIMATOR_NAMES, EstimationError, PriorStats, run_estimator)
from .metrics import (SweepSpec, aggregate, aggregate_csv, loglog_slope, mse,
                      results_csv, run_sweep, time_estimator, timing_csv)
from .model import ChannelConfig, apply_channel, sum_target

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

SYNTHETIC_KEYS = {"M": int, "L": int, "count": int, "rho_t": float, "rho_s": float}


class UsageError(ValueError):
    pass


def parse_synthetic(text: str) -> dict:
    spec = {}
    for part in filter(None, text.split(",")):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in SYNTHETIC_KEYS:
            raise UsageError(f"bad synthetic spec item {part!r}; keys: {sorted(SYNTHETIC_KEYS)}")
        try:
            spec[key] = SYNTHETIC_KEYS[key](val)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {val!r}") from exc
    for key in ("M", "L", "count"):
        if key not in spec:
            raise UsageError(f"synthetic spec needs {key}=")
    return spec


def parse_snr_grid(text: str) -> list[float]:
    """``lo:hi:step`` (inclusive) or a comma list of values in dB."""
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if step <= 0 or hi < lo:
                raise UsageError(f"bad SNR range {text!r}")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return [lo + k * step for k in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad SNR grid {text!r}") from exc


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc


def _single(text, default, flag) -> int:
    if text is None:
        return default
    vals = parse_int_list(text)
    if len(vals) != 1:
        raise UsageError(f"{flag} takes a single value outside --bench")
    return vals[0]


def load_channel(path) -> ChannelConfig:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        return ChannelConfig.load(p)
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid channel config {p}: {exc}") from exc


def load_packets(args, M=None, L=None) -> np.ndarray:
    """Packets from --synthetic or --csv, as a (count, M, L) array."""
    if args.synthetic and args.csv:
        raise UsageError("give either --synthetic or --csv, not both")
    if args.synthetic:
        spec = parse_synthetic(args.synthetic)
        if M is not None and (spec["M"], spec["L"]) != (M, L):
            raise UsageError(f"synthetic M={spec['M']}, L={spec['L']} does not match "
                             f"channel M={M}, L={L}")
        ps = gen_synthetic(spec["M"], spec["L"], spec["count"],
                           rho_t=spec.get("rho_t", 0.9), rho_s=spec.get("rho_s", 0.5),
                           seed=args.seed)
        return ps.array()
    if args.csv:
        if M is None:
            raise UsageError("--csv needs --M and --L")
        cols = args.columns.split(",") if args.columns else None
        series = load_csv(args.csv, cols)
        if series.dropped:
            print(f"dropped {series.dropped} incomplete rows", file=sys.stderr)
        ps = packetize(series, M, L, stride=args.stride)
        if not len(ps):
            raise UsageError("insufficient data for a single packet")
        return ps.array()
    raise UsageError("no data source: give --synthetic or --csv")


def _run_manifest(args) -> dict:
    opts = {k: v for k, v in vars(args).items() if k != "func"}
    return {"command": args.command, "options": opts, "seed": args.seed,
            "version": __version__}


class _Staging:
    """Temp directory next to ``out``, renamed into place on success."""

    def __init__(self, out):
        self.out = Path(out)
        if self.out.exists() and (not self.out.is_dir() or any(self.out.iterdir())):
            raise UsageError(f"{self.out} exists and is not an empty directory")
        self.out.parent.mkdir(parents=True, exist_ok=True)

    def __enter__(self):
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.out.name}.", dir=self.out.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            commit_dir(self.tmp, self.out)
        else:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _write_file(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    tmp.replace(path)


def cmd_simulate(args):
    cfg = load_channel(args.config)
    if args.snr_db is not None:
        cfg = cfg.replace(snr_db=args.snr_db)
    packets = load_packets(args, cfg.M, cfg.L)
    seeds = np.random.SeedSequence(args.seed).spawn(len(packets))
    ys = []
    with _Staging(args.out) as tmp:
        if args.dump_waveforms:
            (tmp / "waveforms").mkdir()
        for k, (s, ss) in enumerate(zip(packets, seeds)):
            if args.oracle:
                w = synthesize(cfg, s, args.Q)
                w = add_waveform_noise(w, n0_for_snr(cfg, s), np.random.default_rng(ss))
                if args.dump_waveforms:
                    w.to_csv(tmp / "waveforms" / f"packet{k:05d}.csv")
                ys.append(wmfs_sample(w, cfg, args.Q))
            else:
                ys.append(apply_channel(cfg, s, seed=np.random.default_rng(ss)))
        np.savez(tmp / "samples.npz", y=np.asarray(ys), s=packets)
        cfg.save(tmp / "channel.json")
        _write_file(tmp / "run.json", json.dumps(_run_manifest(args), indent=1) + "\n")
    print(f"wrote {len(ys)} packets to {args.out}")


def _load_sim(path):
    path = Path(path)
    if not (path / "samples.npz").is_file():
        raise UsageError(f"{path} has no samples.npz (run `moac simulate` first)")
    cfg = load_channel(path / "channel.json")
    with np.load(path / "samples.npz") as z:
        y, s = z["y"], z["s"] if "s" in z else None
    return cfg, y, s


def cmd_estimate(args):
    if args.estimator not in ESTIMATOR_NAMES:
        raise UsageError(f"unknown estimator {args.estimator!r}; valid: "
                         f"{', '.join(ESTIMATOR_NAMES)}")
    cfg, ys, ss = _load_sim(args.input)
    average = not args.sum
    if args.estimator == "wiener+denoiser":
        if ss is None:
            raise UsageError("denoiser hand-off needs ground-truth packets")
        records = [build_record(cfg, s, y, average=average, record_id=k)
                   for k, (s, y) in enumerate(zip(ss, ys))]
        write_records(records, args.out)
        print(Path(args.out).resolve())
        return
    prior = PriorStats.from_packets(ss) if ss is not None else None
    lines = ["packet,estimator,mse,elapsed_us," + ",".join(f"splus_{l}" for l in range(cfg.L))]
    for k, y in enumerate(ys):
        out = run_estimator(args.estimator, y, cfg, prior=prior, average=average)
        err = repr(mse(out.s_plus_hat, sum_target(ss[k], average))) if ss is not None else ""
        vals = ",".join(repr(float(v)) for v in out.s_plus_hat)
        lines.append(f"{k},{args.estimator},{err},{out.elapsed * 1e6:.1f},{vals}")
    _write_file(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(ys)} estimates to {args.out}")


def cmd_sweep(args):
    estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    cfg = None
    if args.config:
        cfg = load_channel(args.config)
    elif not args.bench:
        M, L = _single(args.M, 4, "--M"), _single(args.L, 32, "--L")
        cfg = ChannelConfig.random(M, L, seed=args.seed)
    with _Staging(args.out) as tmp:
        if args.bench:
            # timing runs pinned to one worker
            Ls = parse_int_list(args.L or "64,256,1024,4096")
            Ms = parse_int_list(args.M or "8")
            grid = [(M, L) for M in Ms for L in Ls]
            rows = []
            for name in estimators:
                rows += time_estimator(name, grid, reps=args.reps, seed=args.seed,
                                       batch=args.batch)
            _write_file(tmp / "timing.csv", timing_csv(rows))
            for name in estimators:
                ok = [r for r in rows if r.estimator == name and not r.error]
                if len(ok) >= 2:
                    slope = loglog_slope([r.M * r.L for r in ok], [r.median_s for r in ok])
                    print(f"{name}: log-log slope {slope:.2f} over {len(ok)} points")
                for r in rows:
                    if r.estimator == name and r.error:
                        print(f"{name} M={r.M} L={r.L}: {r.error}", file=sys.stderr)
        else:
            spec = SweepSpec(parse_snr_grid(args.snr), estimators, args.trials, cfg,
                             data=args.data, seed=args.seed, average=not args.sum)
            rows = run_sweep(spec)
            _write_file(tmp / "results.csv", results_csv(rows))
            _write_file(tmp / "aggregate.csv", aggregate_csv(aggregate(rows)))
            failed = sum(1 for r in rows if r.error)
            if failed:
                print(f"{failed} estimator runs failed (see results.csv)", file=sys.stderr)
        if cfg is not None:
            cfg.save(tmp / "channel.json")
        _write_file(tmp / "run.json", json.dumps(_run_manifest(args), indent=1) + "\n")
    print(f"wrote sweep results to {args.out}")


def draw_training_channel(M, L, rng, snr_range=(-20.0, 20.0)) -> ChannelConfig:
    """tau sorted uniform with tau_1 = 0, phases uniform on [0, pi], SNR uniform."""
    snr = float(rng.uniform(*snr_range))
    return ChannelConfig.random(M, L, snr_db=snr, seed=rng)


def cmd_export_training(args):
    packets = load_packets(args, args.M, args.L) if args.csv else load_packets(args)
    count, M, L = packets.shape
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 3]))
    records, ys, taus, hs = [], [], [], []
    for k, s in enumerate(packets):
        cfg = draw_training_channel(M, L, rng, (args.snr_min, args.snr_max))
        y = apply_channel(cfg, s, seed=rng)
        records.append(build_record(cfg, s, y, average=not args.sum, record_id=k))
        ys.append(y)
        taus.append(cfg.tau)
        hs.append(cfg.h)

    def sources(path):
        np.savez(path, y=np.asarray(ys), tau=np.asarray(taus), h=np.asarray(hs),
                 snr_db=np.array([r.snr_db for r in records]))

    def run_manifest(path):
        _write_file(path, json.dumps(_run_manifest(args), indent=1) + "\n")

    write_records(records, args.out, {"sources.npz": sources, "run.json": run_manifest})
    print(f"wrote {count} records (M={M}, L={L}) to {args.out}")


def cmd_generate(args):
    ps = gen_synthetic(args.M, args.N, 1, rho_t=args.rho_t, rho_s=args.rho_s, seed=args.seed)
    data = ps.packets[0].values.T
    header = ",".join(f"sensor{m}" for m in range(args.M))
    lines = [header] + [",".join(repr(float(v)) for v in row) for row in data]
    _write_file(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.N} rows x {args.M} sensors to {args.out}")


def _add_data_args(p, with_shape=False):
    p.add_argument("--synthetic", help="synthetic data, e.g. M=4,L=32,count=10[,rho_t=..,rho_s=..]")
    p.add_argument("--csv", help="sensor CSV file (header row)")
    p.add_argument("--columns", help="comma-separated sensor columns of the CSV")
    p.add_argument("--stride", type=int, default=None, help="packet stride (default L)")
    if with_shape:
        p.add_argument("--M", type=int, help="sensors per packet (CSV input)")
        p.add_argument("--L", type=int, help="symbols per packet (CSV input)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moac", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate WMFS samples for a set of packets")
    p.add_argument("--config", required=True, help="channel config JSON")
    _add_data_args(p)
    p.add_argument("--snr-db", type=float, help="override the config SNR")
    p.add_argument("--oracle", action="store_true", help="use the oversampled continuous-time path")
    p.add_argument("--Q", type=int, default=256, help="oversampling factor for --oracle")
    p.add_argument("--dump-waveforms", action="store_true",
                   help="with --oracle, write each waveform as CSV (t, re, im)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run an estimator over simulated packets")
    p.add_argument("--in", dest="input", required=True, help="directory written by simulate")
    p.add_argument("--estimator", required=True, help="|".join(ESTIMATOR_NAMES))
    p.add_argument("--sum", action="store_true", help="sum instead of average targets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True,
                   help="estimates CSV (hand-off directory for wiener+denoiser)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="Monte-Carlo MSE vs SNR sweep, or timing with --bench")
    p.add_argument("--snr", default="-20:20:10", help="lo:hi:step or comma list, dB")
    p.add_argument("--estimators", default="aligned,ls,lmmse,wiener")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--config", help="channel config JSON (default: random channel)")
    p.add_argument("--M", "--M-grid", dest="M",
                   help="sensors (default 4); with --bench a comma list (default 8)")
    p.add_argument("--L", "--L-grid", dest="L",
                   help="packet length (default 32); with --bench a comma list "
                        "(default 64,256,1024,4096)")
    p.add_argument("--data", choices=["gaussian", "synthetic"], default="gaussian")
    p.add_argument("--sum", action="store_true", help="sum instead of average targets")
    p.add_argument("--bench", action="store_true", help="time estimators instead")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--batch", type=int, default=32,
                   help="packets per call for the FFT-path estimators (time reported per packet)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-training", help="write a denoiser training corpus")
    _add_data_args(p, with_shape=True)
    p.add_argument("--snr-min", type=float, default=-20.0)
    p.add_argument("--snr-max", type=float, default=20.0)
    p.add_argument("--sum", action="store_true", help="sum instead of average targets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_training)

    p = sub.add_parser("generate", help="write a synthetic correlated sensor CSV")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--N", type=int, required=True, help="time steps")
    p.add_argument("--rho-t", type=float, default=0.9)
    p.add_argument("--rho-s", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (UsageError, InterchangeError, FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
