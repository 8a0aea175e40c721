"""Command-line front end.

Subcommands map one-to-one onto the library modules: ``trunc-table``
(series truncation indices), ``phase-stats`` (phase-law constants),
``sep-sweep`` (Monte Carlo error-rate curves), ``regions`` (decision-region
rasters), and ``optimize`` (constellation search).  Powers are accepted in
dB here and converted once; the library works in linear units throughout.

Every run writes ``<out>.manifest.json`` recording the subcommand, the full
parameter set, the seed, the tool version, the declared output paths, and
the wall-clock duration.  Data outputs are deterministic given the manifest
parameters; the manifest itself carries timing and is not.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .constellations import (Constellation, load_constellation, make_pam,
                             make_psk, make_qam, save_constellation)
from .detector import (DetectorKind, MlgConfig, min_truncation_index,
                       rasterize_regions)
from .interference import (InterferenceParams, c_norm, d_integral,
                           phase_variance)
from .montecarlo import (ChannelParams, sep_sweep, simulate_sep,
                         write_sweep_csv)
from .optimizer import OptimizerConfig, optimize_constellation

_DETECTOR_ORDER = ("mlg", "cai", "eucl")


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


def _gamma_grid(text: str) -> list[float]:
    """Comma list ('0,5,10') or range ('start:stop:step', stop inclusive)."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("range syntax is start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise argparse.ArgumentTypeError("range step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n < 1:
            raise argparse.ArgumentTypeError("empty gamma range")
        return [start + i * step for i in range(n)]
    return _float_list(text)


def _window(text: str) -> tuple[float, float, float, float]:
    vals = _float_list(text)
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("window is re_min,re_max,im_min,im_max")
    return tuple(vals)  # type: ignore[return-value]


def _merge_negative_values(argv: list[str]) -> list[str]:
    """Join '--flag -4,4,-4,4' into '--flag=-4,4,-4,4' so argparse does not
    read leading-minus values as option names."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if (tok.startswith("--") and "=" not in tok and nxt is not None
                and len(nxt) > 1 and nxt[0] == "-"
                and (nxt[1].isdigit() or nxt[1] == ".")):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        n = value
    else:
        env = os.environ.get("IMLAB_THREADS", "")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ValueError(f"IMLAB_THREADS is not an integer: {env!r}")
    if n < 1:
        raise ValueError("thread count must be at least 1")
    return n


def _resolve_seed(args: argparse.Namespace) -> int:
    if args.seed is None:
        print("note: --seed not given; defaulting to seed 0", file=sys.stderr)
        return 0
    return args.seed


def _load_points(args: argparse.Namespace) -> Constellation:
    name = args.const
    if name in ("psk", "qam", "pam"):
        if args.order is None:
            raise ValueError(f"--order is required with --const {name}")
        maker = {"psk": make_psk, "qam": make_qam, "pam": make_pam}[name]
        return maker(args.order)
    return load_constellation(name)


def _write_manifest(out_path: str, subcommand: str, args: argparse.Namespace,
                    seed: int | None, outputs: list[str], started: float) -> None:
    params = {}
    for key, val in sorted(vars(args).items()):
        if key in ("func", "subcommand"):
            continue
        if isinstance(val, tuple):
            val = list(val)
        params[key] = val
    manifest = {
        "subcommand": subcommand,
        "params": params,
        "seed": seed,
        "version": __version__,
        # basenames: the record should not change when the directory does
        "outputs": [os.path.basename(str(p)) for p in outputs],
        "duration_s": round(time.monotonic() - started, 3),
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _cmd_trunc_table(args: argparse.Namespace) -> int:
    started = time.monotonic()
    lines = ["m," + ",".join(f"inr_db={v!r}" for v in args.inr_db)]
    for m in args.m:
        row = [repr(float(m))]
        for inr in args.inr_db:
            params = InterferenceParams.from_inr_db(m, inr)
            row.append(str(min_truncation_index(params, args.eps, args.rmax)))
        lines.append(",".join(row))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_manifest(args.out, "trunc-table", args, None, [args.out], started)
    return 0


def _cmd_phase_stats(args: argparse.Namespace) -> int:
    started = time.monotonic()
    lines = ["m,c_norm,d_integral,sigma_theta_sq"]
    for m in args.m:
        lines.append(",".join([repr(float(m)), repr(c_norm(m)),
                               repr(d_integral(m)), repr(phase_variance(m))]))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_manifest(args.out, "phase-stats", args, None, [args.out], started)
    return 0


def _cmd_sep_sweep(args: argparse.Namespace) -> int:
    started = time.monotonic()
    seed = _resolve_seed(args)
    threads = _resolve_threads(args.threads)
    const = _load_points(args)
    tags = [t.strip() for t in args.detectors.split(",") if t.strip()]
    for t in tags:
        if t not in _DETECTOR_ORDER:
            raise ValueError(f"unknown detector tag {t!r}")
    tags = [t for t in _DETECTOR_ORDER if t in tags]

    if args.no_interference:
        if tags != ["eucl"]:
            raise ValueError("--no-interference supports only --detectors eucl "
                             "(the interference-aware metrics are undefined "
                             "without an interference model)")
        ch = ChannelParams.from_snr_db(args.snr_db, no_interference=True)
        est = simulate_sep(const, DetectorKind.euclidean(), ch, None,
                           args.trials, seed, threads=threads)
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("ser_eucl,ci_eucl\n")
            fh.write(f"{est.sep!r},{est.ci95_half!r}\n")
    else:
        if args.m is None or args.gamma_db is None:
            raise ValueError("--m and --gamma-db are required unless "
                             "--no-interference is set")
        ch = ChannelParams.from_snr_db(args.snr_db)
        intf_base = InterferenceParams.from_inr_db(args.m, args.snr_db)
        rows = sep_sweep(const, tags, ch, intf_base, args.gamma_db,
                         args.trials, seed, epsilon=args.eps, r_max=args.rmax,
                         threads=threads)
        write_sweep_csv(rows, tags, args.out)
    _write_manifest(args.out, "sep-sweep", args, seed, [args.out], started)
    return 0


def _cmd_regions(args: argparse.Namespace) -> int:
    started = time.monotonic()
    threads = _resolve_threads(args.threads)
    const = _load_points(args)
    ch = ChannelParams.from_snr_db(args.snr_db)
    intf = InterferenceParams.from_inr_db(args.m, args.inr_db)
    if args.detector == "mlg":
        kind = DetectorKind.mlg()
        cfg = MlgConfig(intf, epsilon=args.eps, r_max=args.rmax)
    elif args.detector == "cai":
        amp = args.cai_amplitude if args.cai_amplitude is not None \
            else math.sqrt(intf.omega)
        kind = DetectorKind.cai(amp)
        cfg = None
    else:
        kind = DetectorKind.euclidean()
        cfg = None
    raster = rasterize_regions(const, ch.s_lin, kind, cfg, args.window,
                               args.res, threads=threads)
    outputs = [args.out]
    raster.to_csv(args.out)
    if args.pgm is not None:
        raster.to_pgm(args.pgm)
        outputs.append(args.pgm)
    _write_manifest(args.out, "regions", args, None, outputs, started)
    return 0


def _cmd_optimize(args: argparse.Namespace) -> int:
    started = time.monotonic()
    seed = _resolve_seed(args)
    threads = _resolve_threads(args.threads)
    if (args.gamma_db is None) == (args.inr_db is None):
        raise ValueError("give exactly one of --gamma-db or --inr-db")
    inr_db = args.snr_db - args.gamma_db if args.gamma_db is not None else args.inr_db
    ch = ChannelParams.from_snr_db(args.snr_db)
    intf = InterferenceParams.from_inr_db(args.m, inr_db)
    cfg = OptimizerConfig(
        population=args.population, generations=args.generations,
        diff_weight=args.diff_weight, crossover=args.crossover,
        delta_min=args.delta_min, eval_trials=args.eval_trials, seed=seed,
        refine_iters=args.refine_iters, refine_step0=args.refine_step0)
    result = optimize_constellation(args.order, ch, intf, cfg, threads=threads)

    save_constellation(result.constellation, args.out)
    trace_path = args.trace
    if trace_path is None:
        stem, ext = os.path.splitext(args.out)
        trace_path = stem + ".trace.csv"
    with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("generation,best_objective\n")
        for gen, obj in result.trace:
            fh.write(f"{gen},{obj!r}\n")
    _write_manifest(args.out, "optimize", args, seed,
                    [args.out, trace_path], started)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imlab",
        description="Interference-aware maximum-likelihood detection toolbox")
    parser.add_argument("--version", action="version", version=f"imlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("trunc-table", help="series truncation-index table")
    p.add_argument("--m", type=_float_list, required=True,
                   help="comma list of shape parameters")
    p.add_argument("--inr-db", type=_float_list, required=True,
                   help="comma list of interference-to-noise ratios in dB")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--rmax", type=float, default=4.0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_trunc_table)

    p = sub.add_parser("phase-stats", help="phase-law normalization and variance")
    p.add_argument("--m", type=_float_list, required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_phase_stats)

    p = sub.add_parser("sep-sweep", help="Monte Carlo symbol-error-rate sweep")
    p.add_argument("--const", required=True,
                   help="psk | qam | pam | path to an index,re,im CSV")
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--m", type=float, default=None)
    p.add_argument("--gamma-db", type=_gamma_grid, default=None,
                   help="comma list or start:stop:step (dB)")
    p.add_argument("--detectors", default="mlg,cai,eucl")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--no-interference", action="store_true")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--rmax", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_sep_sweep)

    p = sub.add_parser("regions", help="decision-region raster")
    p.add_argument("--const", required=True)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--inr-db", type=float, required=True)
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--detector", choices=_DETECTOR_ORDER, default="mlg")
    p.add_argument("--cai-amplitude", type=float, default=None,
                   help="constant-amplitude benchmark level (default sqrt(omega))")
    p.add_argument("--window", type=_window, default=(-4.0, 4.0, -4.0, 4.0),
                   help="re_min,re_max,im_min,im_max")
    p.add_argument("--res", type=int, default=512)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--rmax", type=float, default=4.0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--pgm", default=None, help="also write a P2 grayscale image")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_regions)

    p = sub.add_parser("optimize", help="SEP-minimizing constellation search")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--gamma-db", type=float, default=None)
    p.add_argument("--inr-db", type=float, default=None)
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--generations", type=int, default=300)
    p.add_argument("--diff-weight", type=float, default=0.7)
    p.add_argument("--crossover", type=float, default=0.9)
    p.add_argument("--delta-min", type=float, default=None)
    p.add_argument("--eval-trials", type=int, default=20_000)
    p.add_argument("--refine-iters", type=int, default=200)
    p.add_argument("--refine-step0", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--trace", default=None,
                   help="trace CSV path (default: <out>.trace.csv)")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_optimize)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(_merge_negative_values(argv))
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
