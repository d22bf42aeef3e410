"""``taco`` command line: encode, decode, bench, bdrate, force2img."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .codecs import LOSSLESS, Registry, decode_any, wrap_external
from .data import (
    ForceImageMapping,
    force_to_frame,
    load_force_csv,
    load_force_frame,
    load_frame,
    save_frame,
    sidecar_path,
)
from .errors import ConfigError, TacoError
from .metrics import bd_rate, read_curve_csv


def _registry(config) -> Registry:
    if config is None:
        return Registry.default()
    return bench.load_config(config).registry


def _load_input(path: Path, map_file):
    if path.suffix.lower() == ".csv":
        if map_file is None:
            raise ConfigError("force CSV input needs --map")
        return force_to_frame(load_force_csv(path), ForceImageMapping.load(map_file))
    if sidecar_path(path).exists():
        return load_force_frame(path)
    return load_frame(path)


def cmd_encode(args) -> int:
    reg = _registry(args.config)
    codec = reg.get(args.codec)
    frame = _load_input(Path(args.input), args.map)
    quality = args.quality if args.quality is not None else codec.qualities[0]
    if codec.lossless:
        quality = LOSSLESS
    elif quality not in codec.qualities and not str(quality).startswith("step="):
        raise ConfigError(f"{codec.id} qualities are {list(codec.qualities)}")
    blob = codec.encode(frame, quality)
    if codec.spec.kind.external:
        blob = wrap_external(codec, frame, quality, blob)
    Path(args.output).write_bytes(blob)
    print(f"{args.input}: {frame.nbytes} B -> {len(blob)} B "
          f"({8 * len(blob) / frame.nbytes:.4f} bits/Byte)")
    return 0


def cmd_decode(args) -> int:
    reg = _registry(args.config) if args.config else None
    frame = decode_any(Path(args.input).read_bytes(), reg)
    save_frame(frame, args.output)
    return 0


def cmd_bench(args) -> int:
    cfg = bench.load_config(args.config, threads=args.threads, out=args.out,
                            serial_timing=True if args.serial_timing else None)
    out = cfg.out or args.out
    if out is None:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    results = bench.run_benchmark(cfg)
    for p in bench.emit_report(results, out):
        print(p)
    bad = [r for r in results if not r.ok]
    for r in bad:
        print(f"failed: {r.codec} {r.dataset} {r.quality}: {r.status}: {r.message}",
              file=sys.stderr)
    return bench.exit_code(results)


def cmd_bdrate(args) -> int:
    anchor = read_curve_csv(args.anchor, args.anchor_codec, args.dataset)
    test = read_curve_csv(args.test, args.test_codec, args.dataset)
    print(f"BD-rate: {bd_rate(anchor, test, args.metric):+.3f}%")
    return 0


def cmd_force2img(args) -> int:
    mapping = ForceImageMapping.load(args.map)
    grid = tuple(int(v) for v in args.grid.lower().split("x")) if args.grid else None
    frame = force_to_frame(load_force_csv(args.input), mapping, grid)
    save_frame(frame, args.output)
    print(f"{args.output}: {frame.width}x{frame.height}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="taco", description="Tactile compression toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("encode", help="compress one frame into a TACB container")
    p.add_argument("--codec", required=True)
    p.add_argument("--quality", help="quality token; 0-3 or step=N for taco-l-lite")
    p.add_argument("--config", help="bench config defining external codecs")
    p.add_argument("--map", help="mapping sidecar for force CSV input")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct a frame from a TACB container")
    p.add_argument("--config", help="bench config defining external codecs")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="run a benchmark grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--serial-timing", action="store_true",
                   help="measure speeds after the grid, one job at a time")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bdrate", help="Bjontegaard delta rate between two RD curves")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--anchor-codec")
    p.add_argument("--test-codec")
    p.add_argument("--dataset")
    p.add_argument("--metric", choices=("psnr", "ms_ssim"), default="psnr")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("force2img", help="stack a force CSV log into an image")
    p.add_argument("--map", required=True)
    p.add_argument("--grid", help="taxel layout ROWSxCOLS, e.g. 5x12")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_force2img)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"taco: config error: {exc}", file=sys.stderr)
        return bench.EXIT_CONFIG
    except (TacoError, OSError) as exc:
        print(f"taco: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
