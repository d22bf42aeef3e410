"""Benchmark orchestration: job grid, timing, results.csv, report.md, RD plots."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .codecs import LOSSLESS, Codec, CodecKind, CodecSpec, Registry
from .data import DatasetManifest, TactileFrame
from .errors import (
    ConfigError,
    ExternalCommandFailure,
    LosslessViolation,
    MissingDataset,
    TacoError,
    TooFewFrames,
    TooSmallForAnyScale,
    UnreadableFile,
    UnsupportedFormat,
    UnwritableOutput,
)
from .metrics import INF, bpp_of, ms_ssim, psnr

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

CSV_COLUMNS = ("codec", "dataset", "quality", "bits_per_byte", "ratio", "bpp", "psnr_db",
               "ms_ssim", "enc_kbps", "dec_kbps", "enc_fps", "dec_fps", "frames", "wall_s",
               "status")
TIMING_COLUMNS = ("enc_kbps", "dec_kbps", "enc_fps", "dec_fps", "wall_s")

STATUS_OK = "ok"
STATUS_LOSSLESS_VIOLATION = "lossless-violation"
STATUS_EXTERNAL_FAILURE = "external-failure"
STATUS_ERROR = "error"

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

WARMUP_FRAMES = 2
MIN_TIMING_FRAMES = 10
TIMING_RUNS = 3


@dataclass
class BenchResult:
    codec: str
    dataset: str
    quality: str
    bits_per_byte: float = math.nan
    bpp: float = math.nan
    psnr: float = math.nan
    ms_ssim: Optional[float] = None
    enc_kbps: float = math.nan
    dec_kbps: float = math.nan
    enc_fps: float = math.nan
    dec_fps: float = math.nan
    frames: int = 0
    wall_s: float = math.nan
    status: str = STATUS_OK
    bpb_frame_mean: float = math.nan
    message: str = ""

    @property
    def ratio(self) -> float:
        return 8.0 / self.bits_per_byte if self.bits_per_byte > 0 else math.nan

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def sort_key(self):
        return (self.codec, self.dataset, _quality_key(self.quality))


def _quality_key(q: str):
    # numeric tokens sort numerically, everything else after them by text
    try:
        return (0, float(q), "")
    except ValueError:
        return (1, 0.0, q)


@dataclass
class BenchConfig:
    datasets: list
    codecs: list                      # codec ids, resolved against the registry
    registry: Registry = field(default_factory=Registry.default)
    qualities: dict = field(default_factory=dict)   # codec id -> quality tokens
    threads: int = 1
    out: Optional[str] = None
    serial_timing: bool = False
    timing: bool = True
    max_frames: Optional[int] = None

    def jobs(self) -> list:
        grid = []
        for cid in self.codecs:
            codec = self.registry.get(cid)
            quals = self.qualities.get(cid) or codec.qualities
            for ds in self.datasets:
                for q in quals:
                    grid.append((cid, ds, str(q)))
        return grid


def _codec_from_table(tab: dict) -> CodecSpec:
    try:
        cid = tab["id"]
    except KeyError:
        raise ConfigError("codec table without an id") from None
    kind = tab.get("kind", "external-lossless")
    try:
        kind = CodecKind(kind)
    except ValueError:
        raise ConfigError(f"{cid}: unknown codec kind {kind!r}") from None
    return CodecSpec(cid, kind, tab.get("encode"), tab.get("decode"),
                     tuple(str(q) for q in tab.get("qualities", ())),
                     float(tab.get("timeout", 600.0)))


def load_config(path, threads: Optional[int] = None, out: Optional[str] = None,
                serial_timing: Optional[bool] = None) -> BenchConfig:
    """Read a TOML bench config; relative dataset paths resolve against it."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc, base=path.parent, threads=threads, out=out,
                            serial_timing=serial_timing)


def config_from_dict(doc: dict, base=".", threads=None, out=None,
                     serial_timing=None) -> BenchConfig:
    base = Path(base)
    if "datasets" not in doc or "codecs" not in doc:
        raise ConfigError("config needs 'datasets' and 'codecs'")
    registry = Registry.default()
    ids, quals = [], {}
    for entry in doc["codecs"]:
        if isinstance(entry, str):
            registry.get(entry)
            ids.append(entry)
            continue
        if not isinstance(entry, dict):
            raise ConfigError(f"bad codec entry {entry!r}")
        if entry.get("id") in registry and "encode" not in entry:
            # a built-in with a quality override
            ids.append(entry["id"])
        else:
            registry.register_external(_codec_from_table(entry))
            ids.append(entry["id"])
        if entry.get("qualities"):
            quals[entry["id"]] = [str(q) for q in entry["qualities"]]
    if len(set(ids)) != len(ids):
        raise ConfigError("codec listed twice")
    datasets = [str(p if Path(p).is_absolute() else base / p) for p in doc["datasets"]]
    return BenchConfig(
        datasets=datasets,
        codecs=ids,
        registry=registry,
        qualities=quals,
        threads=int(threads if threads is not None else doc.get("threads", 1)),
        out=out if out is not None else doc.get("out"),
        serial_timing=bool(serial_timing if serial_timing is not None
                           else doc.get("serial_timing", False)),
        timing=bool(doc.get("timing", True)),
        max_frames=doc.get("max_frames"),
    )


def load_dataset(path, max_frames: Optional[int] = None):
    """(dataset name, frames) for a manifest file."""
    p = Path(path)
    if not p.is_file():
        raise MissingDataset(f"dataset manifest not found: {p}")
    try:
        manifest = DatasetManifest.load(p)
        frames = manifest.load_frames()
    except (UnreadableFile, UnsupportedFormat) as exc:
        raise MissingDataset(f"{p}: {exc}") from exc
    if max_frames is not None:
        frames = frames[:max_frames]
    return manifest.name, frames


# --------------------------------------------------------------------------
# timing
# --------------------------------------------------------------------------

def time_codec(codec: Codec, frames: Sequence[TactileFrame], quality: str = LOSSLESS,
               runs: int = TIMING_RUNS, warmup: int = WARMUP_FRAMES):
    """(enc KB/s, dec KB/s, enc fps, dec fps) as a median over ``runs``.

    The first ``warmup`` frames are coded once untimed; the rest are timed
    with a wall clock, encode and decode separately.
    """
    if len(frames) < MIN_TIMING_FRAMES:
        raise TooFewFrames(f"timing needs >= {MIN_TIMING_FRAMES} frames, got {len(frames)}")
    for f in frames[:warmup]:
        codec.decode(codec.encode(f, quality))
    timed = frames[warmup:]
    raw_kb = sum(f.nbytes for f in timed) / 1024.0
    enc_t, dec_t = [], []
    for _ in range(runs):
        t0 = time.perf_counter()
        blobs = [codec.encode(f, quality) for f in timed]
        t1 = time.perf_counter()
        for b in blobs:
            codec.decode(b)
        t2 = time.perf_counter()
        enc_t.append(t1 - t0)
        dec_t.append(t2 - t1)
    te, td = statistics.median(enc_t), statistics.median(dec_t)
    return raw_kb / te, raw_kb / td, len(timed) / te, len(timed) / td


def fps_from_speed(kbps: float, frame_bytes: int) -> float:
    return kbps * 1024.0 / frame_bytes


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def _mean_or_none(vals):
    return float(np.mean(vals)) if vals else None


def run_job(codec: Codec, dataset: str, frames: Sequence[TactileFrame], quality: str,
            timing: bool = True) -> BenchResult:
    """Compress, decompress and score one (codec, dataset, quality) cell."""
    res = BenchResult(codec.id, dataset, quality if not codec.lossless else LOSSLESS)
    t0 = time.perf_counter()
    try:
        bits, raw, pixels = 0, 0, 0
        per_frame, psnrs, ssims = [], [], []
        ssim_ok = True
        for i, f in enumerate(frames):
            blob = codec.encode(f, quality)
            rec = codec.decode(blob)
            if rec.pixels.shape != f.pixels.shape:
                raise LosslessViolation(f"frame {i}: decoded shape {rec.pixels.shape}")
            if codec.lossless and not np.array_equal(rec.pixels, f.pixels):
                raise LosslessViolation(f"frame {i} does not round-trip")
            nb = 8 * len(blob)
            bits += nb
            raw += f.nbytes
            pixels += f.width * f.height
            per_frame.append(nb / f.nbytes)
            if not codec.lossless:
                psnrs.append(psnr(f, rec))
                if ssim_ok:
                    try:
                        ssims.append(ms_ssim(f, rec))
                    except TooSmallForAnyScale:
                        ssim_ok = False
        if not frames:
            raise TooFewFrames("dataset has no frames")
        res.frames = len(frames)
        res.bits_per_byte = bits / raw
        res.bpb_frame_mean = float(np.mean(per_frame))
        res.bpp = bits / pixels
        res.psnr = INF if codec.lossless else float(np.mean(psnrs))
        res.ms_ssim = (1.0 if codec.lossless else _mean_or_none(ssims)) if ssim_ok else None
        if timing:
            _attach_timing(res, codec, frames, quality)
    except LosslessViolation as exc:
        res.status, res.message = STATUS_LOSSLESS_VIOLATION, str(exc)
    except ExternalCommandFailure as exc:
        res.status, res.message = STATUS_EXTERNAL_FAILURE, str(exc)
    except TacoError as exc:
        res.status, res.message = STATUS_ERROR, f"{type(exc).__name__}: {exc}"
    res.wall_s = time.perf_counter() - t0
    return res


def _attach_timing(res: BenchResult, codec: Codec, frames, quality) -> None:
    try:
        res.enc_kbps, res.dec_kbps, res.enc_fps, res.dec_fps = time_codec(codec, frames, quality)
    except TooFewFrames as exc:
        res.message = str(exc)


def run_benchmark(config: BenchConfig) -> list:
    """One row per grid cell, sorted by (codec, dataset, quality).

    Failures are recorded as rows with a non-ok status rather than raised;
    unknown codecs and missing datasets are configuration errors and raise.
    """
    for cid in config.codecs:
        config.registry.get(cid)
    datasets = {}
    for path in config.datasets:
        name, frames = load_dataset(path, config.max_frames)
        if name in datasets:
            raise ConfigError(f"dataset name {name!r} appears twice")
        datasets[name] = frames
    by_path = dict(zip(config.datasets, datasets))
    grid = config.jobs()
    inline_timing = config.timing and not config.serial_timing

    def work(job):
        cid, path, q = job
        name = by_path[path]
        return run_job(config.registry.get(cid), name, datasets[name], q, inline_timing)

    workers = max(1, int(config.threads))
    if workers == 1:
        results = [work(j) for j in grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, grid))
    if config.timing and config.serial_timing:
        for r in results:
            if r.ok:
                t0 = time.perf_counter()
                _attach_timing(r, config.registry.get(r.codec), datasets[r.dataset], r.quality)
                r.wall_s += time.perf_counter() - t0
    return sorted(results, key=BenchResult.sort_key)


def exit_code(results: Sequence[BenchResult]) -> int:
    return EXIT_OK if all(r.ok for r in results) else EXIT_PARTIAL


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _fmt(v, digits: int = 6) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.{digits}f}"
    return str(v)


def result_row(r: BenchResult) -> dict:
    return {
        "codec": r.codec, "dataset": r.dataset, "quality": r.quality,
        "bits_per_byte": _fmt(r.bits_per_byte), "ratio": _fmt(r.ratio, 4),
        "bpp": _fmt(r.bpp), "psnr_db": _fmt(r.psnr, 4), "ms_ssim": _fmt(r.ms_ssim),
        "enc_kbps": _fmt(r.enc_kbps, 1), "dec_kbps": _fmt(r.dec_kbps, 1),
        "enc_fps": _fmt(r.enc_fps, 2), "dec_fps": _fmt(r.dec_fps, 2),
        "frames": str(r.frames), "wall_s": _fmt(r.wall_s, 3), "status": r.status,
    }


def results_csv(results: Sequence[BenchResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(result_row(r))
    return buf.getvalue()


def _rank_marks(values: dict, lower_is_better: bool) -> dict:
    """key -> ' (best)' / ' (2nd)' for the two best distinct finite values."""
    finite = {k: v for k, v in values.items() if v is not None and math.isfinite(v)}
    order = sorted(set(finite.values()), reverse=not lower_is_better)
    marks = {}
    for k, v in finite.items():
        if order and v == order[0]:
            marks[k] = "best"
        elif len(order) > 1 and v == order[1]:
            marks[k] = "2nd"
    return marks


def _mark(text: str, mark: Optional[str]) -> str:
    if mark == "best":
        return f"**{text}**"
    if mark == "2nd":
        return f"_{text}_"
    return text


def report_markdown(results: Sequence[BenchResult]) -> str:
    lines = ["# Benchmark report", "",
             "Best value per dataset column in **bold**, second best in _italics_. "
             "bits/Byte is aggregated over the dataset (total bits / total raw bytes); "
             "the per-frame mean is listed alongside. BD-rate curves use monotone "
             "piecewise cubic Hermite interpolation of log10(bpp) against PSNR.", ""]
    for ds in sorted({r.dataset for r in results}):
        rows = [r for r in results if r.dataset == ds]
        lines += [f"## {ds}", ""]
        ll = [r for r in rows if r.quality == LOSSLESS]
        if ll:
            ok = {(r.codec, r.quality): r for r in ll if r.ok}
            m_bpb = _rank_marks({k: r.bits_per_byte for k, r in ok.items()}, True)
            m_enc = _rank_marks({k: r.enc_kbps for k, r in ok.items()}, False)
            m_dec = _rank_marks({k: r.dec_kbps for k, r in ok.items()}, False)
            lines += ["### Lossless", "",
                      "| codec | bits/Byte | ratio | per-frame bits/Byte | enc KB/s | dec KB/s "
                      "| enc FPS | dec FPS | status |",
                      "|---|---|---|---|---|---|---|---|---|"]
            for r in ll:
                k = (r.codec, r.quality)
                lines.append(
                    f"| {r.codec} | {_mark(_fmt(r.bits_per_byte, 3), m_bpb.get(k))} "
                    f"| {_fmt(r.ratio, 1)}× | {_fmt(r.bpb_frame_mean, 3)} "
                    f"| {_mark(_fmt(r.enc_kbps, 1), m_enc.get(k))} "
                    f"| {_mark(_fmt(r.dec_kbps, 1), m_dec.get(k))} "
                    f"| {_fmt(r.enc_fps, 2)} | {_fmt(r.dec_fps, 2)} | {r.status} |")
            lines.append("")
        lossy = [r for r in rows if r.quality != LOSSLESS]
        if lossy:
            ok = {(r.codec, r.quality): r for r in lossy if r.ok}
            m_psnr = _rank_marks({k: r.psnr for k, r in ok.items()}, False)
            m_bpp = _rank_marks({k: r.bpp for k, r in ok.items()}, True)
            lines += ["### Lossy", "",
                      "| codec | quality | bpp | PSNR (dB) | MS-SSIM | enc FPS | dec FPS | status |",
                      "|---|---|---|---|---|---|---|---|"]
            for r in lossy:
                k = (r.codec, r.quality)
                lines.append(
                    f"| {r.codec} | {r.quality} | {_mark(_fmt(r.bpp, 4), m_bpp.get(k))} "
                    f"| {_mark(_fmt(r.psnr, 2), m_psnr.get(k))} | {_fmt(r.ms_ssim, 4)} "
                    f"| {_fmt(r.enc_fps, 2)} | {_fmt(r.dec_fps, 2)} | {r.status} |")
            lines += ["", f"RD plot: `rd_{_slug(ds)}.svg`", ""]
        failed = [r for r in rows if not r.ok]
        if failed:
            lines += ["### Failures", ""]
            lines += [f"- {r.codec} / {r.quality}: {r.status}: {r.message}" for r in failed]
            lines.append("")
    return "\n".join(lines) + "\n"


def _slug(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in s)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
            "#7f7f7f")


def svg_line_plot(series: dict, title: str, xlabel: str, ylabel: str,
                  logx: bool = False, width: int = 640, height: int = 420) -> str:
    """Minimal SVG with one polyline per series; ``series`` maps name -> [(x, y)]."""
    pts = [(x, y) for s in series.values() for x, y in s if math.isfinite(y)]
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    xs = [tx(x) for x, _ in pts] or [0.0, 1.0]
    ys = [y for _, y in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.05 * (x1 - x0), 0.05 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
    ml, mr, mt, mb = 60, 150, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (tx(x) - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<text x="{ml + pw / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
           f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{xlabel}</text>',
           f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{ylabel}</text>']
    for t in np.linspace(y0, y1, 5):
        out.append(f'<text x="{ml - 4}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    if logx:
        ticks = [10.0 ** k for k in range(math.floor(x0), math.ceil(x1) + 1)]
        ticks = [t for t in ticks if x0 <= math.log10(t) <= x1] or [10 ** x0, 10 ** x1]
    else:
        ticks = list(np.linspace(x0, x1, 5))
    for t in ticks:
        out.append(f'<text x="{px(t):.1f}" y="{mt + ph + 14}" text-anchor="middle">{t:.3g}</text>')
    for i, (name, s) in enumerate(series.items()):
        col = _PALETTE[i % len(_PALETTE)]
        good = [(x, y) for x, y in s if math.isfinite(y)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in good)
        out.append(f'<polyline data-series="{name}" fill="none" stroke="{col}" '
                   f'stroke-width="1.5" points="{coords}"/>')
        for x, y in good:
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5" fill="{col}"/>')
        ly = mt + 14 * (i + 1)
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def rd_plot_svg(results: Sequence[BenchResult], dataset: str) -> Optional[str]:
    series = {}
    for r in results:
        if r.dataset == dataset and r.ok and r.quality != LOSSLESS and r.bpp > 0:
            series.setdefault(r.codec, []).append((r.bpp, r.psnr))
    if not series:
        return None
    series = {k: sorted(v) for k, v in sorted(series.items())}
    return svg_line_plot(series, f"Rate-distortion: {dataset}", "bits per pixel (log scale)",
                         "PSNR (dB)", logx=True)


def emit_report(results: Sequence[BenchResult], out_dir) -> list:
    """Write results.csv, results.json, report.md and RD plots; returns the paths."""
    if not results:
        raise ValueError("no results to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        p = out / "results.csv"
        p.write_text(results_csv(results))
        written.append(p)
        p = out / "results.json"
        p.write_text(json.dumps([_json_row(r) for r in results], indent=1) + "\n")
        written.append(p)
        p = out / "report.md"
        p.write_text(report_markdown(results))
        written.append(p)
        for ds in sorted({r.dataset for r in results}):
            svg = rd_plot_svg(results, ds)
            if svg is not None:
                p = out / f"rd_{_slug(ds)}.svg"
                p.write_text(svg)
                written.append(p)
    except OSError as exc:
        raise UnwritableOutput(f"cannot write report to {out}: {exc}") from exc
    return written


def _json_row(r: BenchResult) -> dict:
    d = asdict(r)
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            d[k] = None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    d["ratio"] = None if math.isnan(r.ratio) else r.ratio
    return d


def strip_timing(csv_text: str) -> str:
    """results.csv with the timing columns blanked, for determinism checks."""
    rows = list(csv.DictReader(io.StringIO(csv_text)))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if k in TIMING_COLUMNS else v) for k, v in row.items()})
    return buf.getvalue()
