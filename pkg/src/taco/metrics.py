"""Rate and distortion metrics: bits/Byte, BPP, bandwidth, PSNR, MS-SSIM,
RMSE maps and Bjontegaard delta rate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import TactileFrame, encode_pgm
from .errors import (
    DimensionMismatch,
    EmptyInput,
    InsufficientPoints,
    NonMonotoneCurve,
    NonPositiveInput,
    NoQualityOverlap,
    TooSmallForAnyScale,
    ZeroArea,
)

INF = float("inf")
RAW_BPP = 24.0


def _pixels(x) -> np.ndarray:
    return x.pixels if isinstance(x, TactileFrame) else np.asarray(x)


def _pair(a, b):
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise DimensionMismatch(f"{pa.shape} vs {pb.shape}")
    if pa.size == 0:
        raise EmptyInput("empty frames")
    return pa, pb


# --------------------------------------------------------------------------
# rate
# --------------------------------------------------------------------------

def bits_per_byte(total_bits: float, raw_bytes: int) -> float:
    if raw_bytes <= 0:
        raise EmptyInput("no raw bytes")
    return total_bits / raw_bytes


def compression_ratio(bpb: float) -> float:
    return 8.0 / bpb


def format_ratio(bpb: float) -> str:
    """The table convention: rounded ratio followed by a times sign."""
    return f"{compression_ratio(bpb):.0f}×"


def bpp_of(bits: float, w: int, h: int, header_bits: float = 0.0,
           exclude_header: bool = False) -> float:
    if w <= 0 or h <= 0:
        raise ZeroArea(f"{w}x{h}")
    if exclude_header:
        bits = bits - header_bits
    return bits / (w * h)


def bandwidth_mbps(bpp: float, w: int, h: int, fps: float) -> float:
    if min(bpp, w, h, fps) <= 0:
        raise NonPositiveInput("bpp, dimensions and fps must all be positive")
    return bpp * w * h * fps * 1e-6


# --------------------------------------------------------------------------
# distortion
# --------------------------------------------------------------------------

def mse(a, b) -> float:
    pa, pb = _pair(a, b)
    d = pa.astype(np.float64) - pb.astype(np.float64)
    return float(np.mean(d * d))


def psnr_from_mse(m: float, peak: float = 255.0) -> float:
    if m == 0:
        return INF
    return 10.0 * math.log10(peak * peak / m)


def psnr(a, b) -> float:
    """RGB-domain PSNR in dB; identical inputs give ``inf``."""
    return psnr_from_mse(mse(a, b))


def rmse_map(a, b) -> np.ndarray:
    """Per-pixel sqrt of the mean squared error over the three channels."""
    pa, pb = _pair(a, b)
    d = pa.astype(np.float64) - pb.astype(np.float64)
    return np.sqrt(np.mean(d * d, axis=-1))


def write_rmse_map(rmap: np.ndarray, stem) -> float:
    """Write ``stem.pgm`` (scaled to 8 bits) and ``stem.csv``; returns the scale.

    Gray level = round(rmse * scale) with scale = 255 / max(rmse), or 1 when
    the map is all zero.
    """
    stem = Path(stem)
    peak = float(rmap.max()) if rmap.size else 0.0
    scale = 255.0 / peak if peak > 0 else 1.0
    gray = np.clip(np.floor(rmap * scale + 0.5), 0, 255).astype(np.uint8)
    stem.with_suffix(".pgm").write_bytes(encode_pgm(gray))
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"# scale={scale!r}"])
        for row in rmap:
            w.writerow([repr(float(v)) for v in row])
    return scale


# --------------------------------------------------------------------------
# MS-SSIM
# --------------------------------------------------------------------------

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WIN = 11
SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


def gaussian_window(size: int = WIN, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


_G = gaussian_window()


def _filter(img: np.ndarray) -> np.ndarray:
    """Separable Gaussian, 'valid' region only."""
    t = sliding_window_view(img, WIN, axis=0) @ _G
    return sliding_window_view(t, WIN, axis=1) @ _G


def _halve(img: np.ndarray) -> np.ndarray:
    """2x2 mean; odd sizes replicate the last row/column (size -> ceil(n/2))."""
    h, w = img.shape
    if h % 2:
        img = np.vstack([img, img[-1:]])
    if w % 2:
        img = np.hstack([img, img[:, -1:]])
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim_scales(h: int, w: int, max_scales: int = 5) -> int:
    """Number of dyadic scales whose smallest image still fits the window."""
    m = min(h, w)
    n = 0
    while n < max_scales and m >= 10 * (1 << n) + 1:
        n += 1
    return n


def _ssim_terms(x: np.ndarray, y: np.ndarray, peak: float):
    c1 = (_K1 * peak) ** 2
    c2 = (_K2 * peak) ** 2
    mx, my = _filter(x), _filter(y)
    sxx = _filter(x * x) - mx * mx
    syy = _filter(y * y) - my * my
    sxy = _filter(x * y) - mx * my
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ms_ssim_detail(a, b, peak: float = 255.0):
    """(MS-SSIM, number of scales used).

    Per channel: product over scales of the contrast-structure mean, with the
    full SSIM at the coarsest scale, each raised to its weight; negative
    terms are clamped to 0. Channels are averaged. Frames too small for five
    scales use as many as fit, with the weights renormalised.
    """
    pa, pb = _pair(a, b)
    if pa.ndim == 2:
        pa, pb = pa[..., None], pb[..., None]
    n = ms_ssim_scales(pa.shape[0], pa.shape[1])
    if n == 0:
        raise TooSmallForAnyScale(f"{pa.shape[1]}x{pa.shape[0]} is below the 11x11 window")
    w = np.array(MS_SSIM_WEIGHTS[:n])
    w = w / w.sum()
    vals = []
    for ch in range(pa.shape[2]):
        x = pa[..., ch].astype(np.float64)
        y = pb[..., ch].astype(np.float64)
        acc = 1.0
        for j in range(n):
            ssim, cs = _ssim_terms(x, y, peak)
            term = ssim if j == n - 1 else cs
            acc *= max(term, 0.0) ** w[j]
            if j < n - 1:
                x, y = _halve(x), _halve(y)
        vals.append(acc)
    return float(min(1.0, np.mean(vals))), n


def ms_ssim(a, b, peak: float = 255.0) -> float:
    return ms_ssim_detail(a, b, peak)[0]


# --------------------------------------------------------------------------
# RD curves and BD-rate
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RdPoint:
    bpp: float
    psnr: float
    ms_ssim: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if not self.bpp > 0:
            raise NonPositiveInput("bpp must be positive")
        if self.ms_ssim is not None and not 0.0 <= self.ms_ssim <= 1.0:
            raise ValueError("ms_ssim must lie in [0, 1]")

    def quality(self, metric: str = "psnr") -> float:
        if metric == "psnr":
            return self.psnr
        if metric == "ms_ssim":
            if self.ms_ssim is None:
                raise ValueError("point has no MS-SSIM value")
            return self.ms_ssim
        raise ValueError(f"unknown quality metric {metric!r}")


@dataclass(frozen=True)
class RdCurve:
    points: tuple
    label: str = ""

    @classmethod
    def sorted(cls, points: Sequence[RdPoint], label: str = "") -> "RdCurve":
        return cls(tuple(sorted(points, key=lambda p: (p.bpp, p.psnr))), label)

    @classmethod
    def from_pairs(cls, bpp: Sequence[float], psnr_db: Sequence[float], label: str = "",
                   ms: Optional[Sequence[float]] = None) -> "RdCurve":
        ms = ms if ms is not None else [None] * len(bpp)
        return cls.sorted([RdPoint(float(r), float(q), m) for r, q, m in zip(bpp, psnr_db, ms)],
                          label)

    def __len__(self) -> int:
        return len(self.points)

    def rates(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points])

    def qualities(self, metric: str = "psnr") -> np.ndarray:
        return np.array([p.quality(metric) for p in self.points])

    def check(self, metric: str = "psnr") -> None:
        """Raise unless the curve is usable for BD-rate integration."""
        if len(self.points) < 4:
            raise InsufficientPoints(f"curve {self.label!r} has {len(self.points)} points, need 4")
        r, q = self.rates(), self.qualities(metric)
        if not np.all(np.isfinite(q)):
            raise NonMonotoneCurve(
                f"curve {self.label!r} contains an infinite quality (lossless point); drop it")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(q) <= 0):
            raise NonMonotoneCurve(f"curve {self.label!r}: rate and quality must both increase")


def log_rate_interpolant(curve: RdCurve, metric: str = "psnr"):
    """Monotone cubic Hermite fit of log10(bpp) against quality."""
    from scipy.interpolate import PchipInterpolator

    curve.check(metric)
    return PchipInterpolator(curve.qualities(metric), np.log10(curve.rates()))


def bd_rate(anchor: RdCurve, test: RdCurve, metric: str = "psnr") -> float:
    """Average rate difference of ``test`` vs ``anchor`` at equal quality, in %.

    Negative values mean the test codec needs fewer bits.
    """
    fa = log_rate_interpolant(anchor, metric)
    ft = log_rate_interpolant(test, metric)
    qa, qt = anchor.qualities(metric), test.qualities(metric)
    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if hi <= lo:
        raise NoQualityOverlap(f"quality ranges [{qa.min()}, {qa.max()}] and "
                               f"[{qt.min()}, {qt.max()}] do not overlap")
    mean_diff = (ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo)
    return float((10.0 ** mean_diff - 1.0) * 100.0)


def read_curve_csv(path, codec: Optional[str] = None, dataset: Optional[str] = None) -> RdCurve:
    """Load an RD curve from a results.csv (lossless and failed rows skipped).

    A plain two-column ``bpp,psnr_db`` file is accepted as well.
    """
    rows = list(csv.DictReader(open(path, newline="")))
    pts = []
    for row in rows:
        if row.get("status", "ok") != "ok" or row.get("quality", "") == "lossless":
            continue
        if codec is not None and row.get("codec") != codec:
            continue
        if dataset is not None and row.get("dataset") != dataset:
            continue
        ms = row.get("ms_ssim") or ""
        pts.append(RdPoint(float(row["bpp"]), float(row["psnr_db"]),
                           float(ms) if ms not in ("", "nan") else None))
    return RdCurve.sorted(pts, str(path))
