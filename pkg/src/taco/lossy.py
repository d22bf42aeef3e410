"""taco-l-lite: block-transform lossy coding.

Pipeline per frame: YCoCg-R colour decorrelation (Y level-shifted by
-128), zero padding to multiples of 8, orthonormal 8x8 DCT-II per channel,
uniform scalar quantization, zigzag scan and adaptive range coding.

AC coefficients use a dead-zone quantizer (zero bin of width 2*step,
reconstruction at bin midpoints). DC uses plain rounding on a finer
grid (see :func:`dc_step`), which keeps flat regions and constant frames
exact; it is DPCM-coded across blocks.

Entropy coding, per block and channel: an end-of-block position, then for
each AC position up to it a magnitude category (bit length) under a
context of (luma/chroma, zigzag band), followed by sign and mantissa bits
coded at flat probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from . import container
from .container import CODEC_LOSSY, Header
from .data import TactileFrame
from .entropy import (
    DEFAULT_INCREMENT,
    DEFAULT_MAX_TOTAL,
    TOTAL,
    Bitstream,
    check_status,
    dec_init,
    dec_take,
    dec_target,
    enc_flush,
    enc_init,
    enc_put,
    encoder_capacity,
    model_cum,
    model_find,
    model_update,
    new_table,
)
from .errors import CorruptHeader, DimensionMismatch, EmptyInput, TooSmallForAnyScale
from .lossless import frame_flags, frame_metadata, restore_frame

LAMBDAS = (0.0018, 0.0067, 0.025, 0.0483)
QUALITY_CUSTOM = 254
BLOCK = 8


def step_for_lambda(lam: float) -> int:
    """Quantizer step tied to lambda through D ~ step**2 / 12."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return int(min(256, max(1, round(math.sqrt(12.0 / lam)))))


def dc_step(step: int) -> float:
    """DC is rounded on a grid 16 times finer than the AC step. The cap keeps
    its error under half a grey level per pixel at any step, so flat blocks
    come back exact."""
    return min(7.5, max(1.0, step / 16.0))


@dataclass(frozen=True)
class QualityPoint:
    index: Optional[int]
    lam: float
    step_size: int

    @classmethod
    def from_index(cls, index: int) -> "QualityPoint":
        if not 0 <= index < len(LAMBDAS):
            raise ValueError(f"quality index must be in [0, {len(LAMBDAS) - 1}]")
        lam = LAMBDAS[index]
        return cls(index, lam, step_for_lambda(lam))

    @classmethod
    def custom(cls, step_size: int) -> "QualityPoint":
        """Off-ladder point with an explicit step (lambda = 12 / step**2)."""
        step = int(step_size)
        if not 1 <= step <= 256:
            raise ValueError("step_size must lie in [1, 256]")
        return cls(None, 12.0 / step ** 2, step)

    @property
    def quality_byte(self) -> int:
        return QUALITY_CUSTOM if self.index is None else self.index

    @property
    def label(self) -> str:
        return f"q{self.index}" if self.index is not None else f"step{self.step_size}"


QUALITIES = tuple(QualityPoint.from_index(i) for i in range(len(LAMBDAS)))


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------

def ycocg_r_forward(rgb: np.ndarray) -> np.ndarray:
    """Integer-reversible RGB -> (Y, Co, Cg); Y in [0,255], Co/Cg in [-255,255]."""
    r, g, b = (rgb[..., i].astype(np.int64) for i in range(3))
    co = r - b
    t = b + (co >> 1)
    cg = g - t
    y = t + (cg >> 1)
    return np.stack([y, co, cg], axis=-1)


def ycocg_r_inverse(ycc: np.ndarray) -> np.ndarray:
    y, co, cg = (ycc[..., i].astype(np.int64) for i in range(3))
    t = y - (cg >> 1)
    g = cg + t
    b = t - (co >> 1)
    r = b + co
    return np.stack([r, g, b], axis=-1)


def dct_matrix(n: int = BLOCK) -> np.ndarray:
    """Orthonormal DCT-II basis; rows are frequencies."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


_C = dct_matrix()


def blockify(plane: np.ndarray) -> np.ndarray:
    """(H, W) with H, W multiples of 8 -> (H/8 * W/8, 8, 8) in raster order."""
    h, w = plane.shape
    return plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).swapaxes(1, 2).reshape(-1, BLOCK, BLOCK)


def unblockify(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK).swapaxes(1, 2).reshape(h, w)


def dct2(blocks: np.ndarray) -> np.ndarray:
    return _C @ blocks @ _C.T


def idct2(coefs: np.ndarray) -> np.ndarray:
    return _C.T @ coefs @ _C


def zigzag_order(n: int = BLOCK) -> np.ndarray:
    """Flat indices of an n x n block in zigzag scan order."""
    cells = sorted(
        ((r, c) for r in range(n) for c in range(n)),
        key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]),
    )
    return np.array([r * n + c for r, c in cells])


ZIGZAG = zigzag_order()
UNZIGZAG = np.argsort(ZIGZAG)

# zigzag position -> band: [0], [1,2], [3,5], [6,9], [10,14], [15,20], [21,35], [36,63]
_BAND_EDGES = (1, 3, 6, 10, 15, 21, 36, 64)
BANDS = np.searchsorted(np.array(_BAND_EDGES), np.arange(64), side="right")
NUM_BANDS = len(_BAND_EDGES)


def quantize_ac(c: np.ndarray, step: float) -> np.ndarray:
    return (np.sign(c) * np.floor(np.abs(c) / step)).astype(np.int64)


def dequantize_ac(q: np.ndarray, step: float) -> np.ndarray:
    return np.sign(q) * (np.abs(q) + 0.5) * step


def quantize_dc(c: np.ndarray, step: float) -> np.ndarray:
    return np.floor(c / step + 0.5).astype(np.int64)


def dequantize_dc(q: np.ndarray, step: float) -> np.ndarray:
    return q * float(step)


def quantize_block(coefs: np.ndarray, step: int) -> np.ndarray:
    """(..., 8, 8) DCT coefficients -> integer levels, DC at [..., 0, 0]."""
    q = quantize_ac(coefs, step)
    q[..., 0, 0] = quantize_dc(coefs[..., 0, 0], dc_step(step))
    return q


def dequantize_block(q: np.ndarray, step: int) -> np.ndarray:
    c = dequantize_ac(q, step)
    c[..., 0, 0] = dequantize_dc(q[..., 0, 0], dc_step(step))
    return c


def analysis(pixels: np.ndarray) -> np.ndarray:
    """RGB frame -> (blocks, 3, 8, 8) float coefficients (Y, Co, Cg)."""
    h, w, _ = pixels.shape
    ph, pw = -(-h // BLOCK) * BLOCK, -(-w // BLOCK) * BLOCK
    ycc = ycocg_r_forward(pixels).astype(float)
    ycc[..., 0] -= 128.0
    padded = np.zeros((ph, pw, 3))
    padded[:h, :w] = ycc
    planes = [blockify(padded[..., ch]) for ch in range(3)]
    return dct2(np.stack(planes, axis=1))


def synthesis(coefs: np.ndarray, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`analysis` with rounding and clipping to uint8 RGB."""
    ph, pw = -(-h // BLOCK) * BLOCK, -(-w // BLOCK) * BLOCK
    blocks = idct2(coefs)
    ycc = np.stack([unblockify(blocks[:, ch], ph, pw) for ch in range(3)], axis=-1)
    ycc = ycc[:h, :w]
    ycc[..., 0] += 128.0
    ycc = np.floor(ycc + 0.5)
    ycc[..., 0] = np.clip(ycc[..., 0], 0, 255)
    ycc[..., 1:] = np.clip(ycc[..., 1:], -255, 255)
    return np.clip(ycocg_r_inverse(ycc.astype(np.int64)), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------
# entropy coding of quantized levels
# --------------------------------------------------------------------------

# context layout in the packed table
CTX_DC = 0                    # + kind (0 luma, 1 chroma)
CTX_EOB = 2                   # + kind
CTX_AC = 4                    # + kind * NUM_BANDS + band
NUM_CONTEXTS = CTX_AC + 2 * NUM_BANDS
CATEGORIES = 17               # bit lengths 0..16
EOB_SYMBOLS = 64              # last nonzero zigzag position, 0 = no AC


def _initial_counts() -> np.ndarray:
    init = np.zeros((NUM_CONTEXTS, 256), np.int64)
    init[:, :CATEGORIES] = 1
    init[CTX_EOB:CTX_EOB + 2, :] = 0
    init[CTX_EOB:CTX_EOB + 2, :EOB_SYMBOLS] = 1
    return init


@njit(nogil=True, inline="always")
def _bit_length(v):
    k = 0
    while v:
        v >>= 1
        k += 1
    return k


@njit(cache=True, nogil=True)
def _encode_levels(zz, bands, tab, inc, max_total, out):
    es = enc_init()
    for blk in range(zz.shape[0]):
        for ch in range(3):
            kind = 0 if ch == 0 else 1
            eob = 0
            for i in range(63, 0, -1):
                if zz[blk, ch, i] != 0:
                    eob = i
                    break
            for i in range(eob + 1):
                if i == 0:
                    ctx = CTX_DC + kind
                else:
                    ctx = CTX_AC + kind * NUM_BANDS + bands[i]
                v = zz[blk, ch, i]
                mag = abs(v)
                k = _bit_length(mag)
                es = enc_put(es, out, model_cum(tab, ctx, k), tab[ctx, k], tab[ctx, TOTAL])
                model_update(tab, ctx, k, inc, max_total)
                if k > 0:
                    # sign, then the k-1 bits below the leading one
                    extra = ((mag - (1 << (k - 1))) << 1) | (1 if v < 0 else 0)
                    es = enc_put(es, out, extra, 1, 1 << k)
                if i == 0:
                    ectx = CTX_EOB + kind
                    es = enc_put(es, out, model_cum(tab, ectx, eob), tab[ectx, eob],
                                 tab[ectx, TOTAL])
                    model_update(tab, ectx, eob, inc, max_total)
    return enc_flush(es, out)


@njit(cache=True, nogil=True)
def _decode_levels(data, zz, bands, tab, inc, max_total):
    ds = dec_init(data)
    if ds[3] != 0:
        return ds[3], ds[2]
    for blk in range(zz.shape[0]):
        for ch in range(3):
            kind = 0 if ch == 0 else 1
            eob = 0
            i = 0
            while i <= eob:
                if i == 0:
                    ctx = CTX_DC + kind
                else:
                    ctx = CTX_AC + kind * NUM_BANDS + bands[i]
                r, t = dec_target(ds, tab[ctx, TOTAL])
                if t < 0:
                    return 2, ds[2]
                k, cum = model_find(tab, ctx, t)
                ds = dec_take(ds, data, r, cum, tab[ctx, k])
                if ds[3] != 0:
                    return ds[3], ds[2]
                if k >= CATEGORIES:
                    return 2, ds[2]
                model_update(tab, ctx, k, inc, max_total)
                v = 0
                if k > 0:
                    r, extra = dec_target(ds, 1 << k)
                    if extra < 0:
                        return 2, ds[2]
                    ds = dec_take(ds, data, r, extra, 1)
                    if ds[3] != 0:
                        return ds[3], ds[2]
                    v = (1 << (k - 1)) + (extra >> 1)
                    if extra & 1:
                        v = -v
                zz[blk, ch, i] = v
                if i == 0:
                    ectx = CTX_EOB + kind
                    r, t = dec_target(ds, tab[ectx, TOTAL])
                    if t < 0:
                        return 2, ds[2]
                    eob, cum = model_find(tab, ectx, t)
                    ds = dec_take(ds, data, r, cum, tab[ectx, eob])
                    if ds[3] != 0:
                        return ds[3], ds[2]
                    if eob >= EOB_SYMBOLS:
                        return 2, ds[2]
                    model_update(tab, ectx, eob, inc, max_total)
                i += 1
    return ds[3], ds[2]


def _to_scan(q: np.ndarray) -> np.ndarray:
    """(blocks, 3, 8, 8) levels -> (blocks, 3, 64) zigzag with DC as DPCM."""
    zz = q.reshape(q.shape[0], 3, 64)[:, :, ZIGZAG].copy()
    dc = zz[:, :, 0].copy()
    zz[1:, :, 0] = dc[1:] - dc[:-1]
    return zz


def _from_scan(zz: np.ndarray) -> np.ndarray:
    zz = zz.copy()
    zz[:, :, 0] = np.cumsum(zz[:, :, 0], axis=0)
    return zz[:, :, UNZIGZAG].reshape(zz.shape[0], 3, BLOCK, BLOCK)


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------

def quantized_levels(frame: TactileFrame, q: QualityPoint) -> np.ndarray:
    return quantize_block(analysis(frame.pixels), q.step_size)


def encode_lossy(frame: TactileFrame, q: QualityPoint = QUALITIES[0]) -> Bitstream:
    levels = quantized_levels(frame, q)
    zz = _to_scan(levels)
    tab = new_table(NUM_CONTEXTS, _initial_counts())
    out = np.empty(encoder_capacity(2 * zz.size + 2 * zz.shape[0] * 3), np.uint8)
    n = _encode_levels(zz, BANDS, tab, DEFAULT_INCREMENT, DEFAULT_MAX_TOTAL, out)
    meta = frame_metadata(frame)
    meta["l"] = {"step": q.step_size, "lambda": q.lam, "dcstep": dc_step(q.step_size)}
    header = Header(CODEC_LOSSY, frame.width, frame.height, q.quality_byte,
                    frame_flags(frame), 3, meta)
    return Bitstream.from_bytes(container.pack(header, out[:n].tobytes()))


def decode_lossy(bits) -> TactileFrame:
    raw = bits.data if isinstance(bits, Bitstream) else bytes(bits)
    header, payload = container.unpack(raw)
    if header.codec_id != CODEC_LOSSY:
        raise CorruptHeader("not a taco-l-lite bitstream")
    try:
        step = int(header.metadata["l"]["step"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptHeader(f"bad codec parameters: {exc}") from exc
    if not 1 <= step <= 256:
        raise CorruptHeader("step size out of range")
    if header.quality != QUALITY_CUSTOM and (
            header.quality >= len(LAMBDAS) or step_for_lambda(LAMBDAS[header.quality]) != step):
        raise CorruptHeader("quality byte disagrees with the recorded step")
    h, w = header.height, header.width
    nblocks = (-(-h // BLOCK)) * (-(-w // BLOCK))
    zz = np.zeros((nblocks, 3, 64), np.int64)
    data = np.frombuffer(payload, np.uint8)
    tab = new_table(NUM_CONTEXTS, _initial_counts())
    status, used = _decode_levels(data, zz, BANDS, tab, DEFAULT_INCREMENT, DEFAULT_MAX_TOTAL)
    check_status(status, used, len(data))
    coefs = dequantize_block(_from_scan(zz), step)
    return restore_frame(synthesis(coefs, h, w), header)


def rd_cost(frame: TactileFrame, recon: TactileFrame, bits: float, lam: float) -> float:
    """bits + lambda * (sum of squared sample errors)."""
    if frame.pixels.shape != recon.pixels.shape:
        raise DimensionMismatch("frames differ in size")
    d = frame.pixels.astype(np.int64) - recon.pixels.astype(np.int64)
    sse = float(np.sum(d * d))
    if lam == 0:
        return float(bits)
    return float(bits) + lam * sse


def rd_sweep(frames: Sequence[TactileFrame], qualities: Sequence[QualityPoint],
             label: str = "taco-l-lite"):
    """Mean (bpp, PSNR, MS-SSIM) per quality, as a curve sorted by bpp."""
    from .metrics import RdCurve, RdPoint, bpp_of, ms_ssim, psnr

    if len(frames) == 0 or len(qualities) == 0:
        raise EmptyInput("need frames and qualities")
    if len(qualities) < 2:
        raise ValueError("an RD sweep needs at least two qualities")
    points = []
    for q in qualities:
        bpps, psnrs, ssims = [], [], []
        for f in frames:
            bits = encode_lossy(f, q)
            rec = decode_lossy(bits)
            bpps.append(bpp_of(8 * len(bits), f.width, f.height))
            psnrs.append(psnr(f, rec))
            try:
                ssims.append(ms_ssim(f, rec))
            except TooSmallForAnyScale:
                pass
        points.append(RdPoint(
            float(np.mean(bpps)),
            float(np.mean(psnrs)),
            float(np.mean(ssims)) if len(ssims) == len(frames) else None,
            q.label,
        ))
    return RdCurve.sorted(points, label)
