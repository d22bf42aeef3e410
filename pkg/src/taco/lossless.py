"""taco-ll-lite: predictive lossless coding of tokenized tactile frames.

Each symbol of the 16x16x3 patch stream is predicted from its causal
neighbours inside the same patch (left, above, above-left, same channel;
out-of-patch neighbours read as 0). The residual ``(x - pred) mod 256`` is
range-coded under an adaptive model selected by the local gradient
activity ``|left - above|``, bucketed on a log2 scale.

Coding walks the patches in token order, so the bitstream is exactly the
token stream's residuals in order. The prediction and context only ever
look inside the current patch.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from . import container
from .container import CODEC_LOSSLESS, FLAG_FORCE, QUALITY_LOSSLESS, Header
from .data import ForceImageMapping, SensorKind, TactileFrame
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
from .errors import CorruptHeader, EmptyInput
from .tokenizer import PATCH, PatchGeometry


class Predictor(enum.IntEnum):
    ZERO = 0
    LEFT = 1
    MEDIAN_EDGE = 2


_PRED_NAMES = {Predictor.ZERO: "zero", Predictor.LEFT: "left", Predictor.MEDIAN_EDGE: "med"}


@dataclass(frozen=True)
class LosslessConfig:
    predictor: Predictor = Predictor.MEDIAN_EDGE
    context_buckets: int = 8
    increment: int = DEFAULT_INCREMENT
    max_total: int = DEFAULT_MAX_TOTAL

    def __post_init__(self):
        if self.context_buckets < 1:
            raise ValueError("context_buckets must be >= 1")
        if self.context_buckets > 64:
            raise ValueError("context_buckets above 64 cannot be reached")
        if self.increment < 0 or not 0 < self.max_total <= DEFAULT_MAX_TOTAL:
            raise ValueError("bad adaptation parameters")
        object.__setattr__(self, "predictor", Predictor(self.predictor))

    def to_meta(self) -> dict:
        return {"pred": _PRED_NAMES[self.predictor], "ctx": self.context_buckets,
                "inc": self.increment, "maxtot": self.max_total}

    @classmethod
    def from_meta(cls, meta: dict) -> "LosslessConfig":
        names = {v: k for k, v in _PRED_NAMES.items()}
        return cls(names[meta["pred"]], int(meta["ctx"]), int(meta["inc"]),
                   int(meta["maxtot"]))


# --------------------------------------------------------------------------
# prediction, shared by the numpy reference and the kernels
# --------------------------------------------------------------------------

@njit(nogil=True, inline="always")
def _predict(kind, a, b, c):
    # a = left, b = above, c = above-left
    if kind == 0:
        return 0
    if kind == 1:
        return a
    if c >= max(a, b):
        return min(a, b)
    if c <= min(a, b):
        return max(a, b)
    return a + b - c


def _bucket_table(nb: int) -> np.ndarray:
    """Context id for every |left - above| in 0..255: min(bit_length, nb-1)."""
    d = np.arange(256)
    bl = np.zeros(256, np.int64)
    bl[1:] = np.floor(np.log2(d[1:])).astype(np.int64) + 1
    return np.minimum(bl, nb - 1)


# Patches are staged in a 17x17x3 buffer whose first row and column stay 0,
# which gives the out-of-patch neighbours for free. Samples outside the
# original frame are known zeros on both sides and are not coded.

@njit(cache=True, nogil=True)
def _encode_kernel(img, ow, oh, kind, bucket, tab, inc, max_total, out):
    h, w = img.shape[0], img.shape[1]
    buf = np.zeros((PATCH + 1, PATCH + 1, 3), np.int64)
    es = enc_init()
    for py in range(0, h, PATCH):
        for px in range(0, w, PATCH):
            for r in range(PATCH):
                for cc in range(PATCH):
                    for ch in range(3):
                        buf[r + 1, cc + 1, ch] = img[py + r, px + cc, ch]
            rows = min(PATCH, oh - py)
            cols = min(PATCH, ow - px)
            for r in range(1, rows + 1):
                for cc in range(1, cols + 1):
                    for ch in range(3):
                        a = buf[r, cc - 1, ch]
                        b = buf[r - 1, cc, ch]
                        c = buf[r - 1, cc - 1, ch]
                        ctx = bucket[abs(a - b)]
                        s = (buf[r, cc, ch] - _predict(kind, a, b, c)) & 255
                        es = enc_put(es, out, model_cum(tab, ctx, s), tab[ctx, s],
                                     tab[ctx, TOTAL])
                        model_update(tab, ctx, s, inc, max_total)
    return enc_flush(es, out)


@njit(cache=True, nogil=True)
def _decode_kernel(data, img, ow, oh, kind, bucket, tab, inc, max_total):
    h, w = img.shape[0], img.shape[1]
    buf = np.zeros((PATCH + 1, PATCH + 1, 3), np.int64)
    ds = dec_init(data)
    if ds[3] != 0:
        return ds[3], ds[2]
    for py in range(0, h, PATCH):
        for px in range(0, w, PATCH):
            buf[1:, 1:, :] = 0
            rows = min(PATCH, oh - py)
            cols = min(PATCH, ow - px)
            for r in range(1, rows + 1):
                for cc in range(1, cols + 1):
                    for ch in range(3):
                        a = buf[r, cc - 1, ch]
                        b = buf[r - 1, cc, ch]
                        c = buf[r - 1, cc - 1, ch]
                        ctx = bucket[abs(a - b)]
                        rr, t = dec_target(ds, tab[ctx, TOTAL])
                        if t < 0:
                            return 2, ds[2]
                        s, cum = model_find(tab, ctx, t)
                        ds = dec_take(ds, data, rr, cum, tab[ctx, s])
                        if ds[3] != 0:
                            return ds[3], ds[2]
                        model_update(tab, ctx, s, inc, max_total)
                        buf[r, cc, ch] = (s + _predict(kind, a, b, c)) & 255
            for r in range(rows):
                for cc in range(cols):
                    for ch in range(3):
                        img[py + r, px + cc, ch] = buf[r + 1, cc + 1, ch]
    return ds[3], ds[2]


def residuals_and_contexts(frame: TactileFrame, cfg: LosslessConfig):
    """Vectorised reference for the symbols and contexts the kernels code.

    Works on the token stream: both results come back in token order with
    the padding positions dropped. Tests use it as an independent route.
    """
    from .tokenizer import tokenize

    toks = tokenize(frame)
    x = toks.symbols.astype(np.int64).reshape(-1, PATCH, PATCH, 3)
    valid = tokenize(TactileFrame(np.ones_like(frame.pixels))).symbols.astype(bool)
    a = np.zeros_like(x)
    b = np.zeros_like(x)
    c = np.zeros_like(x)
    a[:, :, 1:] = x[:, :, :-1]
    b[:, 1:, :] = x[:, :-1, :]
    c[:, 1:, 1:] = x[:, :-1, :-1]
    if cfg.predictor is Predictor.ZERO:
        pred = np.zeros_like(x)
    elif cfg.predictor is Predictor.LEFT:
        pred = a
    else:
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        pred = np.where(c >= hi, lo, np.where(c <= lo, hi, a + b - c))
    d = np.abs(a - b)
    bits = np.zeros_like(d)
    nz = d > 0
    bits[nz] = np.floor(np.log2(d[nz])).astype(np.int64) + 1
    ctx = np.minimum(bits, cfg.context_buckets - 1)
    return ((x - pred) & 255).reshape(-1)[valid], ctx.reshape(-1)[valid]


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------

def _padded(frame: TactileFrame, geom: PatchGeometry) -> np.ndarray:
    img = np.zeros((geom.padded_h, geom.padded_w, 3), np.uint8)
    img[:frame.height, :frame.width] = frame.pixels
    return img


def frame_metadata(frame: TactileFrame) -> dict:
    meta = {}
    if frame.mapping is not None:
        meta["mapping"] = frame.mapping.to_dict()
    return meta


def frame_flags(frame: TactileFrame) -> int:
    return FLAG_FORCE if frame.sensor_kind is SensorKind.FORCE else 0


def restore_frame(pixels: np.ndarray, header: Header) -> TactileFrame:
    kind = SensorKind.FORCE if header.force else SensorKind.VISUO
    mapping = header.metadata.get("mapping")
    try:
        mapping = ForceImageMapping.from_dict(mapping) if mapping else None
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptHeader(f"bad mapping metadata: {exc}") from exc
    return TactileFrame(pixels, kind, mapping)


def encode_payload(frame: TactileFrame, cfg: LosslessConfig) -> bytes:
    geom = PatchGeometry(frame.width, frame.height)
    img = _padded(frame, geom)
    tab = new_table(cfg.context_buckets)
    out = np.empty(encoder_capacity(geom.num_symbols), np.uint8)
    n = _encode_kernel(img, frame.width, frame.height, int(cfg.predictor),
                       _bucket_table(cfg.context_buckets), tab, cfg.increment,
                       cfg.max_total, out)
    return out[:n].tobytes()


def decode_payload(payload: bytes, width: int, height: int, cfg: LosslessConfig) -> np.ndarray:
    geom = PatchGeometry(width, height)
    img = np.zeros((geom.padded_h, geom.padded_w, 3), np.uint8)
    data = np.frombuffer(payload, np.uint8)
    tab = new_table(cfg.context_buckets)
    status, used = _decode_kernel(data, img, width, height, int(cfg.predictor),
                                  _bucket_table(cfg.context_buckets), tab,
                                  cfg.increment, cfg.max_total)
    check_status(status, used, len(data))
    return img[:height, :width]


def encode_lossless(frame: TactileFrame, cfg: LosslessConfig = LosslessConfig()) -> Bitstream:
    payload = encode_payload(frame, cfg)
    meta = frame_metadata(frame)
    meta["ll"] = cfg.to_meta()
    header = Header(CODEC_LOSSLESS, frame.width, frame.height, QUALITY_LOSSLESS,
                    frame_flags(frame), 3, meta)
    return Bitstream.from_bytes(container.pack(header, payload))


def decode_lossless(bits) -> TactileFrame:
    raw = bits.data if isinstance(bits, Bitstream) else bytes(bits)
    header, payload = container.unpack(raw)
    if header.codec_id != CODEC_LOSSLESS or header.quality != QUALITY_LOSSLESS:
        raise CorruptHeader("not a taco-ll-lite bitstream")
    try:
        cfg = LosslessConfig.from_meta(header.metadata["ll"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptHeader(f"bad codec parameters: {exc}") from exc
    pixels = decode_payload(payload, header.width, header.height, cfg)
    return restore_frame(pixels, header)


def bits_per_byte(total_bits: float, raw_bytes: int) -> float:
    if raw_bytes <= 0:
        raise EmptyInput("no raw bytes")
    return total_bits / raw_bytes


def ratio_of(bits_per_byte_value: float) -> float:
    """Compression ratio relative to raw 8-bit storage."""
    return 8.0 / bits_per_byte_value


def bits_per_byte_of(frames: Sequence[TactileFrame],
                     cfg: LosslessConfig = LosslessConfig()) -> float:
    """Container-inclusive compressed bits per raw byte over ``frames``."""
    if len(frames) == 0:
        raise EmptyInput("no frames")
    bits = sum(8 * len(encode_lossless(f, cfg)) for f in frames)
    return bits_per_byte(bits, sum(f.nbytes for f in frames))
