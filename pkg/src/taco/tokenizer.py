"""Frames <-> flattened 8-bit symbol streams in 16x16x3 patches."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import SensorKind, TactileFrame, pad_frame
from .errors import LengthGeometryMismatch

PATCH = 16
CHANNELS = 3
PATCH_SYMBOLS = PATCH * PATCH * CHANNELS  # 768


class ChannelOrder(enum.Enum):
    RGB = "rgb"
    XYZ = "xyz"


@dataclass(frozen=True)
class PatchGeometry:
    orig_w: int
    orig_h: int
    patch_w: int = PATCH
    patch_h: int = PATCH

    @property
    def grid_cols(self) -> int:
        return -(-self.orig_w // self.patch_w)

    @property
    def grid_rows(self) -> int:
        return -(-self.orig_h // self.patch_h)

    @property
    def padded_w(self) -> int:
        return self.grid_cols * self.patch_w

    @property
    def padded_h(self) -> int:
        return self.grid_rows * self.patch_h

    @property
    def num_patches(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def num_symbols(self) -> int:
        return self.num_patches * self.patch_w * self.patch_h * CHANNELS


@dataclass(frozen=True, eq=False)
class TokenStream:
    symbols: np.ndarray  # uint8, read-only
    geometry: PatchGeometry
    channel_order: ChannelOrder = ChannelOrder.RGB

    def __post_init__(self):
        s = np.ascontiguousarray(self.symbols, dtype=np.uint8).reshape(-1)
        if s.flags.writeable:
            s = s.copy()
            s.setflags(write=False)
        object.__setattr__(self, "symbols", s)

    def __len__(self) -> int:
        return self.symbols.size

    def patch(self, k: int) -> np.ndarray:
        return self.symbols[k * PATCH_SYMBOLS:(k + 1) * PATCH_SYMBOLS]


def to_patches(pixels: np.ndarray) -> np.ndarray:
    """(R*16, C*16, 3) padded image -> (R*C, 768) rows of patch symbols."""
    h, w, _ = pixels.shape
    rows, cols = h // PATCH, w // PATCH
    p = pixels.reshape(rows, PATCH, cols, PATCH, CHANNELS).transpose(0, 2, 1, 3, 4)
    return p.reshape(rows * cols, PATCH_SYMBOLS)


def from_patches(patches: np.ndarray, rows: int, cols: int) -> np.ndarray:
    p = patches.reshape(rows, cols, PATCH, PATCH, CHANNELS).transpose(0, 2, 1, 3, 4)
    return p.reshape(rows * PATCH, cols * PATCH, CHANNELS)


def tokenize(frame: TactileFrame) -> TokenStream:
    geom = PatchGeometry(frame.width, frame.height)
    padded = pad_frame(frame, geom.padded_w, geom.padded_h)
    order = ChannelOrder.XYZ if frame.sensor_kind is SensorKind.FORCE else ChannelOrder.RGB
    return TokenStream(to_patches(padded.pixels).reshape(-1), geom, order)


def detokenize(tokens: TokenStream, mapping=None) -> TactileFrame:
    g = tokens.geometry
    if len(tokens) != g.num_symbols:
        raise LengthGeometryMismatch(
            f"{len(tokens)} symbols for a {g.grid_rows}x{g.grid_cols} patch grid "
            f"({g.num_symbols} expected)")
    full = from_patches(tokens.symbols, g.grid_rows, g.grid_cols)
    kind = SensorKind.FORCE if tokens.channel_order is ChannelOrder.XYZ else SensorKind.VISUO
    return TactileFrame(full[:g.orig_h, :g.orig_w], kind, mapping)
