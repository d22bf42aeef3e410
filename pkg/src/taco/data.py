"""Tactile frames, force-sensor logs, dataset manifests and splits."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptySequence,
    InconsistentTaxelCount,
    NonThreeChannelImage,
    TargetSmallerThanSource,
    TooFewTrajectories,
    UnreadableFile,
    UnsupportedFormat,
    WrongSensorKind,
)

# Table 1 resolutions as (height, width); ObjTac is one 5x12 taxel tile.
DATASET_SHAPES = {
    "touchandgo": (480, 640),
    "objectfolder": (160, 120),
    "ssvtp": (240, 320),
    "ycb-slide": (240, 320),
    "objtac": (5, 12),
}

OBJTAC_TAXELS = 60
OBJTAC_RATE_HZ = 200.0


class SensorKind(enum.Enum):
    VISUO = "visuo"
    FORCE = "force"


class Split(enum.Enum):
    TRAIN = "train"
    TEST = "test"
    UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class ForceImageMapping:
    """Affine map between per-axis forces (N) and 8-bit levels.

    ``quantize(f) = clamp(round(f / scale + offset), 0, 255)`` with rounding
    half up; ``dequantize(level) = (level - offset) * scale``.
    """

    scale: tuple = (1.0, 1.0, 1.0)
    offset: tuple = (128.0, 128.0, 128.0)

    def __post_init__(self):
        scale = tuple(float(s) for s in self.scale)
        offset = tuple(float(o) for o in self.offset)
        if len(scale) != 3 or len(offset) != 3:
            raise ValueError("scale and offset need one value per axis")
        if min(scale) <= 0:
            raise ValueError("scale components must be strictly positive")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def from_range(cls, full_scale) -> "ForceImageMapping":
        """Map a symmetric span of ``full_scale`` Newtons per axis onto 0..255."""
        span = np.broadcast_to(np.asarray(full_scale, float), (3,))
        return cls(tuple(span / 255.0), (128.0, 128.0, 128.0))

    def quantize(self, forces) -> np.ndarray:
        f = np.asarray(forces, dtype=float)
        levels = np.floor(f / np.asarray(self.scale) + np.asarray(self.offset) + 0.5)
        return np.clip(levels, 0, 255).astype(np.uint8)

    def dequantize(self, levels) -> np.ndarray:
        lv = np.asarray(levels, dtype=float)
        return (lv - np.asarray(self.offset)) * np.asarray(self.scale)

    def to_dict(self) -> dict:
        return {"scale": list(self.scale), "offset": list(self.offset)}

    @classmethod
    def from_dict(cls, d: dict) -> "ForceImageMapping":
        return cls(tuple(d["scale"]), tuple(d["offset"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "ForceImageMapping":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except OSError as exc:
            raise UnreadableFile(str(exc)) from exc
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UnsupportedFormat(f"bad mapping sidecar {path}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class TactileFrame:
    """An H x W x 3 uint8 image, channel-interleaved and row-major.

    ``orig_shape`` is set by :func:`pad_frame` and remembers the (height,
    width) before padding. Force-stacked frames carry their mapping.
    """

    pixels: np.ndarray
    sensor_kind: SensorKind = SensorKind.VISUO
    mapping: Optional[ForceImageMapping] = None
    orig_shape: Optional[tuple] = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise NonThreeChannelImage(f"expected H x W x 3 pixels, got {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("samples must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        if px.flags.writeable:
            px = px.copy()
            px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 3

    @property
    def nbytes(self) -> int:
        return self.pixels.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TactileFrame):
            return NotImplemented
        return (
            self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
            and self.sensor_kind == other.sensor_kind
            and self.mapping == other.mapping
        )

    __hash__ = None


@dataclass(frozen=True)
class ForceRecord:
    timestamp: float
    forces: np.ndarray  # (N, 3) newtons

    def __post_init__(self):
        f = np.asarray(self.forces, dtype=float)
        if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] < 1:
            raise ValueError("forces must be an N x 3 array with N >= 1")
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")
        object.__setattr__(self, "forces", f)


# --------------------------------------------------------------------------
# raster I/O
# --------------------------------------------------------------------------

def _read_pnm_tokens(buf: bytes, count: int):
    tokens = []
    pos = 2
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedFormat("truncated PNM header")
        tokens.append(int(buf[start:pos]))
    return tokens, pos + 1


def decode_ppm(buf: bytes) -> np.ndarray:
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormat("not a binary PPM/PGM file")
    (w, h, maxval), start = _read_pnm_tokens(buf, 3)
    if maxval != 255:
        raise UnsupportedFormat("only 8-bit PNM files are supported")
    if magic == b"P5":
        raise NonThreeChannelImage("grayscale PGM input")
    need = w * h * 3
    body = np.frombuffer(buf, np.uint8, count=need, offset=start) if len(buf) - start >= need else None
    if body is None:
        raise UnsupportedFormat("PPM pixel data shorter than header claims")
    return body.reshape(h, w, 3)


def encode_ppm(pixels: np.ndarray) -> bytes:
    h, w, _ = pixels.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(pixels, np.uint8).tobytes()


def encode_pgm(gray: np.ndarray) -> bytes:
    h, w = gray.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(gray, np.uint8).tobytes()


def load_frame(path) -> TactileFrame:
    """Read an 8-bit RGB raster (binary PPM or PNG) as a visuo-tactile frame."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    if buf[:2] in (b"P5", b"P6"):
        return TactileFrame(decode_ppm(buf))
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            img = Image.open(io.BytesIO(buf))
            img.load()
        except Exception as exc:  # PIL raises a zoo of exception types
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        if img.mode != "RGB":
            raise NonThreeChannelImage(f"{path}: PNG mode {img.mode}")
        return TactileFrame(np.asarray(img, dtype=np.uint8))
    raise UnsupportedFormat(f"{path}: unrecognised raster format")


def save_frame(frame: TactileFrame, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(frame.pixels, "RGB").save(path)
    else:
        path.write_bytes(encode_ppm(frame.pixels))
    if frame.mapping is not None:
        frame.mapping.save(sidecar_path(path))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".map.json")


def load_force_frame(path) -> TactileFrame:
    """Load a force-stacked frame together with its mapping sidecar."""
    frame = load_frame(path)
    return TactileFrame(frame.pixels, SensorKind.FORCE, ForceImageMapping.load(sidecar_path(path)))


# --------------------------------------------------------------------------
# force data
# --------------------------------------------------------------------------

def force_to_frame(records: Sequence[ForceRecord], mapping: ForceImageMapping,
                   grid: Optional[tuple] = None) -> TactileFrame:
    """Stack T force records into a T x N x 3 image, (fx, fy, fz) -> (R, G, B).

    With ``grid=(rows, cols)`` each record is laid out as a rows x cols
    taxel tile instead of a single row, giving a (T*rows) x cols image.
    """
    if len(records) == 0:
        raise EmptySequence("no force records")
    n = records[0].forces.shape[0]
    if any(r.forces.shape[0] != n for r in records):
        raise InconsistentTaxelCount("records disagree on the number of taxels")
    forces = np.stack([r.forces for r in records])  # T, N, 3
    if grid is not None:
        rows, cols = grid
        if rows * cols != n:
            raise InconsistentTaxelCount(f"grid {rows}x{cols} does not hold {n} taxels")
        forces = forces.reshape(len(records) * rows, cols, 3)
    return TactileFrame(mapping.quantize(forces), SensorKind.FORCE, mapping)


def frame_to_force(frame: TactileFrame, mapping: Optional[ForceImageMapping] = None,
                   rate_hz: float = OBJTAC_RATE_HZ, grid: Optional[tuple] = None) -> list:
    """Invert :func:`force_to_frame`; row t gets timestamp t / rate_hz."""
    if frame.sensor_kind is not SensorKind.FORCE:
        raise WrongSensorKind("frame is not force-stacked")
    mapping = mapping or frame.mapping
    if mapping is None:
        raise ValueError("no force mapping given or attached to the frame")
    forces = mapping.dequantize(frame.pixels)
    if grid is not None:
        rows, cols = grid
        if frame.height % rows or frame.width != cols:
            raise InconsistentTaxelCount("frame shape does not match the taxel grid")
        forces = forces.reshape(frame.height // rows, rows * cols, 3)
    return [ForceRecord(t / rate_hz, f) for t, f in enumerate(forces)]


def load_force_csv(path) -> list:
    """Read ``t,fx_0..fx_{N-1},fy_0..,fz_0..`` rows into force records."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise EmptySequence(f"{path} is empty")
    header = rows[0]
    if (len(header) - 1) % 3 or header[0] != "t" or len(header) < 4:
        raise UnsupportedFormat(f"{path}: bad force CSV header")
    n = (len(header) - 1) // 3
    expected = ["t"] + [f"f{a}_{i}" for a in "xyz" for i in range(n)]
    if header != expected:
        raise UnsupportedFormat(f"{path}: header must be {','.join(expected[:2])},...")
    records = []
    last = -np.inf
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InconsistentTaxelCount(f"{path}:{lineno}: expected {len(header)} fields")
        vals = np.array(row, dtype=float)
        if vals[0] <= last:
            raise UnsupportedFormat(f"{path}:{lineno}: timestamps must strictly increase")
        last = vals[0]
        records.append(ForceRecord(vals[0], vals[1:].reshape(3, n).T))
    if not records:
        raise EmptySequence(f"{path} has no data rows")
    return records


def save_force_csv(records: Sequence[ForceRecord], path) -> None:
    n = records[0].forces.shape[0]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"f{a}_{i}" for a in "xyz" for i in range(n)])
        for r in records:
            w.writerow([repr(float(r.timestamp))] + [repr(float(v)) for v in r.forces.T.ravel()])


# --------------------------------------------------------------------------
# padding
# --------------------------------------------------------------------------

def pad_frame(frame: TactileFrame, target_w: int, target_h: int) -> TactileFrame:
    """Zero-pad on the right and bottom; the original size is remembered."""
    h, w = frame.height, frame.width
    if target_w < w or target_h < h:
        raise TargetSmallerThanSource(f"{w}x{h} does not fit in {target_w}x{target_h}")
    if (target_w, target_h) == (w, h):
        return frame
    px = np.zeros((target_h, target_w, 3), np.uint8)
    px[:h, :w] = frame.pixels
    return replace(frame, pixels=px, orig_shape=frame.orig_shape or (h, w))


def pad_to_multiple(frame: TactileFrame, block: int) -> TactileFrame:
    h, w = frame.height, frame.width
    return pad_frame(frame, -(-w // block) * block, -(-h // block) * block)


def unpad_frame(frame: TactileFrame) -> TactileFrame:
    if frame.orig_shape is None:
        return frame
    h, w = frame.orig_shape
    return replace(frame, pixels=frame.pixels[:h, :w], orig_shape=None)


# --------------------------------------------------------------------------
# manifests and splits
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str = ""
    trajectory_id: str = ""
    split: Split = Split.UNASSIGNED


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    sensor_kind: SensorKind
    entries: tuple = ()
    root: Optional[str] = field(default=None, compare=False)
    layout: Optional[tuple] = None  # taxel grid for force data, e.g. (5, 12)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be unique")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        if self.root and not p.is_absolute():
            return Path(self.root) / p
        return p

    def trajectories(self) -> list:
        return sorted({e.trajectory_id for e in self.entries})

    def subset(self, split: Split) -> list:
        return [e for e in self.entries if e.split is split]

    def load_frames(self, split: Optional[Split] = None) -> list:
        entries = self.entries if split is None else self.subset(split)
        out = []
        for e in entries:
            path = self.resolve(e)
            if self.sensor_kind is SensorKind.FORCE:
                if path.suffix.lower() == ".csv":
                    mapping = ForceImageMapping.load(sidecar_path(path))
                    out.append(force_to_frame(load_force_csv(path), mapping, self.layout))
                else:
                    out.append(load_force_frame(path))
            else:
                out.append(load_frame(path))
        return out

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "sensor_kind": self.sensor_kind.value,
            "entries": [
                {"path": e.path, "label": e.label, "trajectory_id": e.trajectory_id,
                 "split": e.split.value}
                for e in self.entries
            ],
        }
        if self.layout is not None:
            d["layout"] = list(self.layout)
        return d

    @classmethod
    def from_dict(cls, d: dict, root=None) -> "DatasetManifest":
        entries = [
            ManifestEntry(e["path"], e.get("label", ""), e.get("trajectory_id", ""),
                          Split(e.get("split", "unassigned")))
            for e in d["entries"]
        ]
        layout = tuple(d["layout"]) if d.get("layout") else None
        return cls(d["name"], SensorKind(d["sensor_kind"]), entries,
                   None if root is None else str(root), layout)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except OSError as exc:
            raise UnreadableFile(f"{path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        return cls.from_dict(d, root=path.parent)


def split_dataset(manifest: DatasetManifest, train_fraction: float, seed: int) -> DatasetManifest:
    """Assign Train/Test per trajectory so no trajectory straddles the split.

    round(fraction * #trajectories), ties rounding up, go to Train; which
    ones is a seeded shuffle of the sorted trajectory ids.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    ids = manifest.trajectories()
    if len(ids) < 2:
        raise TooFewTrajectories(f"need >= 2 trajectories, got {len(ids)}")
    n_train = int(np.floor(train_fraction * len(ids) + 0.5))
    order = np.random.default_rng(seed).permutation(len(ids))
    train = {ids[i] for i in order[:n_train]}
    entries = [
        replace(e, split=Split.TRAIN if e.trajectory_id in train else Split.TEST)
        for e in manifest.entries
    ]
    return replace(manifest, entries=tuple(entries))
