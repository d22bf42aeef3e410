"""Codec registry: built-in codecs and adapters for external programs.

Every codec turns a frame into bytes and back. Built-ins emit TACB
containers; external programs are driven through command templates with
``{in}``, ``{out}`` and optionally ``{quality}`` placeholders, exchanging
binary PPM files through a private temp directory.
"""

from __future__ import annotations

import enum
import shlex
import string
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import container
from .container import CODEC_EXTERNAL, CODEC_LOSSLESS, CODEC_LOSSY, CODEC_STORE, Header
from .data import TactileFrame, decode_ppm, encode_ppm
from .errors import (
    CorruptHeader,
    CorruptPayload,
    ExternalCommandFailure,
    MalformedTemplate,
    UnknownCodec,
)
from .lossless import (
    LosslessConfig,
    decode_lossless,
    encode_lossless,
    frame_flags,
    frame_metadata,
    restore_frame,
)
from .lossy import QUALITIES, QualityPoint, decode_lossy, encode_lossy

LOSSLESS = "lossless"


class CodecKind(enum.Enum):
    BUILTIN_LOSSLESS = "builtin-lossless"
    BUILTIN_LOSSY = "builtin-lossy"
    EXTERNAL_LOSSLESS = "external-lossless"
    EXTERNAL_LOSSY = "external-lossy"

    @property
    def lossless(self) -> bool:
        return self in (CodecKind.BUILTIN_LOSSLESS, CodecKind.EXTERNAL_LOSSLESS)

    @property
    def external(self) -> bool:
        return self in (CodecKind.EXTERNAL_LOSSLESS, CodecKind.EXTERNAL_LOSSY)


@dataclass(frozen=True)
class CodecSpec:
    id: str
    kind: CodecKind
    encode_cmd: Optional[str] = None
    decode_cmd: Optional[str] = None
    qualities: tuple = ()
    timeout: float = 600.0

    def __post_init__(self):
        object.__setattr__(self, "kind", CodecKind(self.kind))
        quals = tuple(str(q) for q in self.qualities)
        if not quals and self.kind.lossless:
            quals = (LOSSLESS,)
        object.__setattr__(self, "qualities", quals)
        if self.kind.external:
            for name, tmpl in (("encode", self.encode_cmd), ("decode", self.decode_cmd)):
                _check_template(self.id, name, tmpl, needs_quality=not self.kind.lossless)
        elif self.encode_cmd or self.decode_cmd:
            raise MalformedTemplate(f"built-in codec {self.id!r} takes no command templates")
        if not quals:
            raise MalformedTemplate(f"lossy codec {self.id!r} lists no qualities")


def _check_template(cid: str, which: str, tmpl: Optional[str], needs_quality: bool) -> None:
    if not tmpl:
        raise MalformedTemplate(f"{cid}: missing {which} command template")
    try:
        names = {f for _, f, _, _ in string.Formatter().parse(tmpl) if f is not None}
    except ValueError as exc:
        raise MalformedTemplate(f"{cid}: {which} template: {exc}") from exc
    unknown = names - {"in", "out", "quality"}
    if unknown:
        raise MalformedTemplate(f"{cid}: unknown placeholder(s) {sorted(unknown)} in {which}")
    if not {"in", "out"} <= names:
        raise MalformedTemplate(f"{cid}: {which} template needs both {{in}} and {{out}}")
    if needs_quality and which == "encode" and "quality" not in names:
        raise MalformedTemplate(f"{cid}: lossy encode template needs {{quality}}")


class Codec:
    """Base class; ``encode`` returns the exact bytes whose length is billed."""

    spec: CodecSpec

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def lossless(self) -> bool:
        return self.spec.kind.lossless

    @property
    def qualities(self) -> tuple:
        return self.spec.qualities

    def encode(self, frame: TactileFrame, quality: str = LOSSLESS) -> bytes:
        raise NotImplementedError

    def decode(self, data: bytes) -> TactileFrame:
        raise NotImplementedError


class StoreCodec(Codec):
    """Identity codec: raw samples inside a container."""

    def __init__(self, cid: str = "store"):
        self.spec = CodecSpec(cid, CodecKind.BUILTIN_LOSSLESS)

    def encode(self, frame, quality=LOSSLESS):
        header = Header(CODEC_STORE, frame.width, frame.height, container.QUALITY_LOSSLESS,
                        frame_flags(frame), 3, frame_metadata(frame))
        return container.pack(header, frame.pixels.tobytes())

    def decode(self, data):
        header, payload = container.unpack(data)
        if header.codec_id != CODEC_STORE:
            raise CorruptHeader("not a stored frame")
        if len(payload) != header.width * header.height * 3:
            raise CorruptPayload("stored payload does not match the frame size")
        px = np.frombuffer(payload, np.uint8).reshape(header.height, header.width, 3)
        return restore_frame(px, header)


class LosslessCodec(Codec):
    def __init__(self, cid: str = "taco-ll-lite", cfg: LosslessConfig = LosslessConfig()):
        self.spec = CodecSpec(cid, CodecKind.BUILTIN_LOSSLESS)
        self.cfg = cfg

    def encode(self, frame, quality=LOSSLESS):
        return encode_lossless(frame, self.cfg).data

    def decode(self, data):
        return decode_lossless(data)


def parse_quality(token) -> QualityPoint:
    """'0'..'3' pick a ladder point; 'step=N' an explicit quantizer step."""
    tok = str(token).strip()
    if tok.startswith("step="):
        return QualityPoint.custom(int(tok[5:]))
    try:
        return QualityPoint.from_index(int(tok))
    except ValueError as exc:
        raise ValueError(f"bad quality token {token!r}") from exc


class LossyCodec(Codec):
    def __init__(self, cid: str = "taco-l-lite", qualities: Sequence[str] = ()):
        quals = tuple(qualities) or tuple(str(q.index) for q in QUALITIES)
        for q in quals:
            parse_quality(q)
        self.spec = CodecSpec(cid, CodecKind.BUILTIN_LOSSY, qualities=quals)

    def encode(self, frame, quality="0"):
        return encode_lossy(frame, parse_quality(quality)).data

    def decode(self, data):
        return decode_lossy(data)


class ExternalCodec(Codec):
    """Drives an external program through its command templates.

    The frame goes out as binary PPM; the billed size is the size of the
    file the encode command leaves at ``{out}``. Paths are shell-quoted, so
    templates may use redirection.
    """

    def __init__(self, spec: CodecSpec):
        if not spec.kind.external:
            raise ValueError("ExternalCodec needs an external codec spec")
        self.spec = spec

    def _run(self, template: str, src: Path, dst: Path, quality: str) -> None:
        cmd = template.format(**{"in": shlex.quote(str(src)), "out": shlex.quote(str(dst)),
                                 "quality": shlex.quote(str(quality))})
        try:
            proc = subprocess.run(cmd, shell=True, capture_output=True,
                                  timeout=self.spec.timeout)
        except subprocess.TimeoutExpired as exc:
            raise ExternalCommandFailure(f"{self.id}: timed out: {cmd}") from exc
        if proc.returncode != 0:
            err = proc.stderr.decode(errors="replace").strip()[-300:]
            raise ExternalCommandFailure(
                f"{self.id}: exit status {proc.returncode}: {cmd}" + (f": {err}" if err else ""))
        if not dst.exists():
            raise ExternalCommandFailure(f"{self.id}: command produced no output: {cmd}")

    def encode(self, frame, quality=LOSSLESS):
        with tempfile.TemporaryDirectory(prefix="taco-") as tmp:
            src, dst = Path(tmp) / "in.ppm", Path(tmp) / "out.bin"
            src.write_bytes(encode_ppm(frame.pixels))
            self._run(self.spec.encode_cmd, src, dst, quality)
            return dst.read_bytes()

    def decode(self, data):
        with tempfile.TemporaryDirectory(prefix="taco-") as tmp:
            src, dst = Path(tmp) / "in.bin", Path(tmp) / "out.ppm"
            src.write_bytes(data)
            self._run(self.spec.decode_cmd, src, dst, "")
            try:
                return TactileFrame(decode_ppm(dst.read_bytes()))
            except Exception as exc:
                raise ExternalCommandFailure(f"{self.id}: decoder wrote no valid PPM: {exc}") from exc


def wrap_external(codec: Codec, frame: TactileFrame, quality: str, payload: bytes) -> bytes:
    """Put an external codec's output into a container for ``taco decode``."""
    q = container.QUALITY_LOSSLESS if codec.lossless else 0
    meta = frame_metadata(frame)
    meta["ext"] = {"codec": codec.id, "quality": str(quality)}
    header = Header(CODEC_EXTERNAL, frame.width, frame.height, q, frame_flags(frame), 3, meta)
    return container.pack(header, payload)


@dataclass
class Registry:
    codecs: dict = field(default_factory=dict)

    @classmethod
    def default(cls) -> "Registry":
        reg = cls()
        for c in (StoreCodec(), LosslessCodec(), LossyCodec()):
            reg.add(c)
        return reg

    def add(self, codec: Codec) -> Codec:
        if codec.id in self.codecs:
            raise ValueError(f"codec id {codec.id!r} already registered")
        self.codecs[codec.id] = codec
        return codec

    def register_external(self, spec: CodecSpec) -> Codec:
        return self.add(ExternalCodec(spec))

    def get(self, cid: str) -> Codec:
        try:
            return self.codecs[cid]
        except KeyError:
            raise UnknownCodec(f"unknown codec {cid!r}; known: {sorted(self.codecs)}") from None

    def __contains__(self, cid) -> bool:
        return cid in self.codecs

    def ids(self) -> list:
        return sorted(self.codecs)


def register_external(spec: CodecSpec, registry: Optional[Registry] = None) -> Codec:
    """Validate ``spec`` and add it to ``registry`` (a fresh default one if None)."""
    reg = registry if registry is not None else Registry.default()
    return reg.register_external(spec)


def decode_any(data: bytes, registry: Optional[Registry] = None) -> TactileFrame:
    """Decode any TACB container, dispatching on its codec id."""
    header, payload = container.unpack(data)
    if header.codec_id == CODEC_LOSSLESS:
        return decode_lossless(data)
    if header.codec_id == CODEC_LOSSY:
        return decode_lossy(data)
    if header.codec_id == CODEC_STORE:
        return StoreCodec().decode(data)
    ext = header.metadata.get("ext") or {}
    cid = ext.get("codec")
    if registry is None or cid not in registry:
        raise UnknownCodec(f"container holds output of external codec {cid!r}; "
                           "pass a config that defines it")
    frame = registry.get(cid).decode(payload)
    return restore_frame(frame.pixels, header)
