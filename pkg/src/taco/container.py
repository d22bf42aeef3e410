"""The TACB bitstream container shared by both codecs.

Layout, little-endian::

    "TACB" | version u8 | codec_id u8 | flags u8 | width u16 | height u16
    | channels u8 | quality u8 | metadata_len u16 | metadata (JSON)
    | payload_len u32 | payload

The JSON metadata carries the payload length ("plen"), a CRC32 of the
payload ("pcrc") and a CRC32 over the fixed fields and all other metadata
("hcrc"), so a damaged header is always reported as such instead
of surfacing later as garbage pixels.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

from .errors import CorruptHeader, CorruptPayload, TruncatedBitstream, VersionMismatch

MAGIC = b"TACB"
VERSION = 1

CODEC_LOSSLESS = 0
CODEC_LOSSY = 1
CODEC_EXTERNAL = 2
CODEC_STORE = 3  # raw samples, the uncompressed reference

QUALITY_LOSSLESS = 255
FLAG_FORCE = 0x01

_FIXED = struct.Struct("<4sBBBHHBBH")  # up to and including metadata_len
_PLEN = struct.Struct("<I")
_CHECK_KEYS = ("hcrc", "pcrc", "plen")


@dataclass(frozen=True)
class Header:
    codec_id: int
    width: int
    height: int
    quality: int = QUALITY_LOSSLESS
    flags: int = 0
    channels: int = 3
    metadata: dict = field(default_factory=dict)
    version: int = VERSION

    @property
    def force(self) -> bool:
        return bool(self.flags & FLAG_FORCE)


def _fixed_bytes(h: Header, meta_len: int) -> bytes:
    return _FIXED.pack(MAGIC, h.version, h.codec_id, h.flags, h.width, h.height,
                       h.channels, h.quality, meta_len)


def _canon(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()


def pack(header: Header, payload: bytes) -> bytes:
    if not (0 <= header.width < 1 << 16 and 0 <= header.height < 1 << 16):
        raise ValueError("frame dimensions must fit in 16 bits")
    meta = {k: v for k, v in header.metadata.items() if k not in _CHECK_KEYS}
    meta["plen"] = len(payload)
    meta["pcrc"] = "%08x" % zlib.crc32(payload)
    body = _canon(meta)
    # fixed-width hex keeps the metadata length independent of the CRC values,
    # so the header CRC can cover metadata_len too
    size = len(_canon(dict(meta, hcrc="0" * 8)))
    if size >= 1 << 16:
        raise ValueError("metadata too large")
    fixed = _fixed_bytes(header, size)
    meta["hcrc"] = "%08x" % zlib.crc32(fixed + body)
    return fixed + _canon(meta) + _PLEN.pack(len(payload)) + payload


def unpack(buf: bytes) -> tuple:
    """Parse a container; returns (Header, payload bytes)."""
    buf = bytes(buf)
    if len(buf) < _FIXED.size:
        if MAGIC.startswith(buf[:4]) or buf[:4] == MAGIC:
            raise TruncatedBitstream("container shorter than its fixed header")
        raise CorruptHeader("not a TACB container")
    magic, version, codec_id, flags, w, h, ch, quality, mlen = _FIXED.unpack_from(buf)
    if magic != MAGIC:
        raise CorruptHeader("bad magic")
    if version != VERSION:
        raise VersionMismatch(f"container version {version}, expected {VERSION}")
    end = _FIXED.size + mlen
    try:
        text = buf[_FIXED.size:end].decode("utf-8", "replace")
        meta, used = json.JSONDecoder().raw_decode(text)
    except ValueError as exc:
        if len(buf) < end + _PLEN.size:
            raise TruncatedBitstream("container truncated inside the header") from exc
        raise CorruptHeader(f"unreadable metadata: {exc}") from exc
    if used != mlen:
        raise CorruptHeader("metadata length field mismatch")
    if len(buf) < end + _PLEN.size:
        raise TruncatedBitstream("container truncated inside the header")
    try:
        hcrc = meta.pop("hcrc")
        if "%08x" % zlib.crc32(buf[:_FIXED.size] + _canon(meta)) != hcrc:
            raise CorruptHeader("header checksum mismatch")
        pcrc = meta.pop("pcrc")
        plen = meta.pop("plen")
    except (KeyError, TypeError, AttributeError) as exc:
        raise CorruptHeader(f"unreadable metadata: {exc}") from exc
    header = Header(codec_id, w, h, quality, flags, ch, meta, version)
    if ch != 3 or codec_id not in (CODEC_LOSSLESS, CODEC_LOSSY, CODEC_EXTERNAL, CODEC_STORE):
        raise CorruptHeader("header fields out of range")
    (field_plen,) = _PLEN.unpack_from(buf, end)
    if field_plen != plen:
        raise CorruptHeader("payload length field mismatch")
    payload = buf[end + _PLEN.size:]
    if len(payload) < plen:
        raise TruncatedBitstream(f"payload has {len(payload)} of {plen} bytes")
    if len(payload) > plen:
        raise CorruptPayload("trailing bytes after the payload")
    if "%08x" % zlib.crc32(payload) != pcrc:
        raise CorruptPayload("payload checksum mismatch")
    return header, payload


def overhead_bytes(header: Header) -> int:
    return len(pack(header, b""))
