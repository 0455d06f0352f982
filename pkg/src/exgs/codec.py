"""EXGS container: DC-only attributes as binary16, packed in an XZ/LZMA2 stream.

Layout (all little-endian)::

    0   4s  magic "EXGS"
    4   u16 version (1)
    6   u16 flags   bit 0: payload is an XZ stream, bit 1: payload stored raw
    8   u32 count
    12  u8  sh_degree (always 0)
    13  7x  reserved, zero
    20  payload

The decoded payload holds, per attribute block and Gaussian-major inside a
block: means (N x 3), sh_dc (N x 3), opacity_logit (N), scale_log (N x 3),
rotation (N x 4) -- 14 binary16 values, 28 bytes per Gaussian.
"""

from __future__ import annotations

import lzma
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, CorruptionError, FormatError, InvalidParameterError, UnsupportedVersionError
from .model import GaussianCloud

MAGIC = b"EXGS"
VERSION = 1
HEADER = struct.Struct("<4sHHIB7x")
HEADER_SIZE = HEADER.size
FLAG_LZMA = 1
FLAG_RAW = 2
VALUES_PER_GAUSSIAN = 14
BYTES_PER_GAUSSIAN = VALUES_PER_GAUSSIAN * 2
XZ_PRESET = 6

_BLOCKS = (("means", 3), ("sh_dc", 3), ("opacity_logit", 1), ("scale_log", 3), ("rotation", 4))

assert HEADER_SIZE == 20


def half_round_trip(cloud: GaussianCloud) -> GaussianCloud:
    """The cloud ``decompress(compress(cloud))`` must reproduce: SH truncated,
    every attribute rounded to binary16 (nearest-even) and widened back."""
    q = {name: getattr(cloud, name).astype(np.float16).astype(np.float32) for name, _ in _BLOCKS}
    return GaussianCloud(q["means"], q["scale_log"], q["rotation"], q["opacity_logit"], q["sh_dc"])


def _raw_payload(cloud: GaussianCloud) -> bytes:
    parts = []
    for name, _ in _BLOCKS:
        a = getattr(cloud, name)
        with np.errstate(over="ignore"):
            h = a.astype("<f2")
        if not np.all(np.isfinite(h)):
            raise CapacityError(f"{name} has values outside the binary16 range (|x| > 65504)")
        parts.append(h.tobytes())
    return b"".join(parts)


def compress(cloud: GaussianCloud, preset: int = XZ_PRESET) -> bytes:
    n = cloud.count
    if n > 0xFFFFFFFF:
        raise CapacityError(f"{n} Gaussians exceed the u32 count field")
    if n == 0:
        return HEADER.pack(MAGIC, VERSION, 0, 0, 0)
    raw = _raw_payload(cloud)
    packed = lzma.compress(raw, format=lzma.FORMAT_XZ, check=lzma.CHECK_CRC64, preset=preset)
    if len(packed) > len(raw):
        return HEADER.pack(MAGIC, VERSION, FLAG_RAW, n, 0) + raw
    return HEADER.pack(MAGIC, VERSION, FLAG_LZMA, n, 0) + packed


def read_header(data: bytes):
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("not an EXGS file (bad magic)")
    if len(data) < HEADER_SIZE:
        raise CorruptionError(f"EXGS header truncated: {len(data)} of {HEADER_SIZE} bytes")
    magic, version, flags, count, sh_degree = HEADER.unpack_from(data)
    if version > VERSION or version == 0:
        raise UnsupportedVersionError(f"EXGS version {version} is not supported")
    if any(data[13:20]):
        raise CorruptionError("reserved header bytes are not zero")
    if sh_degree != 0:
        raise CorruptionError(f"EXGS sh_degree must be 0, got {sh_degree}")
    if flags & ~(FLAG_LZMA | FLAG_RAW):
        raise CorruptionError(f"unknown flag bits 0x{flags:04x}")
    return version, flags, count, sh_degree


def decompress(data: bytes) -> GaussianCloud:
    data = bytes(data)
    _, flags, n, _ = read_header(data)
    body = data[HEADER_SIZE:]
    if n == 0:
        if flags or body:
            raise CorruptionError("empty scene with a non-empty payload or flags")
        return GaussianCloud.empty()
    if flags == FLAG_LZMA:
        try:
            dec = lzma.LZMADecompressor(format=lzma.FORMAT_XZ)
            raw = dec.decompress(body)
        except lzma.LZMAError as exc:
            raise CorruptionError(f"LZMA stream error: {exc}") from exc
        if not dec.eof:
            raise CorruptionError("LZMA stream ended early")
        if dec.unused_data:
            raise CorruptionError("trailing bytes after the LZMA stream")
    elif flags == FLAG_RAW:
        raw = body
    else:
        raise CorruptionError("exactly one of the LZMA/raw flag bits must be set")
    expected = n * BYTES_PER_GAUSSIAN
    if len(raw) != expected:
        raise CorruptionError(f"payload is {len(raw)} bytes, expected {expected}")
    vals = np.frombuffer(raw, "<f2").astype(np.float32)
    out = {}
    pos = 0
    for name, width in _BLOCKS:
        out[name] = vals[pos:pos + n * width].reshape(n, width) if width > 1 else vals[pos:pos + n]
        pos += n * width
    return GaussianCloud(out["means"], out["scale_log"], out["rotation"], out["opacity_logit"], out["sh_dc"])


@dataclass(frozen=True)
class RatioReport:
    ratio: float
    original_bytes: int
    compressed_bytes: int

    @property
    def original_mb(self) -> float:
        return self.original_bytes / 1e6

    @property
    def compressed_mb(self) -> float:
        return self.compressed_bytes / 1e6

    def to_json(self) -> dict:
        return {"ratio": self.ratio, "original_bytes": self.original_bytes,
                "compressed_bytes": self.compressed_bytes,
                "original_mb": self.original_mb, "compressed_mb": self.compressed_mb}

    def __str__(self):
        return f"{self.ratio:.1f}x ({self.original_mb:.2f} MB -> {self.compressed_mb:.2f} MB)"


def ratio_report(original_bytes: int, compressed_bytes: int) -> RatioReport:
    """Compression ratio with decimal megabytes (1 MB = 10^6 bytes)."""
    if compressed_bytes <= 0 or original_bytes <= 0:
        raise InvalidParameterError("sizes must be positive")
    return RatioReport(original_bytes / compressed_bytes, int(original_bytes), int(compressed_bytes))
