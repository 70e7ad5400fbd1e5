"""Class-ID segmentation masks and binary PGM (P5) I/O.

Masks are stored on disk as 8-bit binary PGM files whose pixel values are
class ids. No image library is needed to read or write them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MaskFormatError

_WHITESPACE = b" \t\n\r\x0b\x0c"


@dataclass(frozen=True, eq=False)
class ClassMask:
    """Row-major grid of class ids.

    ``data`` is a flat uint8 array of length ``width * height``. Use
    :meth:`from_array` to build one from a 2D array.
    """

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise MaskFormatError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        data = np.ascontiguousarray(self.data).reshape(-1)
        if not np.issubdtype(data.dtype, np.integer):
            raise MaskFormatError("mask data must be integer class ids")
        if data.size != self.width * self.height:
            raise MaskFormatError(
                f"mask data has {data.size} values, expected {self.width}*{self.height}"
            )
        if data.size and (data.min() < 0 or data.max() > 255):
            raise MaskFormatError("class ids must fit in 8 bits")
        data = data.astype(np.uint8)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array) -> "ClassMask":
        array = np.asarray(array)
        if array.ndim != 2:
            raise MaskFormatError(f"expected a 2D array, got shape {array.shape}")
        height, width = array.shape
        return cls(width=width, height=height, data=array.reshape(-1))

    @classmethod
    def filled(cls, width: int, height: int, class_id: int) -> "ClassMask":
        return cls(width, height, np.full(width * height, class_id, dtype=np.uint8))

    def as_array(self) -> np.ndarray:
        return self.data.reshape(self.height, self.width)

    def class_counts(self) -> dict[int, int]:
        counts = np.bincount(self.data, minlength=1)
        return {int(i): int(c) for i, c in enumerate(counts) if c}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClassMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.data, other.data)
        )


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        if buf[pos] in _WHITESPACE:
            pos += 1
        elif buf[pos] == ord("#"):
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos] not in _WHITESPACE and buf[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise MaskFormatError("truncated PGM header")
    return buf[start:pos], pos


def parse_pgm(buf: bytes) -> ClassMask:
    """Decode an 8-bit binary PGM image into a :class:`ClassMask`."""
    magic, pos = _next_token(buf, 0)
    if magic != b"P5":
        raise MaskFormatError(f"unsupported PGM magic {magic!r}, expected b'P5'")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(buf, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise MaskFormatError(f"invalid PGM {name}: {token!r}") from None
    width, height, maxval = fields
    if not 0 < maxval < 256:
        raise MaskFormatError(f"only 8-bit PGM masks are supported (maxval={maxval})")
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise MaskFormatError("missing whitespace after PGM header")
    pos += 1
    expected = width * height
    raster = buf[pos:pos + expected]
    if len(raster) != expected:
        raise MaskFormatError(f"PGM raster has {len(raster)} bytes, expected {expected}")
    return ClassMask(width, height, np.frombuffer(raster, dtype=np.uint8).copy())


def encode_pgm(mask: ClassMask) -> bytes:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    return header + mask.data.tobytes()


def read_pgm(path: str | Path) -> ClassMask:
    return parse_pgm(Path(path).read_bytes())


def write_pgm(path: str | Path, mask: ClassMask) -> None:
    Path(path).write_bytes(encode_pgm(mask))
