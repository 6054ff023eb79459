"""Binary portable graymap (P5) and pixmap (P6) codecs, plus CSV writers."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

__all__ = ["RasterImage", "read_pnm", "write_pnm", "load", "save", "label_map", "stats_csv"]

_WHITESPACE = b" \t\n\r\v\f"


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Image samples in row-major order.

    ``samples`` has shape ``(height, width)`` for graymaps and
    ``(height, width, 3)`` for pixmaps.
    """

    samples: np.ndarray
    maxval: int = 255

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim not in (2, 3) or (s.ndim == 3 and s.shape[2] != 3):
            raise FormatError(f"unsupported sample array shape {s.shape}")
        if not 1 <= self.maxval <= 65535:
            raise FormatError(f"maxval {self.maxval} outside 1..65535")
        if s.size and (s.min() < 0 or s.max() > self.maxval):
            raise FormatError("sample value outside 0..maxval")
        object.__setattr__(self, "samples", s.astype(np.int64))

    @property
    def height(self) -> int:
        return int(self.samples.shape[0])

    @property
    def width(self) -> int:
        return int(self.samples.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else 3

    @property
    def depth(self) -> int:
        """Bits per sample in the binary encoding (8 or 16)."""
        return 8 if self.maxval < 256 else 16


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    size = len(data)
    while len(tokens) < count:
        while pos < size and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < size and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < size and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise FormatError("truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= size or data[pos] not in _WHITESPACE:
        raise FormatError("header not terminated by whitespace")
    return tokens, pos + 1


def read_pnm(data: bytes) -> RasterImage:
    """Decode a binary P5 or P6 file."""
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {data[:2]!r}; only P5 and P6 are accepted")
    channels = 1 if data[:2] == b"P5" else 3
    tokens, offset = _header_tokens(data[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"non-numeric header field: {exc}") from None
    if width < 1 or height < 1:
        raise FormatError("width and height must be positive")
    if not 1 <= maxval <= 65535:
        raise FormatError(f"maxval {maxval} outside 1..65535")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    payload = data[offset : offset + count * dtype.itemsize]
    if len(payload) < count * dtype.itemsize:
        raise FormatError(
            f"truncated raster: expected {count * dtype.itemsize} bytes, got {len(payload)}"
        )
    samples = np.frombuffer(payload, dtype=dtype).astype(np.int64)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return RasterImage(samples.reshape(shape), maxval)


def write_pnm(img: RasterImage) -> bytes:
    """Encode with the canonical header ``P5\\n{w} {h}\\n{maxval}\\n``."""
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + f"\n{img.width} {img.height}\n{img.maxval}\n".encode("ascii")
    dtype = ">u2" if img.maxval > 255 else "u1"
    return header + img.samples.astype(dtype).tobytes()


def load(path: str | Path) -> RasterImage:
    return read_pnm(Path(path).read_bytes())


def save(path: str | Path, img: RasterImage) -> None:
    Path(path).write_bytes(write_pnm(img))


def label_map(labels: np.ndarray) -> RasterImage:
    """16-bit graymap of a label array, renumbered ``0 .. K-1``."""
    _, compact = np.unique(labels, return_inverse=True)
    compact = compact.reshape(labels.shape)
    if compact.max() > 65535:
        raise FormatError("more than 65536 labels do not fit a 16-bit graymap")
    return RasterImage(compact, 65535)


def stats_csv(rows: list[tuple[int, int, float]]) -> str:
    """CSV of ``setId,n,mean`` rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["setId", "n", "mean"])
    for set_id, n, mean in rows:
        writer.writerow([set_id, n, f"{mean:.6f}"])
    return buf.getvalue()
