"""Tri-level label masks and their grayscale BMP codec.

Submission masks encode the optic cup as gray 0, the optic disc rim as 128
and everything else as 255. Masks are held as read-only ``uint8`` arrays of
those three codes, top row first.
"""
from __future__ import annotations

import enum
import struct

import numpy as np

from .errors import (
    DimensionMismatch,
    MalformedHeader,
    StrictValueViolation,
    UnsupportedEncoding,
)

FILE_HEADER = struct.Struct("<2sIHHI")
INFO_HEADER = struct.Struct("<IiiHHIIiiII")
FILE_HEADER_SIZE = FILE_HEADER.size  # 14
INFO_HEADER_SIZE = INFO_HEADER.size  # 40
PALETTE_SIZE = 256 * 4
BI_RGB = 0


class PixelLabel(enum.IntEnum):
    CUP = 0
    DISC = 128
    BACKGROUND = 255


class Region(str, enum.Enum):
    OD = "OD"
    OC = "OC"


_CODES = np.array([l.value for l in PixelLabel], dtype=np.uint8)

# nearest of {0, 128, 255}; the 64 tie goes to the darker label
_NEAREST = np.empty(256, dtype=np.uint8)
_NEAREST[:65] = PixelLabel.CUP
_NEAREST[65:192] = PixelLabel.DISC
_NEAREST[192:] = PixelLabel.BACKGROUND


def _row_stride(width: int, bits: int) -> int:
    return ((width * bits + 31) // 32) * 4


class LabelMask:
    """Immutable tri-level mask.

    ``labels`` is a ``(height, width)`` array whose entries are the gray codes
    of :class:`PixelLabel`.
    """

    __slots__ = ("_labels",)

    def __init__(self, labels):
        arr = np.array(labels, dtype=np.uint8, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"label grid must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.isin(arr, _CODES).all():
            bad = sorted(set(np.unique(arr).tolist()) - set(_CODES.tolist()))
            raise ValueError(f"label grid contains values outside 0/128/255: {bad[:5]}")
        arr.setflags(write=False)
        self._labels = arr

    @classmethod
    def _trusted(cls, arr: np.ndarray) -> "LabelMask":
        obj = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        obj._labels = arr
        return obj

    @classmethod
    def from_regions(cls, od: np.ndarray, oc: np.ndarray) -> "LabelMask":
        """Assemble a mask from disc and cup membership grids.

        Cup pixels outside the disc are dropped, so the result always nests.
        """
        od = np.asarray(od, dtype=bool)
        oc = np.asarray(oc, dtype=bool)
        if od.shape != oc.shape:
            raise DimensionMismatch(f"OD region {od.shape} vs OC region {oc.shape}")
        out = np.full(od.shape, PixelLabel.BACKGROUND, dtype=np.uint8)
        out[od] = PixelLabel.DISC
        out[od & oc] = PixelLabel.CUP
        return cls._trusted(out)

    @classmethod
    def filled(cls, width: int, height: int, label: PixelLabel = PixelLabel.BACKGROUND) -> "LabelMask":
        return cls._trusted(np.full((height, width), int(label), dtype=np.uint8))

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def width(self) -> int:
        return self._labels.shape[1]

    @property
    def height(self) -> int:
        return self._labels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._labels.shape

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._labels, other._labels)

    __hash__ = None

    def __repr__(self):
        counts = {l.name.lower(): int((self._labels == l).sum()) for l in PixelLabel}
        return f"LabelMask({self.width}x{self.height}, {counts})"


def region_of(mask: LabelMask, kind: Region | str, od_includes_cup: bool = True) -> np.ndarray:
    """Boolean membership grid of the disc (OD) or cup (OC).

    The disc contains the cup, so by default OD covers both the 0 and 128
    labels. ``od_includes_cup=False`` restricts OD to the 128 rim only.
    """
    kind = Region(str(kind.value if isinstance(kind, Region) else kind).upper())
    labels = mask.labels
    if kind is Region.OC:
        return labels == PixelLabel.CUP
    if od_includes_cup:
        return labels != PixelLabel.BACKGROUND
    return labels == PixelLabel.DISC


def encode_mask(mask: LabelMask) -> bytes:
    """8-bit palettized, bottom-up BMP with a 256-entry gray palette."""
    h, w = mask.shape
    stride = _row_stride(w, 8)
    pixel_bytes = stride * h
    offset = FILE_HEADER_SIZE + INFO_HEADER_SIZE + PALETTE_SIZE
    file_header = FILE_HEADER.pack(b"BM", offset + pixel_bytes, 0, 0, offset)
    info_header = INFO_HEADER.pack(INFO_HEADER_SIZE, w, h, 1, 8, BI_RGB, pixel_bytes, 0, 0, 256, 0)
    gray = np.arange(256, dtype=np.uint8)
    palette = np.stack([gray, gray, gray, np.zeros_like(gray)], axis=1).tobytes()
    rows = np.zeros((h, stride), dtype=np.uint8)
    rows[:, :w] = mask.labels[::-1]
    return file_header + info_header + palette + rows.tobytes()


def decode_mask(data: bytes, strict: bool = False) -> LabelMask:
    """Parse an uncompressed 8-bit gray-palette or 24-bit gray BMP.

    Gray values snap to the nearest of 0/128/255 unless ``strict`` is set, in
    which case any other value raises :class:`StrictValueViolation` naming the
    first offending pixel (top-row-first coordinates).
    """
    data = bytes(data)
    if len(data) < FILE_HEADER_SIZE + INFO_HEADER_SIZE:
        raise MalformedHeader(f"file too short for BMP headers ({len(data)} bytes)")
    magic, file_size, _, _, offset = FILE_HEADER.unpack_from(data, 0)
    if magic != b"BM":
        raise MalformedHeader(f"bad magic {magic!r}")
    if file_size and file_size > len(data):
        raise MalformedHeader(f"header declares {file_size} bytes but only {len(data)} present")
    (info_size, width, height, planes, bits, compression,
     _, _, _, colors_used, _) = INFO_HEADER.unpack_from(data, FILE_HEADER_SIZE)
    if info_size < INFO_HEADER_SIZE:
        raise UnsupportedEncoding(f"info header of {info_size} bytes (core headers unsupported)")
    if width <= 0 or height == 0:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if planes != 1:
        raise MalformedHeader(f"planes field is {planes}, expected 1")
    if compression != BI_RGB:
        raise UnsupportedEncoding(f"compression type {compression} unsupported")
    if bits not in (8, 24):
        raise UnsupportedEncoding(f"{bits}-bit pixels unsupported")

    bottom_up = height > 0
    height = abs(height)
    stride = _row_stride(width, bits)
    palette_start = FILE_HEADER_SIZE + info_size
    if offset < palette_start or offset + stride * height > len(data):
        raise MalformedHeader(
            f"pixel array at offset {offset} ({stride}x{height} bytes) does not fit a {len(data)}-byte file"
        )
    rows = np.frombuffer(data, dtype=np.uint8, count=stride * height, offset=offset)
    rows = rows.reshape(height, stride)

    if bits == 8:
        n_colors = colors_used or 256
        if n_colors > 256 or palette_start + 4 * n_colors > offset:
            raise MalformedHeader(f"palette of {n_colors} entries overlaps pixel data")
        palette = np.frombuffer(data, dtype=np.uint8, count=4 * n_colors, offset=palette_start)
        palette = palette.reshape(n_colors, 4)
        if not ((palette[:, 0] == palette[:, 1]) & (palette[:, 1] == palette[:, 2])).all():
            raise UnsupportedEncoding("palette contains non-gray entries")
        index = rows[:, :width]
        if int(index.max()) >= n_colors:
            raise MalformedHeader(f"pixel index {int(index.max())} outside {n_colors}-entry palette")
        gray = palette[:, 0][index]
    else:
        bgr = rows[:, : width * 3].reshape(height, width, 3)
        if not ((bgr[..., 0] == bgr[..., 1]) & (bgr[..., 1] == bgr[..., 2])).all():
            raise UnsupportedEncoding("24-bit pixels are not gray (R=G=B)")
        gray = bgr[..., 0]

    if bottom_up:
        gray = gray[::-1]
    if strict:
        bad = ~np.isin(gray, _CODES)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise StrictValueViolation(int(gray[r, c]), int(r), int(c))
        return LabelMask._trusted(gray.copy())
    return LabelMask._trusted(_NEAREST[gray])
