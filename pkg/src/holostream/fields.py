"""Complex scalar field grids with physical sampling metadata.

Conventions shared by the whole package:

* samples are row-major, origin at the top-left, x rightward, y downward;
* DC-centered coordinates of pixel (i, j) are ((j - width//2) * pitch_x,
  (i - height//2) * pitch_y);
* fields and images are immutable after construction (backing arrays are
  marked read-only) and safe to share between threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ComplexField",
    "RealImage",
    "OpticalParams",
    "FieldError",
    "FormatError",
    "amplitude",
    "phase",
    "to_display",
    "embed",
    "crop",
    "total_energy",
    "write_cfld",
    "read_cfld",
    "write_rimg",
    "read_rimg",
]


class FieldError(ValueError):
    """Invalid field construction or operation arguments."""


class FormatError(IOError):
    """Malformed or truncated binary dump."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ComplexField:
    """A rectangular grid of complex samples with physical pitch metadata.

    `data` has shape (height, width), dtype complex128. Pitches are in
    meters per pixel.
    """

    data: np.ndarray
    pitch_x: float
    pitch_y: float

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise FieldError(f"field must be a 2-D grid, got shape {a.shape}")
        if not (self.pitch_x > 0 and self.pitch_y > 0):
            raise FieldError("pitch must be positive")
        if not np.all(np.isfinite(a)):
            raise FieldError("field contains non-finite samples")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class RealImage:
    """Row-major grid of real values (intensity, amplitude or display units)."""

    data: np.ndarray
    pitch_x: float
    pitch_y: float

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise FieldError(f"image must be a 2-D grid, got shape {a.shape}")
        if not (self.pitch_x > 0 and self.pitch_y > 0):
            raise FieldError("pitch must be positive")
        if not np.all(np.isfinite(a)):
            raise FieldError("image contains non-finite values")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class OpticalParams:
    """Illumination wavelength in meters (650 nm in the reference setup)."""

    wavelength: float = 650e-9

    def __post_init__(self):
        if not (self.wavelength > 0 and np.isfinite(self.wavelength)):
            raise FieldError("wavelength must be positive and finite")


def amplitude(f: ComplexField) -> RealImage:
    """Per-pixel modulus |u|, same dimensions and pitch."""
    return RealImage(np.abs(f.data), f.pitch_x, f.pitch_y)


def phase(f: ComplexField) -> RealImage:
    """Per-pixel principal argument in [-pi, pi).

    Zero-magnitude pixels map to 0. The +pi branch value is folded to -pi
    so the interval stays half-open.
    """
    p = np.angle(f.data)
    # np.angle returns (-pi, pi]; fold +pi to -pi, and pin arg(±0±0j) to 0.
    p = np.where(p >= np.pi, -np.pi, p)
    zero = (f.data.real == 0.0) & (f.data.imag == 0.0)
    p = np.where(zero, 0.0, p)
    return RealImage(p, f.pitch_x, f.pitch_y)


def total_energy(f: ComplexField) -> float:
    """Sum of |u|^2 over the grid."""
    return float(np.sum(np.abs(f.data) ** 2))


# Robust percentile pair for amplitude display: min/max normalization is
# destroyed by single twin-image hot spots, 0.1%/99.9% is not.
AMPLITUDE_PERCENTILES = (0.1, 99.9)


def to_display(img: RealImage, mode: str) -> RealImage:
    """Map an amplitude or phase image onto the 8-bit display range.

    amplitude: linear between the 0.1 and 99.9 percentiles, clipped to
    [0, 255]; a constant image maps to mid-gray 128.
    phase: linear map of [-pi, pi) onto [0, 255].
    """
    v = img.data
    if mode == "amplitude":
        lo, hi = np.percentile(v, AMPLITUDE_PERCENTILES)
        if hi <= lo:
            out = np.full_like(v, 128.0)
        else:
            out = np.round(np.clip((v - lo) / (hi - lo), 0.0, 1.0) * 255.0)
    elif mode == "phase":
        out = np.round((v + np.pi) / (2.0 * np.pi) * 255.0)
    else:
        raise FieldError(f"unknown display mode {mode!r}")
    return RealImage(out, img.pitch_x, img.pitch_y)


def _center_offsets(big_w: int, big_h: int, small_w: int, small_h: int) -> tuple[int, int]:
    return (big_w - small_w) // 2, (big_h - small_h) // 2


def embed(f: ComplexField, new_width: int, new_height: int) -> ComplexField:
    """Center the field on a larger grid, zero-filled. Pitch unchanged."""
    if new_width < f.width or new_height < f.height:
        raise FieldError("embed target must be at least as large as the field")
    out = np.zeros((new_height, new_width), dtype=np.complex128)
    ox, oy = _center_offsets(new_width, new_height, f.width, f.height)
    out[oy:oy + f.height, ox:ox + f.width] = f.data
    return ComplexField(out, f.pitch_x, f.pitch_y)


def crop(f: ComplexField, new_width: int, new_height: int) -> ComplexField:
    """Centered crop to a smaller grid. Pitch unchanged; inverse of embed."""
    if new_width > f.width or new_height > f.height:
        raise FieldError("crop target must be no larger than the field")
    if new_width < 1 or new_height < 1:
        raise FieldError("crop target must be at least 1x1")
    ox, oy = _center_offsets(f.width, f.height, new_width, new_height)
    return ComplexField(f.data[oy:oy + new_height, ox:ox + new_width].copy(),
                        f.pitch_x, f.pitch_y)


# ---------------------------------------------------------------------------
# Raw dump formats: little-endian header
#   magic(4) | u32 width | u32 height | f64 pitch_x | f64 pitch_y
# followed by width*height f64 pairs (re, im) for "CFLD" or single f64 per
# pixel for "RIMG", row-major.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIdd")
CFLD_MAGIC = b"CFLD"
RIMG_MAGIC = b"RIMG"


def write_cfld(f: ComplexField, fp) -> None:
    fp.write(_HEADER.pack(CFLD_MAGIC, f.width, f.height, f.pitch_x, f.pitch_y))
    pairs = np.empty((f.height, f.width, 2), dtype="<f8")
    pairs[..., 0] = f.data.real
    pairs[..., 1] = f.data.imag
    fp.write(pairs.tobytes())


def read_cfld(fp) -> ComplexField:
    magic, w, h, px, py = _read_header(fp, CFLD_MAGIC)
    raw = fp.read(w * h * 16)
    if len(raw) != w * h * 16:
        raise FormatError("truncated CFLD payload")
    pairs = np.frombuffer(raw, dtype="<f8").reshape(h, w, 2)
    return ComplexField(pairs[..., 0] + 1j * pairs[..., 1], px, py)


def write_rimg(img: RealImage, fp) -> None:
    fp.write(_HEADER.pack(RIMG_MAGIC, img.width, img.height, img.pitch_x, img.pitch_y))
    fp.write(img.data.astype("<f8").tobytes())


def read_rimg(fp) -> RealImage:
    magic, w, h, px, py = _read_header(fp, RIMG_MAGIC)
    raw = fp.read(w * h * 8)
    if len(raw) != w * h * 8:
        raise FormatError("truncated RIMG payload")
    values = np.frombuffer(raw, dtype="<f8").reshape(h, w)
    return RealImage(values, px, py)


def _read_header(fp, expected_magic: bytes):
    raw = fp.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise FormatError("truncated header")
    magic, w, h, px, py = _HEADER.unpack(raw)
    if magic != expected_magic:
        raise FormatError(f"bad magic {magic!r}, expected {expected_magic!r}")
    if w < 1 or h < 1:
        raise FormatError("header declares empty grid")
    return magic, w, h, px, py
