"""Synthetic inline (Gabor) hologram generation.

A thin object under unit plane-wave illumination has complex transmittance
t = (1 - a) * exp(1j*phi) with absorption a in [0, 1] and phase shift phi.
Free-space propagation of t to the sensor plane and intensity recording
I = |u|^2 give the hologram: reference and object waves share the axis, so
no separate reference arm is modeled. Ground-truth geometry travels with
each frame, which is what makes the end-to-end reconstruction oracles
possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffraction import _asm_transfer, _cfft2
from .fields import ComplexField, FieldError, OpticalParams, RealImage

__all__ = [
    "DiskSpec",
    "BarTargetSpec",
    "ObjectSpec",
    "HologramFrame",
    "transmittance",
    "generate_hologram",
    "hologram_to_field",
    "object_spec_to_text",
    "object_spec_from_text",
]


@dataclass(frozen=True)
class DiskSpec:
    """Circular element: absorbing disk, phase disk, or both."""

    radius: float                 # meters
    center_x: float = 0.0         # meters, DC-centered coordinates
    center_y: float = 0.0
    absorption: float = 1.0       # a in [0, 1]; 1 = opaque
    phase_shift: float = 0.0      # radians applied inside the disk

    def __post_init__(self):
        if not (self.radius > 0):
            raise FieldError("disk radius must be positive")
        if not (0.0 <= self.absorption <= 1.0):
            raise FieldError("absorption must lie in [0, 1]")
        if not np.isfinite(self.phase_shift):
            raise FieldError("phase shift must be finite")


@dataclass(frozen=True)
class BarTargetSpec:
    """Vertical bar pattern with the period expressed in source pixels.

    Pinning the period to pixels at unit magnification makes zoom-ratio
    measurements exact: reconstructed at magnification M the bars measure
    M * period_px pixels. The pattern fills a centered square covering
    `extent_fraction` of the grid.
    """

    period_px: float
    absorption: float = 1.0
    phase_shift: float = 0.0
    extent_fraction: float = 0.5
    duty: float = 0.5

    def __post_init__(self):
        if not (self.period_px > 1):
            raise FieldError("bar period must exceed one pixel")
        if not (0.0 <= self.absorption <= 1.0):
            raise FieldError("absorption must lie in [0, 1]")
        if not (0.0 < self.extent_fraction <= 1.0):
            raise FieldError("extent fraction must lie in (0, 1]")
        if not (0.0 < self.duty < 1.0):
            raise FieldError("duty cycle must lie in (0, 1)")


@dataclass(frozen=True)
class ObjectSpec:
    """One or more thin elements; an empty spec is clear glass."""

    elements: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        for e in self.elements:
            if not isinstance(e, (DiskSpec, BarTargetSpec)):
                raise FieldError(f"unsupported element {type(e).__name__}")

    @classmethod
    def disk(cls, **kw) -> "ObjectSpec":
        return cls((DiskSpec(**kw),))

    @classmethod
    def bars(cls, **kw) -> "ObjectSpec":
        return cls((BarTargetSpec(**kw),))


@dataclass(frozen=True)
class HologramFrame:
    """Recorded intensity plus the ground-truth recording geometry."""

    image: RealImage
    object_distance: float        # meters, > 0
    optics: OpticalParams

    def __post_init__(self):
        if not (self.object_distance > 0):
            raise FieldError("object distance must be positive")
        if np.any(self.image.data < 0):
            raise FieldError("hologram intensity must be nonnegative")


def _element_transmittance(e, width, height, pitch_x, pitch_y) -> np.ndarray:
    x = (np.arange(width) - width // 2) * pitch_x
    y = (np.arange(height) - height // 2) * pitch_y
    if isinstance(e, DiskSpec):
        r2 = (y[:, None] - e.center_y) ** 2 + (x[None, :] - e.center_x) ** 2
        inside = r2 <= e.radius ** 2
    else:
        period = e.period_px * pitch_x
        half = e.extent_fraction * width * pitch_x / 2.0
        in_region = (np.abs(x[None, :]) <= half) & (np.abs(y[:, None]) <= e.extent_fraction * height * pitch_y / 2.0)
        stripe = (np.mod(x[None, :] / period, 1.0) < e.duty) & np.ones((height, 1), dtype=bool)
        inside = in_region & stripe
    t = np.ones((height, width), dtype=np.complex128)
    t[inside] = (1.0 - e.absorption) * np.exp(1j * e.phase_shift)
    return t


def transmittance(spec: ObjectSpec, width: int, height: int,
                  pitch_x: float, pitch_y: float) -> ComplexField:
    """Complex transmittance of the thin object on the given grid.

    Elements multiply (stacked thin components); the background is 1+0j.
    """
    t = np.ones((height, width), dtype=np.complex128)
    for e in spec.elements:
        t *= _element_transmittance(e, width, height, pitch_x, pitch_y)
    return ComplexField(t, pitch_x, pitch_y)


def _propagate_periodic(t: ComplexField, z: float, optics: OpticalParams) -> np.ndarray:
    """Angular-spectrum step with periodic boundaries (no padding).

    The recording model illuminates an effectively infinite sample with a
    unit plane wave; on the periodic grid that wave is an exact eigenmode,
    so an empty scene records exactly uniform intensity and fringe
    modulation scales linearly with weak absorption. The padded propagators
    would instead imprint diffraction from the artificial aperture edge.
    """
    h = _asm_transfer(t.width, t.height, t.pitch_x, t.pitch_y,
                      optics.wavelength, z)
    return _cfft2(_cfft2(t.data, forward=True) * h, forward=False)


def generate_hologram(spec: ObjectSpec, z: float, width: int, height: int,
                      pitch_x: float, pitch_y: float, optics: OpticalParams,
                      noise_sigma: float = 0.0,
                      rng: np.random.Generator | None = None) -> HologramFrame:
    """Record I = |propagate(t, +z)|^2 at the sensor plane.

    Optional additive Gaussian sensor noise (sigma in intensity units) is
    off by default; negative intensities after noise are clipped to zero.
    """
    if not (z > 0):
        raise FieldError("recording distance must be positive")
    t = transmittance(spec, width, height, pitch_x, pitch_y)
    u = _propagate_periodic(t, z, optics)
    intensity = np.abs(u) ** 2
    if noise_sigma > 0.0:
        rng = rng or np.random.default_rng()
        intensity = np.clip(intensity + rng.normal(0.0, noise_sigma, intensity.shape), 0.0, None)
    return HologramFrame(RealImage(intensity, pitch_x, pitch_y), z, optics)


def hologram_to_field(frame: HologramFrame) -> ComplexField:
    """Intensity values become the real part of the reconstruction input.

    The camera frame is fed to the propagator directly (not its square
    root); the difference only reshuffles the DC and twin terms.
    """
    img = frame.image
    return ComplexField(img.data.astype(np.complex128), img.pitch_x, img.pitch_y)


# ---------------------------------------------------------------------------
# Key-value text serialization (human-editable object descriptions)
# ---------------------------------------------------------------------------

_DISK_KEYS = ("radius", "center_x", "center_y", "absorption", "phase_shift")
_BAR_KEYS = ("period_px", "absorption", "phase_shift", "extent_fraction", "duty")


def object_spec_to_text(spec: ObjectSpec) -> str:
    lines = ["# synthetic object description"]
    for i, e in enumerate(spec.elements):
        if isinstance(e, DiskSpec):
            lines.append(f"element.{i}.kind = disk")
            keys = _DISK_KEYS
        else:
            lines.append(f"element.{i}.kind = bar_target")
            keys = _BAR_KEYS
        for k in keys:
            lines.append(f"element.{i}.{k} = {getattr(e, k)!r}")
    return "\n".join(lines) + "\n"


def object_spec_from_text(text: str) -> ObjectSpec:
    entries: dict[int, dict[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FieldError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        if len(parts) != 3 or parts[0] != "element":
            raise FieldError(f"line {lineno}: keys look like element.<i>.<field>")
        try:
            idx = int(parts[1])
        except ValueError:
            raise FieldError(f"line {lineno}: bad element index {parts[1]!r}") from None
        entries.setdefault(idx, {})[parts[2]] = value

    elements = []
    for idx in sorted(entries):
        fields = dict(entries[idx])
        kind = fields.pop("kind", None)
        if kind == "disk":
            elements.append(DiskSpec(**{k: float(v) for k, v in fields.items()}))
        elif kind == "bar_target":
            elements.append(BarTargetSpec(**{k: float(v) for k, v in fields.items()}))
        else:
            raise FieldError(f"element {idx}: unknown kind {kind!r}")
    return ObjectSpec(tuple(elements))
