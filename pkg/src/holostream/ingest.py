"""Hologram frame sources: image files, directories, raw dumps, synthetic.

Live camera capture is out of scope; the raw-stream source reads
consecutive "RIMG" records from a pipe or socket so a capture shim can be
bolted on without touching the pipeline.
"""

from __future__ import annotations

import select
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import sparse

from .fields import FieldError, FormatError, OpticalParams, RealImage, read_rimg
from .simulate import HologramFrame, ObjectSpec, generate_hologram

__all__ = [
    "SourceConfig",
    "GrayscaleRequiredError",
    "read_grayscale",
    "downsample",
    "SingleFileSource",
    "DirectorySource",
    "SyntheticSource",
    "RawStreamSource",
    "build_source",
]

IMAGE_SUFFIXES = (".png", ".pgm", ".rimg")


class GrayscaleRequiredError(FormatError):
    """Color input where single-channel data is required."""


@dataclass(frozen=True)
class SourceConfig:
    """Where frames come from and how they are conditioned."""

    kind: str                               # single_file | directory_sequence | synthetic | raw_stream
    path: str | None = None
    object_spec: ObjectSpec | None = None
    width: int = 256                        # synthetic grid
    height: int = 256
    pitch_x: float = 2.5e-6                 # native pitch, meters
    pitch_y: float = 2.5e-6
    z: float = 0.011                        # synthetic recording distance
    target_width: int | None = None         # downsample target, None = native
    target_height: int | None = None
    loop: bool = False

    def __post_init__(self):
        if self.kind not in ("single_file", "directory_sequence", "synthetic", "raw_stream"):
            raise FieldError(f"unknown source kind {self.kind!r}")
        if not (self.pitch_x > 0 and self.pitch_y > 0):
            raise FieldError("pitch must be positive")
        if (self.target_width is None) != (self.target_height is None):
            raise FieldError("set both or neither of target dims")
        if self.target_width is not None and (self.target_width < 1 or self.target_height < 1):
            raise FieldError("target dims must be positive")


def read_grayscale(path, pitch_x: float, pitch_y: float) -> RealImage:
    """Read an 8/16-bit grayscale image or an RIMG dump as intensity.

    8-bit values map to 0..255 floats without rescaling (display
    normalization happens downstream); 16-bit likewise to 0..65535.
    """
    path = Path(path)
    if path.suffix.lower() == ".rimg":
        with open(path, "rb") as fp:
            img = read_rimg(fp)
        return RealImage(img.data, pitch_x, pitch_y)
    try:
        im = Image.open(path)
        im.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    if im.mode in ("L", "I;16", "I;16B", "I;16L", "I"):
        values = np.asarray(im, dtype=np.float64)
    else:
        raise GrayscaleRequiredError(
            f"grayscale required, got mode {im.mode!r} in {path}")
    return RealImage(values, pitch_x, pitch_y)


def _area_weights(src: int, dst: int) -> sparse.csr_matrix:
    """Rows sum to 1; row j averages source pixels overlapping destination
    pixel j under a uniform src/dst partition of the same extent."""
    scale = src / dst
    rows, cols, vals = [], [], []
    for j in range(dst):
        lo = j * scale
        hi = (j + 1) * scale
        s = int(np.floor(lo))
        while s < hi and s < src:
            overlap = min(hi, s + 1) - max(lo, s)
            if overlap > 0:
                rows.append(j)
                cols.append(s)
                vals.append(overlap / scale)
            s += 1
    return sparse.csr_matrix((vals, (rows, cols)), shape=(dst, src))


def downsample(img: RealImage, target_w: int, target_h: int) -> RealImage:
    """Area-weighted average resampling; mean-preserving and anti-aliased.

    Fringes near Nyquist carry the hologram signal, so nearest-neighbor
    decimation is not an option here. The physical extent is preserved:
    new pitch = old pitch * (source/target) per axis.
    """
    if target_w < 1 or target_h < 1:
        raise FieldError("target dims must be positive")
    if target_w > img.width or target_h > img.height:
        raise FieldError("downsample target exceeds source dims")
    if (target_w, target_h) == (img.width, img.height):
        return img
    wh = _area_weights(img.height, target_h)
    ww = _area_weights(img.width, target_w)
    out = wh @ img.data @ ww.T
    return RealImage(out,
                     img.pitch_x * img.width / target_w,
                     img.pitch_y * img.height / target_h)


class SingleFileSource:
    """One file; with loop=True it repeats forever (static scene)."""

    def __init__(self, cfg: SourceConfig, optics: OpticalParams):
        self.cfg = cfg
        self.optics = optics
        self._frame: HologramFrame | None = None
        self._done = False

    def next_frame(self) -> HologramFrame | None:
        if self._done and not self.cfg.loop:
            return None
        if self._frame is None:
            img = read_grayscale(self.cfg.path, self.cfg.pitch_x, self.cfg.pitch_y)
            if self.cfg.target_width is not None:
                img = downsample(img, self.cfg.target_width, self.cfg.target_height)
            self._frame = HologramFrame(img, self.cfg.z, self.optics)
        self._done = True
        return self._frame


class DirectorySource:
    """Frame sequence from a directory, sorted by filename."""

    def __init__(self, cfg: SourceConfig, optics: OpticalParams):
        self.cfg = cfg
        self.optics = optics
        root = Path(cfg.path)
        if not root.is_dir():
            raise FormatError(f"not a directory: {root}")
        self.files = sorted(p for p in root.iterdir()
                            if p.suffix.lower() in IMAGE_SUFFIXES)
        if not self.files:
            raise FormatError(f"no frames in {root}")
        self._idx = 0

    def next_frame(self) -> HologramFrame | None:
        if self._idx >= len(self.files):
            if not self.cfg.loop:
                return None
            self._idx = 0
        path = self.files[self._idx]
        self._idx += 1
        img = read_grayscale(path, self.cfg.pitch_x, self.cfg.pitch_y)
        if self.cfg.target_width is not None:
            img = downsample(img, self.cfg.target_width, self.cfg.target_height)
        return HologramFrame(img, self.cfg.z, self.optics)


class SyntheticSource:
    """On-demand holograms of a fixed object; carries ground-truth z."""

    def __init__(self, cfg: SourceConfig, optics: OpticalParams):
        self.cfg = cfg
        self.optics = optics
        self._frame: HologramFrame | None = None
        self._served = 0

    def next_frame(self) -> HologramFrame | None:
        if self._served > 0 and not self.cfg.loop:
            return None
        if self._frame is None:
            cfg = self.cfg
            frame = generate_hologram(cfg.object_spec or ObjectSpec(),
                                      cfg.z, cfg.width, cfg.height,
                                      cfg.pitch_x, cfg.pitch_y, self.optics)
            if cfg.target_width is not None:
                img = downsample(frame.image, cfg.target_width, cfg.target_height)
                frame = HologramFrame(img, cfg.z, self.optics)
            self._frame = frame
        self._served += 1
        return self._frame


class RawStreamSource:
    """Consecutive RIMG records from a binary stream.

    For non-seekable streams (pipes, sockets) it drains to the newest
    complete record before returning, so a slow consumer sees the latest
    frame rather than an ever-older backlog. Regular files are read
    sequentially.
    """

    def __init__(self, stream, cfg: SourceConfig, optics: OpticalParams):
        self.stream = stream
        self.cfg = cfg
        self.optics = optics

    def _read_one(self) -> RealImage | None:
        try:
            return read_rimg(self.stream)
        except FormatError as exc:
            if "truncated header" in str(exc):
                return None  # clean end of stream
            raise

    def _more_ready(self) -> bool:
        try:
            fd = self.stream.fileno()
        except (OSError, AttributeError):
            return False
        ready, _, _ = select.select([fd], [], [], 0)
        return bool(ready)

    def next_frame(self) -> HologramFrame | None:
        img = self._read_one()
        if img is None:
            return None
        seekable = getattr(self.stream, "seekable", lambda: True)()
        if not seekable:
            while self._more_ready():
                newer = self._read_one()
                if newer is None:
                    break
                img = newer
        img = RealImage(img.data, self.cfg.pitch_x, self.cfg.pitch_y)
        if self.cfg.target_width is not None:
            img = downsample(img, self.cfg.target_width, self.cfg.target_height)
        return HologramFrame(img, self.cfg.z, self.optics)


def build_source(cfg: SourceConfig, optics: OpticalParams | None = None,
                 stream=None):
    optics = optics or OpticalParams()
    if cfg.kind == "single_file":
        return SingleFileSource(cfg, optics)
    if cfg.kind == "directory_sequence":
        return DirectorySource(cfg, optics)
    if cfg.kind == "synthetic":
        return SyntheticSource(cfg, optics)
    if stream is None:
        stream = open(cfg.path, "rb")
    return RawStreamSource(stream, cfg, optics)
