"""The live reconstruction loop.

One frame's journey: pull from a source, embed the intensity as a complex
field, propagate with the currently selected method and (z, M), extract
amplitude/phase, map to display range, publish with timing metadata.

Concurrency contract: the loop body runs in exactly one worker; parameters
arrive through a latest-wins mailbox (rapid updates collapse to the newest
one); published frames go into a depth-1 latest-wins slot so a slow
consumer drops frames instead of building a queue.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import diffraction
from .diffraction import ASM, BLDSF, PlanCache
from .fields import ComplexField, FieldError, RealImage, amplitude, phase, to_display
from .simulate import HologramFrame, hologram_to_field

__all__ = [
    "Z_RANGE",
    "MAG_RANGE",
    "OUTPUTS",
    "ReconstructionParams",
    "TimedFrame",
    "ParamsMailbox",
    "FrameSlot",
    "FpsMeter",
    "sharpness",
    "reconstruct_frame",
    "run_loop",
]

Z_RANGE = (-0.1, 0.1)          # meters, internal signed propagation distance
MAG_RANGE = (0.25, 4.0)
OUTPUTS = ("amplitude", "phase", "both")

# Fraction of each axis used as the focus-judgement window. Defocused fringe
# energy spreads across the whole frame, so full-frame variance is not
# discriminative; a window around the specimen is.
SHARPNESS_WINDOW = 0.25


def _clamp(v: float, lo: float, hi: float) -> float:
    return min(max(v, lo), hi)


@dataclass(frozen=True)
class ReconstructionParams:
    """Live, human-edited reconstruction state.

    `z` is the internal signed propagation distance: the UI-facing focus
    distance is positive (the object sits in front of the sensor) and gets
    negated on the way in, since reconstruction back-propagates. Values are
    clamped, not rejected, so a slider can never wedge the pipeline.
    """

    z: float = -0.011
    magnification: float = 1.0
    method: str = BLDSF
    output: str = "amplitude"

    def __post_init__(self):
        if self.method not in (ASM, BLDSF):
            raise FieldError(f"unknown method {self.method!r}")
        if self.output not in OUTPUTS:
            raise FieldError(f"unknown output {self.output!r}")
        object.__setattr__(self, "z", _clamp(float(self.z), *Z_RANGE))
        object.__setattr__(self, "magnification",
                           _clamp(float(self.magnification), *MAG_RANGE))

    @property
    def display_z(self) -> float:
        """Focus distance in the UI-facing sign convention."""
        return -self.z

    @classmethod
    def from_display(cls, z_m: float, magnification: float, method: str,
                     output: str) -> "ReconstructionParams":
        return cls(z=-z_m, magnification=magnification, method=method, output=output)


@dataclass(frozen=True)
class TimedFrame:
    """One published reconstruction: display images plus timing metadata."""

    sequence: int
    params: ReconstructionParams
    display_amplitude: RealImage | None
    display_phase: RealImage | None
    output_pitch_x: float
    output_pitch_y: float
    capture_ts: float
    publish_ts: float
    instantaneous_fps: float


class ParamsMailbox:
    """Latest-wins parameter mailbox; rapid updates collapse to the newest."""

    def __init__(self, initial: ReconstructionParams | None = None):
        self._lock = threading.Lock()
        self._value = initial
        self._dirty = initial is not None

    def post(self, params: ReconstructionParams) -> None:
        with self._lock:
            self._value = params
            self._dirty = True

    def drain(self) -> ReconstructionParams | None:
        """Return the newest posted value, or None if nothing new."""
        with self._lock:
            if not self._dirty:
                return None
            self._dirty = False
            return self._value

    def peek(self) -> ReconstructionParams | None:
        with self._lock:
            return self._value


class FrameSlot:
    """Depth-1 publish slot: offering over an untaken frame drops it."""

    def __init__(self):
        self._lock = threading.Lock()
        self._frame: TimedFrame | None = None
        self.dropped = 0
        self.published = 0

    def offer(self, frame: TimedFrame) -> None:
        with self._lock:
            if self._frame is not None:
                self.dropped += 1
            self._frame = frame
            self.published += 1

    def take(self) -> TimedFrame | None:
        with self._lock:
            frame, self._frame = self._frame, None
            return frame

    @property
    def depth(self) -> int:
        with self._lock:
            return 0 if self._frame is None else 1


class FpsMeter:
    """Sliding-window rate over the most recent publish timestamps."""

    def __init__(self, window: int = 8):
        if window < 2:
            raise ValueError("window must be >= 2")
        self._times: deque[float] = deque(maxlen=window)

    def tick(self, t: float) -> float:
        self._times.append(t)
        return self.value

    @property
    def value(self) -> float:
        if len(self._times) < 2:
            return 0.0
        span = self._times[-1] - self._times[0]
        if span <= 0:
            return 0.0
        return (len(self._times) - 1) / span


def sharpness(img: RealImage | np.ndarray) -> float:
    """Normalized variance of the central window; maximal near focus."""
    a = img.data if isinstance(img, RealImage) else np.asarray(img)
    h, w = a.shape
    mh = int(h * (1 - SHARPNESS_WINDOW) / 2)
    mw = int(w * (1 - SHARPNESS_WINDOW) / 2)
    c = a[mh:h - mh, mw:w - mw]
    m = float(np.mean(c))
    if m == 0.0:
        return 0.0
    return float(np.var(c) / m ** 2)


def reconstruct_frame(frame: HologramFrame, params: ReconstructionParams,
                      plan_cache: PlanCache | None = None,
                      *, sequence: int = 0, capture_ts: float = 0.0,
                      publish_ts: float = 0.0, fps: float = 0.0) -> TimedFrame:
    """Reconstruct one hologram frame with the given parameters.

    The ASM path ignores magnification (its contract fixes the pitch) and
    records M = 1 in the output. Plans are fetched from `plan_cache` when
    given, so repeated frames with unchanged parameters skip the chirp and
    transfer-function setup.
    """
    u = hologram_to_field(frame)
    mag = params.magnification if params.method == BLDSF else 1.0
    effective = replace(params, magnification=mag)
    if plan_cache is not None:
        plan = plan_cache.get_or_create(params.method, u.width, u.height,
                                        u.pitch_x, u.pitch_y, params.z, mag,
                                        frame.optics)
    else:
        plan = diffraction.make_plan(params.method, u.width, u.height,
                                     u.pitch_x, u.pitch_y, params.z, mag,
                                     frame.optics)
    u2 = diffraction.apply_plan(plan, u)

    disp_amp = disp_phase = None
    if params.output in ("amplitude", "both"):
        disp_amp = to_display(amplitude(u2), "amplitude")
    if params.output in ("phase", "both"):
        disp_phase = to_display(phase(u2), "phase")
    return TimedFrame(sequence=sequence, params=effective,
                      display_amplitude=disp_amp, display_phase=disp_phase,
                      output_pitch_x=u2.pitch_x, output_pitch_y=u2.pitch_y,
                      capture_ts=capture_ts, publish_ts=publish_ts,
                      instantaneous_fps=fps)


def run_loop(source, inbox: ParamsMailbox, sink, *,
             stop: threading.Event | None = None,
             clock=time.monotonic,
             on_event=None,
             fps_window: int = 8,
             plan_cache: PlanCache | None = None) -> int:
    """Pull-reconstruct-publish until the source ends or `stop` is set.

    `sink` is either a FrameSlot or any callable accepting a TimedFrame;
    publishing must not block (FrameSlot drops on slow consumers). Events
    are reported through `on_event(kind, detail)` with kinds "error" and
    "end"; a reconstruction error drops the frame and the loop continues.
    Returns the number of published frames.
    """
    emit = on_event or (lambda kind, detail=None: None)
    publish = sink.offer if isinstance(sink, FrameSlot) else sink
    cache = plan_cache or PlanCache()
    meter = FpsMeter(fps_window)
    params = inbox.peek() or ReconstructionParams()
    sequence = 0

    while stop is None or not stop.is_set():
        newest = inbox.drain()
        if newest is not None:
            params = newest
        frame = source.next_frame()
        if frame is None:
            emit("end", None)
            break
        capture_ts = clock()
        try:
            out = reconstruct_frame(frame, params, cache,
                                    sequence=sequence, capture_ts=capture_ts)
        except Exception as exc:  # noqa: BLE001 - error event, keep serving
            emit("error", exc)
            continue
        publish_ts = clock()
        fps = meter.tick(publish_ts)
        publish(replace(out, publish_ts=publish_ts, instantaneous_fps=fps))
        sequence += 1
    return sequence
