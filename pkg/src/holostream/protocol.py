"""Wire formats for the viewer link.

Control plane: compact JSON text (human-debuggable). Data plane: binary
frame messages, little-endian:

    magic "HOLO" | u8 kind (0=amplitude, 1=phase) | u32 width | u32 height
    | f32 pitch_m | f32 z_m | f32 magnification | f32 fps | u64 sequence
    | width*height payload bytes (8-bit grayscale)

z_m travels in the UI-facing sign convention (positive focus distance).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .fields import FormatError

__all__ = [
    "KIND_AMPLITUDE",
    "KIND_PHASE",
    "SetParams",
    "GetInfo",
    "Pause",
    "Resume",
    "ControlMessage",
    "FrameMessage",
    "encode_control",
    "decode_control",
    "encode_frame",
    "decode_frame",
]

KIND_AMPLITUDE = 0
KIND_PHASE = 1

_FRAME_HEADER = struct.Struct("<4sBIIffffQ")
FRAME_MAGIC = b"HOLO"


class ProtocolError(FormatError):
    """Malformed control or frame message."""


@dataclass(frozen=True)
class SetParams:
    z_m: float
    magnification: float
    method: str
    output: str

    def __post_init__(self):
        if self.method not in ("asm", "bldsf"):
            raise ProtocolError(f"unknown method {self.method!r}")
        if self.output not in ("amplitude", "phase", "both"):
            raise ProtocolError(f"unknown output {self.output!r}")


@dataclass(frozen=True)
class GetInfo:
    pass


@dataclass(frozen=True)
class Pause:
    pass


@dataclass(frozen=True)
class Resume:
    pass


ControlMessage = SetParams | GetInfo | Pause | Resume

_SIMPLE_TYPES = {"get_info": GetInfo, "pause": Pause, "resume": Resume}


def encode_control(msg: ControlMessage) -> str:
    if isinstance(msg, SetParams):
        return json.dumps({"type": "set_params", "z_m": msg.z_m,
                           "magnification": msg.magnification,
                           "method": msg.method, "output": msg.output})
    for name, cls in _SIMPLE_TYPES.items():
        if isinstance(msg, cls):
            return json.dumps({"type": name})
    raise ProtocolError(f"not a control message: {msg!r}")


def decode_control(text: str) -> ControlMessage:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict) or "type" not in obj:
        raise ProtocolError("control message must be an object with a 'type'")
    kind = obj["type"]
    if kind in _SIMPLE_TYPES:
        return _SIMPLE_TYPES[kind]()
    if kind != "set_params":
        raise ProtocolError(f"unknown control type {kind!r}")
    try:
        return SetParams(z_m=float(obj["z_m"]),
                         magnification=float(obj["magnification"]),
                         method=str(obj["method"]), output=str(obj["output"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad set_params: {exc}") from exc


@dataclass(frozen=True)
class FrameMessage:
    """One reconstructed image with its header metadata.

    Float fields are stored at f32 precision (what the wire carries), so
    encode/decode round-trips are exact.
    """

    kind: int
    width: int
    height: int
    pitch_m: float
    z_m: float
    magnification: float
    fps: float
    sequence: int
    payload: bytes

    def __post_init__(self):
        if self.kind not in (KIND_AMPLITUDE, KIND_PHASE):
            raise ProtocolError(f"unknown frame kind {self.kind}")
        if len(self.payload) != self.width * self.height:
            raise ProtocolError(
                f"payload is {len(self.payload)} bytes, expected {self.width * self.height}")
        for name in ("pitch_m", "z_m", "magnification", "fps"):
            object.__setattr__(self, name, float(np.float32(getattr(self, name))))


def encode_frame(msg: FrameMessage) -> bytes:
    header = _FRAME_HEADER.pack(FRAME_MAGIC, msg.kind, msg.width, msg.height,
                                msg.pitch_m, msg.z_m, msg.magnification,
                                msg.fps, msg.sequence)
    return header + msg.payload


def decode_frame(data: bytes) -> FrameMessage:
    if len(data) < _FRAME_HEADER.size:
        raise ProtocolError("frame shorter than header")
    magic, kind, w, h, pitch, z_m, mag, fps, seq = _FRAME_HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    payload = data[_FRAME_HEADER.size:]
    if len(payload) != w * h:
        raise ProtocolError(f"payload is {len(payload)} bytes, expected {w * h}")
    return FrameMessage(kind=kind, width=w, height=h, pitch_m=pitch, z_m=z_m,
                        magnification=mag, fps=fps, sequence=seq, payload=payload)
