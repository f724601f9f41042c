"""Key-value application config.

Plain `key = value` lines, `#` comments. Example:

    port = 8765
    wavelength_m = 650e-9
    assets_dir = frontend/dist
    source.kind = synthetic
    source.width = 256
    source.height = 256
    source.pitch_m = 2.5e-6
    source.z_m = 0.011
    source.object = disk
    source.loop = true
    defaults.z_m = 0.011
    defaults.magnification = 1.0
    defaults.method = bldsf
    defaults.output = amplitude
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .fields import FieldError, OpticalParams
from .ingest import SourceConfig
from .pipeline import ReconstructionParams
from .simulate import ObjectSpec, object_spec_from_text

__all__ = ["AppConfig", "parse_kv", "load_config"]

_BUILTIN_OBJECTS = {
    "disk": lambda: ObjectSpec.disk(radius=50e-6),
    "bars": lambda: ObjectSpec.bars(period_px=16, extent_fraction=0.5),
    "empty": lambda: ObjectSpec(),
}


@dataclass(frozen=True)
class AppConfig:
    source: SourceConfig
    optics: OpticalParams
    defaults: ReconstructionParams
    port: int = 8765
    host: str = "127.0.0.1"
    assets_dir: str | None = None


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FieldError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _as_bool(v: str) -> bool:
    if v.lower() in ("true", "1", "yes", "on"):
        return True
    if v.lower() in ("false", "0", "no", "off"):
        return False
    raise FieldError(f"not a boolean: {v!r}")


def load_config(path) -> AppConfig:
    path = Path(path)
    kv = parse_kv(path.read_text())

    pitch = float(kv.get("source.pitch_m", 2.5e-6))
    obj = None
    obj_name = kv.get("source.object")
    if obj_name:
        if obj_name in _BUILTIN_OBJECTS:
            obj = _BUILTIN_OBJECTS[obj_name]()
        else:
            obj = object_spec_from_text((path.parent / obj_name).read_text())
    target_w = kv.get("source.target_width")
    target_h = kv.get("source.target_height")
    source = SourceConfig(
        kind=kv.get("source.kind", "synthetic"),
        path=kv.get("source.path"),
        object_spec=obj,
        width=int(kv.get("source.width", 256)),
        height=int(kv.get("source.height", 256)),
        pitch_x=pitch,
        pitch_y=float(kv.get("source.pitch_y_m", pitch)),
        z=float(kv.get("source.z_m", 0.011)),
        target_width=int(target_w) if target_w else None,
        target_height=int(target_h) if target_h else None,
        loop=_as_bool(kv.get("source.loop", "true")),
    )
    optics = OpticalParams(float(kv.get("wavelength_m", 650e-9)))
    defaults = ReconstructionParams.from_display(
        z_m=float(kv.get("defaults.z_m", 0.011)),
        magnification=float(kv.get("defaults.magnification", 1.0)),
        method=kv.get("defaults.method", "bldsf"),
        output=kv.get("defaults.output", "amplitude"),
    )
    return AppConfig(source=source, optics=optics, defaults=defaults,
                     port=int(kv.get("port", 8765)),
                     host=kv.get("host", "127.0.0.1"),
                     assets_dir=kv.get("assets_dir"))
