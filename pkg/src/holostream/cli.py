"""Command-line interface: offline reconstruction, focus sweep, benchmark,
hologram synthesis, and the streaming service."""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from .diffraction import ASM, BLDSF, PlanCache
from .fields import (
    FieldError,
    FormatError,
    OpticalParams,
    RealImage,
    read_rimg,
    write_rimg,
)
from .pipeline import ReconstructionParams, reconstruct_frame, sharpness
from .simulate import HologramFrame, ObjectSpec, generate_hologram

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _save_image(img: RealImage, path: Path) -> None:
    """8-bit grayscale for .png/.pgm (values assumed in 0..255); .rimg keeps
    full precision and pitch metadata."""
    if path.suffix.lower() == ".rimg":
        with open(path, "wb") as fp:
            write_rimg(img, fp)
        return
    data = np.clip(img.data, 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def _load_hologram(path: Path, pitch: float | None, wavelength: float,
                   z: float) -> HologramFrame:
    from .ingest import read_grayscale

    if path.suffix.lower() == ".rimg":
        with open(path, "rb") as fp:
            img = read_rimg(fp)
        if pitch is not None:
            img = RealImage(img.data, pitch, pitch)
    else:
        if pitch is None:
            raise FieldError("--pitch is required for image-file input")
        img = read_grayscale(path, pitch, pitch)
    return HologramFrame(img, z, OpticalParams(wavelength))


def cmd_reconstruct(args) -> int:
    frame = _load_hologram(Path(args.input), args.pitch, args.wavelength, args.z)
    params = ReconstructionParams.from_display(
        z_m=args.z, magnification=args.zoom, method=args.method,
        output="both" if args.out_amp and args.out_phase
        else ("phase" if args.out_phase else "amplitude"))
    t0 = time.perf_counter()
    out = reconstruct_frame(frame, params)
    dt = (time.perf_counter() - t0) * 1e3
    if args.out_amp:
        _save_image(out.display_amplitude, Path(args.out_amp))
    if args.out_phase:
        _save_image(out.display_phase, Path(args.out_phase))
    print(f"reconstructed {frame.image.width}x{frame.image.height} "
          f"with {args.method} in {dt:.1f} ms; "
          f"output pitch {out.output_pitch_x * 1e6:.4f} um")
    return EXIT_OK


def cmd_sweep(args) -> int:
    frame = _load_hologram(Path(args.input), args.pitch, args.wavelength,
                           max(args.z_start, 1e-6))
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    zs = np.linspace(args.z_start, args.z_end, args.steps)
    scores = []
    for i, z in enumerate(zs):
        params = ReconstructionParams.from_display(
            z_m=float(z), magnification=1.0, method=args.method,
            output="amplitude")
        out = reconstruct_frame(frame, params)
        s = sharpness(out.display_amplitude)
        scores.append(s)
        _save_image(out.display_amplitude, outdir / f"z_{i:03d}_{z:.6f}.png")
    best = int(np.argmax(scores))
    lines = [f"{zs[i]:.6f} {scores[i]:.6f}" + ("  <-- max" if i == best else "")
             for i in range(len(zs))]
    report = outdir / "sweep_report.txt"
    report.write_text("\n".join(lines) + "\n")
    print(f"sharpness max at z = {zs[best]:.6f} m ({report})")
    return EXIT_OK


def cmd_bench(args) -> int:
    optics = OpticalParams(args.wavelength)
    hologram = generate_hologram(
        ObjectSpec.disk(radius=min(args.width, args.height) * args.pitch / 12),
        args.z, args.width, args.height, args.pitch, args.pitch, optics)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in (ASM, BLDSF):
            raise FieldError(f"unknown method {m!r}")

    reports = []
    fps_by_method = {}
    for method in methods:
        cache = PlanCache()
        params = ReconstructionParams.from_display(
            z_m=args.z, magnification=1.0, method=method, output="amplitude")
        reconstruct_frame(hologram, params, cache)  # warm-up builds the plan
        plan = cache.get_or_create(method, args.width, args.height,
                                   args.pitch, args.pitch, params.z,
                                   1.0 if method == ASM else params.magnification,
                                   optics)
        times = []
        for _ in range(args.frames):
            t0 = time.perf_counter()
            reconstruct_frame(hologram, params, cache)
            times.append(time.perf_counter() - t0)
        mean_fps = args.frames / sum(times)
        fps_by_method[method] = mean_fps
        report = {
            "method": method,
            "frames": args.frames,
            "mean_fps": round(mean_fps, 4),
            "p50_ms": round(statistics.median(times) * 1e3, 3),
            "peak_bytes_estimate": plan.apply_peak_bytes,
        }
        reports.append(report)
        print(json.dumps(report))
        print(f"# {method}: {mean_fps:.3f} fps", file=sys.stderr)

    if ASM in fps_by_method and BLDSF in fps_by_method:
        speedup = {"speedup_bldsf_over_asm":
                   round(fps_by_method[BLDSF] / fps_by_method[ASM], 4)}
        reports.append(speedup)
        print(json.dumps(speedup))

    if args.out:
        Path(args.out).write_text("\n".join(json.dumps(r) for r in reports) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.object == "disk":
        spec = ObjectSpec.disk(radius=args.radius, absorption=args.absorption,
                               phase_shift=args.phase_shift)
    elif args.object == "phase_disk":
        spec = ObjectSpec.disk(radius=args.radius, absorption=0.0,
                               phase_shift=args.phase_shift or np.pi / 4)
    elif args.object == "bars":
        spec = ObjectSpec.bars(period_px=args.period_px,
                               absorption=args.absorption,
                               extent_fraction=0.5)
    else:
        spec = ObjectSpec()
    frame = generate_hologram(spec, args.z, args.width, args.height,
                              args.pitch, args.pitch,
                              OpticalParams(args.wavelength))
    out = Path(args.out)
    if out.suffix.lower() == ".rimg":
        _save_image(frame.image, out)
    else:
        scaled = frame.image.data / frame.image.data.max() * 255.0
        _save_image(RealImage(scaled, frame.image.pitch_x, frame.image.pitch_y), out)
    print(f"wrote {out} ({args.width}x{args.height}, z = {args.z} m)")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .config import load_config
    from .server import create_app

    cfg = load_config(args.config)
    if args.port is not None:
        from dataclasses import replace
        cfg = replace(cfg, port=args.port)
    if args.host is not None:
        from dataclasses import replace
        cfg = replace(cfg, host=args.host)
    app = create_app(cfg, max_fps=args.max_fps)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holostream",
                                description="inline holography reconstruction")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reconstruct", help="reconstruct one hologram file")
    r.add_argument("--input", required=True)
    r.add_argument("--pitch", type=float, default=None, help="meters/pixel")
    r.add_argument("--wavelength", type=float, default=650e-9)
    r.add_argument("--z", type=float, required=True,
                   help="focus distance, meters (positive)")
    r.add_argument("--zoom", type=float, default=1.0)
    r.add_argument("--method", choices=[ASM, BLDSF], default=BLDSF)
    r.add_argument("--out-amp", default=None)
    r.add_argument("--out-phase", default=None)
    r.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("sweep", help="focus sweep with sharpness report")
    s.add_argument("--input", required=True)
    s.add_argument("--pitch", type=float, default=None)
    s.add_argument("--wavelength", type=float, default=650e-9)
    s.add_argument("--z-start", type=float, required=True)
    s.add_argument("--z-end", type=float, required=True)
    s.add_argument("--steps", type=int, default=21)
    s.add_argument("--method", choices=[ASM, BLDSF], default=BLDSF)
    s.add_argument("--out-dir", default="sweep_out")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="per-method throughput benchmark")
    b.add_argument("--width", type=int, default=1920)
    b.add_argument("--height", type=int, default=1440)
    b.add_argument("--frames", type=int, default=5)
    b.add_argument("--methods", default="asm,bldsf")
    b.add_argument("--pitch", type=float, default=2.5e-6)
    b.add_argument("--wavelength", type=float, default=650e-9)
    b.add_argument("--z", type=float, default=0.011)
    b.add_argument("--seed", type=int, default=0, help="reserved; bench scene is deterministic")
    b.add_argument("--out", default=None, help="also write the JSON lines here")
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("simulate", help="write a synthetic hologram")
    m.add_argument("--object", choices=["disk", "phase_disk", "bars", "empty"],
                   default="disk")
    m.add_argument("--radius", type=float, default=50e-6)
    m.add_argument("--period-px", type=float, default=16)
    m.add_argument("--absorption", type=float, default=1.0)
    m.add_argument("--phase-shift", type=float, default=0.0)
    m.add_argument("--width", type=int, default=256)
    m.add_argument("--height", type=int, default=256)
    m.add_argument("--pitch", type=float, default=2.5e-6)
    m.add_argument("--wavelength", type=float, default=650e-9)
    m.add_argument("--z", type=float, default=0.011)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("serve", help="run the control/streaming service")
    v.add_argument("--config", required=True)
    v.add_argument("--port", type=int, default=None)
    v.add_argument("--host", default=None)
    v.add_argument("--max-fps", type=float, default=4.0)
    v.set_defaults(func=cmd_serve)
    return p


def _validate(args, parser: argparse.ArgumentParser) -> None:
    if args.command == "sweep":
        if args.steps < 2:
            parser.error("--steps must be >= 2")
        if args.z_start == args.z_end:
            parser.error("--z-start and --z-end must differ")
    if args.command == "bench":
        if args.width < 64 or args.height < 64:
            parser.error("bench dims must be >= 64")
        if args.frames < 1:
            parser.error("--frames must be >= 1")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    try:
        return args.func(args)
    except (FieldError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
