"""Control and streaming service.

One pipeline worker feeds every connected client: parameters are
last-writer-wins across clients, frames fan out through per-client
depth-1 queues so a stalled client only drops its own frames. The control
plane is JSON text over the websocket; the data plane is binary frame
messages on the same socket.
"""

from __future__ import annotations

import asyncio
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .config import AppConfig
from .fields import FieldError
from .ingest import build_source
from .pipeline import (
    MAG_RANGE,
    Z_RANGE,
    ParamsMailbox,
    ReconstructionParams,
    TimedFrame,
    run_loop,
)
from .protocol import (
    KIND_AMPLITUDE,
    KIND_PHASE,
    FrameMessage,
    GetInfo,
    Pause,
    ProtocolError,
    Resume,
    SetParams,
    decode_control,
    encode_frame,
)

__all__ = ["HoloService", "create_app"]

DEFAULT_MAX_FPS = 4.0

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>holostream</title></head>
<body><h1>holostream service</h1>
<p>No viewer assets configured. Point <code>assets_dir</code> at the built
frontend, or talk to <code>GET /info</code> and the <code>/stream</code>
websocket directly.</p></body></html>
"""


class _ThrottledSource:
    """Wraps a source with pause support and a frame-rate ceiling."""

    def __init__(self, inner, paused: threading.Event, stop: threading.Event,
                 max_fps: float):
        self.inner = inner
        self.paused = paused
        self.stop = stop
        self.min_interval = 1.0 / max_fps if max_fps > 0 else 0.0
        self._last = 0.0

    def next_frame(self):
        while self.paused.is_set() and not self.stop.is_set():
            time.sleep(0.02)
        if self.stop.is_set():
            return None
        now = time.monotonic()
        wait = self._last + self.min_interval - now
        if wait > 0:
            time.sleep(wait)
        self._last = time.monotonic()
        return self.inner.next_frame()


class HoloService:
    """Owns the reconstruction worker and the client fan-out."""

    def __init__(self, config: AppConfig, max_fps: float = DEFAULT_MAX_FPS):
        self.config = config
        self.max_fps = max_fps
        self.inbox = ParamsMailbox(config.defaults)
        self._params = config.defaults
        self._params_lock = threading.Lock()
        self.paused = threading.Event()
        self._stop = threading.Event()
        self._worker: threading.Thread | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._clients: dict[int, asyncio.Queue] = {}
        self._next_client = 0
        self._clients_lock = threading.Lock()
        self._last_fps = 0.0
        self._frame_dims: tuple[int, int] | None = None
        self._probe_dims()

    # -- lifecycle ---------------------------------------------------------

    def start(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop
        source = _ThrottledSource(build_source(self.config.source, self.config.optics),
                                  self.paused, self._stop, self.max_fps)
        self._worker = threading.Thread(
            target=run_loop, args=(source, self.inbox, self._publish),
            kwargs={"stop": self._stop, "on_event": self._on_event},
            name="holostream-worker", daemon=True)
        self._worker.start()

    def stop(self) -> None:
        self._stop.set()
        if self._worker is not None:
            self._worker.join(timeout=5.0)

    def _probe_dims(self) -> None:
        cfg = self.config.source
        if cfg.target_width is not None:
            self._frame_dims = (cfg.target_width, cfg.target_height)
        elif cfg.kind == "synthetic":
            self._frame_dims = (cfg.width, cfg.height)
        elif cfg.kind in ("single_file", "directory_sequence"):
            probe = build_source(cfg, self.config.optics)
            frame = probe.next_frame()
            if frame is not None:
                self._frame_dims = (frame.image.width, frame.image.height)

    # -- worker side -------------------------------------------------------

    def _on_event(self, kind, detail=None) -> None:
        if kind == "error":
            # Keep serving; the viewer simply keeps the previous frame.
            pass

    def _publish(self, timed: TimedFrame) -> None:
        self._last_fps = timed.instantaneous_fps
        messages = []
        for kind, img in ((KIND_AMPLITUDE, timed.display_amplitude),
                          (KIND_PHASE, timed.display_phase)):
            if img is None:
                continue
            msg = FrameMessage(kind=kind, width=img.width, height=img.height,
                               pitch_m=timed.output_pitch_x,
                               z_m=timed.params.display_z,
                               magnification=timed.params.magnification,
                               fps=timed.instantaneous_fps,
                               sequence=timed.sequence,
                               payload=np.clip(img.data, 0, 255)
                               .astype(np.uint8).tobytes())
            messages.append(encode_frame(msg))
        if not messages or self._loop is None:
            return
        with self._clients_lock:
            queues = list(self._clients.values())
        for q in queues:
            self._loop.call_soon_threadsafe(self._offer, q, messages)

    @staticmethod
    def _offer(q: asyncio.Queue, messages) -> None:
        if q.full():
            try:
                q.get_nowait()
            except asyncio.QueueEmpty:
                pass
        q.put_nowait(messages)

    # -- client side -------------------------------------------------------

    def register(self) -> tuple[int, asyncio.Queue]:
        q: asyncio.Queue = asyncio.Queue(maxsize=1)
        with self._clients_lock:
            cid = self._next_client
            self._next_client += 1
            self._clients[cid] = q
        return cid, q

    def unregister(self, cid: int) -> None:
        with self._clients_lock:
            self._clients.pop(cid, None)

    def set_params(self, msg: SetParams) -> tuple[ReconstructionParams, bool]:
        try:
            params = ReconstructionParams.from_display(
                msg.z_m, msg.magnification, msg.method, msg.output)
        except FieldError as exc:
            raise ProtocolError(str(exc)) from exc
        clamped = (params.display_z != msg.z_m
                   or params.magnification != msg.magnification)
        with self._params_lock:
            self._params = params
        self.inbox.post(params)
        return params, clamped

    def info(self) -> dict:
        with self._params_lock:
            params = self._params
        w, h = self._frame_dims or (None, None)
        cfg = self.config.source
        pitch_x = cfg.pitch_x
        pitch_y = cfg.pitch_y
        if cfg.target_width is not None:
            pitch_x = cfg.pitch_x * cfg.width / cfg.target_width
            pitch_y = cfg.pitch_y * cfg.height / cfg.target_height
        return {
            "width": w,
            "height": h,
            "pitch_x_m": pitch_x,
            "pitch_y_m": pitch_y,
            "wavelength_m": self.config.optics.wavelength,
            "methods": ["asm", "bldsf"],
            "z_min_m": -Z_RANGE[1],
            "z_max_m": Z_RANGE[1],
            "magnification_min": MAG_RANGE[0],
            "magnification_max": MAG_RANGE[1],
            "paused": self.paused.is_set(),
            "fps": self._last_fps,
            "params": {
                "z_m": params.display_z,
                "magnification": params.magnification,
                "method": params.method,
                "output": params.output,
            },
        }


async def _handle_control(service: HoloService, ws: WebSocket, text: str) -> None:
    msg = decode_control(text)
    if isinstance(msg, SetParams):
        params, clamped = service.set_params(msg)
        await ws.send_text(_json({
            "type": "ack", "clamped": clamped,
            "applied": {"z_m": params.display_z,
                        "magnification": params.magnification,
                        "method": params.method,
                        "output": params.output}}))
    elif isinstance(msg, GetInfo):
        await ws.send_text(_json({"type": "info", **service.info()}))
    elif isinstance(msg, Pause):
        service.paused.set()
        await ws.send_text(_json({"type": "ack", "paused": True}))
    elif isinstance(msg, Resume):
        service.paused.clear()
        await ws.send_text(_json({"type": "ack", "paused": False}))


def _json(obj) -> str:
    import json
    return json.dumps(obj)


def create_app(config: AppConfig, max_fps: float = DEFAULT_MAX_FPS) -> FastAPI:
    service = HoloService(config, max_fps=max_fps)
    app = FastAPI(title="holostream")
    app.state.service = service

    @app.on_event("startup")
    async def _startup():
        service.start(asyncio.get_running_loop())

    @app.on_event("shutdown")
    async def _shutdown():
        service.stop()

    @app.get("/info")
    async def info():
        return JSONResponse(service.info())

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        cid, queue = service.register()

        async def sender():
            while True:
                messages = await queue.get()
                for data in messages:
                    await ws.send_bytes(data)

        send_task = asyncio.create_task(sender())
        try:
            while True:
                text = await ws.receive_text()
                try:
                    await _handle_control(service, ws, text)
                except ProtocolError as exc:
                    # This client broke protocol: tell it and drop it.
                    await ws.send_text(_json({"type": "error", "message": str(exc)}))
                    break
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            service.unregister(cid)
            try:
                await ws.close()
            except RuntimeError:
                pass

    assets = Path(config.assets_dir) if config.assets_dir else None
    if assets and assets.is_dir():
        app.mount("/", StaticFiles(directory=str(assets), html=True), name="viewer")
    else:
        @app.get("/")
        async def index():
            return HTMLResponse(_FALLBACK_PAGE)

    return app
