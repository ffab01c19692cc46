"""Live steerable physics preview.

One simulation thread owns the state; a command queue is the only mutation
path, and commands are applied atomically between whole sim steps. Frames
are rasterized at preview resolution, composited, PNG-encoded and fanned
out to per-client bounded queues (slow clients drop frames, never stall the
loop).

Wire protocol (version 1), over a single WebSocket at /ws:
  server -> client, binary:
      u8   message type (0x01 = frame)
      u32  stream index (little-endian, strictly increasing per session)
      f64  timestamp (seconds, wall clock)
      u32  PNG byte count, then the PNG image
      u32  summary byte count, then UTF-8 JSON:
           {sim_frame, sim_time, objects, active_fields, paused}
  client -> server, text: one JSON command per message with fields
      type: apply_point_force | toggle_field | set_camera_mode | pause |
            resume | reset | set_timescale
      x_px, y_px, dir_x, dir_y, strength   (apply_point_force)
      field_index                          (toggle_field)
      mode                                 (set_camera_mode)
      timescale                            (set_timescale)
  server -> client, text: JSON ack {ok, type, reason?}.

HTTP: GET /status (session summary JSON), GET /scene (static UI bundle).
"""

import json
import math
import queue
import struct
import threading
import time
from pathlib import Path

import numpy as np

from .camera import (CAMERA_MODES, CameraPose, camera_init,
                     camera_motion_pose, focal_px, rasterize)
from .errors import PhysweaveError
from .images import encode_png, load_png, resize
from .render import composite_frame
from .simcore import scene_view, sim_step

DEFAULT_PORT = 8787
FRAME_MSG = 0x01
COMMAND_KINDS = ("apply_point_force", "toggle_field", "set_camera_mode",
                 "pause", "resume", "reset", "set_timescale")
_FALLBACK_PAGE = """<!doctype html>
<html><head><title>physweave preview</title></head>
<body style="font-family: sans-serif">
<h2>physweave preview</h2>
<p>The browser UI bundle is not built. Build it with
<code>npm install &amp;&amp; npm run build</code> in the frontend directory,
or connect a client to the WebSocket at <code>/ws</code> directly.</p>
<p>Session status: <a href="/status">/status</a></p>
</body></html>"""


def encode_frame_message(stream_index: int, timestamp: float, png: bytes,
                         summary: dict) -> bytes:
    summary_bytes = json.dumps(summary).encode("utf-8")
    return (struct.pack("<BId", FRAME_MSG, stream_index, timestamp)
            + struct.pack("<I", len(png)) + png
            + struct.pack("<I", len(summary_bytes)) + summary_bytes)


def decode_frame_message(blob: bytes) -> tuple[int, float, bytes, dict]:
    if len(blob) < 17 or blob[0] != FRAME_MSG:
        raise PhysweaveError("not a frame message")
    _, index, ts = struct.unpack_from("<BId", blob, 0)
    offset = 13
    (png_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    png = blob[offset:offset + png_len]
    offset += png_len
    (sum_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    summary = json.loads(blob[offset:offset + sum_len].decode("utf-8"))
    return index, ts, png, summary


class PreviewSession:
    """Owns the simulation loop and the client fan-out."""

    def __init__(self, state, base_pose: CameraPose, background: np.ndarray,
                 colors: dict, size: int = 256, fps_target: float = 15.0):
        self.state = state
        self.initial = state.clone()
        self.base_pose = base_pose
        self.background = background
        self.colors = colors
        self.size = size
        self.fps_target = fps_target
        self.camera_mode = "static"
        self.timescale = 1.0
        self.paused = False
        self.stream_index = 0
        self._accum = 0.0
        self._commands: queue.Queue = queue.Queue()
        self._clients: list[queue.Queue] = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.last_summary: dict = {}

    # -- client management -------------------------------------------------
    def register(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=2)
        with self._clients_lock:
            self._clients.append(q)
        return q

    def unregister(self, q: queue.Queue) -> None:
        with self._clients_lock:
            if q in self._clients:
                self._clients.remove(q)

    def _broadcast(self, blob: bytes) -> None:
        with self._clients_lock:
            clients = list(self._clients)
        for q in clients:
            while True:
                try:
                    q.put_nowait(blob)
                    break
                except queue.Full:
                    try:
                        q.get_nowait()  # drop the oldest frame
                    except queue.Empty:
                        pass

    # -- commands -----------------------------------------------------------
    def enqueue(self, cmd: dict) -> None:
        self._commands.put(cmd)

    def handle_command_text(self, text: str) -> dict:
        try:
            cmd = json.loads(text)
        except json.JSONDecodeError as exc:
            return {"ok": False, "reason": f"bad JSON: {exc}"}
        ack = self.validate_command(cmd)
        if ack["ok"]:
            self.enqueue(cmd)
        return ack

    @staticmethod
    def validate_command(cmd) -> dict:
        if not isinstance(cmd, dict):
            return {"ok": False, "reason": "command must be a JSON object"}
        kind = cmd.get("type")
        if kind not in COMMAND_KINDS:
            return {"ok": False, "type": kind,
                    "reason": f"unknown command type {kind!r}"}
        if kind == "apply_point_force":
            for key in ("x_px", "y_px", "dir_x", "dir_y", "strength"):
                val = cmd.get(key)
                if not isinstance(val, (int, float)) or not math.isfinite(val):
                    return {"ok": False, "type": kind,
                            "reason": f"missing or non-finite field {key}"}
        if kind == "toggle_field" and not isinstance(cmd.get("field_index"), int):
            return {"ok": False, "type": kind, "reason": "field_index required"}
        if kind == "set_camera_mode":
            mode = cmd.get("mode")
            if mode not in ("static",) + CAMERA_MODES:
                return {"ok": False, "type": kind,
                        "reason": f"unknown camera mode {mode!r}"}
        if kind == "set_timescale":
            ts = cmd.get("timescale")
            if not isinstance(ts, (int, float)) or not (0.0 < ts <= 100.0):
                return {"ok": False, "type": kind,
                        "reason": "timescale must be in (0, 100]"}
        return {"ok": True, "type": kind}

    def _apply(self, cmd: dict) -> None:
        kind = cmd["type"]
        if kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
        elif kind == "reset":
            self.state = self.initial.clone()
            self._accum = 0.0
        elif kind == "set_timescale":
            self.timescale = float(cmd["timescale"])
        elif kind == "set_camera_mode":
            self.camera_mode = cmd["mode"]
        elif kind == "toggle_field":
            i = cmd["field_index"]
            if 0 <= i < len(self.state.field_enabled):
                self.state.field_enabled[i] = not self.state.field_enabled[i]
        elif kind == "apply_point_force":
            self._point_force(cmd)

    def _pose(self) -> CameraPose:
        if self.camera_mode == "static":
            return self.base_pose
        return camera_motion_pose(self.camera_mode, self.state.frame,
                                  self.base_pose)

    def _point_force(self, cmd: dict) -> None:
        pose = self._pose()
        right, down, fwd = pose.basis()
        f = focal_px(pose.fov_deg, self.size)
        px = float(cmd["x_px"]) - self.size / 2.0
        py = float(cmd["y_px"]) - self.size / 2.0
        ray = fwd + right * (px / f) + down * (py / f)
        ray = ray / np.linalg.norm(ray)
        origin = pose.position
        drag = np.asarray([cmd["dir_x"], cmd["dir_y"]], dtype=np.float64)
        norm = np.linalg.norm(drag)
        if norm < 1e-12:
            return
        world_dir = (drag[0] * right + drag[1] * down)
        world_dir /= np.linalg.norm(world_dir)
        strength = float(cmd["strength"])
        best_t, best_kind, best_ref = math.inf, None, None
        for body in self.state.bodies:
            t = _ray_hit_body(origin, ray, body)
            if t is not None and t < best_t:
                best_t, best_kind, best_ref = t, "rigid", body
        for kind, pool in (("mpm", self.state.mpm), ("pbd", self.state.pbd)):
            if pool is None or len(pool) == 0:
                continue
            rel = pool.x - origin
            t_along = rel @ ray
            perp = np.linalg.norm(rel - t_along[:, None] * ray[None, :], axis=1)
            ok = (t_along > 0) & (perp < max(4.0 * pool.particle_size, 0.05))
            if ok.any():
                t = float(t_along[ok].min())
                if t < best_t:
                    best_t, best_kind, best_ref = t, kind, pool
        if best_kind is None:
            return
        if best_kind == "rigid":
            if not best_ref.fixed:
                best_ref.v = best_ref.v + strength * world_dir
        else:
            hit = origin + best_t * ray
            dist = np.linalg.norm(best_ref.x - hit, axis=1)
            sel = dist < 0.1
            if best_kind == "pbd":
                sel &= best_ref.invmass > 0
            if sel.any():
                best_ref.v[sel] += strength * world_dir

    # -- simulation loop ----------------------------------------------------
    def tick(self) -> bytes | None:
        """Drain commands, advance (unless paused), render and encode one
        frame message. Exposed for headless/throughput testing."""
        while True:
            try:
                cmd = self._commands.get_nowait()
            except queue.Empty:
                break
            self._apply(cmd)
        if not self.paused:
            self._accum += self.timescale
            steps = int(self._accum)
            self._accum -= steps
            for _ in range(max(steps, 0)):
                sim_step(self.state)
        view = scene_view(self.state)
        res = rasterize(view.meshes, self._pose(), self.size,
                        point_sets=view.point_sets, colors=self.colors)
        frame = composite_frame(res.frame, self.background)
        png = encode_png(frame.rgb)
        summary = {
            "sim_frame": self.state.frame,
            "sim_time": round(self.state.frame * self.state.dt, 6),
            "objects": len(view.object_stats),
            "active_fields": [i for i, on in enumerate(
                self.state.active_field_flags(self.state.frame)) if on],
            "paused": self.paused,
        }
        self.last_summary = summary
        blob = encode_frame_message(self.stream_index, time.time(), png,
                                    summary)
        self.stream_index += 1
        return blob

    def _loop(self) -> None:
        target = 1.0 / self.fps_target if self.fps_target > 0 else 0.0
        while not self._stop.is_set():
            t0 = time.perf_counter()
            blob = self.tick()
            if blob is not None:
                self._broadcast(blob)
            elapsed = time.perf_counter() - t0
            if target > elapsed:
                self._stop.wait(target - elapsed)

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._loop, daemon=True,
                                        name="physweave-preview")
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def status(self) -> dict:
        with self._clients_lock:
            clients = len(self._clients)
        return {"clients": clients, "paused": self.paused,
                "timescale": self.timescale, "camera_mode": self.camera_mode,
                "stream_index": self.stream_index, **self.last_summary}


def _ray_hit_body(origin, ray, body) -> float | None:
    if body.proxy == "sphere":
        oc = origin - body.x
        b = float(oc @ ray)
        c = float(oc @ oc) - body.radius ** 2
        disc = b * b - c
        if disc < 0:
            return None
        t = -b - math.sqrt(disc)
        return t if t > 0 else None
    # slab test in the body frame
    o = (origin - body.x) @ body.R
    d = ray @ body.R
    t_lo, t_hi = -math.inf, math.inf
    for a in range(3):
        if abs(d[a]) < 1e-12:
            if abs(o[a]) > body.half_extent[a]:
                return None
            continue
        t1 = (-body.half_extent[a] - o[a]) / d[a]
        t2 = (body.half_extent[a] - o[a]) / d[a]
        t_lo = max(t_lo, min(t1, t2))
        t_hi = min(t_hi, max(t1, t2))
    if t_hi < max(t_lo, 0.0):
        return None
    return t_lo if t_lo > 0 else t_hi


# ---------------------------------------------------------------------------
# session construction + HTTP app

def build_session(scene_dir: Path, size: int = 256, seed: int = 0,
                  fps_target: float = 15.0, out=None,
                  particle_size=None) -> PreviewSession:
    from .cli import (_aligned_dir, _load_aligned, _object_colors,
                      _scene_config, _camera_from_json)
    from .simcore import build_sim

    scene_dir = Path(scene_dir)
    cfg, _ = _scene_config(scene_dir, None)
    out_dir = Path(out) if out else scene_dir / "out"
    meshes = _load_aligned(_aligned_dir(scene_dir, out_dir), cfg)
    ordered = [meshes[o.index] for o in cfg.objects]
    camera_path = out_dir / "camera.json"
    pose = _camera_from_json(camera_path) if camera_path.exists() \
        else camera_init(ordered)
    bg_path = scene_dir / "background.png"
    background = resize(load_png(bg_path), size, size) if bg_path.exists() \
        else np.full((size, size, 3), 0.5)
    state = build_sim(cfg, meshes, seed=seed, particle_size=particle_size)
    return PreviewSession(state, pose, background, _object_colors(cfg),
                          size=size, fps_target=fps_target)


def build_app(session: PreviewSession, ui_dir: Path | None = None):
    import asyncio

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import FileResponse, HTMLResponse, JSONResponse
    from starlette.concurrency import run_in_threadpool

    app = FastAPI(title="physweave preview")
    app.state.session = session
    if ui_dir is None:
        import os
        override = os.environ.get("PHYSWEAVE_UI_DIR")
        candidates = [Path(override)] if override else []
        candidates.append(Path(__file__).resolve().parents[2]
                          / "frontend" / "dist")
        ui_dir = next((c for c in candidates if c.is_dir()), None)

    @app.get("/status")
    async def status():
        return JSONResponse(session.status())

    @app.get("/scene")
    async def scene_index():
        if ui_dir is not None and (ui_dir / "index.html").exists():
            return FileResponse(ui_dir / "index.html")
        return HTMLResponse(_FALLBACK_PAGE)

    @app.get("/scene/{asset:path}")
    async def scene_asset(asset: str):
        if ui_dir is not None:
            target = (ui_dir / asset).resolve()
            if target.is_file() and str(target).startswith(str(ui_dir.resolve())):
                return FileResponse(target)
        return HTMLResponse("not found", status_code=404)

    def _q_get(q: queue.Queue):
        try:
            return q.get(timeout=0.25)
        except queue.Empty:
            return None

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        q = session.register()

        async def sender():
            while True:
                blob = await run_in_threadpool(_q_get, q)
                if blob is not None:
                    await ws.send_bytes(blob)

        task = asyncio.create_task(sender())
        try:
            while True:
                text = await ws.receive_text()
                await ws.send_text(json.dumps(session.handle_command_text(text)))
        except WebSocketDisconnect:
            pass
        finally:
            task.cancel()
            session.unregister(q)

    return app


class SessionHandle:
    def __init__(self, session: PreviewSession, server, thread):
        self.session = session
        self._server = server
        self._thread = thread

    def wait(self) -> None:
        self._thread.join()

    def stop(self) -> None:
        self.session.stop()
        self._server.should_exit = True
        self._thread.join(timeout=10.0)


def start_session(scene_dir, port: int = DEFAULT_PORT, size: int = 256,
                  seed: int = 0, fps_target: float = 15.0, out=None
                  ) -> SessionHandle:
    """Build the session, start its loop and serve the protocol on ``port``."""
    import uvicorn

    session = build_session(Path(scene_dir), size=size, seed=seed,
                            fps_target=fps_target, out=out)
    app = build_app(session)
    config = uvicorn.Config(app, host="127.0.0.1", port=port,
                            log_level="warning")
    server = uvicorn.Server(config)
    session.start()
    thread = threading.Thread(target=server.run, daemon=True,
                              name="physweave-server")
    thread.start()
    return SessionHandle(session, server, thread)
