import json
import time

import numpy as np
import pytest

from physweave.camera import CameraPose
from physweave.preview import (PreviewSession, build_app,
                               decode_frame_message, encode_frame_message)
from physweave.sceneconfig import force_defaults
from physweave.simcore import RigidBody, SimState


def make_session(size=64, fields=None, fps=240.0, z0=0.1):
    body = RigidBody(object_id=2, x=[0.0, 0.0, z0], v=[0, 0, 0], mass=1.0,
                     proxy="sphere", radius=0.1, mu=0.3)
    state = SimState(bodies=[body],
                     fields=fields if fields is not None
                     else [force_defaults("constant")])
    pose = CameraPose([0.0, -1.5, 0.4], [0.0, 0.0, 0.1], 45.0)
    background = np.full((size, size, 3), 0.5)
    return PreviewSession(state, pose, background, {}, size=size,
                          fps_target=fps)


class TestProtocol:
    def test_frame_message_roundtrip(self):
        blob = encode_frame_message(7, 123.5, b"PNGDATA",
                                    {"sim_frame": 7, "objects": 1})
        idx, ts, png, summary = decode_frame_message(blob)
        assert idx == 7
        assert ts == 123.5
        assert png == b"PNGDATA"
        assert summary["objects"] == 1

    def test_tick_produces_decodable_frame(self):
        session = make_session()
        blob = session.tick()
        idx, _, png, summary = decode_frame_message(blob)
        assert idx == 0
        assert png.startswith(b"\x89PNG")
        assert summary["sim_frame"] == 1
        blob2 = session.tick()
        assert decode_frame_message(blob2)[0] == 1  # strictly increasing


class TestCommands:
    def test_pause_resume_contiguous(self):
        session = make_session()
        session.tick()
        assert session.state.frame == 1
        session.enqueue({"type": "pause"})
        session.tick()
        session.tick()
        assert session.state.frame == 1  # no steps while paused
        session.enqueue({"type": "resume"})
        session.tick()
        assert session.state.frame == 2  # contiguous, no skipped frames

    def test_reset_restores_bit_identical_state(self):
        session = make_session(z0=0.5)
        initial_x = session.initial.bodies[0].x.copy()
        initial_v = session.initial.bodies[0].v.copy()
        for _ in range(10):
            session.tick()
        assert not np.array_equal(session.state.bodies[0].x, initial_x)
        session.enqueue({"type": "pause"})
        session.enqueue({"type": "reset"})
        session.tick()
        assert np.array_equal(session.state.bodies[0].x, initial_x)
        assert np.array_equal(session.state.bodies[0].v, initial_v)
        assert session.state.frame == 0

    def test_no_commands_matches_pure_sim(self):
        from physweave.simcore import run_sim
        session = make_session()
        reference = session.initial.clone()
        for _ in range(25):
            session.tick()
        run_sim(reference, 25)
        assert np.array_equal(session.state.bodies[0].x,
                              reference.bodies[0].x)
        assert np.array_equal(session.state.bodies[0].v,
                              reference.bodies[0].v)

    def test_point_force_kicks_resting_sphere(self):
        session = make_session()
        for _ in range(40):  # let it settle on the ground
            session.tick()
        assert abs(session.state.bodies[0].v[0]) < 1e-6
        session.enqueue({"type": "apply_point_force",
                         "x_px": 32, "y_px": 32,
                         "dir_x": 1.0, "dir_y": 0.0, "strength": 0.8})
        session.tick()
        assert session.state.bodies[0].v[0] > 0.1

    def test_point_force_misses_empty_pixel(self):
        session = make_session()
        session.enqueue({"type": "apply_point_force",
                         "x_px": 2, "y_px": 2,
                         "dir_x": 1.0, "dir_y": 0.0, "strength": 0.8})
        session.tick()
        assert abs(session.state.bodies[0].v[0]) < 1e-9

    def test_toggle_field(self):
        session = make_session()
        session.enqueue({"type": "toggle_field", "field_index": 0})
        blob = session.tick()
        summary = decode_frame_message(blob)[3]
        assert summary["active_fields"] == []
        assert abs(session.state.bodies[0].v[2]) < 1e-12  # gravity off

    def test_set_timescale(self):
        session = make_session()
        session.enqueue({"type": "set_timescale", "timescale": 3.0})
        session.tick()
        assert session.state.frame == 3

    def test_malformed_commands_rejected(self):
        session = make_session()
        assert not session.handle_command_text("{nonsense")["ok"]
        assert not session.handle_command_text(
            json.dumps({"type": "warp_drive"}))["ok"]
        assert not session.handle_command_text(
            json.dumps({"type": "apply_point_force", "x_px": 1}))["ok"]
        assert not session.handle_command_text(
            json.dumps({"type": "set_camera_mode", "mode": "zigzag"}))["ok"]
        assert not session.handle_command_text(
            json.dumps({"type": "set_timescale", "timescale": -1}))["ok"]
        ack = session.handle_command_text(json.dumps({"type": "pause"}))
        assert ack["ok"]
        session.tick()
        assert session.paused  # only the valid command was applied

    def test_camera_mode_command(self):
        session = make_session()
        session.enqueue({"type": "set_camera_mode", "mode": "orbit_xy_ccw"})
        session.tick()
        assert session.camera_mode == "orbit_xy_ccw"


def recv_frame(ws, tries=50):
    for _ in range(tries):
        msg = ws.receive()
        if "bytes" in msg and msg["bytes"]:
            return decode_frame_message(msg["bytes"])
    raise AssertionError("no frame received")


def recv_ack(ws, tries=50):
    for _ in range(tries):
        msg = ws.receive()
        if "text" in msg and msg["text"]:
            return json.loads(msg["text"])
    raise AssertionError("no ack received")


class TestHttpApp:
    def test_status_and_scene_endpoints(self):
        from fastapi.testclient import TestClient
        session = make_session()
        app = build_app(session, ui_dir=None)
        client = TestClient(app)
        session.tick()
        status = client.get("/status").json()
        assert status["sim_frame"] == 1
        assert status["clients"] == 0
        page = client.get("/scene")
        assert page.status_code == 200
        assert "physweave" in page.text

    def test_scene_serves_built_ui_bundle_when_present(self, tmp_path):
        from fastapi.testclient import TestClient
        bundle = tmp_path / "dist"
        bundle.mkdir()
        (bundle / "index.html").write_text("<html>bundle-ok</html>")
        (bundle / "main.js").write_text("export {};")
        session = make_session()
        client = TestClient(build_app(session, ui_dir=bundle))
        assert "bundle-ok" in client.get("/scene").text
        assert client.get("/scene/main.js").status_code == 200
        assert client.get("/scene/../secret").status_code == 404

    def test_websocket_first_frame_within_two_seconds(self):
        from fastapi.testclient import TestClient
        session = make_session(fps=60.0)
        app = build_app(session, ui_dir=None)
        client = TestClient(app)
        session.start()
        try:
            t0 = time.perf_counter()
            with client.websocket_connect("/ws") as ws:
                idx, _, png, summary = recv_frame(ws)
                assert time.perf_counter() - t0 < 2.0
                assert png.startswith(b"\x89PNG")
        finally:
            session.stop()

    def test_two_clients_share_the_stream(self):
        from fastapi.testclient import TestClient
        session = make_session(fps=120.0)
        app = build_app(session, ui_dir=None)
        client = TestClient(app)
        try:
            with client.websocket_connect("/ws") as ws1, \
                    client.websocket_connect("/ws") as ws2:
                session.start()
                a = recv_frame(ws1)
                b = recv_frame(ws2)
                assert a[0] == b[0] == 0  # both start at stream index 0
                a2 = recv_frame(ws1)
                b2 = recv_frame(ws2)
                assert a2[0] == b2[0]
                assert a2[0] > a[0]
        finally:
            session.stop()

    def test_command_over_websocket(self):
        from fastapi.testclient import TestClient
        session = make_session(fps=60.0)
        app = build_app(session, ui_dir=None)
        client = TestClient(app)
        session.start()
        try:
            with client.websocket_connect("/ws") as ws:
                recv_frame(ws)
                ws.send_text(json.dumps({"type": "pause"}))
                ack = recv_ack(ws)
                assert ack["ok"] and ack["type"] == "pause"
                time.sleep(0.1)
                assert session.paused
        finally:
            session.stop()

    def test_backpressure_drops_but_keeps_order(self):
        session = make_session()
        q = session.register()
        for i in range(10):  # slow client: nobody drains the queue
            session._broadcast(encode_frame_message(i, 0.0, b"x", {}))
        received = []
        while not q.empty():
            received.append(decode_frame_message(q.get())[0])
        assert len(received) == 2          # bounded queue
        assert received == sorted(received)
        assert received[-1] == 9           # newest frame survives
        session.unregister(q)
