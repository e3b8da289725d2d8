"""HTTP service: sessions, binary endpoints, job lifecycle, busy handling."""

from __future__ import annotations

import io
import json
import struct
import threading
import time

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient
from PIL import Image

from conftest import dumbbell_cloud, make_scene, orbit_cameras

import arapgs.service as service_module
from arapgs.cli import main as cli_main
from arapgs.renderer import SH_C0, render_u8, sh_to_rgb
from arapgs.service import create_app
from arapgs.splat_io import (
    Camera,
    DragSpec,
    GaussianScene,
    camera_to_json,
    scene_from_ply_bytes,
    scene_to_ply_bytes,
    scenes_equal,
    write_cameras,
    write_dragspec,
    write_ply,
)

DEFORM_CONFIG = {"n_sub": 160, "graph_k": 8, "interp_k": 4, "max_iters": 8}


@pytest.fixture
def scene():
    return make_scene(dumbbell_cloud(), seed=7)


@pytest.fixture
def client():
    return TestClient(create_app())


def upload(client, scene, cameras=None) -> str:
    files = {"scene": ("scene.ply", scene_to_ply_bytes(scene),
                       "application/octet-stream")}
    if cameras is not None:
        doc = json.dumps({"cameras": [camera_to_json(c) for c in cameras]})
        files["cameras"] = ("cameras.json", doc.encode(), "application/json")
    resp = client.post("/api/sessions", files=files)
    assert resp.status_code == 200, resp.text
    return resp.json()["session_id"]


def stretch_payload(scene) -> dict:
    right = scene.centers[np.argmax(scene.centers[:, 0])].astype(np.float64)
    left = scene.centers[np.argmin(scene.centers[:, 0])].astype(np.float64)
    drag = DragSpec(sources=right[None], targets=(right + [0.4, 0.2, 0.0])[None],
                    anchors=left[None])
    return {"drag": drag.to_json(), "config": dict(DEFORM_CONFIG)}


def wait_for(client, job_id: str, timeout: float = 60.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        doc = client.get(f"/api/jobs/{job_id}").json()
        if doc["status"] != "running":
            return doc
        time.sleep(0.01)
    raise TimeoutError(f"job {job_id} still running after {timeout}s")


def three_splat_scene() -> GaussianScene:
    centers = np.array([[0.0, 0.0, 3.0], [0.3, 0.1, 4.0], [-0.2, -0.1, 5.0]])
    colors = np.array([[0.9, 0.2, 0.1], [0.1, 0.8, 0.3], [0.2, 0.3, 0.9]])
    alphas = np.array([0.7, 0.6, 0.8])
    return GaussianScene(
        centers=centers.astype(np.float32),
        rotations=np.tile([1.0, 0, 0, 0], (3, 1)).astype(np.float32),
        log_scales=np.log(np.full((3, 3), 0.25)).astype(np.float32),
        opacity_logits=np.log(alphas / (1 - alphas)).astype(np.float32),
        sh_dc=((colors - 0.5) / SH_C0).astype(np.float32),
        sh_rest=np.empty((3, 0), np.float32),
    )


class TestSessions:
    def test_health(self, client):
        doc = client.get("/api/health").json()
        assert doc["status"] == "ok"
        assert doc["version"]

    def test_upload_reports_scene_stats(self, client, scene):
        sid = upload(client, scene, orbit_cameras(3))
        doc = client.get(f"/api/sessions/{sid}").json()
        assert doc["count"] == scene.count
        assert doc["n_cameras"] == 3
        assert doc["busy"] is False
        assert doc["bbox_diagonal"] > 0

    def test_invalid_ply_rejected(self, client):
        resp = client.post("/api/sessions", files={
            "scene": ("scene.ply", b"not a ply file", "application/octet-stream")})
        assert resp.status_code == 422

    def test_unknown_session_is_404(self, client):
        assert client.get("/api/sessions/deadbeef").status_code == 404
        assert client.post("/api/sessions/deadbeef/revert").status_code == 404

    def test_delete_frees_the_session(self, client, scene):
        sid = upload(client, scene)
        assert client.delete(f"/api/sessions/{sid}").json() == {"deleted": sid}
        assert client.get(f"/api/sessions/{sid}").status_code == 404

    def test_cameras_roundtrip(self, client, scene):
        sid = upload(client, scene)
        assert client.get(f"/api/sessions/{sid}/cameras").json() == {"cameras": []}
        cams = orbit_cameras(2)
        doc = {"cameras": [camera_to_json(c) for c in cams]}
        resp = client.put(f"/api/sessions/{sid}/cameras", json=doc)
        assert resp.json() == {"n_cameras": 2}
        back = client.get(f"/api/sessions/{sid}/cameras").json()["cameras"]
        assert back[0]["fx"] == cams[0].fx
        assert back[0]["c2w"] == [float(v) for v in cams[0].c2w.reshape(-1)]

    def test_malformed_cameras_rejected(self, client, scene):
        sid = upload(client, scene)
        resp = client.put(f"/api/sessions/{sid}/cameras", json={"cams": []})
        assert resp.status_code == 422


class TestBinaryEndpoints:
    @staticmethod
    def parse_pointcloud(raw: bytes):
        (n,) = struct.unpack_from("<I", raw, 0)
        assert len(raw) == 4 + n * 12 + n * 3
        pos = np.frombuffer(raw, dtype="<f4", count=n * 3, offset=4).reshape(n, 3)
        col = np.frombuffer(raw, dtype=np.uint8, count=n * 3,
                            offset=4 + n * 12).reshape(n, 3)
        return pos, col

    def test_pointcloud_layout_matches_scene(self, client, scene):
        sid = upload(client, scene)
        resp = client.get(f"/api/sessions/{sid}/pointcloud")
        assert resp.headers["content-type"] == "application/octet-stream"
        pos, col = self.parse_pointcloud(resp.content)
        np.testing.assert_array_equal(pos, scene.centers)
        want = (sh_to_rgb(scene.sh_dc) * 255.0).round().astype(np.uint8)
        np.testing.assert_array_equal(col, want)

    def test_pointcloud_subsampling(self, client, scene):
        sid = upload(client, scene)
        resp = client.get(f"/api/sessions/{sid}/pointcloud?max_points=10")
        pos, _ = self.parse_pointcloud(resp.content)
        assert pos.shape == (10, 3)
        # every sampled point exists in the scene
        for row in pos:
            assert (np.abs(scene.centers - row) < 1e-7).all(axis=1).any()

    def test_scene_ply_download_roundtrips(self, client, scene):
        sid = upload(client, scene)
        resp = client.get(f"/api/sessions/{sid}/scene.ply")
        assert resp.status_code == 200
        assert scenes_equal(scene_from_ply_bytes(resp.content), scene)

    def test_render_matches_library_renderer(self, client):
        scene = three_splat_scene()
        cam = Camera(width=64, height=48, fx=60.0, fy=60.0, cx=32.0, cy=24.0,
                     c2w=np.eye(4))
        sid = upload(client, scene, [cam])
        resp = client.get(f"/api/sessions/{sid}/render?camera=0")
        assert resp.headers["content-type"] == "image/png"
        got = np.asarray(Image.open(io.BytesIO(resp.content)))
        np.testing.assert_array_equal(got, render_u8(scene, cam))

    def test_render_rejects_bad_camera_and_background(self, client, scene):
        sid = upload(client, scene, orbit_cameras(1))
        assert client.get(f"/api/sessions/{sid}/render?camera=5").status_code == 404
        resp = client.get(f"/api/sessions/{sid}/render?camera=0&background=1,2")
        assert resp.status_code == 422

    def test_pick_hits_splat_and_misses_background(self, client):
        scene = three_splat_scene()
        cam = Camera(width=64, height=48, fx=60.0, fy=60.0, cx=32.0, cy=24.0,
                     c2w=np.eye(4))
        sid = upload(client, scene, [cam])
        hit = client.post(f"/api/sessions/{sid}/pick",
                          json={"camera": 0, "x": 32, "y": 24}).json()
        assert hit["point"] is not None
        np.testing.assert_allclose(hit["point"], [0.0, 0.0, 3.0], atol=0.15)
        miss = client.post(f"/api/sessions/{sid}/pick",
                           json={"camera": 0, "x": 0, "y": 0}).json()
        assert miss["point"] is None

    def test_pick_validates_body(self, client, scene):
        sid = upload(client, scene, orbit_cameras(1))
        resp = client.post(f"/api/sessions/{sid}/pick", json={"camera": 0})
        assert resp.status_code == 422


class TestDeformJobs:
    def test_job_lifecycle_updates_scene(self, client, scene):
        sid = upload(client, scene, orbit_cameras(2))
        before = client.get(f"/api/sessions/{sid}/scene.ply").content

        resp = client.post(f"/api/sessions/{sid}/deform",
                           json=stretch_payload(scene))
        assert resp.status_code == 200, resp.text
        job = wait_for(client, resp.json()["job_id"])
        assert job["status"] == "done", job["error"]
        assert job["kind"] == "deform"
        assert set(job["result"]) == {"iterations", "converged", "final_energy",
                                      "constraints"}
        assert job["result"]["constraints"] >= 2

        after = client.get(f"/api/sessions/{sid}/scene.ply").content
        assert after != before
        # original stays untouched and revert restores it
        assert client.post(f"/api/sessions/{sid}/revert").json() == {
            "reverted": True}
        restored = client.get(f"/api/sessions/{sid}/scene.ply").content
        assert restored == before

    def test_unknown_job_is_404(self, client):
        assert client.get("/api/jobs/deadbeef").status_code == 404

    def test_conflicting_drag_rejected_before_job_starts(self, client, scene):
        sid = upload(client, scene)
        src = scene.centers[3].astype(np.float64)
        drag = DragSpec(sources=np.stack([src, src]),
                        targets=np.stack([src + [1, 0, 0], src + [2, 0, 0]]))
        resp = client.post(f"/api/sessions/{sid}/deform",
                           json={"drag": drag.to_json(),
                                 "config": dict(DEFORM_CONFIG)})
        assert resp.status_code == 422
        # the failed request must not leave the session locked
        assert client.get(f"/api/sessions/{sid}").json()["busy"] is False

    def test_malformed_drag_rejected(self, client, scene):
        sid = upload(client, scene)
        resp = client.post(f"/api/sessions/{sid}/deform", json={"drag": {}})
        assert resp.status_code == 422

    def test_unknown_config_key_rejected(self, client, scene):
        sid = upload(client, scene)
        payload = stretch_payload(scene)
        payload["config"]["n_subb"] = 3
        resp = client.post(f"/api/sessions/{sid}/deform", json=payload)
        assert resp.status_code == 422
        assert "n_subb" in resp.text

    def test_busy_session_rejects_concurrent_mutations(self, client, scene,
                                                       monkeypatch):
        gate = threading.Event()
        real_deform = service_module.deform

        def slow_deform(s, drag, cfg):
            gate.wait(timeout=60)
            return real_deform(s, drag, cfg)

        monkeypatch.setattr(service_module, "deform", slow_deform)
        sid = upload(client, scene, orbit_cameras(2))
        payload = stretch_payload(scene)
        job_id = client.post(f"/api/sessions/{sid}/deform",
                             json=payload).json()["job_id"]
        try:
            assert client.get(f"/api/sessions/{sid}").json()["busy"] is True
            assert client.post(f"/api/sessions/{sid}/deform",
                               json=payload).status_code == 409
            assert client.post(f"/api/sessions/{sid}/refine",
                               json={}).status_code == 409
            assert client.post(f"/api/sessions/{sid}/revert").status_code == 409
            assert client.delete(f"/api/sessions/{sid}").status_code == 409
        finally:
            gate.set()
        job = wait_for(client, job_id)
        assert job["status"] == "done", job["error"]
        assert client.get(f"/api/sessions/{sid}").json()["busy"] is False
        assert client.post(f"/api/sessions/{sid}/revert").status_code == 200


class TestRefineJobs:
    def test_requires_cameras(self, client, scene):
        sid = upload(client, scene)
        resp = client.post(f"/api/sessions/{sid}/refine", json={})
        assert resp.status_code == 422
        assert "cameras" in resp.text

    def test_unknown_option_rejected(self, client, scene):
        sid = upload(client, scene, orbit_cameras(1))
        resp = client.post(f"/api/sessions/{sid}/refine",
                           json={"config": {"learning_rate": 0.1}})
        assert resp.status_code == 422
        assert client.get(f"/api/sessions/{sid}").json()["busy"] is False

    def test_undeformed_scene_refines_to_noop(self, client, scene):
        sid = upload(client, scene, orbit_cameras(2))
        resp = client.post(f"/api/sessions/{sid}/refine",
                           json={"config": {"iterations": 3}})
        assert resp.status_code == 200, resp.text
        job = wait_for(client, resp.json()["job_id"])
        assert job["status"] == "done", job["error"]
        assert job["result"] == {"iterations": 0, "optimized_gaussians": 0,
                                 "final_loss": None}


class TestCliServiceParity:
    def test_deform_outputs_are_bitwise_identical(self, client, scene, tmp_path):
        payload = stretch_payload(scene)

        write_ply(scene, tmp_path / "scene.ply")
        drag = DragSpec(
            sources=np.asarray(payload["drag"]["handles"][0]["source"])[None],
            targets=np.asarray(payload["drag"]["handles"][0]["target"])[None],
            anchors=np.asarray(payload["drag"]["anchors"]),
        )
        write_dragspec(drag, tmp_path / "drag.json")
        res = CliRunner().invoke(cli_main, [
            "deform", "--scene", str(tmp_path / "scene.ply"),
            "--drag", str(tmp_path / "drag.json"),
            "--out", str(tmp_path / "out"),
            "--n-sub", "160", "--graph-k", "8", "--interp-k", "4",
            "--max-iters", "8"])
        assert res.exit_code == 0, res.output

        sid = upload(client, scene)
        job_id = client.post(f"/api/sessions/{sid}/deform",
                             json=payload).json()["job_id"]
        job = wait_for(client, job_id)
        assert job["status"] == "done", job["error"]
        served = client.get(f"/api/sessions/{sid}/scene.ply").content
        assert served == (tmp_path / "out" / "deformed.ply").read_bytes()
