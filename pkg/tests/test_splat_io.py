"""Scene/camera/drag file formats: round trips, schema errors, oracles."""

import json

import numpy as np
import pytest

from arapgs.errors import DataError, FormatError, SchemaError
from arapgs.splat_io import (
    BoxRegion,
    Camera,
    DragSpec,
    SphereRegion,
    camera_from_json,
    camera_to_json,
    cameras_from_json,
    dragspec_from_json,
    read_dragspec,
    read_ply,
    scene_from_ply_bytes,
    scene_to_ply_bytes,
    scenes_equal,
    write_dragspec,
    write_ply,
)

from conftest import grid_cloud, make_scene
from oracles import write_ply_struct


class TestPlyRoundTrip:
    def test_write_matches_struct_oracle(self):
        scene = make_scene(grid_cloud(20, seed=1), seed=1, sh_rest=True)
        assert scene_to_ply_bytes(scene) == write_ply_struct(scene)

    def test_write_matches_struct_oracle_degree0(self):
        scene = make_scene(grid_cloud(11, seed=2), seed=2, sh_rest=False)
        assert scene_to_ply_bytes(scene) == write_ply_struct(scene)

    @pytest.mark.parametrize("sh_rest", [False, True])
    def test_read_write_read_identity(self, tmp_path, sh_rest):
        scene = make_scene(grid_cloud(30, seed=3), seed=3, sh_rest=sh_rest)
        path = tmp_path / "scene.ply"
        write_ply(scene, path)
        again = read_ply(path)
        assert scenes_equal(scene, again)

    def test_canonical_file_roundtrips_byte_identical(self, tmp_path):
        scene = make_scene(grid_cloud(12, seed=4), seed=4, sh_rest=True)
        raw = scene_to_ply_bytes(scene)
        assert scene_to_ply_bytes(scene_from_ply_bytes(raw)) == raw

    def test_property_order_is_honored(self):
        """Attributes land in the right columns even when interleaved."""
        scene = make_scene(grid_cloud(5, seed=5), seed=5)
        names = (
            ["opacity", "rot_0", "rot_1", "rot_2", "rot_3"]
            + ["x", "y", "z"]
            + ["scale_0", "scale_1", "scale_2"]
            + ["f_dc_0", "f_dc_1", "f_dc_2"]
        )
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            f"element vertex {scene.count}\n"
            + "".join(f"property float {n}\n" for n in names)
            + "end_header\n"
        )
        cols = np.hstack([
            scene.opacity_logits[:, None], scene.rotations, scene.centers,
            scene.log_scales, scene.sh_dc,
        ]).astype("<f4")
        parsed = scene_from_ply_bytes(header.encode() + cols.tobytes())
        assert scenes_equal(parsed, scene)

    def test_unknown_properties_skipped(self):
        scene = make_scene(grid_cloud(4, seed=6), seed=6)
        canonical = scene_to_ply_bytes(scene)
        head, payload = canonical.split(b"end_header\n", 1)
        head = head.decode().replace(
            "property float rot_3\n",
            "property float rot_3\nproperty float my_extra\n",
        )
        rows = np.frombuffer(payload, dtype="<f4").reshape(scene.count, -1)
        rows = np.hstack([rows, np.full((scene.count, 1), 7.5, "<f4")])
        parsed = scene_from_ply_bytes(head.encode() + b"end_header\n" + rows.tobytes())
        assert scenes_equal(parsed, scene)


class TestPlyErrors:
    def test_missing_property_names_it(self):
        raw = (
            b"ply\nformat binary_little_endian 1.0\nelement vertex 0\n"
            b"property float x\nproperty float y\nproperty float z\n"
            b"end_header\n"
        )
        with pytest.raises(SchemaError, match="f_dc_0"):
            scene_from_ply_bytes(raw)

    def test_wrong_type_names_property(self):
        scene = make_scene(grid_cloud(3, seed=7), seed=7)
        raw = scene_to_ply_bytes(scene).replace(
            b"property float opacity", b"property double opacity"
        )
        with pytest.raises(SchemaError, match="opacity"):
            scene_from_ply_bytes(raw)

    def test_truncated_payload(self):
        scene = make_scene(grid_cloud(6, seed=8), seed=8)
        raw = scene_to_ply_bytes(scene)
        with pytest.raises(FormatError, match="payload"):
            scene_from_ply_bytes(raw[:-8])

    def test_not_a_ply(self):
        with pytest.raises(FormatError):
            scene_from_ply_bytes(b"obviously not ply data")

    def test_big_endian_rejected(self):
        scene = make_scene(grid_cloud(3, seed=9), seed=9)
        raw = scene_to_ply_bytes(scene).replace(b"binary_little_endian", b"binary_big_endian")
        with pytest.raises(FormatError, match="format"):
            scene_from_ply_bytes(raw)

    def test_nan_payload_names_gaussian(self):
        scene = make_scene(grid_cloud(5, seed=10), seed=10)
        scene.centers[3, 1] = np.nan
        with pytest.raises(DataError, match="Gaussian 3"):
            scene_from_ply_bytes(scene_to_ply_bytes(scene))

    def test_nonempty_other_element_rejected(self):
        scene = make_scene(grid_cloud(3, seed=11), seed=11)
        raw = scene_to_ply_bytes(scene).replace(
            b"end_header", b"element face 2\nend_header"
        )
        with pytest.raises(FormatError, match="element"):
            scene_from_ply_bytes(raw)


class TestCameras:
    def _cam_obj(self):
        return {
            "width": 640, "height": 480,
            "fx": 500.0, "fy": 500.0, "cx": 320.0, "cy": 240.0,
            "c2w": list(np.eye(4).reshape(-1)),
            "image": None,
        }

    def test_roundtrip(self):
        cam = camera_from_json(self._cam_obj(), "/cameras/0")
        again = camera_from_json(camera_to_json(cam), "/cameras/0")
        assert np.array_equal(cam.c2w, again.c2w)
        assert (cam.fx, cam.fy, cam.cx, cam.cy) == (again.fx, again.fy, again.cx, again.cy)

    def test_w2c_inverts_c2w(self):
        from conftest import look_at

        cam = Camera(64, 48, 60, 60, 32, 24, look_at((3.0, 1.0, -2.0)))
        assert np.allclose(cam.w2c() @ cam.c2w, np.eye(4), atol=1e-12)

    def test_missing_field_pointer(self):
        obj = self._cam_obj()
        del obj["fx"]
        with pytest.raises(SchemaError, match="/cameras/0/fx"):
            camera_from_json(obj, "/cameras/0")

    def test_reflection_rejected(self):
        obj = self._cam_obj()
        m = np.eye(4)
        m[0, 0] = -1.0
        obj["c2w"] = list(m.reshape(-1))
        with pytest.raises(SchemaError, match="determinant"):
            camera_from_json(obj, "/cameras/0")

    def test_non_orthonormal_rejected(self):
        obj = self._cam_obj()
        m = np.eye(4)
        m[0, 1] = 0.05
        obj["c2w"] = list(m.reshape(-1))
        with pytest.raises(SchemaError, match="orthonormal"):
            camera_from_json(obj, "/cameras/0")

    def test_cameras_list_pointer(self):
        doc = {"cameras": [self._cam_obj(), {"width": 1}]}
        with pytest.raises(SchemaError, match="/cameras/1"):
            cameras_from_json(doc)


class TestDragSpec:
    def test_roundtrip(self, tmp_path):
        spec = DragSpec(
            sources=np.array([[0.5, 0.0, 0.0]]),
            targets=np.array([[0.5, 0.5, 0.0]]),
            anchors=np.array([[-0.5, 0.0, 0.0]]),
            region=BoxRegion(np.array([-1.0, -1, -1]), np.array([1.0, 1, 1])),
            auto_anchor_radius=0.75,
        )
        path = tmp_path / "drag.json"
        write_dragspec(spec, path)
        again = read_dragspec(path)
        assert np.array_equal(spec.sources, again.sources)
        assert np.array_equal(spec.targets, again.targets)
        assert np.array_equal(spec.anchors, again.anchors)
        assert isinstance(again.region, BoxRegion)
        assert again.auto_anchor_radius == 0.75

    def test_empty_handles_rejected(self):
        with pytest.raises(SchemaError, match="/handles"):
            dragspec_from_json({"handles": []})

    def test_bad_vector_pointer(self):
        doc = {"handles": [{"source": [0, 0], "target": [0, 0, 0]}]}
        with pytest.raises(SchemaError, match="/handles/0/source"):
            dragspec_from_json(doc)

    def test_source_outside_region(self):
        doc = {
            "handles": [{"source": [5.0, 0, 0], "target": [5.0, 1, 0]}],
            "region": {"type": "sphere", "center": [0, 0, 0], "radius": 1.0},
        }
        with pytest.raises(SchemaError, match="/handles/0/source"):
            dragspec_from_json(doc)

    def test_sphere_region_membership(self):
        region = SphereRegion(np.zeros(3), 1.0)
        inside = region.contains(np.array([[0.5, 0, 0], [0, 0, 1.0], [1.5, 0, 0]]))
        assert inside.tolist() == [True, True, False]

    def test_non_finite_rejected(self):
        doc = {"handles": [{"source": [0, 0, 0], "target": [0, 0, None]}]}
        with pytest.raises(SchemaError):
            dragspec_from_json(doc)

    def test_json_serializable(self):
        spec = DragSpec(
            sources=np.zeros((1, 3)), targets=np.ones((1, 3)),
            region=SphereRegion(np.zeros(3), 2.0),
        )
        json.dumps(spec.to_json())
