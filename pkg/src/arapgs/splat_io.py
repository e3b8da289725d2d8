"""Reading and writing of Gaussian-splat scenes and the companion JSON formats.

Scenes use the de facto binary-little-endian PLY layout of the 3DGS
ecosystem: float32 properties x,y,z,[nx,ny,nz],f_dc_0..2,[f_rest_0..44],
opacity,scale_0..2,rot_0..3.  Scales are stored as natural logs and opacities
as logits, exactly as on disk; quaternions stay unnormalized so that a
read/write round trip is bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, SchemaError

SH_REST_SIZE = 45  # degrees 1..3, three channels

_POSITION = ("x", "y", "z")
_NORMAL = ("nx", "ny", "nz")
_SH_DC = ("f_dc_0", "f_dc_1", "f_dc_2")
_SH_REST = tuple(f"f_rest_{i}" for i in range(SH_REST_SIZE))
_SCALE = ("scale_0", "scale_1", "scale_2")
_ROT = ("rot_0", "rot_1", "rot_2", "rot_3")

_PLY_TYPE_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}


@dataclass
class GaussianScene:
    """Column-oriented 3DGS scene attributes.

    centers (N,3), rotations (N,4) quaternions in (w,x,y,z) order as stored,
    log_scales (N,3), opacity_logits (N,), sh_dc (N,3) and sh_rest (N,45) or
    (N,0) for degree-0 scenes.  All float32.
    """

    centers: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh_dc: np.ndarray
    sh_rest: np.ndarray

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            self.centers.copy(), self.rotations.copy(), self.log_scales.copy(),
            self.opacity_logits.copy(), self.sh_dc.copy(), self.sh_rest.copy(),
        )

    def bbox_diagonal(self) -> float:
        if self.count == 0:
            return 0.0
        span = self.centers.max(axis=0) - self.centers.min(axis=0)
        return float(np.linalg.norm(span.astype(np.float64)))


def scenes_equal(a: GaussianScene, b: GaussianScene) -> bool:
    """Bitwise field equality (NaN-free scenes, so == is fine)."""
    return (
        a.count == b.count
        and np.array_equal(a.centers, b.centers)
        and np.array_equal(a.rotations, b.rotations)
        and np.array_equal(a.log_scales, b.log_scales)
        and np.array_equal(a.opacity_logits, b.opacity_logits)
        and np.array_equal(a.sh_dc, b.sh_dc)
        and np.array_equal(a.sh_rest, b.sh_rest)
    )


def _parse_header(raw: bytes, path: str):
    end = raw.find(b"end_header\n")
    if end < 0:
        raise FormatError(f"{path}: no end_header line")
    header = raw[: end + len(b"end_header\n")]
    try:
        lines = header.decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: header is not ASCII: {exc}") from None
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}: first line is {lines[0]!r}, expected 'ply'")

    fmt = None
    vertex_count = None
    properties: list[tuple[str, str]] = []  # (type, name)
    in_vertex = False
    for line in lines[1:]:
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1:] != ["binary_little_endian", "1.0"]:
                raise FormatError(f"{path}: unsupported format line {line!r}")
            fmt = "ble"
        elif tok[0] == "element":
            if len(tok) != 3:
                raise FormatError(f"{path}: malformed element line {line!r}")
            if tok[1] == "vertex":
                try:
                    vertex_count = int(tok[2])
                except ValueError:
                    raise FormatError(f"{path}: bad vertex count in {line!r}") from None
                in_vertex = True
            else:
                if int(tok[2]) != 0:
                    raise FormatError(
                        f"{path}: unsupported non-empty element {line!r}"
                    )
                in_vertex = False
        elif tok[0] == "property":
            if not in_vertex:
                continue
            if len(tok) != 3 or tok[1] not in _PLY_TYPE_SIZES:
                raise FormatError(f"{path}: malformed property line {line!r}")
            properties.append((tok[1], tok[2]))
        elif tok[0] == "end_header":
            break
        else:
            raise FormatError(f"{path}: unrecognized header line {line!r}")
    if fmt is None:
        raise FormatError(f"{path}: missing format line")
    if vertex_count is None:
        raise FormatError(f"{path}: missing 'element vertex' line")
    return len(header), vertex_count, properties


def read_ply(path: str | Path) -> GaussianScene:
    """Load a 3DGS scene from a binary PLY file.

    Property order in the file is honored regardless of interleaving; normals
    and unknown extra properties are skipped.  Raises FormatError for a
    malformed container, SchemaError for missing/mistyped properties and
    DataError for NaN/Inf payload.
    """
    path = Path(path)
    return scene_from_ply_bytes(path.read_bytes(), str(path))


def scene_from_ply_bytes(raw: bytes, label: str = "<memory>") -> GaussianScene:
    """Parse a binary PLY scene already held in memory."""
    path = label
    offset, count, properties = _parse_header(raw, str(path))

    names = [name for _, name in properties]
    offsets = {}
    pos = 0
    for ptype, name in properties:
        offsets[name] = (ptype, pos)
        pos += _PLY_TYPE_SIZES[ptype]
    stride = pos

    required = list(_POSITION + _SH_DC + ("opacity",) + _SCALE + _ROT)
    has_rest = any(n in offsets for n in _SH_REST)
    if has_rest:
        required += list(_SH_REST)
    for name in required:
        if name not in offsets:
            raise SchemaError(f"{path}: missing required property '{name}'")
        ptype, _ = offsets[name]
        if ptype not in ("float", "float32"):
            raise SchemaError(
                f"{path}: property '{name}' has type {ptype}, expected float"
            )

    payload = raw[offset:]
    if len(payload) < count * stride:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, "
            f"need {count * stride} for {count} vertices"
        )

    dtype = np.dtype({
        "names": names,
        "formats": ["<" + {"char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
                           "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
                           "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
                           "float": "f4", "float32": "f4",
                           "double": "f8", "float64": "f8"}[t] for t, _ in properties],
        "offsets": [offsets[n][1] for n in names],
        "itemsize": stride,
    })
    rec = np.frombuffer(payload[: count * stride], dtype=dtype)

    def cols(fields: tuple[str, ...]) -> np.ndarray:
        out = np.empty((count, len(fields)), dtype=np.float32)
        for i, f in enumerate(fields):
            out[:, i] = rec[f]
        return out

    scene = GaussianScene(
        centers=cols(_POSITION),
        rotations=cols(_ROT),
        log_scales=cols(_SCALE),
        opacity_logits=np.ascontiguousarray(rec["opacity"], dtype=np.float32),
        sh_dc=cols(_SH_DC),
        sh_rest=cols(_SH_REST) if has_rest else np.empty((count, 0), dtype=np.float32),
    )
    for label, arr in (("centers", scene.centers), ("rotations", scene.rotations),
                       ("log_scales", scene.log_scales),
                       ("opacity_logits", scene.opacity_logits),
                       ("sh_dc", scene.sh_dc), ("sh_rest", scene.sh_rest)):
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.nonzero(bad.reshape(count, -1).any(axis=1))[0][0])
            raise DataError(f"{path}: non-finite {label} at Gaussian {idx}")
    return scene


def scene_to_ply_bytes(scene: GaussianScene) -> bytes:
    """Serialize to the canonical binary PLY layout (zero normals included)."""
    count = scene.count
    has_rest = scene.sh_rest.shape[1] > 0
    if has_rest and scene.sh_rest.shape[1] != SH_REST_SIZE:
        raise SchemaError(
            f"sh_rest must have 0 or {SH_REST_SIZE} columns, "
            f"got {scene.sh_rest.shape[1]}"
        )
    names = list(_POSITION + _NORMAL + _SH_DC)
    if has_rest:
        names += list(_SH_REST)
    names += ["opacity"] + list(_SCALE + _ROT)

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {count}"]
    header += [f"property float {n}" for n in names]
    header.append("end_header")

    ncols = len(names)
    data = np.zeros((count, ncols), dtype="<f4")
    data[:, 0:3] = scene.centers
    data[:, 6:9] = scene.sh_dc
    col = 9
    if has_rest:
        data[:, col : col + SH_REST_SIZE] = scene.sh_rest
        col += SH_REST_SIZE
    data[:, col] = scene.opacity_logits
    data[:, col + 1 : col + 4] = scene.log_scales
    data[:, col + 4 : col + 8] = scene.rotations

    return ("\n".join(header) + "\n").encode("ascii") + data.tobytes()


def write_ply(scene: GaussianScene, path: str | Path) -> None:
    """Write the canonical binary PLY layout to a file."""
    Path(path).write_bytes(scene_to_ply_bytes(scene))


# ---------------------------------------------------------------------------
# Cameras


@dataclass
class Camera:
    """Pinhole camera: intrinsics in pixels plus a camera-to-world pose."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    c2w: np.ndarray  # (4,4) float64, rigid
    image_path: str | None = None

    def w2c(self) -> np.ndarray:
        rot = self.c2w[:3, :3]
        t = self.c2w[:3, 3]
        out = np.eye(4)
        out[:3, :3] = rot.T
        out[:3, 3] = -rot.T @ t
        return out

    def center(self) -> np.ndarray:
        return self.c2w[:3, 3].copy()


def _check_pose(c2w: np.ndarray, pointer: str) -> None:
    rot = c2w[:3, :3]
    err = np.abs(rot.T @ rot - np.eye(3)).max()
    if err > 1e-5:
        raise SchemaError(f"{pointer}: rotation block not orthonormal (err={err:.2e})")
    if np.linalg.det(rot) < 0:
        raise SchemaError(f"{pointer}: rotation has determinant -1 (reflection)")
    if not np.allclose(c2w[3], [0.0, 0.0, 0.0, 1.0]):
        raise SchemaError(f"{pointer}: last row must be [0,0,0,1]")


def _require(obj: dict, key: str, pointer: str):
    if key not in obj:
        raise SchemaError(f"{pointer}/{key}: missing field")
    return obj[key]


def camera_from_json(obj: dict, pointer: str) -> Camera:
    if not isinstance(obj, dict):
        raise SchemaError(f"{pointer}: expected object")
    width = _require(obj, "width", pointer)
    height = _require(obj, "height", pointer)
    if not isinstance(width, int) or width <= 0:
        raise SchemaError(f"{pointer}/width: must be a positive integer")
    if not isinstance(height, int) or height <= 0:
        raise SchemaError(f"{pointer}/height: must be a positive integer")
    intr = {}
    for key in ("fx", "fy", "cx", "cy"):
        val = _require(obj, key, pointer)
        if not isinstance(val, (int, float)) or not math.isfinite(val):
            raise SchemaError(f"{pointer}/{key}: must be a finite number")
        intr[key] = float(val)
    if intr["fx"] <= 0 or intr["fy"] <= 0:
        raise SchemaError(f"{pointer}/fx: focal lengths must be positive")
    c2w_list = _require(obj, "c2w", pointer)
    if not isinstance(c2w_list, list) or len(c2w_list) != 16:
        raise SchemaError(f"{pointer}/c2w: must be a list of 16 numbers")
    c2w = np.asarray(c2w_list, dtype=np.float64).reshape(4, 4)
    if not np.isfinite(c2w).all():
        raise SchemaError(f"{pointer}/c2w: non-finite entry")
    _check_pose(c2w, f"{pointer}/c2w")
    image = obj.get("image")
    if image is not None and not isinstance(image, str):
        raise SchemaError(f"{pointer}/image: must be a string or null")
    return Camera(width=width, height=height, c2w=c2w, image_path=image, **intr)


def camera_to_json(cam: Camera) -> dict:
    return {
        "width": cam.width, "height": cam.height,
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "c2w": [float(v) for v in cam.c2w.reshape(-1)],
        "image": cam.image_path,
    }


def read_cameras(path: str | Path) -> list[Camera]:
    """Load a camera set from cameras.json."""
    with open(path) as fh:
        doc = json.load(fh)
    return cameras_from_json(doc)


def cameras_from_json(doc) -> list[Camera]:
    if not isinstance(doc, dict) or "cameras" not in doc:
        raise SchemaError("/cameras: missing field")
    cams = doc["cameras"]
    if not isinstance(cams, list):
        raise SchemaError("/cameras: must be a list")
    return [camera_from_json(c, f"/cameras/{i}") for i, c in enumerate(cams)]


def write_cameras(cams: list[Camera], path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump({"cameras": [camera_to_json(c) for c in cams]}, fh, indent=2)


# ---------------------------------------------------------------------------
# Drag specs


@dataclass
class BoxRegion:
    lo: np.ndarray  # (3,)
    hi: np.ndarray

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def to_json(self) -> dict:
        return {"type": "box", "min": self.lo.tolist(), "max": self.hi.tolist()}


@dataclass
class SphereRegion:
    center: np.ndarray  # (3,)
    radius: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius

    def to_json(self) -> dict:
        return {"type": "sphere", "center": self.center.tolist(),
                "radius": self.radius}


Region = BoxRegion | SphereRegion


@dataclass
class DragSpec:
    """Drag intent: handle source/target pairs, fixed anchors, optional region."""

    sources: np.ndarray  # (M,3) float64
    targets: np.ndarray  # (M,3)
    anchors: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    region: Region | None = None
    auto_anchor_radius: float | None = None

    def to_json(self) -> dict:
        return {
            "handles": [
                {"source": s.tolist(), "target": t.tolist()}
                for s, t in zip(self.sources, self.targets)
            ],
            "anchors": [a.tolist() for a in self.anchors],
            "region": self.region.to_json() if self.region is not None else None,
            "auto_anchor_radius": self.auto_anchor_radius,
        }


def _vec3(obj, pointer: str) -> np.ndarray:
    if not isinstance(obj, list) or len(obj) != 3:
        raise SchemaError(f"{pointer}: must be a list of 3 numbers")
    arr = np.asarray(obj, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise SchemaError(f"{pointer}: non-finite coordinate")
    return arr


def region_from_json(obj, pointer: str) -> Region | None:
    if obj is None:
        return None
    if not isinstance(obj, dict) or "type" not in obj:
        raise SchemaError(f"{pointer}: region needs a 'type'")
    if obj["type"] == "box":
        lo = _vec3(_require(obj, "min", pointer), f"{pointer}/min")
        hi = _vec3(_require(obj, "max", pointer), f"{pointer}/max")
        if np.any(lo > hi):
            raise SchemaError(f"{pointer}: min must be <= max")
        return BoxRegion(lo, hi)
    if obj["type"] == "sphere":
        center = _vec3(_require(obj, "center", pointer), f"{pointer}/center")
        radius = _require(obj, "radius", pointer)
        if not isinstance(radius, (int, float)) or not radius > 0:
            raise SchemaError(f"{pointer}/radius: must be positive")
        return SphereRegion(center, float(radius))
    raise SchemaError(f"{pointer}/type: unknown region type {obj['type']!r}")


def dragspec_from_json(doc) -> DragSpec:
    if not isinstance(doc, dict):
        raise SchemaError("/: expected object")
    handles = _require(doc, "handles", "")
    if not isinstance(handles, list) or len(handles) == 0:
        raise SchemaError("/handles: must be a non-empty list")
    sources = np.empty((len(handles), 3))
    targets = np.empty((len(handles), 3))
    for i, h in enumerate(handles):
        if not isinstance(h, dict):
            raise SchemaError(f"/handles/{i}: expected object")
        sources[i] = _vec3(_require(h, "source", f"/handles/{i}"), f"/handles/{i}/source")
        targets[i] = _vec3(_require(h, "target", f"/handles/{i}"), f"/handles/{i}/target")
    anchors_doc = doc.get("anchors") or []
    if not isinstance(anchors_doc, list):
        raise SchemaError("/anchors: must be a list")
    anchors = np.empty((len(anchors_doc), 3))
    for i, a in enumerate(anchors_doc):
        anchors[i] = _vec3(a, f"/anchors/{i}")
    region = region_from_json(doc.get("region"), "/region")
    if region is not None:
        inside = region.contains(sources)
        if not inside.all():
            idx = int(np.nonzero(~inside)[0][0])
            raise SchemaError(f"/handles/{idx}/source: lies outside the region")
    radius = doc.get("auto_anchor_radius")
    if radius is not None:
        if not isinstance(radius, (int, float)) or not radius >= 0:
            raise SchemaError("/auto_anchor_radius: must be a non-negative number")
        radius = float(radius)
    return DragSpec(sources=sources, targets=targets, anchors=anchors,
                    region=region, auto_anchor_radius=radius)


def read_dragspec(path: str | Path) -> DragSpec:
    """Load and validate a drag.json file."""
    with open(path) as fh:
        doc = json.load(fh)
    return dragspec_from_json(doc)


def write_dragspec(spec: DragSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_json(), fh, indent=2)
