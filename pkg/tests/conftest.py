"""Shared fixtures: synthetic scenes, cameras and drag specs.

Scene coordinates sit on a 1/8 grid so float32 arithmetic on them is exact;
several tests rely on that to assert bit-identical results.
"""

from __future__ import annotations

import numpy as np
import pytest

from arapgs.splat_io import Camera, DragSpec, GaussianScene

GRID = 0.125  # all synthetic coordinates are multiples of this


def snap_grid(x: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(x) / GRID) * GRID


def make_scene(
    centers: np.ndarray,
    seed: int = 0,
    scale: float = 0.05,
    opacity: float = 2.0,
    sh_rest: bool = False,
) -> GaussianScene:
    rng = np.random.default_rng(seed)
    n = len(centers)
    quats = rng.normal(size=(n, 4)).astype(np.float32)
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianScene(
        centers=np.asarray(centers, dtype=np.float32),
        rotations=quats,
        log_scales=np.full((n, 3), np.log(scale), dtype=np.float32),
        opacity_logits=np.full(n, opacity, dtype=np.float32),
        sh_dc=rng.normal(0.0, 0.3, (n, 3)).astype(np.float32),
        sh_rest=rng.normal(0.0, 0.05, (n, 45)).astype(np.float32)
        if sh_rest
        else np.empty((n, 0), dtype=np.float32),
    )


def grid_cloud(n: int, seed: int = 0, span: float = 1.0) -> np.ndarray:
    """Random point cloud snapped to the exact-arithmetic grid, no duplicates."""
    rng = np.random.default_rng(seed)
    pts = snap_grid(rng.uniform(-span, span, (4 * n, 3)))
    pts = np.unique(pts, axis=0)
    order = rng.permutation(len(pts))[:n]
    if len(order) < n:
        raise AssertionError("grid too coarse for requested point count")
    return pts[order]


def dumbbell_cloud(n_per_blob: int = 120, bar: int = 40, seed: int = 3) -> np.ndarray:
    """Two blobs joined by a thin bar: a shape that deforms interestingly."""
    rng = np.random.default_rng(seed)
    left = snap_grid(rng.normal([-1.0, 0, 0], 0.3, (n_per_blob, 3)))
    right = snap_grid(rng.normal([1.0, 0, 0], 0.3, (n_per_blob, 3)))
    t = np.linspace(-0.625, 0.625, bar)[:, None]
    bar_pts = snap_grid(np.hstack([t, np.zeros((bar, 2))])
                        + snap_grid(rng.normal(0, 0.08, (bar, 3))))
    pts = np.vstack([left, right, bar_pts])
    return np.unique(pts, axis=0)


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0)) -> np.ndarray:
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(np.asarray(up, dtype=np.float64), fwd)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    c2w = np.eye(4)
    c2w[:3, 0] = right
    c2w[:3, 1] = down
    c2w[:3, 2] = fwd
    c2w[:3, 3] = eye
    return c2w


def make_camera(eye, width=64, height=48, focal=60.0, target=(0, 0, 0)) -> Camera:
    return Camera(
        width=width, height=height, fx=focal, fy=focal,
        cx=width / 2.0, cy=height / 2.0, c2w=look_at(eye, target),
    )


def orbit_cameras(n: int, radius: float = 4.0, height: float = 0.5,
                  width: int = 64, img_height: int = 48) -> list[Camera]:
    cams = []
    for i in range(n):
        ang = 2.0 * np.pi * i / n
        eye = (radius * np.cos(ang), height, radius * np.sin(ang))
        cams.append(make_camera(eye, width=width, height=img_height))
    return cams


@pytest.fixture
def dumbbell_scene() -> GaussianScene:
    return make_scene(dumbbell_cloud(), seed=7)


@pytest.fixture
def stretch_drag(dumbbell_scene) -> DragSpec:
    """Pull the right blob further right while anchoring the left blob."""
    right = dumbbell_scene.centers[
        np.argmax(dumbbell_scene.centers[:, 0])
    ].astype(np.float64)
    left = dumbbell_scene.centers[
        np.argmin(dumbbell_scene.centers[:, 0])
    ].astype(np.float64)
    return DragSpec(
        sources=right[None, :],
        targets=(right + [0.5, 0.25, 0.0])[None, :],
        anchors=left[None, :],
    )


@pytest.fixture
def small_cfg():
    from arapgs.pipeline import DeformConfig

    return DeformConfig(n_sub=160, graph_k=8, interp_k=4, max_iters=10)
