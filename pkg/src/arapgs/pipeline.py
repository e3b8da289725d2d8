"""End-to-end drag deformation pipeline.

Wires subset sampling, graph construction, the ARAP solve and attribute
propagation into one call, plus batch view rendering and drag-accuracy
evaluation helpers shared by the CLI and the HTTP service.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from ._knn import knn_points
from .arap import DEFAULT_MAX_ITERS, ArapResult, ArapSolver
from .errors import ConfigError, ConstraintConflictError, DataError
from .metrics import DEFAULT_GAMMAS, DaiResult, dai
from .neighborhood import (
    DEFAULT_GRAPH_K,
    DEFAULT_SUBSET_SIZE,
    DeformGraph,
    assign_constraints,
    build_graph,
    sample_subset,
)
from .propagation import DEFAULT_INTERP_K, propagate_scene
from .renderer import DEFAULT_NEAR, project_points, render_u8
from .splat_io import Camera, DragSpec, GaussianScene

log = logging.getLogger(__name__)

THREADS_ENV = "ARAPGS_THREADS"


@dataclass
class DeformConfig:
    n_sub: int = DEFAULT_SUBSET_SIZE
    graph_k: int = DEFAULT_GRAPH_K
    interp_k: int = DEFAULT_INTERP_K
    max_iters: int = DEFAULT_MAX_ITERS
    weight_mode: str = "uniform"
    seed: int = 0
    tau: float | None = None  # None: mean graph KNN spacing


@dataclass
class DeformOutput:
    scene: GaussianScene
    graph: DeformGraph
    result: ArapResult
    snap_info: dict


def prepare_graph(
    scene: GaussianScene, drag: DragSpec, config: DeformConfig | None = None
) -> tuple[DeformGraph, dict]:
    """Sample the subset, build the KNN graph and attach drag constraints.

    Split out from deform() so callers can validate a drag request (snap
    distances, constraint conflicts) without paying for the solve.
    """
    cfg = config or DeformConfig()
    include = drag.sources
    if len(drag.anchors):
        include = np.vstack([drag.sources, drag.anchors])
    subset = sample_subset(
        scene, cfg.n_sub, cfg.seed, region=drag.region, include_points=include
    )
    graph = build_graph(
        subset,
        scene.centers[subset].astype(np.float64),
        k=cfg.graph_k,
        weight_mode=cfg.weight_mode,
    )
    return assign_constraints(graph, drag)


def validate_drag(
    scene: GaussianScene, drag: DragSpec, config: DeformConfig | None = None
) -> dict:
    """Cheap pre-flight: sample the subset and snap handles, no graph build.

    Raises the same EmptySelectionError/ConstraintConflictError a full
    deform would, so callers can reject bad requests before queueing work.
    Returns snap distances per handle.
    """
    cfg = config or DeformConfig()
    include = drag.sources
    if len(drag.anchors):
        include = np.vstack([drag.sources, drag.anchors])
    subset = sample_subset(
        scene, cfg.n_sub, cfg.seed, region=drag.region, include_points=include
    )
    positions = scene.centers[subset].astype(np.float64)
    idx, dist = knn_points(drag.sources, positions, 1)
    seen: dict[int, np.ndarray] = {}
    for hi in range(drag.sources.shape[0]):
        node = int(idx[hi, 0])
        target = drag.targets[hi]
        if node in seen and not np.array_equal(seen[node], target):
            raise ConstraintConflictError(
                f"handles {hi} and an earlier handle snap to node {node} "
                f"(scene index {subset[node]}) with different targets"
            )
        seen[node] = target
    return {"handle_snaps": dist[:, 0].tolist(), "subset_size": int(subset.size)}


def deform(
    scene: GaussianScene, drag: DragSpec, config: DeformConfig | None = None
) -> DeformOutput:
    """Drag-deform a scene: ARAP on the graph, then propagate to all splats."""
    cfg = config or DeformConfig()
    graph, snap_info = prepare_graph(scene, drag, cfg)
    result = ArapSolver(graph).solve(max_iters=cfg.max_iters)
    deformed = propagate_scene(
        scene,
        graph,
        result.positions,
        result.rotations,
        k=cfg.interp_k,
        tau=cfg.tau,
        region=drag.region,
    )
    return DeformOutput(scene=deformed, graph=graph, result=result, snap_info=snap_info)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def render_views(
    scene: GaussianScene,
    cameras: Sequence[Camera],
    background=None,
    near: float = DEFAULT_NEAR,
) -> list[np.ndarray]:
    """Render every camera to uint8; ARAPGS_THREADS caps view parallelism."""
    threads = _thread_count()

    def one(cam: Camera) -> np.ndarray:
        return render_u8(scene, cam, background=background, near=near)

    if threads == 1 or len(cameras) <= 1:
        return [one(c) for c in cameras]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, cameras))


def save_image(path: str | Path, image: np.ndarray) -> None:
    Image.fromarray(image).save(path)


def load_image_u8(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def view_name(camera: Camera, index: int) -> str:
    if camera.image_path:
        return Path(camera.image_path).stem
    return f"view{index:03d}"


def evaluate_drag(
    original_images: Sequence[np.ndarray],
    edited_images: Sequence[np.ndarray],
    drag: DragSpec,
    cameras: Sequence[Camera],
    gammas: Sequence[int] = DEFAULT_GAMMAS,
    near: float = DEFAULT_NEAR,
) -> tuple[DaiResult, list[int]]:
    """Project handles into each view and score the edit.

    Views where any handle endpoint falls behind the camera are skipped.
    Returns the score and the camera indices actually used.
    """
    if len(original_images) != len(cameras) or len(edited_images) != len(cameras):
        raise DataError("image counts must match the camera count")
    src_list, tgt_list, used = [], [], []
    for i, cam in enumerate(cameras):
        s_px, s_ok = project_points(cam, drag.sources, near=near)
        t_px, t_ok = project_points(cam, drag.targets, near=near)
        if not (s_ok.all() and t_ok.all()):
            log.warning("view %d skipped: handle endpoint behind camera", i)
            continue
        src_list.append(s_px)
        tgt_list.append(t_px)
        used.append(i)
    if not used:
        raise DataError("no view sees all drag handles; cannot evaluate")
    result = dai(
        [original_images[i] for i in used],
        [edited_images[i] for i in used],
        np.stack(src_list),
        np.stack(tgt_list),
        gammas=gammas,
    )
    return result, used
