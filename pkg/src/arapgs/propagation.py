"""Propagate the node deformation field to every Gaussian.

Gaussians that serve as graph nodes take their solved transform directly.
Every other Gaussian interpolates displacement and rotation from its k
nearest graph nodes (distances measured in the undeformed configuration)
with softmax weights over negative distance.  Blends use the relative form

    base + sum_j w_j * (x_j - base)

so a constant field reproduces itself exactly: an identity edit leaves all
attributes bit-identical, a pure translation shifts centers by exactly the
translation vector.
"""

from __future__ import annotations

import logging

import numpy as np

from ._knn import knn_points
from ._quat import quat_from_matrix, quat_multiply
from .neighborhood import DeformGraph
from .splat_io import GaussianScene, Region

log = logging.getLogger(__name__)

DEFAULT_INTERP_K = 8
ANTIPODAL_EPS = 1e-8


def interpolation_weights(
    graph: DeformGraph,
    queries: np.ndarray,
    k: int = DEFAULT_INTERP_K,
    tau: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """k nearest graph nodes per query and their softmax(-d/tau) weights.

    tau defaults to the graph's mean KNN spacing so the falloff tracks the
    sampling density.  Distances are shifted by the row minimum before the
    exponential, which keeps weights finite and makes the nearest node's
    unnormalized weight exactly 1.
    """
    queries = np.asarray(queries, dtype=np.float64)
    k = min(k, graph.n_nodes)
    idx, dist = knn_points(queries, graph.positions, k)
    if tau is None:
        tau = graph.mean_knn_distance
    if tau <= 0:
        tau = 1.0
    logits = -(dist - dist[:, :1]) / tau
    w = np.exp(logits)
    w /= np.sum(w, axis=1, keepdims=True)
    return idx, w


def _blend_relative(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted blend of (N,k,D) values anchored at the first column."""
    base = values[:, 0]
    delta = np.sum(weights[:, :, None] * (values - base[:, None, :]), axis=1)
    return base + delta


def blend_quaternions(
    node_quats: np.ndarray, idx: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Sign-aligned weighted quaternion blend, normalized.

    Each neighbor quaternion is flipped to the hemisphere of the running
    blend before being added.  Rows whose blend nearly cancels fall back to
    the highest-weight neighbor's quaternion.
    """
    q = node_quats[idx]  # (N,k,4)
    n, k, _ = q.shape
    base = q[:, 0].copy()
    acc = base.copy()
    delta = np.zeros_like(base)
    for j in range(k):
        qj = q[:, j]
        flip = np.sum(qj * acc, axis=1) < 0.0
        qj = np.where(flip[:, None], -qj, qj)
        delta += weights[:, j : j + 1] * (qj - base)
        acc = base + delta
    blend = base + delta

    norm = np.linalg.norm(blend, axis=1)
    bad = norm < ANTIPODAL_EPS
    if np.any(bad):
        log.warning(
            "%d quaternion blends nearly cancelled; using nearest node rotation",
            int(np.sum(bad)),
        )
        blend[bad] = q[bad, 0]
        norm[bad] = np.linalg.norm(blend[bad], axis=1)
    return blend / norm[:, None]


def propagate_scene(
    scene: GaussianScene,
    graph: DeformGraph,
    node_positions: np.ndarray,
    node_rotations: np.ndarray,
    k: int = DEFAULT_INTERP_K,
    tau: float | None = None,
    region: Region | None = None,
) -> GaussianScene:
    """Apply the node deformation field to the full scene.

    Gaussians that are themselves graph nodes take their solved position and
    rotation directly; every other Gaussian blends displacement and rotation
    from its k nearest nodes, composing the field rotation with its stored
    quaternion.  Scales, opacities and SH coefficients are untouched.  With a
    region set, Gaussians outside it are left bit-identical.
    """
    out = scene.copy()
    centers = scene.centers.astype(np.float64)
    node_positions = np.asarray(node_positions, dtype=np.float64)
    node_quats = quat_from_matrix(np.asarray(node_rotations, dtype=np.float64))

    sub = graph.subset
    out.centers[sub] = node_positions.astype(np.float32)
    out.rotations[sub] = quat_multiply(
        node_quats, scene.rotations[sub].astype(np.float64)
    ).astype(np.float32)

    if region is not None:
        active = np.nonzero(region.contains(centers))[0]
    else:
        active = np.arange(scene.count)
    sel = np.setdiff1d(active, sub)
    if sel.size == 0:
        return out

    idx, w = interpolation_weights(graph, centers[sel], k=k, tau=tau)

    disp = node_positions - graph.positions
    blended_disp = _blend_relative(disp[idx], w)
    # adding +0.0 would flip the sign bit of -0.0 centers; -0.0 is the
    # bit-level additive identity for every float
    blended_disp[blended_disp == 0.0] = -0.0
    out.centers[sel] = (centers[sel] + blended_disp).astype(np.float32)

    field_q = blend_quaternions(node_quats, idx, w)
    composed = quat_multiply(field_q, scene.rotations[sel].astype(np.float64))
    out.rotations[sel] = composed.astype(np.float32)
    return out
