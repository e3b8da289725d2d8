"""Representative subset sampling, symmetrized KNN graph and constraint setup.

The deformation graph lives on a random subset of Gaussian centers; handle
and anchor points snap to their nearest sampled center, and every connected
component is guaranteed at least one constraint so the global solve stays
positive definite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ._knn import knn_points, nearest_point
from .errors import ConstraintConflictError, EmptySelectionError
from .splat_io import DragSpec, GaussianScene, Region

log = logging.getLogger(__name__)

DEFAULT_SUBSET_SIZE = 16384
DEFAULT_GRAPH_K = 32


@dataclass
class DeformGraph:
    """Deformation graph over the sampled subset.

    Adjacency is CSR-style (indptr/indices) and symmetric by construction;
    edge_weights holds w_ij per directed edge with w_ij == w_ji.
    constraints maps node id -> world-space target position.
    """

    subset: np.ndarray        # (n,) scene indices
    positions: np.ndarray     # (n,3) float64 undeformed centers
    indptr: np.ndarray        # (n+1,)
    indices: np.ndarray       # (E,)
    edge_weights: np.ndarray  # (E,)
    cell_weights: np.ndarray  # (n,)
    mean_knn_distance: float
    constraints: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def adjacency(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.edge_weights, self.indices, self.indptr),
            shape=(self.n_nodes, self.n_nodes),
        )

    def laplacian(self) -> sp.csr_matrix:
        adj = self.adjacency()
        deg = np.asarray(adj.sum(axis=1)).ravel()
        return sp.diags(deg) - adj


def sample_subset(
    scene: GaussianScene,
    n_sub: int,
    seed: int,
    region: Region | None = None,
    include_points: np.ndarray | None = None,
) -> np.ndarray:
    """Uniform without-replacement sample of Gaussian indices.

    Each row of include_points (drag handles/anchors) is snapped to its
    nearest in-region center, which is forced into the sample; to keep the
    size constant the sampled point farthest from that snap target is evicted.
    Returns sorted scene indices.
    """
    if n_sub < 2:
        raise ValueError("n_sub must be >= 2")
    centers = scene.centers.astype(np.float64)
    if region is not None:
        available = np.nonzero(region.contains(centers))[0]
    else:
        available = np.arange(scene.count)
    if available.size == 0:
        raise EmptySelectionError("region filter selected no Gaussians")

    rng = np.random.default_rng(seed)
    n_take = min(n_sub, available.size)
    chosen = available[rng.choice(available.size, size=n_take, replace=False)]
    selected = set(int(i) for i in chosen)

    if include_points is not None and len(include_points):
        pts = np.atleast_2d(np.asarray(include_points, dtype=np.float64))
        forced: set[int] = set()
        for p in pts:
            local, _ = nearest_point(p, centers[available])
            gidx = int(available[local])
            forced.add(gidx)
            if gidx in selected:
                continue
            # evict the selected point farthest from the snapped center
            cand = np.array(sorted(selected - forced), dtype=np.int64)
            if cand.size == 0:
                selected.add(gidx)
                continue
            d2 = np.sum((centers[cand] - centers[gidx]) ** 2, axis=1)
            evict = int(cand[np.lexsort((cand, -d2))[0]])
            selected.discard(evict)
            selected.add(gidx)

    return np.array(sorted(selected), dtype=np.int64)


def build_graph(
    subset: np.ndarray,
    positions: np.ndarray,
    k: int = DEFAULT_GRAPH_K,
    weight_mode: str = "uniform",
) -> DeformGraph:
    """Symmetrized (union) exact-KNN graph over the subset positions."""
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n <= k:
        raise ValueError(f"need more than k={k} subset points, got {n}")
    nbr_idx, nbr_dist = knn_points(
        positions, positions, k, skip_index=np.arange(n)
    )
    mean_knn = float(nbr_dist.mean())

    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = nbr_idx.ravel()
    sym_rows = np.concatenate([rows, cols])
    sym_cols = np.concatenate([cols, rows])
    adj = sp.csr_matrix(
        (np.ones(sym_rows.size), (sym_rows, sym_cols)), shape=(n, n)
    )
    adj.sum_duplicates()
    adj.sort_indices()

    if weight_mode == "uniform":
        weights = np.ones(adj.nnz)
    elif weight_mode == "gaussian":
        src = np.repeat(np.arange(n), np.diff(adj.indptr))
        d2 = np.sum((positions[src] - positions[adj.indices]) ** 2, axis=1)
        sigma2 = mean_knn**2 if mean_knn > 0 else 1.0
        weights = np.exp(-d2 / sigma2)
    else:
        raise ValueError(f"unknown weight_mode {weight_mode!r}")

    return DeformGraph(
        subset=np.asarray(subset, dtype=np.int64),
        positions=positions,
        indptr=adj.indptr.astype(np.int64),
        indices=adj.indices.astype(np.int64),
        edge_weights=weights,
        cell_weights=np.ones(n),
        mean_knn_distance=mean_knn,
    )


def assign_constraints(
    graph: DeformGraph, drag: DragSpec
) -> tuple[DeformGraph, dict]:
    """Snap drag handles/anchors onto graph nodes and pin loose components.

    Handles are constrained to their targets, anchors to their own node
    positions.  With auto_anchor_radius set, every node farther than that
    radius from all handle sources is anchored.  Components that end up
    without any constraint get their lowest-index node anchored (warned).
    Two handles landing on one node with different targets is an error; an
    anchor landing on a handle node is ignored with a warning (the drag wins).
    """
    constraints: dict[int, np.ndarray] = {}
    handle_nodes: set[int] = set()
    info: dict = {"handle_snaps": [], "anchor_snaps": [], "auto_anchored": 0,
                  "component_anchors": []}

    h_idx, h_dist = knn_points(drag.sources, graph.positions, 1)
    for hi in range(drag.sources.shape[0]):
        node = int(h_idx[hi, 0])
        target = drag.targets[hi].astype(np.float64)
        if node in constraints and not np.array_equal(constraints[node], target):
            raise ConstraintConflictError(
                f"handles {hi} and an earlier handle snap to node {node} "
                f"(scene index {graph.subset[node]}) with different targets"
            )
        constraints[node] = target
        handle_nodes.add(node)
        info["handle_snaps"].append(float(h_dist[hi, 0]))

    if len(drag.anchors):
        a_idx, a_dist = knn_points(drag.anchors, graph.positions, 1)
        for ai in range(drag.anchors.shape[0]):
            node = int(a_idx[ai, 0])
            if node in handle_nodes:
                log.warning(
                    "anchor %d snaps to handle node %d; drag target wins", ai, node
                )
                continue
            constraints[node] = graph.positions[node].copy()
            info["anchor_snaps"].append(float(a_dist[ai, 0]))

    if drag.auto_anchor_radius is not None:
        d2 = np.min(
            np.sum(
                (graph.positions[:, None, :] - drag.sources[None, :, :]) ** 2,
                axis=2,
            ),
            axis=1,
        )
        far = np.nonzero(d2 > drag.auto_anchor_radius**2)[0]
        for node in far:
            node = int(node)
            if node not in constraints:
                constraints[node] = graph.positions[node].copy()
                info["auto_anchored"] += 1

    n_comp, labels = connected_components(graph.adjacency(), directed=False)
    constrained_labels = {labels[n] for n in constraints}
    for comp in range(n_comp):
        if comp in constrained_labels:
            continue
        node = int(np.nonzero(labels == comp)[0][0])
        constraints[node] = graph.positions[node].copy()
        info["component_anchors"].append(node)
        log.warning(
            "connected component %d has no constraints; anchoring node %d", comp, node
        )

    return replace(graph, constraints=constraints), info
