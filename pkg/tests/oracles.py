"""Independent reference implementations used to check the package.

Everything here is written the slow, obvious way (python loops, dense
algebra, struct packing) on purpose: these functions share no code with the
package, so agreement is evidence of correctness rather than of consistency.
"""

from __future__ import annotations

import math
import struct

import numpy as np


def rodrigues(axis, angle: float) -> np.ndarray:
    """Rotation matrix from axis-angle, straight from the formula."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / math.sqrt(float(axis @ axis))
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def knn_bruteforce(queries, points, k, skip_index=None):
    """Exact KNN with (distance, index) ordering, python loops."""
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    idx_out = np.empty((len(queries), k), dtype=np.int64)
    dist_out = np.empty((len(queries), k), dtype=np.float64)
    for qi, q in enumerate(queries):
        pairs = []
        for pi, p in enumerate(points):
            if skip_index is not None and pi == skip_index[qi]:
                continue
            d = math.dist(q, p)
            pairs.append((d, pi))
        pairs.sort()
        for j in range(k):
            dist_out[qi, j], idx_out[qi, j] = pairs[j]
    return idx_out, dist_out


def arap_energy_loops(positions, deformed, neighbors, weights, rotations):
    """ARAP energy with explicit loops.

    neighbors/weights: dict node -> list of (j, w_ij).
    """
    total = 0.0
    for i, nbrs in neighbors.items():
        for j, w in nbrs:
            e = positions[i] - positions[j]
            ed = deformed[i] - deformed[j]
            r = ed - rotations[i] @ e
            total += w * float(r @ r)
    return total


def global_step_dense(positions, neighbors, rotations, constraints):
    """Dense normal-equations solve of the ARAP global step.

    Builds the full Laplacian row by row and eliminates constrained nodes,
    solving each coordinate with numpy.linalg.solve.
    """
    n = len(positions)
    lap = np.zeros((n, n))
    rhs = np.zeros((n, 3))
    for i, nbrs in neighbors.items():
        for j, w in nbrs:
            lap[i, i] += w
            lap[i, j] -= w
            rhs[i] += 0.5 * w * ((rotations[i] + rotations[j]) @ (positions[i] - positions[j]))
    con = sorted(constraints)
    free = [i for i in range(n) if i not in constraints]
    out = np.zeros((n, 3))
    for i in con:
        out[i] = constraints[i]
    if free:
        a = lap[np.ix_(free, free)]
        b = rhs[free] - lap[np.ix_(free, con)] @ np.array([constraints[i] for i in con])
        out[free] = np.linalg.solve(a, b)
    return out


def composite_loops(mean2d, cov_inv, radius, alpha, color, width, height, bg):
    """Front-to-back compositing, one pixel at a time.

    Same cutoffs as the package kernels: 3-sigma ellipse (q <= 9), minimum
    contribution 1/255, transmittance stop 1e-4.
    """
    img = np.zeros((height, width, 3))
    for py in range(height):
        for px in range(width):
            t = 1.0
            c = np.zeros(3)
            for s in range(len(mean2d)):
                dx = px - mean2d[s][0]
                dy = py - mean2d[s][1]
                if abs(dx) > radius[s] or abs(dy) > radius[s]:
                    continue
                a, b, cc = cov_inv[s]
                q = a * dx * dx + 2.0 * b * dx * dy + cc * dy * dy
                if q > 9.0:
                    continue
                w = alpha[s] * math.exp(-0.5 * q)
                if w < 1.0 / 255.0:
                    continue
                if t < 1e-4:
                    continue
                c = c + t * w * np.asarray(color[s])
                t = t * (1.0 - w)
            img[py, px] = c + t * np.asarray(bg)
    return img


def dai_loops(originals, edited, source_px, target_px, gammas):
    """Patch metric with explicit loops and clamp-to-edge indexing."""

    def patch(img, cx, cy, g):
        h, w = img.shape[:2]
        side = 2 * g + 1
        out = np.zeros((side, side) + img.shape[2:])
        for r in range(side):
            for c in range(side):
                yy = min(max(int(round(cy)) - g + r, 0), h - 1)
                xx = min(max(int(round(cx)) - g + c, 0), w - 1)
                out[r, c] = img[yy, xx]
        return out

    per_gamma = []
    for g in gammas:
        acc = 0.0
        for v in range(len(originals)):
            for h in range(source_px.shape[1]):
                pa = patch(originals[v], source_px[v, h, 0], source_px[v, h, 1], g)
                pb = patch(edited[v], target_px[v, h, 0], target_px[v, h, 1], g)
                acc += float(np.sum((pa - pb) ** 2)) / (1 + 2 * g) ** 2
        per_gamma.append(acc / len(originals))
    return sum(per_gamma) / len(per_gamma), per_gamma


def write_ply_struct(scene) -> bytes:
    """Canonical PLY serialization using struct.pack, no numpy views."""
    count = scene.count
    has_rest = scene.sh_rest.shape[1] > 0
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    if has_rest:
        names += [f"f_rest_{i}" for i in range(scene.sh_rest.shape[1])]
    names += ["opacity", "scale_0", "scale_1", "scale_2",
              "rot_0", "rot_1", "rot_2", "rot_3"]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {count}"]
    header += [f"property float {n}" for n in names]
    header.append("end_header")
    blob = bytearray(("\n".join(header) + "\n").encode("ascii"))
    for i in range(count):
        row = list(scene.centers[i]) + [0.0, 0.0, 0.0] + list(scene.sh_dc[i])
        if has_rest:
            row += list(scene.sh_rest[i])
        row += [scene.opacity_logits[i]] + list(scene.log_scales[i]) + list(scene.rotations[i])
        blob += struct.pack("<" + "f" * len(row), *[float(v) for v in row])
    return bytes(blob)
