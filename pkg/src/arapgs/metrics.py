"""Patch-based measurement of how well an edit moved content.

For every view and drag handle, a square patch around the handle's source
pixel in the original render is compared against the same-size patch around
the target pixel in the edited render.  Squared differences are normalized
by patch side length squared, summed over handles, averaged over views, and
finally averaged over a set of patch radii.  Lower is better; zero means
the content at each source arrived exactly at its target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError

DEFAULT_GAMMAS = (1, 5, 10, 20)


def extract_patch(image: np.ndarray, px: float, py: float, gamma: int) -> np.ndarray:
    """(2*gamma+1) square patch centered at the rounded pixel, clamp-to-edge."""
    h, w = image.shape[:2]
    cx = int(round(float(px)))
    cy = int(round(float(py)))
    ys = np.clip(np.arange(cy - gamma, cy + gamma + 1), 0, h - 1)
    xs = np.clip(np.arange(cx - gamma, cx + gamma + 1), 0, w - 1)
    return image[ys[:, None], xs[None, :]]


def patch_difference(
    original: np.ndarray,
    source_px: Sequence[float],
    edited: np.ndarray,
    target_px: Sequence[float],
    gamma: int,
) -> float:
    """Sum of squared patch differences over (1 + 2*gamma)^2."""
    pa = extract_patch(original, source_px[0], source_px[1], gamma).astype(np.float64)
    pb = extract_patch(edited, target_px[0], target_px[1], gamma).astype(np.float64)
    return float(np.sum((pa - pb) ** 2) / (1 + 2 * gamma) ** 2)


@dataclass
class DaiResult:
    value: float
    per_gamma: dict[int, float]
    per_view: np.ndarray


def dai(
    original_images: Sequence[np.ndarray],
    edited_images: Sequence[np.ndarray],
    source_px: np.ndarray,
    target_px: np.ndarray,
    gammas: Sequence[int] = DEFAULT_GAMMAS,
) -> DaiResult:
    """Drag accuracy over views and handles, averaged across patch radii.

    source_px/target_px are (n_views, n_handles, 2) pixel coordinates of the
    projected handle sources (in the original images) and targets (in the
    edited images).  Images may be (H,W) or (H,W,3); each original/edited
    pair must share a shape.
    """
    n_views = len(original_images)
    if len(edited_images) != n_views:
        raise DataError("original and edited image counts differ")
    source_px = np.asarray(source_px, dtype=np.float64)
    target_px = np.asarray(target_px, dtype=np.float64)
    if source_px.shape != target_px.shape or source_px.ndim != 3:
        raise DataError("handle pixel arrays must both be (n_views, n_handles, 2)")
    if source_px.shape[0] != n_views:
        raise DataError("handle pixel arrays disagree with image count")
    n_handles = source_px.shape[1]

    per_gamma: dict[int, float] = {}
    per_view_gamma = np.zeros((len(gammas), n_views))
    for gi, gamma in enumerate(gammas):
        for v in range(n_views):
            io, ie = original_images[v], edited_images[v]
            if io.shape != ie.shape:
                raise DataError(f"view {v}: image shapes differ {io.shape} vs {ie.shape}")
            total = 0.0
            for hi in range(n_handles):
                total += patch_difference(
                    io, source_px[v, hi], ie, target_px[v, hi], int(gamma)
                )
            per_view_gamma[gi, v] = total
        per_gamma[int(gamma)] = float(per_view_gamma[gi].mean())

    per_view = per_view_gamma.mean(axis=0)
    return DaiResult(
        value=float(np.mean(list(per_gamma.values()))),
        per_gamma=per_gamma,
        per_view=per_view,
    )
