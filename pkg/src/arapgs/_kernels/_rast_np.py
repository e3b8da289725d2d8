"""Pure-numpy compositing kernels (fallback when the compiled module is absent).

All kernels take splats already sorted front to back and sample Gaussians at
integer pixel coordinates.  The compiled twin in ``_rast_cy.pyx`` implements
the same loops; both iterate splats outermost and bbox pixels row-major so the
two backends agree to floating-point noise.
"""

from __future__ import annotations

import math

import numpy as np

# 3-sigma ellipse cutoff on the Mahalanobis form, minimum visible
# contribution, and the transmittance at which a pixel stops accumulating.
Q_MAX = 9.0
MIN_CONTRIB = 1.0 / 255.0
T_STOP = 1e-4


def _bbox(mx: float, my: float, r: float, width: int, height: int):
    x0 = max(int(math.ceil(mx - r)), 0)
    x1 = min(int(math.floor(mx + r)), width - 1)
    y0 = max(int(math.ceil(my - r)), 0)
    y1 = min(int(math.floor(my + r)), height - 1)
    return x0, x1, y0, y1


def composite(mean2d, cov_inv, radius, alpha, color, width, height, background):
    """Alpha-composite sorted splats over a constant background.

    mean2d (M,2), cov_inv (M,3) packed [a,b,c] of the inverse 2x2 covariance,
    radius (M,) bounding radius in pixels, alpha (M,), color (M,3).
    Returns an (H, W, 3) float64 image.
    """
    img = np.zeros((height, width, 3), dtype=np.float64)
    trans = np.ones((height, width), dtype=np.float64)
    for s in range(mean2d.shape[0]):
        mx, my = mean2d[s]
        x0, x1, y0, y1 = _bbox(mx, my, radius[s], width, height)
        if x0 > x1 or y0 > y1:
            continue
        a, b, c = cov_inv[s]
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - mx
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - my
        q = (
            a * dx[None, :] ** 2
            + 2.0 * b * dy[:, None] * dx[None, :]
            + c * dy[:, None] ** 2
        )
        w = alpha[s] * np.exp(-0.5 * q)
        tb = trans[y0 : y1 + 1, x0 : x1 + 1]
        active = (q <= Q_MAX) & (w >= MIN_CONTRIB) & (tb >= T_STOP)
        tw = np.where(active, tb * w, 0.0)
        img[y0 : y1 + 1, x0 : x1 + 1] += tw[:, :, None] * color[s][None, None, :]
        trans[y0 : y1 + 1, x0 : x1 + 1] = np.where(active, tb * (1.0 - w), tb)
    img += trans[:, :, None] * np.asarray(background, dtype=np.float64)[None, None, :]
    return img


def composite_weights(mean2d, cov_inv, radius, alpha, color, width, height, background):
    """Like :func:`composite` but also records per-splat pixel contributions.

    Returns (img, pix, splat, w) where pix holds flattened y*width+x indices,
    splat the splat index of each contribution, and w the compositing weight
    T * alpha * G applied to that splat's color at that pixel.
    """
    img = np.zeros((height, width, 3), dtype=np.float64)
    trans = np.ones((height, width), dtype=np.float64)
    pix_out: list[np.ndarray] = []
    splat_out: list[np.ndarray] = []
    w_out: list[np.ndarray] = []
    for s in range(mean2d.shape[0]):
        mx, my = mean2d[s]
        x0, x1, y0, y1 = _bbox(mx, my, radius[s], width, height)
        if x0 > x1 or y0 > y1:
            continue
        a, b, c = cov_inv[s]
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - mx
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - my
        q = (
            a * dx[None, :] ** 2
            + 2.0 * b * dy[:, None] * dx[None, :]
            + c * dy[:, None] ** 2
        )
        w = alpha[s] * np.exp(-0.5 * q)
        tb = trans[y0 : y1 + 1, x0 : x1 + 1]
        active = (q <= Q_MAX) & (w >= MIN_CONTRIB) & (tb >= T_STOP)
        tw = np.where(active, tb * w, 0.0)
        img[y0 : y1 + 1, x0 : x1 + 1] += tw[:, :, None] * color[s][None, None, :]
        trans[y0 : y1 + 1, x0 : x1 + 1] = np.where(active, tb * (1.0 - w), tb)
        yy, xx = np.nonzero(active)
        if yy.size:
            pix_out.append((yy + y0).astype(np.int64) * width + (xx + x0))
            splat_out.append(np.full(yy.size, s, dtype=np.int64))
            w_out.append(tw[yy, xx])
    img += trans[:, :, None] * np.asarray(background, dtype=np.float64)[None, None, :]
    if pix_out:
        pix = np.concatenate(pix_out)
        splat = np.concatenate(splat_out)
        wgt = np.concatenate(w_out)
    else:
        pix = np.empty(0, dtype=np.int64)
        splat = np.empty(0, dtype=np.int64)
        wgt = np.empty(0, dtype=np.float64)
    return img, pix, splat, wgt


def fill_ellipses(mean2d, cov_inv, radius, width, height):
    """Binary OR of the 3-sigma ellipse footprints of all splats."""
    mask = np.zeros((height, width), dtype=np.uint8)
    for s in range(mean2d.shape[0]):
        mx, my = mean2d[s]
        x0, x1, y0, y1 = _bbox(mx, my, radius[s], width, height)
        if x0 > x1 or y0 > y1:
            continue
        a, b, c = cov_inv[s]
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - mx
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - my
        q = (
            a * dx[None, :] ** 2
            + 2.0 * b * dy[:, None] * dx[None, :]
            + c * dy[:, None] ** 2
        )
        mask[y0 : y1 + 1, x0 : x1 + 1] |= (q <= Q_MAX).astype(np.uint8)
    return mask
