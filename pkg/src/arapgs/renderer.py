"""CPU splat renderer: EWA projection plus front-to-back compositing.

Projection, covariance flattening and culling are vectorized numpy; the
per-pixel compositing loop lives in the _kernels package (compiled when
available).  Splats are sorted by camera depth with full content tie-breaks,
so renders are invariant to the input order of the Gaussians, bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from ._quat import quat_to_matrix
from .splat_io import Camera, GaussianScene

log = logging.getLogger(__name__)

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)
DEFAULT_NEAR = 0.01
COV2D_FLOOR = 0.3  # px^2, added to the diagonal of every projected covariance
DEFAULT_MASK_DILATION = 4


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sh_rest_basis(dirs: np.ndarray) -> np.ndarray:
    """Real spherical-harmonic basis for degrees 1-3, (N,3) unit dirs -> (N,15)."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    b = np.empty((dirs.shape[0], 15))
    b[:, 0] = -SH_C1 * y
    b[:, 1] = SH_C1 * z
    b[:, 2] = -SH_C1 * x
    b[:, 3] = SH_C2[0] * xy
    b[:, 4] = SH_C2[1] * yz
    b[:, 5] = SH_C2[2] * (2.0 * zz - xx - yy)
    b[:, 6] = SH_C2[3] * xz
    b[:, 7] = SH_C2[4] * (xx - yy)
    b[:, 8] = SH_C3[0] * y * (3.0 * xx - yy)
    b[:, 9] = SH_C3[1] * xy * z
    b[:, 10] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    b[:, 11] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    b[:, 12] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    b[:, 13] = SH_C3[5] * z * (xx - yy)
    b[:, 14] = SH_C3[6] * x * (xx - 3.0 * yy)
    return b


def sh_rest_offset(sh_rest: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """View-dependent color offset from SH degrees >= 1 (channel-major coeffs)."""
    coeff = sh_rest.astype(np.float64).reshape(sh_rest.shape[0], 3, -1)
    basis = _sh_rest_basis(np.asarray(dirs, dtype=np.float64))
    return np.einsum("nct,nt->nc", coeff, basis[:, : coeff.shape[2]])


def sh_to_rgb(
    sh_dc: np.ndarray,
    sh_rest: np.ndarray | None = None,
    dirs: np.ndarray | None = None,
) -> np.ndarray:
    color = 0.5 + SH_C0 * sh_dc.astype(np.float64)
    if sh_rest is not None and sh_rest.size and dirs is not None:
        color = color + sh_rest_offset(sh_rest, dirs)
    return np.clip(color, 0.0, 1.0)


@dataclass
class ProjectedSplats:
    """Per-splat screen-space quantities, sorted front to back."""

    mean2d: np.ndarray   # (M,2)
    cov_inv: np.ndarray  # (M,3) conic (a,b,c) with q = a dx^2 + 2b dx dy + c dy^2
    radius: np.ndarray   # (M,) 3-sigma extent in pixels
    alpha: np.ndarray    # (M,)
    color: np.ndarray    # (M,3) in [0,1]
    depth: np.ndarray    # (M,) camera-space z
    index: np.ndarray    # (M,) scene indices
    dropped_nonfinite: int = 0

    @property
    def count(self) -> int:
        return self.mean2d.shape[0]


def _covariance3d(scene: GaussianScene) -> np.ndarray:
    rot = quat_to_matrix(scene.rotations.astype(np.float64))
    scale = np.exp(scene.log_scales.astype(np.float64))
    m = rot * scale[:, None, :]
    return m @ m.transpose(0, 2, 1)


def project_gaussians(
    scene: GaussianScene, camera: Camera, near: float = DEFAULT_NEAR
) -> ProjectedSplats:
    """Project every Gaussian to screen space and sort front to back.

    Splats behind the near plane, with sub-threshold opacity, or whose
    3-sigma box misses the image are dropped.  The sort key is depth followed
    by every screen-space attribute, which makes the order (and therefore
    the composite) independent of how the input scene is permuted.
    """
    w2c = camera.w2c()
    rot_w2c = w2c[:3, :3]
    pos_cam = scene.centers.astype(np.float64) @ rot_w2c.T + w2c[:3, 3]

    keep = pos_cam[:, 2] > near
    alpha = sigmoid(scene.opacity_logits.astype(np.float64))
    keep &= alpha >= _kernels.MIN_CONTRIB
    idx = np.nonzero(keep)[0]

    x, y, z = pos_cam[idx, 0], pos_cam[idx, 1], pos_cam[idx, 2]
    mx = camera.fx * x / z + camera.cx
    my = camera.fy * y / z + camera.cy

    # overflow here is handled by the non-finite cull below
    with np.errstate(over="ignore", invalid="ignore"):
        cov3 = _covariance3d(scene)[idx]
        cov_cam = rot_w2c @ cov3 @ rot_w2c.T

        n = idx.size
        jac = np.zeros((n, 2, 3))
        jac[:, 0, 0] = camera.fx / z
        jac[:, 0, 2] = -camera.fx * x / z**2
        jac[:, 1, 1] = camera.fy / z
        jac[:, 1, 2] = -camera.fy * y / z**2
        cov2 = jac @ cov_cam @ jac.transpose(0, 2, 1)
        cov2[:, 0, 0] += COV2D_FLOOR
        cov2[:, 1, 1] += COV2D_FLOOR

        a2, b2, c2 = cov2[:, 0, 0], cov2[:, 0, 1], cov2[:, 1, 1]
        det = a2 * c2 - b2 * b2
        mid = 0.5 * (a2 + c2)
        lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
        radius = 3.0 * np.sqrt(lam_max)

    finite = (
        np.isfinite(mx) & np.isfinite(my)
        & np.isfinite(a2) & np.isfinite(b2) & np.isfinite(c2)
    )
    dropped = int(np.sum(~finite))
    if dropped:
        log.warning("dropping %d splats with non-finite projection", dropped)

    ok = finite & (det > 0)
    ok &= (mx + radius >= 0) & (mx - radius <= camera.width - 1)
    ok &= (my + radius >= 0) & (my - radius <= camera.height - 1)

    sub = np.nonzero(ok)[0]
    conic = np.stack(
        [c2[sub] / det[sub], -b2[sub] / det[sub], a2[sub] / det[sub]], axis=1
    )
    mean2d = np.stack([mx[sub], my[sub]], axis=1)
    if scene.sh_rest.size:
        dirs = scene.centers[idx[sub]].astype(np.float64) - camera.c2w[:3, 3]
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        color = sh_to_rgb(scene.sh_dc[idx[sub]], scene.sh_rest[idx[sub]], dirs)
    else:
        color = sh_to_rgb(scene.sh_dc[idx[sub]])
    depth = z[sub]
    al = alpha[idx[sub]]
    rad = radius[sub]

    order = np.lexsort(
        (
            color[:, 2], color[:, 1], color[:, 0],
            conic[:, 2], conic[:, 1], conic[:, 0],
            rad, al, mean2d[:, 1], mean2d[:, 0],
            depth,
        )
    )
    return ProjectedSplats(
        mean2d=np.ascontiguousarray(mean2d[order]),
        cov_inv=np.ascontiguousarray(conic[order]),
        radius=np.ascontiguousarray(rad[order]),
        alpha=np.ascontiguousarray(al[order]),
        color=np.ascontiguousarray(color[order]),
        depth=np.ascontiguousarray(depth[order]),
        index=idx[sub][order],
        dropped_nonfinite=dropped,
    )


def _background(background, dtype=np.float64) -> np.ndarray:
    if background is None:
        return np.zeros(3, dtype=dtype)
    bg = np.asarray(background, dtype=dtype).reshape(3)
    return bg


def render(
    scene: GaussianScene,
    camera: Camera,
    background=None,
    near: float = DEFAULT_NEAR,
) -> np.ndarray:
    """Composite the scene into an (H,W,3) float image in [0,1]."""
    splats = project_gaussians(scene, camera, near=near)
    img = _kernels.composite(
        splats.mean2d,
        splats.cov_inv,
        splats.radius,
        splats.alpha,
        splats.color,
        camera.width,
        camera.height,
        _background(background),
    )
    # accumulated blend weights can exceed 1 by rounding; finalize to range
    return np.clip(img, 0.0, 1.0, out=img)


def to_u8(img: np.ndarray) -> np.ndarray:
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def render_u8(
    scene: GaussianScene,
    camera: Camera,
    background=None,
    near: float = DEFAULT_NEAR,
) -> np.ndarray:
    return to_u8(render(scene, camera, background=background, near=near))


def render_with_weights(
    scene: GaussianScene,
    camera: Camera,
    background=None,
    near: float = DEFAULT_NEAR,
):
    """Render and record each surviving splat contribution.

    Returns (image, pixel ids y*W+x, scene index per contribution, weight
    T*alpha*G per contribution).  The weights are exactly the blending
    factors used in the composite, so a loss gradient on colors can be
    scattered back through them.
    """
    splats = project_gaussians(scene, camera, near=near)
    img, pix, splat_rows, w = _kernels.composite_weights(
        splats.mean2d,
        splats.cov_inv,
        splats.radius,
        splats.alpha,
        splats.color,
        camera.width,
        camera.height,
        _background(background),
    )
    np.clip(img, 0.0, 1.0, out=img)
    return img, pix, splats.index[splat_rows], w


def footprint_mask(
    scene: GaussianScene,
    camera: Camera,
    select: np.ndarray,
    near: float = DEFAULT_NEAR,
) -> np.ndarray:
    """Union of 3-sigma ellipse footprints of the selected Gaussians."""
    splats = project_gaussians(scene, camera, near=near)
    keep = np.isin(splats.index, select)
    return _kernels.fill_ellipses(
        np.ascontiguousarray(splats.mean2d[keep]),
        np.ascontiguousarray(splats.cov_inv[keep]),
        np.ascontiguousarray(splats.radius[keep]),
        camera.width,
        camera.height,
    )


def displacement_mask(
    original: GaussianScene,
    deformed: GaussianScene,
    camera: Camera,
    threshold: float,
    dilation: int = DEFAULT_MASK_DILATION,
    near: float = DEFAULT_NEAR,
) -> np.ndarray:
    """Image mask covering Gaussians whose center moved beyond threshold.

    The footprints of the moved Gaussians are rasterized in the deformed
    scene, then dilated with a square structuring element.
    """
    moved = (
        np.linalg.norm(
            deformed.centers.astype(np.float64)
            - original.centers.astype(np.float64),
            axis=1,
        )
        > threshold
    )
    sel = np.nonzero(moved)[0]
    mask = footprint_mask(deformed, camera, sel, near=near)
    if dilation > 0 and mask.any():
        size = 2 * dilation + 1
        mask = ndimage.binary_dilation(mask, structure=np.ones((size, size), bool))
    return mask


def depth_at(
    scene: GaussianScene,
    camera: Camera,
    px: int,
    py: int,
    near: float = DEFAULT_NEAR,
) -> float | None:
    """Alpha-weighted median splat depth under an integer pixel.

    Mirrors the compositing cutoffs.  Returns None when the accumulated
    opacity at the pixel stays below one half (background shows through).
    """
    splats = project_gaussians(scene, camera, near=near)
    if splats.count == 0:
        return None
    dx = px - splats.mean2d[:, 0]
    dy = py - splats.mean2d[:, 1]
    a, b, c = splats.cov_inv[:, 0], splats.cov_inv[:, 1], splats.cov_inv[:, 2]
    q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
    w = splats.alpha * np.exp(-0.5 * q)
    cand = (q <= _kernels.Q_MAX) & (w >= _kernels.MIN_CONTRIB)
    if not cand.any():
        return None
    wi = w[cand]
    t_before = np.concatenate([[1.0], np.cumprod(1.0 - wi)[:-1]])
    active = t_before >= _kernels.T_STOP
    contrib = np.where(active, t_before * wi, 0.0)
    total = contrib.sum()
    if total < 0.5:
        return None
    depths = splats.depth[cand]
    cum = np.cumsum(contrib)
    j = int(np.searchsorted(cum, 0.5 * total))
    return float(depths[min(j, depths.size - 1)])


def project_points(
    camera: Camera, points: np.ndarray, near: float = DEFAULT_NEAR
) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates of world points plus an in-front-of-camera mask."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w2c = camera.w2c()
    cam = pts @ w2c[:3, :3].T + w2c[:3, 3]
    z = cam[:, 2]
    valid = z > near
    zs = np.where(valid, z, 1.0)
    px = camera.fx * cam[:, 0] / zs + camera.cx
    py = camera.fy * cam[:, 1] / zs + camera.cy
    return np.stack([px, py], axis=1), valid


def pick_point(
    scene: GaussianScene,
    camera: Camera,
    px: int,
    py: int,
    near: float = DEFAULT_NEAR,
) -> np.ndarray | None:
    """World-space point under a pixel, or None over background."""
    z = depth_at(scene, camera, px, py, near=near)
    if z is None:
        return None
    direction = np.array(
        [(px - camera.cx) / camera.fx, (py - camera.cy) / camera.fy, 1.0]
    )
    cam_pt = direction * z
    return camera.c2w[:3, :3] @ cam_pt + camera.c2w[:3, 3]
