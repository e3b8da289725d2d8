"""Mask-guided appearance refinement after a deformation.

Supervision targets start as the reference images.  Every update_period
steps the next views_per_update views (round robin) are re-rendered from
the current scene, run through an enhancer (identity, a 3x3 sharpen, an
external command, or any callable), and merged with the reference inside
the displacement mask to become the new target.  Each optimization step
renders one view (round robin), measures mean absolute error on masked
pixels, and updates the base SH colors of the displaced Gaussians; blending
weights come from the forward composite, so the color gradient is exact
for frozen geometry.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataError, EnhancerError
from .renderer import (
    DEFAULT_MASK_DILATION,
    DEFAULT_NEAR,
    SH_C0,
    displacement_mask,
    render,
    render_with_weights,
    sh_rest_offset,
    to_u8,
)
from .splat_io import Camera, GaussianScene

log = logging.getLogger(__name__)

DEFAULT_LR = 0.0025
DEFAULT_UPDATE_PERIOD = 10
DEFAULT_VIEWS_PER_UPDATE = 1
DISPLACEMENT_THRESHOLD_FRACTION = 0.01
ENHANCER_CMD_ENV = "ARAPGS_ENHANCER_CMD"

# unsharp mask: identity minus the 4-neighbor Laplacian; sums to 1, so
# constant images pass through unchanged
SHARPEN_KERNEL = np.array(
    [[0.0, -1.0, 0.0], [-1.0, 5.0, -1.0], [0.0, -1.0, 0.0]]
)

Enhancer = Callable[[np.ndarray, str], np.ndarray]


class IdentityEnhancer:
    """Returns renders untouched; the no-dependency default."""

    def __call__(self, image: np.ndarray, name: str) -> np.ndarray:
        return image


class SharpenEnhancer:
    """Sharpens with the fixed 3x3 unsharp-mask kernel SHARPEN_KERNEL.

    Edges are replicated, channels filtered independently, and the result
    rounded back to uint8.
    """

    def __call__(self, image: np.ndarray, name: str) -> np.ndarray:
        img = image.astype(np.float64)
        out = np.empty_like(img)
        for c in range(img.shape[2]):
            out[..., c] = ndimage.convolve(
                img[..., c], SHARPEN_KERNEL, mode="nearest"
            )
        return np.clip(np.rint(out), 0.0, 255.0).astype(np.uint8)


class CommandEnhancer:
    """Runs an external command on a PNG and reads the result back.

    The command receives the input and output paths; with no placeholders
    the call is "<cmd> <input.png> <output.png>", while a template may
    place {input} and {output} anywhere, e.g. "upscale -i {input} -o
    {output}".  It must write a PNG of the same size to the output path
    and exit 0.
    """

    def __init__(self, template: str):
        self.template = template

    def __call__(self, image: np.ndarray, name: str) -> np.ndarray:
        with tempfile.TemporaryDirectory(prefix="enhance_") as tmp:
            src = Path(tmp) / f"{name}.png"
            dst = Path(tmp) / f"{name}_out.png"
            Image.fromarray(image).save(src)
            argv = [
                tok.replace("{input}", str(src)).replace("{output}", str(dst))
                for tok in shlex.split(self.template)
            ]
            if "{input}" not in self.template:
                argv.append(str(src))
            if "{output}" not in self.template:
                argv.append(str(dst))
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                raise EnhancerError(
                    f"enhancer exited {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            if not dst.exists():
                raise EnhancerError(f"enhancer wrote no output for view {name}")
            out = np.asarray(Image.open(dst).convert("RGB"))
        if out.shape != image.shape:
            raise EnhancerError(
                f"enhancer changed image shape {image.shape} -> {out.shape}"
            )
        return out


def make_enhancer(spec: str) -> Enhancer:
    """Build an enhancer from a config string.

    "identity" and "sharpen" name the built-ins; anything else is treated
    as an external command line.
    """
    if spec == "identity":
        return IdentityEnhancer()
    if spec == "sharpen":
        return SharpenEnhancer()
    return CommandEnhancer(spec)


def default_enhancer() -> Enhancer:
    spec = os.environ.get(ENHANCER_CMD_ENV)
    return make_enhancer(spec) if spec else IdentityEnhancer()


def merge_supervision(
    mask: np.ndarray, enhanced: np.ndarray, reference: np.ndarray
) -> np.ndarray:
    """Enhanced pixels inside the mask, reference pixels outside."""
    if enhanced.shape != reference.shape or mask.shape != enhanced.shape[:2]:
        raise DataError(
            f"merge inputs disagree: mask {mask.shape}, enhanced "
            f"{enhanced.shape}, reference {reference.shape}"
        )
    return np.where(mask[:, :, None], enhanced, reference)


def default_iterations(count: int) -> int:
    """Iteration budget scaled with scene size (800 small, 2000 at 3M)."""
    return int(np.clip(800 + (count - 500_000) * 1200 / 2_500_000, 800, 2000))


def load_reference_image(camera: Camera) -> np.ndarray | None:
    if camera.image_path is None:
        return None
    img = np.asarray(Image.open(camera.image_path).convert("RGB"), dtype=np.float64)
    if img.shape[0] != camera.height or img.shape[1] != camera.width:
        raise DataError(
            f"reference image {camera.image_path} is {img.shape[1]}x{img.shape[0]}, "
            f"camera expects {camera.width}x{camera.height}"
        )
    return img / 255.0


@dataclass
class RefinementConfig:
    iterations: int | None = None  # None: scale with scene size
    lr: float = DEFAULT_LR
    update_period: int = DEFAULT_UPDATE_PERIOD
    views_per_update: int = DEFAULT_VIEWS_PER_UPDATE
    displacement_threshold: float | None = None  # None: 1% of bbox diagonal
    mask_dilation: int = DEFAULT_MASK_DILATION
    near: float = DEFAULT_NEAR
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class RefineResult:
    scene: GaussianScene
    loss_history: np.ndarray          # (steps,) masked MAE of that step's view
    view_trace: np.ndarray            # (steps,) camera index rendered per step
    selected: np.ndarray              # scene indices whose sh_dc was optimized
    view_indices: np.ndarray          # camera indices with a nonempty mask
    masked_pixels: list[int] = field(default_factory=list)
    updates: list[tuple[int, int]] = field(default_factory=list)  # (step, camera)


def refine(
    original: GaussianScene,
    deformed: GaussianScene,
    cameras: Sequence[Camera],
    enhancer: Enhancer | None = None,
    config: RefinementConfig | None = None,
) -> RefineResult:
    """Optimize base SH colors of displaced Gaussians against merged targets.

    Only sh_dc rows of Gaussians that moved beyond the displacement
    threshold are touched; every other attribute (and every other Gaussian)
    stays bit-identical to the deformed input.
    """
    cfg = config or RefinementConfig()
    enhancer = enhancer or default_enhancer()
    if len(cameras) == 0:
        raise DataError("refinement needs at least one camera")

    threshold = cfg.displacement_threshold
    if threshold is None:
        threshold = DISPLACEMENT_THRESHOLD_FRACTION * original.bbox_diagonal()
    moved = (
        np.linalg.norm(
            deformed.centers.astype(np.float64)
            - original.centers.astype(np.float64),
            axis=1,
        )
        > threshold
    )
    selected = np.nonzero(moved)[0]
    scene = deformed.copy()
    if selected.size == 0:
        log.warning("no Gaussians moved beyond threshold; nothing to refine")
        return RefineResult(
            scene=scene,
            loss_history=np.zeros(0),
            view_trace=np.zeros(0, dtype=int),
            selected=selected,
            view_indices=np.zeros(0, dtype=int),
        )

    bg = np.asarray(cfg.background, dtype=np.float64)
    masks, references, used = [], [], []
    for vi, cam in enumerate(cameras):
        mask = displacement_mask(
            original, deformed, cam, threshold,
            dilation=cfg.mask_dilation, near=cfg.near,
        )
        if not mask.any():
            continue
        ref = load_reference_image(cam)
        if ref is None:
            ref = render(original, cam, background=bg, near=cfg.near)
        masks.append(mask)
        references.append(ref)
        used.append((vi, cam))
    if not used:
        log.warning("displacement mask is empty in every view; nothing to refine")
        return RefineResult(
            scene=scene,
            loss_history=np.zeros(0),
            view_trace=np.zeros(0, dtype=int),
            selected=selected,
            view_indices=np.zeros(0, dtype=int),
        )

    n_views = len(used)
    mask_counts = [int(m.sum()) for m in masks]
    iterations = cfg.iterations
    if iterations is None:
        iterations = default_iterations(scene.count)

    slot = np.full(scene.count, -1, dtype=np.int64)
    slot[selected] = np.arange(selected.size)
    sh = scene.sh_dc[selected].astype(np.float64)
    m1 = np.zeros_like(sh)
    m2 = np.zeros_like(sh)

    # geometry is frozen, so the view-dependent SH offset of each selected
    # Gaussian is a constant per view; it shifts the clamp gate below
    rest: list[np.ndarray] | None = None
    if scene.sh_rest.size:
        sel_centers = scene.centers[selected].astype(np.float64)
        rest = []
        for _, cam in used:
            dirs = sel_centers - cam.c2w[:3, 3]
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            rest.append(sh_rest_offset(scene.sh_rest[selected], dirs))

    supervision: list[np.ndarray] = list(references)
    history = np.zeros(iterations)
    view_trace = np.zeros(iterations, dtype=int)
    updates: list[tuple[int, int]] = []
    refresh_rr = 0

    for step in range(iterations):
        if step and step % cfg.update_period == 0:
            for _ in range(min(cfg.views_per_update, n_views)):
                v = refresh_rr % n_views
                refresh_rr += 1
                vi, cam = used[v]
                img = to_u8(render(scene, cam, background=bg, near=cfg.near))
                try:
                    enhanced = enhancer(img, f"view{vi:03d}")
                    if (
                        not isinstance(enhanced, np.ndarray)
                        or enhanced.shape != img.shape
                        or enhanced.dtype != np.uint8
                    ):
                        raise EnhancerError(
                            f"enhancer must return a uint8 array of shape {img.shape}"
                        )
                except EnhancerError as exc:
                    log.warning(
                        "enhancer failed on view %d, keeping raw render: %s",
                        vi, exc,
                    )
                    enhanced = img
                supervision[v] = merge_supervision(
                    masks[v], enhanced.astype(np.float64) / 255.0, references[v]
                )
                updates.append((step, vi))

        v = step % n_views
        vi, cam = used[v]
        img, pix, sid, w = render_with_weights(
            scene, cam, background=bg, near=cfg.near
        )
        diff = img - supervision[v]
        denom = mask_counts[v] * 3
        history[step] = np.abs(diff[masks[v]]).sum() / denom
        view_trace[step] = vi

        grad = np.zeros_like(sh)
        keep = masks[v].ravel()[pix] & (slot[sid] >= 0)
        if keep.any():
            sgn = np.sign(diff.reshape(-1, 3)[pix[keep]])
            contrib = (w[keep, None] * sgn) / denom
            # clamp subgradient: no color gradient where the pre-clamp color
            # (including any per-view SH offset) left [0,1]
            pre = 0.5 + SH_C0 * sh
            pre_v = pre if rest is None else pre + rest[v]
            rows = slot[sid[keep]]
            gate = (pre_v[rows] > 0.0) & (pre_v[rows] < 1.0)
            np.add.at(grad, rows, contrib * gate)
        grad_sh = SH_C0 * grad

        t = step + 1
        m1 = cfg.adam_beta1 * m1 + (1 - cfg.adam_beta1) * grad_sh
        m2 = cfg.adam_beta2 * m2 + (1 - cfg.adam_beta2) * grad_sh**2
        m1_hat = m1 / (1 - cfg.adam_beta1**t)
        m2_hat = m2 / (1 - cfg.adam_beta2**t)
        sh -= cfg.lr * m1_hat / (np.sqrt(m2_hat) + cfg.adam_eps)

        scene.sh_dc[selected] = sh.astype(np.float32)

    return RefineResult(
        scene=scene,
        loss_history=history,
        view_trace=view_trace,
        selected=selected,
        view_indices=np.array([vi for vi, _ in used], dtype=int),
        masked_pixels=mask_counts,
        updates=updates,
    )
