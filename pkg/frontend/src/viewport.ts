/** Software point-cloud panes: deterministic pixels, no canvas needed. */

import { worldToPixel } from "./camera.js";
import type { DragDraft } from "./markers.js";
import type { PointCloud } from "./pointcloud.js";
import type { CameraJson, Vec3 } from "./types.js";

/** RGBA pixel buffer; `data.length === width * height * 4`. */
export interface Pane {
  width: number;
  height: number;
  data: Uint8ClampedArray<ArrayBuffer>;
}

export interface PaneOptions {
  /** rgb 0..255 */
  background?: [number, number, number];
  /** side of the square drawn per point, in pixels */
  pointSize?: number;
}

const DEFAULT_BACKGROUND: [number, number, number] = [17, 19, 26];

export const MARKER_COLORS = {
  source: [80, 220, 255] as const,
  target: [255, 170, 40] as const,
  link: [170, 170, 170] as const,
  anchor: [240, 80, 200] as const,
};

/**
 * Render the cloud through the camera with a depth buffer. Points are
 * drawn in index order and depth ties keep the earlier point, so equal
 * inputs always produce byte-equal panes.
 */
export function renderPane(cloud: PointCloud, cam: CameraJson, opts: PaneOptions = {}): Pane {
  const width = cam.width;
  const height = cam.height;
  const bg = opts.background ?? DEFAULT_BACKGROUND;
  const size = Math.max(1, Math.round(opts.pointSize ?? 2));
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    data[i * 4] = bg[0];
    data[i * 4 + 1] = bg[1];
    data[i * 4 + 2] = bg[2];
    data[i * 4 + 3] = 255;
  }
  const zbuf = new Float32Array(width * height).fill(Infinity);
  const half = size >> 1;
  const p: Vec3 = [0, 0, 0];
  for (let i = 0; i < cloud.count; i++) {
    p[0] = cloud.positions[i * 3];
    p[1] = cloud.positions[i * 3 + 1];
    p[2] = cloud.positions[i * 3 + 2];
    const hit = worldToPixel(cam, p);
    if (hit === null) {
      continue;
    }
    const px = Math.round(hit.x) - half;
    const py = Math.round(hit.y) - half;
    const r = cloud.colors[i * 3];
    const g = cloud.colors[i * 3 + 1];
    const b = cloud.colors[i * 3 + 2];
    for (let dy = 0; dy < size; dy++) {
      const y = py + dy;
      if (y < 0 || y >= height) {
        continue;
      }
      for (let dx = 0; dx < size; dx++) {
        const x = px + dx;
        if (x < 0 || x >= width) {
          continue;
        }
        const idx = y * width + x;
        if (hit.depth < zbuf[idx]) {
          zbuf[idx] = hit.depth;
          data[idx * 4] = r;
          data[idx * 4 + 1] = g;
          data[idx * 4 + 2] = b;
        }
      }
    }
  }
  return { width, height, data };
}

/** Paint one pixel, ignoring out-of-bounds coordinates. */
export function putPixel(pane: Pane, x: number, y: number, rgb: readonly [number, number, number] | readonly number[]): void {
  if (x < 0 || y < 0 || x >= pane.width || y >= pane.height) {
    return;
  }
  const idx = (y * pane.width + x) * 4;
  pane.data[idx] = rgb[0];
  pane.data[idx + 1] = rgb[1];
  pane.data[idx + 2] = rgb[2];
  pane.data[idx + 3] = 255;
}

/** Integer Bresenham line. */
export function drawLine(pane: Pane, x0: number, y0: number, x1: number, y1: number, rgb: readonly number[]): void {
  let x = Math.round(x0);
  let y = Math.round(y0);
  const ex = Math.round(x1);
  const ey = Math.round(y1);
  const dx = Math.abs(ex - x);
  const dy = -Math.abs(ey - y);
  const sx = x < ex ? 1 : -1;
  const sy = y < ey ? 1 : -1;
  let err = dx + dy;
  for (;;) {
    putPixel(pane, x, y, rgb);
    if (x === ex && y === ey) {
      break;
    }
    const e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}

export function drawCross(pane: Pane, x: number, y: number, arm: number, rgb: readonly number[]): void {
  const cx = Math.round(x);
  const cy = Math.round(y);
  for (let d = -arm; d <= arm; d++) {
    putPixel(pane, cx + d, cy, rgb);
    putPixel(pane, cx, cy + d, rgb);
  }
}

export function drawDiagonalCross(pane: Pane, x: number, y: number, arm: number, rgb: readonly number[]): void {
  const cx = Math.round(x);
  const cy = Math.round(y);
  for (let d = -arm; d <= arm; d++) {
    putPixel(pane, cx + d, cy + d, rgb);
    putPixel(pane, cx + d, cy - d, rgb);
  }
}

export function drawSquare(pane: Pane, x: number, y: number, arm: number, rgb: readonly number[]): void {
  const cx = Math.round(x);
  const cy = Math.round(y);
  for (let d = -arm; d <= arm; d++) {
    putPixel(pane, cx + d, cy - arm, rgb);
    putPixel(pane, cx + d, cy + arm, rgb);
    putPixel(pane, cx - arm, cy + d, rgb);
    putPixel(pane, cx + arm, cy + d, rgb);
  }
}

/** Overlay the draft's handles and anchors onto an already rendered pane. */
export function drawMarkers(pane: Pane, cam: CameraJson, draft: DragDraft): void {
  for (const handle of draft.handles) {
    const src = worldToPixel(cam, handle.source);
    const dst = worldToPixel(cam, handle.target);
    if (src !== null && dst !== null) {
      drawLine(pane, src.x, src.y, dst.x, dst.y, MARKER_COLORS.link);
    }
    if (src !== null) {
      drawCross(pane, src.x, src.y, 4, MARKER_COLORS.source);
    }
    if (dst !== null) {
      drawSquare(pane, dst.x, dst.y, 3, MARKER_COLORS.target);
    }
  }
  for (const anchor of draft.anchors) {
    const hit = worldToPixel(cam, anchor);
    if (hit !== null) {
      drawDiagonalCross(pane, hit.x, hit.y, 3, MARKER_COLORS.anchor);
    }
  }
}

export interface PickHit {
  index: number;
  position: Vec3;
  /** screen distance to the query pixel */
  distance: number;
  depth: number;
}

/**
 * Nearest projected cloud point within `radius` pixels of (x, y); ties
 * prefer the closer, then the lower-indexed point.
 */
export function pickNearest(cloud: PointCloud, cam: CameraJson, x: number, y: number, radius = 8): PickHit | null {
  let best: PickHit | null = null;
  const p: Vec3 = [0, 0, 0];
  for (let i = 0; i < cloud.count; i++) {
    p[0] = cloud.positions[i * 3];
    p[1] = cloud.positions[i * 3 + 1];
    p[2] = cloud.positions[i * 3 + 2];
    const hit = worldToPixel(cam, p);
    if (hit === null) {
      continue;
    }
    const d = Math.hypot(hit.x - x, hit.y - y);
    if (d > radius) {
      continue;
    }
    if (
      best === null ||
      d < best.distance ||
      (d === best.distance && hit.depth < best.depth)
    ) {
      best = { index: i, position: [p[0], p[1], p[2]], distance: d, depth: hit.depth };
    }
  }
  return best;
}

/** Byte equality of two panes (same size and identical pixels). */
export function panesEqual(a: Pane, b: Pane): boolean {
  if (a.width !== b.width || a.height !== b.height || a.data.length !== b.data.length) {
    return false;
  }
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) {
      return false;
    }
  }
  return true;
}
