/** Pinhole projection math shared by the panes and the marker tools. */

import type { CameraJson, Vec3 } from "./types.js";

export interface PixelHit {
  x: number;
  y: number;
  /** camera-space depth along the view axis */
  depth: number;
}

/**
 * Project a world point through the camera. `c2w` is row-major with column
 * basis (right, down, forward); returns null behind or at the near plane.
 */
export function worldToPixel(cam: CameraJson, p: Vec3, near = 1e-6): PixelHit | null {
  const m = cam.c2w;
  const dx = p[0] - m[3];
  const dy = p[1] - m[7];
  const dz = p[2] - m[11];
  const x = m[0] * dx + m[4] * dy + m[8] * dz;
  const y = m[1] * dx + m[5] * dy + m[9] * dz;
  const z = m[2] * dx + m[6] * dy + m[10] * dz;
  if (z <= near) {
    return null;
  }
  return { x: (cam.fx * x) / z + cam.cx, y: (cam.fy * y) / z + cam.cy, depth: z };
}

/** Invert the projection at a fixed camera-space depth (drag-in-view-plane). */
export function pixelToWorldAtDepth(cam: CameraJson, px: number, py: number, depth: number): Vec3 {
  const x = ((px - cam.cx) / cam.fx) * depth;
  const y = ((py - cam.cy) / cam.fy) * depth;
  const m = cam.c2w;
  return [
    m[0] * x + m[1] * y + m[2] * depth + m[3],
    m[4] * x + m[5] * y + m[6] * depth + m[7],
    m[8] * x + m[9] * y + m[10] * depth + m[11],
  ];
}

/** Camera-space depth of a world point (positive in front of the camera). */
export function viewDepth(cam: CameraJson, p: Vec3): number {
  const m = cam.c2w;
  return (
    m[2] * (p[0] - m[3]) + m[6] * (p[1] - m[7]) + m[10] * (p[2] - m[11])
  );
}

/**
 * Build a camera on an orbit around `target`. Yaw spins around the world
 * y axis, pitch lifts the eye; the image keeps world-up pointing up.
 */
export function orbitCamera(
  target: Vec3,
  radius: number,
  yaw: number,
  pitch: number,
  view: { width: number; height: number; focal?: number },
): CameraJson {
  const cp = Math.cos(pitch);
  const eye: Vec3 = [
    target[0] + radius * Math.sin(yaw) * cp,
    target[1] + radius * Math.sin(pitch),
    target[2] - radius * Math.cos(yaw) * cp,
  ];
  const focal = view.focal ?? 0.9 * Math.max(view.width, view.height);
  return {
    width: view.width,
    height: view.height,
    fx: focal,
    fy: focal,
    cx: view.width / 2,
    cy: view.height / 2,
    c2w: lookAt(eye, target),
  };
}

/** Row-major c2w whose columns are (right, down, forward, eye). */
export function lookAt(eye: Vec3, target: Vec3, up: Vec3 = [0, 1, 0]): number[] {
  let fx = target[0] - eye[0];
  let fy = target[1] - eye[1];
  let fz = target[2] - eye[2];
  const fn = Math.hypot(fx, fy, fz);
  if (fn === 0) {
    throw new Error("lookAt: eye and target coincide");
  }
  fx /= fn;
  fy /= fn;
  fz /= fn;
  let rx = up[1] * fz - up[2] * fy;
  let ry = up[2] * fx - up[0] * fz;
  let rz = up[0] * fy - up[1] * fx;
  const rn = Math.hypot(rx, ry, rz);
  if (rn < 1e-12) {
    throw new Error("lookAt: view direction is parallel to up");
  }
  rx /= rn;
  ry /= rn;
  rz /= rn;
  // y points down in image space, hence forward x right
  const dx = fy * rz - fz * ry;
  const dy = fz * rx - fx * rz;
  const dz = fx * ry - fy * rx;
  return [
    rx, dx, fx, eye[0],
    ry, dy, fy, eye[1],
    rz, dz, fz, eye[2],
    0, 0, 0, 1,
  ];
}
