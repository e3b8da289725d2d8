/** Rotation helper: swing selected handle targets around a pivot axis. */

import type { DragDraft } from "./markers.js";
import type { Vec3 } from "./types.js";

/** Rotate `p` by `angle` radians around the axis through `pivot`. */
export function rotatePoint(p: Vec3, pivot: Vec3, axis: Vec3, angle: number): Vec3 {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  if (n === 0) {
    throw new Error("rotation axis must be non-zero");
  }
  const kx = axis[0] / n;
  const ky = axis[1] / n;
  const kz = axis[2] / n;
  const vx = p[0] - pivot[0];
  const vy = p[1] - pivot[1];
  const vz = p[2] - pivot[2];
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  // v cos + (k x v) sin + k (k . v) (1 - cos)
  const cxv = ky * vz - kz * vy;
  const cyv = kz * vx - kx * vz;
  const czv = kx * vy - ky * vx;
  const kd = (kx * vx + ky * vy + kz * vz) * (1 - c);
  return [
    pivot[0] + vx * c + cxv * s + kx * kd,
    pivot[1] + vy * c + cyv * s + ky * kd,
    pivot[2] + vz * c + czv * s + kz * kd,
  ];
}

/** Targets for rotating every source around the pivot axis. */
export function rotationTargets(sources: Vec3[], pivot: Vec3, axis: Vec3, angle: number): Vec3[] {
  return sources.map((p) => rotatePoint(p, pivot, axis, angle));
}

/** Mean of the selected handles' sources: the default rotation pivot. */
export function selectionPivot(draft: DragDraft, indices: number[]): Vec3 {
  if (indices.length === 0) {
    throw new Error("rotation needs at least one selected handle");
  }
  const pivot: Vec3 = [0, 0, 0];
  for (const i of indices) {
    const handle = draft.handles[i];
    if (!handle) {
      throw new Error(`no handle ${i}`);
    }
    pivot[0] += handle.source[0];
    pivot[1] += handle.source[1];
    pivot[2] += handle.source[2];
  }
  pivot[0] /= indices.length;
  pivot[1] /= indices.length;
  pivot[2] /= indices.length;
  return pivot;
}

/**
 * Set each selected handle's target to its rotated source. Unselected
 * handles keep their targets.
 */
export function applyRotation(
  draft: DragDraft,
  indices: number[],
  pivot: Vec3,
  axis: Vec3,
  angle: number,
): void {
  for (const i of indices) {
    const handle = draft.handles[i];
    if (!handle) {
      throw new Error(`no handle ${i}`);
    }
    handle.target = rotatePoint(handle.source, pivot, axis, angle);
  }
}
