/** Payload shapes of the arapgs editing service (`/api/*`). */

export type Vec3 = [number, number, number];

export interface SessionInfo {
  session_id: string;
  count: number;
  bbox_diagonal: number;
  n_cameras: number;
  busy: boolean;
}

export interface JobInfo {
  job_id: string;
  kind: "deform" | "refine";
  session_id: string;
  status: "running" | "done" | "error";
  error: string | null;
  result: Record<string, unknown> | null;
}

export interface DeformResult {
  iterations: number;
  converged: boolean;
  final_energy: number;
  constraints: number;
}

export interface RefineResult {
  iterations: number;
  optimized_gaussians: number;
  final_loss: number | null;
}

/** Pinhole camera; `c2w` is a row-major 4x4 (x right, y down, z forward). */
export interface CameraJson {
  width: number;
  height: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  c2w: number[];
  image?: string;
}

export interface HandleJson {
  source: Vec3;
  target: Vec3;
}

export interface BoxRegionJson {
  type: "box";
  min: Vec3;
  max: Vec3;
}

export interface SphereRegionJson {
  type: "sphere";
  center: Vec3;
  radius: number;
}

export type RegionJson = BoxRegionJson | SphereRegionJson;

/** On-disk drag.json document, as consumed by the CLI and the service. */
export interface DragJson {
  handles: HandleJson[];
  anchors?: Vec3[];
  region?: RegionJson;
  auto_anchor_radius?: number;
}

export interface DeformOptions {
  n_sub?: number;
  graph_k?: number;
  interp_k?: number;
  max_iters?: number;
  rel_tol?: number;
  weight_mode?: "uniform" | "gaussian";
  seed?: number;
}

export interface RefineOptions {
  iterations?: number;
  lr?: number;
  update_period?: number;
  views_per_update?: number;
  displacement_threshold?: number;
  mask_dilation?: number;
  near?: number;
}
