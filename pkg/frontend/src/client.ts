/** Typed fetch client for the arapgs editing service. */

import type {
  CameraJson,
  DeformOptions,
  DragJson,
  JobInfo,
  RefineOptions,
  SessionInfo,
  Vec3,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }
}

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  /** called after every status check, e.g. to update a progress line */
  onStatus?: (job: JobInfo) => void;
}

export class ArapClient {
  readonly baseUrl: string;

  /** `baseUrl` has no trailing slash; "" targets the serving origin. */
  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async health(): Promise<{ status: string; version: string }> {
    return this.json("/api/health");
  }

  /**
   * Upload a scene (and optionally cameras) and open an editing session.
   * `cameras` may be a parsed list or a raw cameras.json blob.
   */
  async createSession(scene: Blob, cameras?: CameraJson[] | Blob): Promise<SessionInfo> {
    const form = new FormData();
    form.append("scene", scene, "scene.ply");
    if (cameras !== undefined) {
      const blob =
        cameras instanceof Blob
          ? cameras
          : new Blob([JSON.stringify({ cameras })], { type: "application/json" });
      form.append("cameras", blob, "cameras.json");
    }
    return this.json("/api/sessions", { method: "POST", body: form });
  }

  async getSession(sid: string): Promise<SessionInfo> {
    return this.json(`/api/sessions/${sid}`);
  }

  async deleteSession(sid: string): Promise<void> {
    await this.request(`/api/sessions/${sid}`, { method: "DELETE" });
  }

  async getCameras(sid: string): Promise<CameraJson[]> {
    const doc = await this.json<{ cameras: CameraJson[] }>(`/api/sessions/${sid}/cameras`);
    return doc.cameras;
  }

  async putCameras(sid: string, cameras: CameraJson[]): Promise<number> {
    const doc = await this.json<{ n_cameras: number }>(`/api/sessions/${sid}/cameras`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ cameras }),
    });
    return doc.n_cameras;
  }

  /** Raw binary preview payload; decode with `parsePointCloud`. */
  async fetchPointCloud(sid: string, maxPoints?: number): Promise<ArrayBuffer> {
    const query = maxPoints !== undefined ? `?max_points=${maxPoints}` : "";
    const res = await this.request(`/api/sessions/${sid}/pointcloud${query}`);
    return res.arrayBuffer();
  }

  /** URL of a server-side splat render, usable as an <img> src. */
  renderUrl(sid: string, camera: number, opts: { original?: boolean; background?: [number, number, number] } = {}): string {
    const params = new URLSearchParams({ camera: String(camera) });
    if (opts.original) {
      params.set("original", "true");
    }
    if (opts.background) {
      params.set("background", opts.background.join(","));
    }
    return `${this.baseUrl}/api/sessions/${sid}/render?${params}`;
  }

  sceneDownloadUrl(sid: string): string {
    return `${this.baseUrl}/api/sessions/${sid}/scene.ply`;
  }

  async downloadScene(sid: string): Promise<ArrayBuffer> {
    const res = await this.request(`/api/sessions/${sid}/scene.ply`);
    return res.arrayBuffer();
  }

  /** Splat under a pixel of a session camera, or null for background. */
  async pick(sid: string, camera: number, x: number, y: number): Promise<Vec3 | null> {
    const doc = await this.json<{ point: Vec3 | null }>(`/api/sessions/${sid}/pick`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ camera, x: Math.round(x), y: Math.round(y) }),
    });
    return doc.point;
  }

  async startDeform(sid: string, drag: DragJson, config?: DeformOptions): Promise<string> {
    const body: { drag: DragJson; config?: DeformOptions } = { drag };
    if (config !== undefined) {
      body.config = config;
    }
    const doc = await this.json<{ job_id: string }>(`/api/sessions/${sid}/deform`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return doc.job_id;
  }

  async startRefine(sid: string, config?: RefineOptions): Promise<string> {
    const body = config !== undefined ? { config } : {};
    const doc = await this.json<{ job_id: string }>(`/api/sessions/${sid}/refine`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return doc.job_id;
  }

  async revert(sid: string): Promise<void> {
    await this.request(`/api/sessions/${sid}/revert`, { method: "POST" });
  }

  async getJob(jobId: string): Promise<JobInfo> {
    return this.json(`/api/jobs/${jobId}`);
  }

  /** Poll until the job leaves "running"; throws on job error or timeout. */
  async pollJob(jobId: string, opts: PollOptions = {}): Promise<JobInfo> {
    const intervalMs = opts.intervalMs ?? 400;
    const timeoutMs = opts.timeoutMs ?? 300_000;
    const startedAt = Date.now();
    for (;;) {
      const job = await this.getJob(jobId);
      opts.onStatus?.(job);
      if (job.status === "done") {
        return job;
      }
      if (job.status === "error") {
        throw new Error(job.error ?? "background job failed");
      }
      if (Date.now() - startedAt > timeoutMs) {
        throw new Error(`job ${jobId} timed out after ${timeoutMs} ms`);
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) {
      let detail = `${res.status} ${res.statusText}`;
      try {
        const body = (await res.json()) as { detail?: unknown };
        if (typeof body.detail === "string") {
          detail = body.detail;
        }
      } catch {
        // not a JSON error body; keep the status line
      }
      throw new ApiError(res.status, detail);
    }
    return res;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.request(path, init);
    return (await res.json()) as T;
  }
}
