/** Page wiring: panes, marker tools and service calls. No framework. */

import { orbitCamera, pixelToWorldAtDepth, viewDepth } from "./camera.js";
import { ApiError, ArapClient } from "./client.js";
import {
  addAnchor,
  addHandle,
  createDraft,
  parseDrag,
  removeAnchor,
  removeHandle,
  serializeDrag,
  setTarget,
  type DragDraft,
} from "./markers.js";
import { cloudBounds, parsePointCloud, type PointCloud } from "./pointcloud.js";
import { applyRotation, selectionPivot } from "./rotate.js";
import { drawMarkers, pickNearest, renderPane } from "./viewport.js";
import type { CameraJson, SessionInfo, Vec3 } from "./types.js";

type Tool = "orbit" | "handle" | "anchor";

const PANE_WIDTH = 480;
const PANE_HEIGHT = 360;

function $<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

const state = {
  client: new ArapClient("http://127.0.0.1:8000"),
  session: null as SessionInfo | null,
  before: null as PointCloud | null,
  after: null as PointCloud | null,
  draft: createDraft(),
  selected: null as number | null,
  tool: "orbit" as Tool,
  orbit: { yaw: 0.6, pitch: 0.35, radius: 5, target: [0, 0, 0] as Vec3 },
  serverCamera: 0,
  nCameras: 0,
  dragging: null as null | { kind: "orbit"; x: number; y: number } | { kind: "target"; index: number; depth: number },
};

function paneCamera(): CameraJson {
  const o = state.orbit;
  return orbitCamera(o.target, o.radius, o.yaw, o.pitch, {
    width: PANE_WIDTH,
    height: PANE_HEIGHT,
  });
}

function setStatus(text: string, isError = false): void {
  const el = $<HTMLDivElement>("status");
  el.textContent = text;
  el.className = isError ? "status error" : "status";
}

function blit(canvasId: string, cloud: PointCloud | null, draft: DragDraft | null): void {
  const canvas = $<HTMLCanvasElement>(canvasId);
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    return;
  }
  if (cloud === null) {
    ctx.fillStyle = "#11131a";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    return;
  }
  const cam = paneCamera();
  const pane = renderPane(cloud, cam);
  if (draft !== null) {
    drawMarkers(pane, cam, draft);
  }
  ctx.putImageData(new ImageData(pane.data, pane.width, pane.height), 0, 0);
}

function redraw(): void {
  blit("beforePane", state.before, state.draft);
  blit("afterPane", state.after, null);
  renderMarkerList();
}

function refreshServerViews(): void {
  if (state.session === null || state.nCameras === 0) {
    return;
  }
  const sid = state.session.session_id;
  const bust = `&t=${Date.now()}`;
  $<HTMLImageElement>("serverBefore").src =
    state.client.renderUrl(sid, state.serverCamera, { original: true }) + bust;
  $<HTMLImageElement>("serverAfter").src =
    state.client.renderUrl(sid, state.serverCamera) + bust;
}

function renderMarkerList(): void {
  const list = $<HTMLUListElement>("markerList");
  list.replaceChildren();
  state.draft.handles.forEach((handle, i) => {
    const item = document.createElement("li");
    item.className = i === state.selected ? "marker selected" : "marker";
    const label = document.createElement("span");
    label.textContent = `handle ${i}: (${fmt(handle.source)}) → (${fmt(handle.target)})`;
    label.addEventListener("click", () => {
      state.selected = i;
      redraw();
    });
    const del = document.createElement("button");
    del.textContent = "×";
    del.addEventListener("click", () => {
      removeHandle(state.draft, i);
      state.selected = null;
      redraw();
    });
    item.append(label, del);
    list.append(item);
  });
  state.draft.anchors.forEach((anchor, i) => {
    const item = document.createElement("li");
    item.className = "marker";
    const label = document.createElement("span");
    label.textContent = `anchor ${i}: (${fmt(anchor)})`;
    const del = document.createElement("button");
    del.textContent = "×";
    del.addEventListener("click", () => {
      removeAnchor(state.draft, i);
      redraw();
    });
    item.append(label, del);
    list.append(item);
  });
}

function fmt(v: Vec3): string {
  return v.map((x) => x.toFixed(2)).join(", ");
}

function canvasPixel(canvas: HTMLCanvasElement, ev: MouseEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * canvas.width,
    y: ((ev.clientY - rect.top) / rect.height) * canvas.height,
  };
}

async function reloadClouds(): Promise<void> {
  if (state.session === null) {
    return;
  }
  const sid = state.session.session_id;
  state.after = parsePointCloud(await state.client.fetchPointCloud(sid));
  if (state.before === null) {
    state.before = state.after;
  }
  redraw();
  refreshServerViews();
}

async function uploadScene(): Promise<void> {
  const sceneInput = $<HTMLInputElement>("sceneFile");
  const camerasInput = $<HTMLInputElement>("camerasFile");
  const scene = sceneInput.files?.[0];
  if (scene === undefined) {
    setStatus("choose a .ply scene first", true);
    return;
  }
  const base = $<HTMLInputElement>("serverUrl").value.trim();
  state.client = new ArapClient(base);
  setStatus("uploading…");
  try {
    state.session = await state.client.createSession(scene, camerasInput.files?.[0]);
    state.before = null;
    state.draft = createDraft();
    state.selected = null;
    state.nCameras = state.session.n_cameras;
    await reloadClouds();
    const bounds = state.before === null ? null : cloudBounds(state.before);
    if (bounds !== null) {
      state.orbit.target = [
        (bounds.min[0] + bounds.max[0]) / 2,
        (bounds.min[1] + bounds.max[1]) / 2,
        (bounds.min[2] + bounds.max[2]) / 2,
      ];
      state.orbit.radius = 2.5 * Math.max(
        1e-6,
        Math.hypot(
          bounds.max[0] - bounds.min[0],
          bounds.max[1] - bounds.min[1],
          bounds.max[2] - bounds.min[2],
        ) / 2,
      );
    }
    populateCameraSelect();
    redraw();
    refreshServerViews();
    setStatus(
      `session ${state.session.session_id.slice(0, 8)}… ` +
        `(${state.session.count} splats, ${state.session.n_cameras} cameras)`,
    );
  } catch (err) {
    setStatus(describe(err), true);
  }
}

function populateCameraSelect(): void {
  const select = $<HTMLSelectElement>("cameraIndex");
  select.replaceChildren();
  for (let i = 0; i < state.nCameras; i++) {
    const opt = document.createElement("option");
    opt.value = String(i);
    opt.textContent = `camera ${i}`;
    select.append(opt);
  }
  select.disabled = state.nCameras === 0;
}

async function runDeform(): Promise<void> {
  if (state.session === null) {
    setStatus("upload a scene first", true);
    return;
  }
  try {
    const drag = serializeDrag(state.draft);
    const jobId = await state.client.startDeform(state.session.session_id, JSON.parse(drag));
    setStatus("deforming…");
    const job = await state.client.pollJob(jobId, {
      onStatus: (j) => setStatus(`deform job ${j.status}…`),
    });
    await reloadClouds();
    const result = job.result as { iterations?: number; final_energy?: number } | null;
    setStatus(
      `deform done: ${result?.iterations ?? "?"} iterations, ` +
        `energy ${result?.final_energy?.toExponential(3) ?? "?"}`,
    );
  } catch (err) {
    setStatus(describe(err), true);
  }
}

async function runRefine(): Promise<void> {
  if (state.session === null) {
    setStatus("upload a scene first", true);
    return;
  }
  try {
    const jobId = await state.client.startRefine(state.session.session_id);
    setStatus("refining…");
    await state.client.pollJob(jobId, {
      onStatus: (j) => setStatus(`refine job ${j.status}…`),
    });
    await reloadClouds();
    setStatus("refine done");
  } catch (err) {
    setStatus(describe(err), true);
  }
}

async function runRevert(): Promise<void> {
  if (state.session === null) {
    return;
  }
  try {
    await state.client.revert(state.session.session_id);
    await reloadClouds();
    setStatus("reverted to the uploaded scene");
  } catch (err) {
    setStatus(describe(err), true);
  }
}

function exportDragFile(): void {
  try {
    const text = serializeDrag(state.draft);
    const url = URL.createObjectURL(new Blob([text], { type: "application/json" }));
    const link = document.createElement("a");
    link.href = url;
    link.download = "drag.json";
    link.click();
    URL.revokeObjectURL(url);
  } catch (err) {
    setStatus(describe(err), true);
  }
}

async function importDragFile(file: File): Promise<void> {
  try {
    state.draft = parseDrag(await file.text());
    state.selected = null;
    redraw();
    setStatus(`imported ${state.draft.handles.length} handles, ${state.draft.anchors.length} anchors`);
  } catch (err) {
    setStatus(describe(err), true);
  }
}

function rotateSelection(): void {
  const indices =
    state.selected === null ? state.draft.handles.map((_, i) => i) : [state.selected];
  if (indices.length === 0) {
    setStatus("add a handle before rotating", true);
    return;
  }
  const axisName = $<HTMLSelectElement>("rotateAxis").value;
  const axis: Vec3 = axisName === "x" ? [1, 0, 0] : axisName === "y" ? [0, 1, 0] : [0, 0, 1];
  const angle = (Number($<HTMLInputElement>("rotateAngle").value) * Math.PI) / 180;
  applyRotation(state.draft, indices, selectionPivot(state.draft, indices), axis, angle);
  redraw();
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `error ${err.status}: ${err.message}`;
  }
  return err instanceof Error ? `error: ${err.message}` : String(err);
}

function onPaneDown(ev: MouseEvent): void {
  const canvas = $<HTMLCanvasElement>("beforePane");
  const { x, y } = canvasPixel(canvas, ev);
  if (state.tool === "orbit" || state.before === null) {
    state.dragging = { kind: "orbit", x: ev.clientX, y: ev.clientY };
    return;
  }
  const cam = paneCamera();
  if (state.tool === "handle") {
    // grab an existing target square first so handles stay adjustable
    for (let i = 0; i < state.draft.handles.length; i++) {
      const target = state.draft.handles[i].target;
      const hit = pickNearestMarker(cam, target, x, y);
      if (hit) {
        state.selected = i;
        state.dragging = { kind: "target", index: i, depth: viewDepth(cam, target) };
        return;
      }
    }
    const picked = pickNearest(state.before, cam, x, y);
    if (picked !== null) {
      state.selected = addHandle(state.draft, picked.position);
      state.dragging = { kind: "target", index: state.selected, depth: picked.depth };
      redraw();
    }
    return;
  }
  const picked = pickNearest(state.before, cam, x, y);
  if (picked !== null) {
    addAnchor(state.draft, picked.position);
    redraw();
  }
}

function pickNearestMarker(cam: CameraJson, point: Vec3, x: number, y: number): boolean {
  const cloud: PointCloud = {
    count: 1,
    positions: new Float32Array(point),
    colors: new Uint8Array(3),
  };
  return pickNearest(cloud, cam, x, y, 6) !== null;
}

function onPaneMove(ev: MouseEvent): void {
  if (state.dragging === null) {
    return;
  }
  if (state.dragging.kind === "orbit") {
    state.orbit.yaw += (ev.clientX - state.dragging.x) * 0.008;
    state.orbit.pitch = Math.min(
      1.5,
      Math.max(-1.5, state.orbit.pitch + (ev.clientY - state.dragging.y) * 0.008),
    );
    state.dragging = { kind: "orbit", x: ev.clientX, y: ev.clientY };
    redraw();
    return;
  }
  const canvas = $<HTMLCanvasElement>("beforePane");
  const { x, y } = canvasPixel(canvas, ev);
  const target = pixelToWorldAtDepth(paneCamera(), x, y, state.dragging.depth);
  setTarget(state.draft, state.dragging.index, target);
  redraw();
}

function main(): void {
  $<HTMLButtonElement>("uploadBtn").addEventListener("click", () => void uploadScene());
  $<HTMLButtonElement>("deformBtn").addEventListener("click", () => void runDeform());
  $<HTMLButtonElement>("refineBtn").addEventListener("click", () => void runRefine());
  $<HTMLButtonElement>("revertBtn").addEventListener("click", () => void runRevert());
  $<HTMLButtonElement>("exportBtn").addEventListener("click", exportDragFile);
  $<HTMLButtonElement>("rotateBtn").addEventListener("click", rotateSelection);
  $<HTMLInputElement>("importFile").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file !== undefined) {
      void importDragFile(file);
    }
  });
  $<HTMLSelectElement>("tool").addEventListener("change", (ev) => {
    state.tool = (ev.target as HTMLSelectElement).value as Tool;
  });
  $<HTMLSelectElement>("cameraIndex").addEventListener("change", (ev) => {
    state.serverCamera = Number((ev.target as HTMLSelectElement).value);
    refreshServerViews();
  });
  const pane = $<HTMLCanvasElement>("beforePane");
  pane.addEventListener("mousedown", onPaneDown);
  window.addEventListener("mousemove", onPaneMove);
  window.addEventListener("mouseup", () => {
    state.dragging = null;
  });
  pane.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    state.orbit.radius *= Math.exp(ev.deltaY * 0.001);
    redraw();
  });
  $<HTMLCanvasElement>("afterPane").addEventListener("wheel", (ev) => ev.preventDefault());
  redraw();
  setStatus("upload a scene to start editing");
}

main();
