/** Editor model for a drag edit, and its (de)serialization to drag.json. */

import type { DragJson, HandleJson, RegionJson, Vec3 } from "./types.js";

/** Working copy of an edit: drag handles plus pinned anchors. */
export interface DragDraft {
  handles: HandleJson[];
  anchors: Vec3[];
  region: RegionJson | null;
  autoAnchorRadius: number | null;
}

export function createDraft(): DragDraft {
  return { handles: [], anchors: [], region: null, autoAnchorRadius: null };
}

/** Add a handle whose target starts at its source; returns its index. */
export function addHandle(draft: DragDraft, source: Vec3): number {
  draft.handles.push({ source: [...source], target: [...source] });
  return draft.handles.length - 1;
}

export function addAnchor(draft: DragDraft, position: Vec3): number {
  draft.anchors.push([...position]);
  return draft.anchors.length - 1;
}

export function setTarget(draft: DragDraft, index: number, target: Vec3): void {
  const handle = draft.handles[index];
  if (!handle) {
    throw new Error(`no handle ${index}`);
  }
  handle.target = [...target];
}

export function removeHandle(draft: DragDraft, index: number): void {
  draft.handles.splice(index, 1);
}

export function removeAnchor(draft: DragDraft, index: number): void {
  draft.anchors.splice(index, 1);
}

/**
 * Build the drag.json document. Optional parts are omitted when unset so
 * the output matches what a hand-written file would contain.
 */
export function exportDrag(draft: DragDraft): DragJson {
  if (draft.handles.length === 0) {
    throw new Error("an edit needs at least one handle");
  }
  const doc: DragJson = {
    handles: draft.handles.map((h) => ({ source: [...h.source], target: [...h.target] })),
  };
  if (draft.anchors.length > 0) {
    doc.anchors = draft.anchors.map((a) => [...a]);
  }
  if (draft.region !== null) {
    doc.region = { ...draft.region };
  }
  if (draft.autoAnchorRadius !== null) {
    doc.auto_anchor_radius = draft.autoAnchorRadius;
  }
  return doc;
}

export function serializeDrag(draft: DragDraft): string {
  return JSON.stringify(exportDrag(draft), null, 2) + "\n";
}

/** Parse and validate a drag.json document back into a draft. */
export function importDrag(doc: unknown): DragDraft {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new Error("/: expected object");
  }
  const obj = doc as Record<string, unknown>;
  const handles = obj["handles"];
  if (!Array.isArray(handles) || handles.length === 0) {
    throw new Error("/handles: must be a non-empty list");
  }
  const draft = createDraft();
  handles.forEach((h, i) => {
    if (typeof h !== "object" || h === null || Array.isArray(h)) {
      throw new Error(`/handles/${i}: expected object`);
    }
    const entry = h as Record<string, unknown>;
    draft.handles.push({
      source: vec3At(entry["source"], `/handles/${i}/source`),
      target: vec3At(entry["target"], `/handles/${i}/target`),
    });
  });
  const anchors = obj["anchors"] ?? [];
  if (!Array.isArray(anchors)) {
    throw new Error("/anchors: must be a list");
  }
  anchors.forEach((a, i) => draft.anchors.push(vec3At(a, `/anchors/${i}`)));
  draft.region = regionAt(obj["region"]);
  if (draft.region !== null) {
    draft.handles.forEach((h, i) => {
      if (!regionContains(draft.region as RegionJson, h.source)) {
        throw new Error(`/handles/${i}/source: lies outside the region`);
      }
    });
  }
  const radius = obj["auto_anchor_radius"];
  if (radius !== undefined && radius !== null) {
    if (typeof radius !== "number" || !(radius >= 0)) {
      throw new Error("/auto_anchor_radius: must be a non-negative number");
    }
    draft.autoAnchorRadius = radius;
  }
  return draft;
}

export function parseDrag(text: string): DragDraft {
  return importDrag(JSON.parse(text));
}

export function regionContains(region: RegionJson, p: Vec3): boolean {
  if (region.type === "box") {
    return (
      p[0] >= region.min[0] && p[0] <= region.max[0] &&
      p[1] >= region.min[1] && p[1] <= region.max[1] &&
      p[2] >= region.min[2] && p[2] <= region.max[2]
    );
  }
  const dx = p[0] - region.center[0];
  const dy = p[1] - region.center[1];
  const dz = p[2] - region.center[2];
  return dx * dx + dy * dy + dz * dz <= region.radius * region.radius;
}

function vec3At(value: unknown, pointer: string): Vec3 {
  if (!Array.isArray(value) || value.length !== 3 || !value.every((v) => typeof v === "number" && Number.isFinite(v))) {
    throw new Error(`${pointer}: expected 3 finite numbers`);
  }
  return [value[0], value[1], value[2]];
}

function regionAt(value: unknown): RegionJson | null {
  if (value === undefined || value === null) {
    return null;
  }
  if (typeof value !== "object" || Array.isArray(value)) {
    throw new Error("/region: region needs a 'type'");
  }
  const obj = value as Record<string, unknown>;
  if (obj["type"] === "box") {
    const min = vec3At(obj["min"], "/region/min");
    const max = vec3At(obj["max"], "/region/max");
    if (min[0] > max[0] || min[1] > max[1] || min[2] > max[2]) {
      throw new Error("/region: min must be <= max");
    }
    return { type: "box", min, max };
  }
  if (obj["type"] === "sphere") {
    const center = vec3At(obj["center"], "/region/center");
    const radius = obj["radius"];
    if (typeof radius !== "number" || !(radius > 0)) {
      throw new Error("/region/radius: must be a positive number");
    }
    return { type: "sphere", center, radius };
  }
  throw new Error("/region: region needs a 'type'");
}
