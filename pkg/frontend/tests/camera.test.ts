import { describe, expect, it } from "vitest";

import { lookAt, orbitCamera, pixelToWorldAtDepth, viewDepth, worldToPixel } from "../src/camera.js";
import type { CameraJson, Vec3 } from "../src/types.js";

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const FRONTAL: CameraJson = {
  width: 640,
  height: 480,
  fx: 500,
  fy: 400,
  cx: 320,
  cy: 240,
  c2w: [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1],
};

describe("worldToPixel", () => {
  it("maps the optical axis to the principal point", () => {
    const hit = worldToPixel(FRONTAL, [0, 0, 5]);
    expect(hit).toEqual({ x: 320, y: 240, depth: 5 });
  });

  it("applies the focal lengths per axis", () => {
    const hit = worldToPixel(FRONTAL, [0.5, -0.25, 2]);
    expect(hit?.x).toBeCloseTo(320 + (500 * 0.5) / 2, 12);
    expect(hit?.y).toBeCloseTo(240 - (400 * 0.25) / 2, 12);
    expect(hit?.depth).toBe(2);
  });

  it("rejects points behind the camera", () => {
    expect(worldToPixel(FRONTAL, [0, 0, -1])).toBeNull();
    expect(worldToPixel(FRONTAL, [0, 0, 0])).toBeNull();
  });

  it("is inverted by pixelToWorldAtDepth", () => {
    const rand = mulberry32(11);
    for (let trial = 0; trial < 100; trial++) {
      const cam = orbitCamera(
        [rand() * 2 - 1, rand() * 2 - 1, rand() * 2 - 1],
        1 + rand() * 5,
        rand() * Math.PI * 2,
        rand() * 2 - 1,
        { width: 320, height: 240 },
      );
      const p: Vec3 = [rand() * 4 - 2, rand() * 4 - 2, rand() * 4 - 2];
      const hit = worldToPixel(cam, p);
      if (hit === null) {
        continue;
      }
      const back = pixelToWorldAtDepth(cam, hit.x, hit.y, hit.depth);
      expect(Math.hypot(back[0] - p[0], back[1] - p[1], back[2] - p[2])).toBeLessThan(1e-10);
      expect(Math.abs(viewDepth(cam, p) - hit.depth)).toBeLessThan(1e-12);
    }
  });
});

describe("orbitCamera", () => {
  it("looks at the target from the requested distance", () => {
    const target: Vec3 = [0.5, -0.25, 3];
    const cam = orbitCamera(target, 4, 0.7, 0.4, { width: 200, height: 100 });
    const hit = worldToPixel(cam, target);
    expect(hit?.x).toBeCloseTo(100, 9);
    expect(hit?.y).toBeCloseTo(50, 9);
    expect(hit?.depth).toBeCloseTo(4, 12);
    const eye: Vec3 = [cam.c2w[3], cam.c2w[7], cam.c2w[11]];
    expect(Math.hypot(eye[0] - target[0], eye[1] - target[1], eye[2] - target[2])).toBeCloseTo(4, 12);
  });

  it("keeps the camera basis orthonormal", () => {
    const cam = orbitCamera([1, 2, 3], 2.5, -1.2, 0.9, { width: 64, height: 64 });
    const m = cam.c2w;
    const cols = [
      [m[0], m[4], m[8]],
      [m[1], m[5], m[9]],
      [m[2], m[6], m[10]],
    ];
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        const dot = cols[i][0] * cols[j][0] + cols[i][1] * cols[j][1] + cols[i][2] * cols[j][2];
        expect(Math.abs(dot - (i === j ? 1 : 0))).toBeLessThan(1e-12);
      }
    }
  });

  it("rejects degenerate look-at setups", () => {
    expect(() => lookAt([0, 0, 0], [0, 0, 0])).toThrow(/coincide/);
    expect(() => lookAt([0, 0, 0], [0, 5, 0])).toThrow(/parallel/);
  });
});
