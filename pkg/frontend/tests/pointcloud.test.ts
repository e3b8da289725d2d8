import { describe, expect, it } from "vitest";

import { cloudBounds, packPointCloud, parsePointCloud, type PointCloud } from "../src/pointcloud.js";

function wireBuffer(points: number[][], colors: number[][]): ArrayBuffer {
  const n = points.length;
  const buf = new ArrayBuffer(4 + n * 15);
  const view = new DataView(buf);
  view.setUint32(0, n, true);
  points.flat().forEach((v, i) => view.setFloat32(4 + i * 4, v, true));
  colors.flat().forEach((v, i) => view.setUint8(4 + n * 12 + i, v));
  return buf;
}

describe("parsePointCloud", () => {
  it("decodes the count, positions and colors", () => {
    const cloud = parsePointCloud(
      wireBuffer(
        [
          [1.5, -2.25, 3],
          [0.125, 0, -0.5],
        ],
        [
          [255, 0, 10],
          [1, 2, 3],
        ],
      ),
    );
    expect(cloud.count).toBe(2);
    expect(Array.from(cloud.positions)).toEqual([1.5, -2.25, 3, 0.125, 0, -0.5]);
    expect(Array.from(cloud.colors)).toEqual([255, 0, 10, 1, 2, 3]);
  });

  it("round-trips through packPointCloud", () => {
    const cloud: PointCloud = {
      count: 3,
      positions: new Float32Array([0.1, 0.2, 0.3, -1, -2, -3, 9.75, 0, 1e10]),
      colors: new Uint8Array([9, 8, 7, 6, 5, 4, 3, 2, 1]),
    };
    const back = parsePointCloud(packPointCloud(cloud));
    expect(Array.from(back.positions)).toEqual(Array.from(cloud.positions));
    expect(Array.from(back.colors)).toEqual(Array.from(cloud.colors));
  });

  it("accepts an empty cloud", () => {
    const cloud = parsePointCloud(wireBuffer([], []));
    expect(cloud.count).toBe(0);
    expect(cloud.positions).toHaveLength(0);
    expect(cloudBounds(cloud)).toBeNull();
  });

  it("rejects truncated and oversized payloads", () => {
    expect(() => parsePointCloud(new ArrayBuffer(2))).toThrow(/too short/);
    const good = wireBuffer([[0, 0, 0]], [[1, 2, 3]]);
    expect(() => parsePointCloud(good.slice(0, good.byteLength - 1))).toThrow(
      /18 bytes, expected 19 for 1 points/,
    );
    const padded = new Uint8Array(good.byteLength + 4);
    padded.set(new Uint8Array(good));
    expect(() => parsePointCloud(padded.buffer)).toThrow(/expected 19/);
  });

  it("owns its storage after parsing", () => {
    const wire = wireBuffer([[1, 2, 3]], [[4, 5, 6]]);
    const cloud = parsePointCloud(wire);
    new Uint8Array(wire).fill(0);
    expect(Array.from(cloud.positions)).toEqual([1, 2, 3]);
    expect(Array.from(cloud.colors)).toEqual([4, 5, 6]);
  });
});

describe("cloudBounds", () => {
  it("computes the axis-aligned bounds", () => {
    const cloud = parsePointCloud(
      wireBuffer(
        [
          [1, -5, 2],
          [-3, 4, 0],
          [2, 0, -1],
        ],
        [
          [0, 0, 0],
          [0, 0, 0],
          [0, 0, 0],
        ],
      ),
    );
    expect(cloudBounds(cloud)).toEqual({ min: [-3, -5, -1], max: [2, 4, 2] });
  });
});
