/** Binary point-cloud preview parsing (`GET /api/sessions/{sid}/pointcloud`). */

export interface PointCloud {
  count: number;
  /** xyz triples, length count*3 */
  positions: Float32Array;
  /** rgb triples 0..255, length count*3 */
  colors: Uint8Array;
}

/**
 * Parse the service's binary preview payload: a little-endian u32 point
 * count, then count*3 float32 positions, then count*3 uint8 colors.
 */
export function parsePointCloud(buf: ArrayBuffer): PointCloud {
  if (buf.byteLength < 4) {
    throw new Error(`pointcloud payload too short: ${buf.byteLength} bytes`);
  }
  const count = new DataView(buf).getUint32(0, true);
  const expected = 4 + count * 12 + count * 3;
  if (buf.byteLength !== expected) {
    throw new Error(
      `pointcloud payload is ${buf.byteLength} bytes, expected ${expected} for ${count} points`,
    );
  }
  // Copy out of the transport buffer so the views own compact storage.
  const positions = new Float32Array(buf, 4, count * 3).slice();
  const colors = new Uint8Array(buf, 4 + count * 12, count * 3).slice();
  return { count, positions, colors };
}

/** Serialize a cloud back to the wire layout (used by tests and fixtures). */
export function packPointCloud(cloud: PointCloud): ArrayBuffer {
  const buf = new ArrayBuffer(4 + cloud.count * 15);
  new DataView(buf).setUint32(0, cloud.count, true);
  const bytes = new Uint8Array(buf);
  bytes.set(new Uint8Array(cloud.positions.buffer, cloud.positions.byteOffset, cloud.count * 12), 4);
  bytes.set(cloud.colors, 4 + cloud.count * 12);
  return buf;
}

/** Axis-aligned bounds of the cloud; null for an empty cloud. */
export function cloudBounds(cloud: PointCloud): { min: [number, number, number]; max: [number, number, number] } | null {
  if (cloud.count === 0) {
    return null;
  }
  const min: [number, number, number] = [Infinity, Infinity, Infinity];
  const max: [number, number, number] = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < cloud.count; i++) {
    for (let a = 0; a < 3; a++) {
      const v = cloud.positions[i * 3 + a];
      if (v < min[a]) min[a] = v;
      if (v > max[a]) max[a] = v;
    }
  }
  return { min, max };
}
