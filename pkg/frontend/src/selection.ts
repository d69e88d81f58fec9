/** Candidate picking: polygon lasso and nearest-click over projected points.
 * Selection ignores depth by default (the enlarged candidate subset is
 * sparse, occlusion is rare); an optional screen-space test keeps only
 * front-surface points. */

import { Camera, Projected, projectAll } from './projection.js';

export type ScreenPolygon = Array<[number, number]>;

export function pointInPolygon(x: number, y: number, polygon: ScreenPolygon): boolean {
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const [xi, yi] = polygon[i];
    const [xj, yj] = polygon[j];
    const crosses = yi > y !== yj > y && x < ((xj - xi) * (y - yi)) / (yj - yi) + xi;
    if (crosses) inside = !inside;
  }
  return inside;
}

export interface SelectOptions {
  occlusionTest?: boolean;
  occlusionRadiusPx?: number;
  occlusionDepthMargin?: number;
}

export function polygonSelect(
  positions: Float32Array,
  camera: Camera,
  width: number,
  height: number,
  polygon: ScreenPolygon,
  options: SelectOptions = {},
): number[] {
  if (polygon.length < 3) {
    throw new Error(`polygon needs >= 3 vertices, got ${polygon.length}`);
  }
  const projected = projectAll(camera, positions, width, height);
  let ids: number[] = [];
  for (let i = 0; i < projected.length; i++) {
    const p = projected[i];
    if (p.visible && pointInPolygon(p.x, p.y, polygon)) {
      ids.push(i);
    }
  }
  if (options.occlusionTest) {
    ids = ids.filter((id) => !isOccluded(id, projected, options));
  }
  return ids;
}

function isOccluded(id: number, projected: Projected[], options: SelectOptions): boolean {
  const radius = options.occlusionRadiusPx ?? 4;
  const margin = options.occlusionDepthMargin ?? 1e-4;
  const p = projected[id];
  for (let j = 0; j < projected.length; j++) {
    if (j === id || !projected[j].visible) continue;
    const q = projected[j];
    if (
      Math.abs(q.x - p.x) <= radius && Math.abs(q.y - p.y) <= radius
      && q.depth < p.depth - margin
    ) {
      return true;
    }
  }
  return false;
}

/** Nearest projected candidate within radiusPx of the click, or null. */
export function clickSelect(
  positions: Float32Array,
  camera: Camera,
  width: number,
  height: number,
  x: number,
  y: number,
  radiusPx = 8,
): number | null {
  const projected = projectAll(camera, positions, width, height);
  let best: number | null = null;
  let bestD2 = radiusPx * radiusPx;
  for (let i = 0; i < projected.length; i++) {
    const p = projected[i];
    if (!p.visible) continue;
    const d2 = (p.x - x) ** 2 + (p.y - y) ** 2;
    if (d2 < bestD2 || (d2 === bestD2 && best !== null && i < best)) {
      best = i;
      bestD2 = d2;
    }
  }
  return best;
}
