/** Box math in normalized coordinates; pixels only exist at render time. */

import type { Box } from "./types";

/** Corner/edge handles plus the interior, for editing a committed box. */
export type Handle = "nw" | "n" | "ne" | "e" | "se" | "s" | "sw" | "w" | "inside";

export const clamp01 = (v: number): number => Math.min(1, Math.max(0, v));

/** Sort corners so x1 < x2 and y1 < y2 regardless of drag direction. */
export function orderBox([x1, y1, x2, y2]: Box): Box {
  return [Math.min(x1, x2), Math.min(y1, y2), Math.max(x1, x2), Math.max(y1, y2)];
}

export function clampBox([x1, y1, x2, y2]: Box): Box {
  return [clamp01(x1), clamp01(y1), clamp01(x2), clamp01(y2)];
}

export function boxArea([x1, y1, x2, y2]: Box): number {
  return Math.max(0, x2 - x1) * Math.max(0, y2 - y1);
}

export function boxCenter([x1, y1, x2, y2]: Box): [number, number] {
  return [(x1 + x2) / 2, (y1 + y2) / 2];
}

/**
 * Round coordinates to 1e-4 so serialized requests are stable bytes:
 * accumulating drag deltas in floats would otherwise leak noise like
 * 0.6000000000000001 into the JSON.
 */
export function snapBox(box: Box): Box {
  return box.map((v) => Math.round(v * 10000) / 10000) as Box;
}

/** Translate by (dx, dy), then shift back inside [0,1] preserving size. */
export function moveBox([x1, y1, x2, y2]: Box, dx: number, dy: number): Box {
  const w = x2 - x1;
  const h = y2 - y1;
  const nx = Math.min(1 - w, Math.max(0, x1 + dx));
  const ny = Math.min(1 - h, Math.max(0, y1 + dy));
  return [nx, ny, nx + w, ny + h];
}

/**
 * Endpoint-exact interpolation: t=0 gives `first`, t=1 gives `last`
 * bit-for-bit, so overlays at the first and last frame equal the drawn
 * boxes with no rounding caveat.
 */
export function lerpBox(first: Box, last: Box, t: number): Box {
  return first.map((a, i) => a * (1 - t) + last[i] * t) as Box;
}

const HANDLE_ORDER: Handle[] = ["nw", "n", "ne", "e", "se", "s", "sw", "w"];

function handlePoints([x1, y1, x2, y2]: Box): [number, number][] {
  const mx = (x1 + x2) / 2;
  const my = (y1 + y2) / 2;
  return [
    [x1, y1], [mx, y1], [x2, y1], [x2, my],
    [x2, y2], [mx, y2], [x1, y2], [x1, my],
  ];
}

/** Which handle (or the interior) a point grabs, within tolerance. */
export function hitHandle(box: Box, x: number, y: number, tol: number): Handle | null {
  const points = handlePoints(box);
  for (let i = 0; i < points.length; i++) {
    if (Math.abs(points[i][0] - x) <= tol && Math.abs(points[i][1] - y) <= tol) {
      return HANDLE_ORDER[i];
    }
  }
  const [x1, y1, x2, y2] = box;
  if (x1 <= x && x <= x2 && y1 <= y && y <= y2) return "inside";
  return null;
}

/** Drag `handle` to (x, y); opposite corner stays put. Clamped, reordered. */
export function resizeBox(box: Box, handle: Handle, x: number, y: number): Box {
  let [x1, y1, x2, y2] = box;
  const cx = clamp01(x);
  const cy = clamp01(y);
  if (handle.includes("w")) x1 = cx;
  if (handle.includes("e")) x2 = cx;
  if (handle.includes("n")) y1 = cy;
  if (handle.includes("s")) y2 = cy;
  return orderBox([x1, y1, x2, y2]);
}
