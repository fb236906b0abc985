/**
 * Trajectory overlays: where each requested box sits at a given frame,
 * and the faint first-to-last path shown while authoring. Geometry is
 * pure; the single draw function is the only canvas consumer.
 */

import { boxCenter, lerpBox } from "./boxes";
import type { Box, CanvasEntity } from "./types";

export interface OverlayBox {
  box: Box;
  color: string;
  entityIndex: number;
  /** true at the first and last frame, where the box equals the drawn one */
  endpoint: boolean;
}

/**
 * Boxes to overlay on frame `frame` of `frameCount`. Endpoints are the
 * drawn boxes themselves (lerp is endpoint-exact), interior frames are
 * linear interpolation, mirroring how trajectories are scored.
 */
export function overlayAtFrame(
  entities: CanvasEntity[],
  frame: number,
  frameCount: number,
): OverlayBox[] {
  const t = frameCount > 1 ? frame / (frameCount - 1) : 0;
  return entities.map((e, i) => ({
    box: lerpBox(e.firstBox, e.lastBox, t),
    color: e.displayColor,
    entityIndex: i,
    endpoint: frame === 0 || frame === frameCount - 1,
  }));
}

/** Center-to-center segment previewed while placing the ghost box. */
export function pathPreview(first: Box, last: Box): [number, number, number, number] {
  const [ax, ay] = boxCenter(first);
  const [bx, by] = boxCenter(last);
  return [ax, ay, bx, by];
}

export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  boxes: OverlayBox[],
  width: number,
  height: number,
): void {
  for (const { box, color, endpoint } of boxes) {
    const [x1, y1, x2, y2] = box;
    ctx.strokeStyle = color;
    ctx.lineWidth = endpoint ? 2 : 1;
    ctx.setLineDash(endpoint ? [] : [4, 3]);
    ctx.strokeRect(x1 * width, y1 * height, (x2 - x1) * width, (y2 - y1) * height);
  }
  ctx.setLineDash([]);
}
