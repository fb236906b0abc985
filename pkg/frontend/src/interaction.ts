/**
 * The draw-and-drag state machine, in normalized coordinates and free
 * of any DOM: the canvas layer feeds it pointer events, tests script it
 * directly.
 *
 * One entity is authored in two gestures. The first drag rubber-bands
 * the first-frame box. On release a ghost copy appears; dragging the
 * ghost places the last-frame box (releasing without moving keeps a
 * constant trajectory). Committed boxes are edited afterwards through
 * BoxEditSession.
 */

import { boxArea, clampBox, hitHandle, moveBox, orderBox, resizeBox, snapBox } from "./boxes";
import type { Handle } from "./boxes";
import type { Box } from "./types";

export type DrawPhase = "idle" | "drawing-first" | "ghost-ready" | "dragging-ghost";

export interface BoxPair {
  firstBox: Box;
  lastBox: Box;
}

export interface DrawState {
  phase: DrawPhase;
  firstBox: Box | null;
  lastBox: Box | null;
  /** inline message when a gesture was rejected, cleared on next gesture */
  hint: string | null;
}

const MIN_AREA = 1e-4; // a zero-area box cannot be generated or matched

export class DrawController {
  private phase: DrawPhase = "idle";
  private anchor: [number, number] = [0, 0];
  private firstBox: Box | null = null;
  private lastBox: Box | null = null;
  private grab: [number, number] = [0, 0];
  private hint: string | null = null;

  get state(): DrawState {
    return { phase: this.phase, firstBox: this.firstBox, lastBox: this.lastBox, hint: this.hint };
  }

  cancel(): void {
    this.phase = "idle";
    this.firstBox = null;
    this.lastBox = null;
    this.hint = null;
  }

  pointerDown(x: number, y: number): void {
    this.hint = null;
    if (this.phase === "idle") {
      this.anchor = [x, y];
      this.firstBox = clampBox(orderBox([x, y, x, y]));
      this.phase = "drawing-first";
    } else if (this.phase === "ghost-ready") {
      // grab the ghost anywhere; the box follows the pointer delta
      this.grab = [x, y];
      this.phase = "dragging-ghost";
    }
  }

  pointerMove(x: number, y: number): void {
    if (this.phase === "drawing-first") {
      this.firstBox = clampBox(orderBox([this.anchor[0], this.anchor[1], x, y]));
    } else if (this.phase === "dragging-ghost" && this.lastBox) {
      this.lastBox = moveBox(this.lastBox, x - this.grab[0], y - this.grab[1]);
      this.grab = [x, y];
    }
  }

  /** Returns the finished pair when the second gesture completes. */
  pointerUp(x: number, y: number): BoxPair | null {
    if (this.phase === "drawing-first") {
      this.pointerMove(x, y);
      if (!this.firstBox || boxArea(this.firstBox) < MIN_AREA) {
        this.cancel();
        this.hint = "boxes need area: drag, don't click";
        return null;
      }
      this.firstBox = snapBox(this.firstBox);
      this.lastBox = [...this.firstBox] as Box;
      this.phase = "ghost-ready";
      return null;
    }
    if (this.phase === "dragging-ghost" && this.firstBox && this.lastBox) {
      this.pointerMove(x, y);
      const pair: BoxPair = { firstBox: this.firstBox, lastBox: snapBox(this.lastBox!) };
      this.cancel();
      return pair;
    }
    return null;
  }
}

/** Handle- or interior-drag of an already committed box. */
export class BoxEditSession {
  private box: Box;
  private readonly handle: Handle;
  private last: [number, number];

  constructor(box: Box, handle: Handle, x: number, y: number) {
    this.box = box;
    this.handle = handle;
    this.last = [x, y];
  }

  /** Start editing if (x, y) lands on a handle or inside the box. */
  static grab(box: Box, x: number, y: number, tol = 0.02): BoxEditSession | null {
    const handle = hitHandle(box, x, y, tol);
    return handle ? new BoxEditSession(box, handle, x, y) : null;
  }

  move(x: number, y: number): Box {
    if (this.handle === "inside") {
      this.box = moveBox(this.box, x - this.last[0], y - this.last[1]);
      this.last = [x, y];
    } else {
      this.box = resizeBox(this.box, this.handle, x, y);
    }
    return this.box;
  }

  finish(): Box {
    return snapBox(this.box);
  }
}
