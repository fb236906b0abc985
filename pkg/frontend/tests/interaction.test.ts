import { describe, expect, it } from "vitest";

import { BoxEditSession, DrawController } from "../src/interaction";

describe("draw controller", () => {
  it("walks idle -> drawing -> ghost -> dragging -> committed", () => {
    const draw = new DrawController();
    expect(draw.state.phase).toBe("idle");

    draw.pointerDown(0.1, 0.1);
    expect(draw.state.phase).toBe("drawing-first");
    draw.pointerMove(0.4, 0.5);
    expect(draw.state.firstBox).toEqual([0.1, 0.1, 0.4, 0.5]);

    expect(draw.pointerUp(0.4, 0.5)).toBeNull();
    expect(draw.state.phase).toBe("ghost-ready");
    expect(draw.state.lastBox).toEqual(draw.state.firstBox);

    draw.pointerDown(0.2, 0.2);
    expect(draw.state.phase).toBe("dragging-ghost");
    draw.pointerMove(0.5, 0.3);
    const pair = draw.pointerUp(0.5, 0.3)!;
    expect(pair.firstBox).toEqual([0.1, 0.1, 0.4, 0.5]);
    expect(pair.lastBox).toEqual([0.4, 0.2, 0.7, 0.6]);
    expect(draw.state.phase).toBe("idle");
  });

  it("a drag that ends where it starts keeps a constant trajectory", () => {
    const draw = new DrawController();
    draw.pointerDown(0.1, 0.1);
    draw.pointerMove(0.3, 0.3);
    draw.pointerUp(0.3, 0.3);
    draw.pointerDown(0.2, 0.2);
    const pair = draw.pointerUp(0.2, 0.2)!;
    expect(pair.lastBox).toEqual(pair.firstBox);
  });

  it("rejects a zero-area box with an inline hint", () => {
    const draw = new DrawController();
    draw.pointerDown(0.3, 0.3);
    expect(draw.pointerUp(0.3, 0.3)).toBeNull();
    expect(draw.state.phase).toBe("idle");
    expect(draw.state.hint).toMatch(/area/);
    // the hint clears as soon as a new gesture starts
    draw.pointerDown(0.1, 0.1);
    expect(draw.state.hint).toBeNull();
  });

  it("rubber-band coordinates clamp to the canvas", () => {
    const draw = new DrawController();
    draw.pointerDown(0.9, 0.9);
    draw.pointerMove(1.4, 1.2);
    expect(draw.state.firstBox).toEqual([0.9, 0.9, 1, 1]);
  });

  it("the ghost stays inside the canvas when dragged out", () => {
    const draw = new DrawController();
    draw.pointerDown(0.6, 0.6);
    draw.pointerMove(0.9, 0.9);
    draw.pointerUp(0.9, 0.9);
    draw.pointerDown(0.7, 0.7);
    draw.pointerMove(2.0, 2.0);
    const pair = draw.pointerUp(2.0, 2.0)!;
    // size preserved, flush against the corner
    expect(pair.lastBox).toEqual([0.7, 0.7, 1, 1]);
  });

  it("drawing direction does not matter", () => {
    const draw = new DrawController();
    draw.pointerDown(0.5, 0.6);
    draw.pointerMove(0.2, 0.1);
    draw.pointerUp(0.2, 0.1);
    expect(draw.state.firstBox).toEqual([0.2, 0.1, 0.5, 0.6]);
  });
});

describe("box editing", () => {
  it("corner handles resize around the opposite corner", () => {
    const edit = BoxEditSession.grab([0.2, 0.2, 0.6, 0.6], 0.6, 0.6)!;
    edit.move(0.8, 0.7);
    expect(edit.finish()).toEqual([0.2, 0.2, 0.8, 0.7]);
  });

  it("edge handles move one side only", () => {
    const edit = BoxEditSession.grab([0.2, 0.2, 0.6, 0.6], 0.4, 0.2)!;
    edit.move(0.9, 0.05);
    expect(edit.finish()).toEqual([0.2, 0.05, 0.6, 0.6]);
  });

  it("grabbing the interior translates the whole box", () => {
    const edit = BoxEditSession.grab([0.2, 0.2, 0.4, 0.4], 0.3, 0.3)!;
    edit.move(0.5, 0.35);
    expect(edit.finish()).toEqual([0.4, 0.25, 0.6, 0.45]);
  });

  it("dragging a handle across the box reorders the corners", () => {
    const edit = BoxEditSession.grab([0.2, 0.2, 0.4, 0.4], 0.4, 0.4)!;
    edit.move(0.1, 0.1);
    expect(edit.finish()).toEqual([0.1, 0.1, 0.2, 0.2]);
  });

  it("misses return null instead of a session", () => {
    expect(BoxEditSession.grab([0.2, 0.2, 0.4, 0.4], 0.9, 0.9)).toBeNull();
  });
});
