import { describe, expect, it } from "vitest";

import { FramePlayer } from "../src/player";
import type { PlayerTimer } from "../src/player";

/** Manual timer: nothing runs until the test fires it. */
function manualTimer() {
  let next = 0;
  const pending = new Map<number, { callback: () => void; ms: number }>();
  const timer: PlayerTimer = {
    schedule: (callback, ms) => {
      pending.set(++next, { callback, ms });
      return next;
    },
    cancel: (handle) => void pending.delete(handle),
  };
  const fire = () => {
    const [handle, entry] = [...pending.entries()][0] ?? [];
    if (handle === undefined || !entry) return;
    pending.delete(handle);
    entry.callback();
  };
  return { timer, fire, pending };
}

describe("frame player", () => {
  it("advances one frame per tick at the clip rate", () => {
    const seen: number[] = [];
    const { timer, fire, pending } = manualTimer();
    const player = new FramePlayer(11, 8, (k) => seen.push(k), timer);
    player.play();
    expect([...pending.values()][0].ms).toBe(125); // 8 fps
    fire();
    fire();
    fire();
    expect(seen).toEqual([1, 2, 3]);
    expect(player.playing).toBe(true);
  });

  it("wraps around at the end of the clip", () => {
    const seen: number[] = [];
    const { timer, fire } = manualTimer();
    const player = new FramePlayer(3, 8, (k) => seen.push(k), timer);
    player.play();
    fire(); fire(); fire(); fire();
    expect(seen).toEqual([1, 2, 0, 1]);
  });

  it("pause cancels the pending tick", () => {
    const { timer, fire, pending } = manualTimer();
    const player = new FramePlayer(5, 8, () => {}, timer);
    player.play();
    player.pause();
    expect(player.playing).toBe(false);
    expect(pending.size).toBe(0);
    fire(); // no-op
    expect(player.frame).toBe(0);
  });

  it("seek clamps into range and reports the frame", () => {
    const seen: number[] = [];
    const player = new FramePlayer(11, 8, (k) => seen.push(k), manualTimer().timer);
    player.seek(99);
    player.seek(-3);
    expect(seen).toEqual([10, 0]);
  });

  it("load resets to a paused frame 0 for the new clip", () => {
    const seen: number[] = [];
    const { timer, fire } = manualTimer();
    const player = new FramePlayer(5, 8, (k) => seen.push(k), timer);
    player.play();
    fire();
    player.load(7);
    expect(player.playing).toBe(false);
    expect(player.frame).toBe(0);
    fire(); // stale tick must not fire
    expect(seen).toEqual([1, 0]);
  });
});
