/**
 * Frame-stepping playback clock with a scrub bar's needs in mind:
 * play/pause, seek, wrap-around, and an injectable timer so tests can
 * drive it deterministically.
 */

export interface PlayerTimer {
  schedule(callback: () => void, ms: number): number;
  cancel(handle: number): void;
}

const realTimer: PlayerTimer = {
  schedule: (cb, ms) => setTimeout(cb, ms) as unknown as number,
  cancel: (h) => clearTimeout(h),
};

export class FramePlayer {
  private index = 0;
  private handle: number | null = null;

  constructor(
    private frameCount: number,
    private readonly fps: number,
    private readonly onFrame: (index: number) => void,
    private readonly timer: PlayerTimer = realTimer,
  ) {}

  get frame(): number {
    return this.index;
  }

  get playing(): boolean {
    return this.handle !== null;
  }

  /** Swap in a new clip; playback stops and the position resets. */
  load(frameCount: number): void {
    this.pause();
    this.frameCount = frameCount;
    this.seek(0);
  }

  seek(index: number): void {
    this.index = Math.min(this.frameCount - 1, Math.max(0, index));
    this.onFrame(this.index);
  }

  play(): void {
    if (this.handle !== null || this.frameCount < 1) return;
    const tick = () => {
      this.index = (this.index + 1) % this.frameCount;
      this.onFrame(this.index);
      this.handle = this.timer.schedule(tick, 1000 / this.fps);
    };
    this.handle = this.timer.schedule(tick, 1000 / this.fps);
  }

  pause(): void {
    if (this.handle !== null) {
      this.timer.cancel(this.handle);
      this.handle = null;
    }
  }
}
