/**
 * Session state: the entities on the canvas, the prompt, decode
 * settings, and the history of submitted jobs. Snapshots serialize the
 * lot; restoring one rebuilds a session whose request JSON is
 * byte-identical to the original's.
 */

import { buildRequest, serializeRequest } from "./schema";
import type { BoxPair } from "./interaction";
import type { CanvasEntity, DecodeSettings, GenerateRequest, HistoryEntry, JobPhase } from "./types";

export const DEFAULT_DECODE: DecodeSettings = {
  steps: 8,
  guidance_scale: 2.0,
  temperature: 0.7,
  seed: 7,
};

/** Per-slot display colors; generation order, not palette order. */
const SLOT_COLORS = ["#e4572e", "#2e86ab", "#f6ae2d", "#33ca7f"];

export interface SessionSnapshot {
  prompt: string;
  entities: CanvasEntity[];
  decode: DecodeSettings;
  history: HistoryEntry[];
}

export class StudioSession {
  prompt = "";
  decode: DecodeSettings = { ...DEFAULT_DECODE };
  entities: CanvasEntity[] = [];
  history: HistoryEntry[] = [];
  /** description applied to the next committed draw */
  selectedDescription = "";
  /** swatch id applied to the next committed draw, if any */
  selectedSwatch: string | null = null;

  /** Attach the current description/swatch choice to a finished draw. */
  commitDraw(pair: BoxPair): CanvasEntity {
    const entity: CanvasEntity = {
      description: this.selectedDescription,
      firstBox: pair.firstBox,
      lastBox: pair.lastBox,
      reference: this.selectedSwatch,
      displayColor: SLOT_COLORS[this.entities.length % SLOT_COLORS.length],
    };
    this.entities.push(entity);
    return entity;
  }

  removeEntity(index: number): void {
    this.entities.splice(index, 1);
  }

  toRequest(): GenerateRequest {
    return buildRequest(this.prompt, this.entities, this.decode);
  }

  requestJson(): string {
    return serializeRequest(this.toRequest());
  }

  /** Record a submitted job with the exact bytes that were sent. */
  pushHistory(jobId: string, requestJson: string): HistoryEntry {
    const entry: HistoryEntry = {
      jobId,
      requestJson,
      status: "queued",
      clipId: null,
      frameCount: 0,
      thumbnail: null,
    };
    this.history.push(entry);
    return entry;
  }

  /**
   * Move a history entry to a terminal state and freeze it: once a job
   * is done its snapshot must never drift from what actually ran.
   */
  resolveHistory(jobId: string, status: JobPhase, clipId: string | null, frameCount: number, thumbnail: string | null = null): void {
    const entry = this.history.find((h) => h.jobId === jobId);
    if (!entry || Object.isFrozen(entry)) return;
    entry.status = status;
    entry.clipId = clipId;
    entry.frameCount = frameCount;
    entry.thumbnail = thumbnail;
    if (status === "done" || status === "failed") Object.freeze(entry);
  }

  snapshot(): string {
    const data: SessionSnapshot = {
      prompt: this.prompt,
      entities: this.entities,
      decode: this.decode,
      history: this.history,
    };
    return JSON.stringify(data, null, 2) + "\n";
  }

  static restore(snapshot: string): StudioSession {
    const data = JSON.parse(snapshot) as SessionSnapshot;
    const session = new StudioSession();
    session.prompt = data.prompt;
    session.decode = { ...data.decode };
    session.entities = data.entities.map((e) => ({ ...e }));
    session.history = data.history.map((h) => {
      const entry = { ...h };
      if (entry.status === "done" || entry.status === "failed") Object.freeze(entry);
      return entry;
    });
    return session;
  }
}
