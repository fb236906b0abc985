/**
 * Typed client for the generation service. Submissions send
 * pre-serialized bytes so a replay from history is the identical
 * request; network failures retry with exponential backoff before
 * surfacing, while HTTP errors surface immediately with the server's
 * field path attached.
 */

import type { HealthResponse, JobStatus, VocabResponse } from "./types";

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    detail: string,
    readonly field: string | null = null,
  ) {
    super(field ? `${field}: ${detail}` : detail);
    this.name = "ServiceError";
  }
}

export interface ClientOptions {
  baseUrl?: string;
  fetchFn?: typeof fetch;
  /** network retries before giving up (HTTP errors are never retried) */
  attempts?: number;
  baseDelayMs?: number;
  sleepFn?: (ms: number) => Promise<void>;
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class StudioClient {
  private readonly base: string;
  private readonly fetchFn: typeof fetch;
  private readonly attempts: number;
  private readonly baseDelay: number;
  private readonly sleepFn: (ms: number) => Promise<void>;

  constructor(options: ClientOptions = {}) {
    this.base = (options.baseUrl ?? "").replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? fetch;
    this.attempts = options.attempts ?? 3;
    this.baseDelay = options.baseDelayMs ?? 250;
    this.sleepFn = options.sleepFn ?? sleep;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let lastError: unknown;
    for (let attempt = 0; attempt < this.attempts; attempt++) {
      if (attempt > 0) await this.sleepFn(this.baseDelay * 2 ** (attempt - 1));
      try {
        return await this.fetchFn(this.base + path, init);
      } catch (err) {
        lastError = err; // connection-level failure; response errors return above
      }
    }
    throw lastError;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.request(path, init);
    if (!response.ok) {
      const body = await response.json().catch(() => ({}));
      throw new ServiceError(
        response.status,
        typeof body.detail === "string" ? body.detail : response.statusText,
        typeof body.field === "string" ? body.field : null,
      );
    }
    return response.json() as Promise<T>;
  }

  /** POST the exact bytes; 202 resolves with the job id. */
  submit(requestJson: string): Promise<{ job_id: string; status: string }> {
    return this.json("/v1/generate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: requestJson,
    });
  }

  job(jobId: string): Promise<JobStatus> {
    return this.json(`/v1/jobs/${jobId}`);
  }

  /**
   * Poll until the job is done or failed. Resolves with the terminal
   * status either way; rejects only on transport or HTTP errors, or
   * when `signal` aborts the wait.
   */
  async pollUntilDone(
    jobId: string,
    intervalMs = 500,
    signal?: AbortSignal,
  ): Promise<JobStatus> {
    for (;;) {
      if (signal?.aborted) throw new DOMException("polling aborted", "AbortError");
      const status = await this.job(jobId);
      if (status.status === "done" || status.status === "failed") return status;
      await this.sleepFn(intervalMs);
    }
  }

  frameUrl(clipId: string, index: number): string {
    return `${this.base}/v1/clips/${clipId}/frames/${index}`;
  }

  async frame(clipId: string, index: number): Promise<Blob> {
    const response = await this.request(this.frameUrl(clipId, index).slice(this.base.length));
    if (!response.ok) {
      throw new ServiceError(response.status, `frame ${index} of ${clipId} unavailable`);
    }
    return response.blob();
  }

  vocab(): Promise<VocabResponse> {
    return this.json("/v1/vocab");
  }

  health(): Promise<HealthResponse> {
    return this.json("/v1/health");
  }
}
