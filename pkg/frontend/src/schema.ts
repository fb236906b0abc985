/**
 * Request construction, canonical serialization, and the client-side
 * mirror of the server's validation rules.
 *
 * Serialization is canonical on purpose: key order is fixed, optional
 * keys are omitted rather than nulled, and the result ends in a single
 * newline. Identical sessions therefore produce identical bytes, which
 * is what makes golden-file tests and replay-from-history exact.
 */

import type { Box, CanvasEntity, DecodeSettings, EntityPayload, GenerateRequest, VocabLimits } from "./types";

export function buildRequest(
  prompt: string,
  entities: CanvasEntity[],
  decode: DecodeSettings,
): GenerateRequest {
  return {
    prompt,
    entities: entities.map((e): EntityPayload => {
      const payload: EntityPayload = {
        description: e.description,
        first_box: e.firstBox,
        last_box: e.lastBox,
      };
      if (e.reference !== null) payload.reference = e.reference;
      return payload;
    }),
    decode: {
      steps: decode.steps,
      guidance_scale: decode.guidance_scale,
      temperature: decode.temperature,
      seed: decode.seed,
    },
  };
}

export function serializeRequest(request: GenerateRequest): string {
  return JSON.stringify(request, null, 2) + "\n";
}

export interface FieldError {
  field: string;
  message: string;
}

function checkBox(box: Box, field: string, out: FieldError[]): void {
  if (!Array.isArray(box) || box.length !== 4 || box.some((v) => typeof v !== "number" || Number.isNaN(v))) {
    out.push({ field, message: "box must be [x1, y1, x2, y2]" });
    return;
  }
  const [x1, y1, x2, y2] = box;
  if (box.some((v) => v < 0 || v > 1)) {
    out.push({ field, message: "box coordinates must lie in [0, 1]" });
  } else if (x1 >= x2 || y1 >= y2) {
    out.push({ field, message: "box must have positive area (x1 < x2, y1 < y2)" });
  }
}

/**
 * Same rules the server enforces, with the same field paths, so a bad
 * request is caught before it is ever sent. An empty list means the
 * request is sendable.
 */
export function validateRequest(request: GenerateRequest, limits?: VocabLimits): FieldError[] {
  const errors: FieldError[] = [];
  if (!request.prompt.trim()) {
    errors.push({ field: "prompt", message: "prompt must be a non-empty string" });
  } else if (limits && request.prompt.trim().split(/\s+/).length > limits.prompt_len) {
    errors.push({ field: "prompt", message: `prompt exceeds ${limits.prompt_len} words` });
  }
  if (limits && request.entities.length > limits.n_slots) {
    errors.push({ field: "entities", message: `at most ${limits.n_slots} entities` });
  }
  request.entities.forEach((e, i) => {
    if (!e.description) {
      errors.push({ field: `entities[${i}].description`, message: "pick a description" });
    }
    checkBox(e.first_box, `entities[${i}].first_box`, errors);
    checkBox(e.last_box, `entities[${i}].last_box`, errors);
  });
  const d = request.decode;
  if (!Number.isInteger(d.steps) || d.steps < 1) {
    errors.push({ field: "decode.steps", message: "steps must be a positive integer" });
  }
  if (!Number.isInteger(d.seed)) {
    errors.push({ field: "decode.seed", message: "seed must be an integer" });
  }
  if (d.guidance_scale < 0) {
    errors.push({ field: "decode.guidance_scale", message: "guidance_scale must be >= 0" });
  }
  if (d.temperature < 0) {
    errors.push({ field: "decode.temperature", message: "temperature must be >= 0" });
  }
  return errors;
}
