/**
 * Studio page wiring: canvas on the left, prompt/entity/decode controls
 * on the right, playback with trajectory overlay below. All state lives
 * in StudioSession; this file only moves it in and out of the DOM.
 */

import { BoxEditSession, DrawController } from "./interaction";
import { hitHandle } from "./boxes";
import { StudioClient, ServiceError } from "./client";
import { FramePlayer } from "./player";
import { drawOverlay, overlayAtFrame, pathPreview } from "./overlay";
import { StudioSession } from "./session";
import { validateRequest } from "./schema";
import type { Box, JobStatus, VocabResponse } from "./types";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const canvas = $<HTMLCanvasElement>("draw-canvas");
const ctx = canvas.getContext("2d")!;
const playCanvas = $<HTMLCanvasElement>("play-canvas");
const playCtx = playCanvas.getContext("2d")!;
const hintEl = $<HTMLSpanElement>("hint");
const statusEl = $<HTMLSpanElement>("status");
const promptInput = $<HTMLInputElement>("prompt");
const descriptionSelect = $<HTMLSelectElement>("description");
const swatchGallery = $<HTMLDivElement>("swatches");
const entityList = $<HTMLUListElement>("entities");
const historyList = $<HTMLUListElement>("history");
const scrub = $<HTMLInputElement>("scrub");
const overlayToggle = $<HTMLInputElement>("overlay-toggle");

const client = new StudioClient({ baseUrl: "" });
let session = new StudioSession();
const draw = new DrawController();
let edit: { session: BoxEditSession; entity: number; which: "firstBox" | "lastBox" } | null = null;
let vocab: VocabResponse | null = null;
let frames: ImageBitmap[] = [];
let pollAbort: AbortController | null = null;

const player = new FramePlayer(0, 8, renderPlayback);

function norm(event: PointerEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [(event.clientX - rect.left) / rect.width, (event.clientY - rect.top) / rect.height];
}

function renderCanvas(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const st = draw.state;
  for (const [i, e] of session.entities.entries()) {
    paintBox(e.firstBox, e.displayColor, false);
    paintBox(e.lastBox, e.displayColor, true);
    paintPath(e.firstBox, e.lastBox, e.displayColor);
    void i;
  }
  if (st.firstBox) paintBox(st.firstBox, "#ffffff", false);
  if (st.lastBox && st.phase !== "drawing-first") {
    paintBox(st.lastBox, "#ffffff", true);
    if (st.firstBox) paintPath(st.firstBox, st.lastBox, "#888888");
  }
  hintEl.textContent = st.hint ?? "";
}

function paintBox(box: Box, color: string, dashed: boolean): void {
  const [x1, y1, x2, y2] = box;
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.setLineDash(dashed ? [6, 4] : []);
  ctx.strokeRect(x1 * canvas.width, y1 * canvas.height, (x2 - x1) * canvas.width, (y2 - y1) * canvas.height);
  ctx.setLineDash([]);
}

function paintPath(first: Box, last: Box, color: string): void {
  const [ax, ay, bx, by] = pathPreview(first, last);
  ctx.strokeStyle = color;
  ctx.globalAlpha = 0.4;
  ctx.setLineDash([2, 4]);
  ctx.beginPath();
  ctx.moveTo(ax * canvas.width, ay * canvas.height);
  ctx.lineTo(bx * canvas.width, by * canvas.height);
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.globalAlpha = 1;
}

canvas.addEventListener("pointerdown", (event) => {
  const [x, y] = norm(event);
  // committed boxes win the grab so handles stay editable
  for (let i = session.entities.length - 1; i >= 0; i--) {
    for (const which of ["lastBox", "firstBox"] as const) {
      const box = session.entities[i][which];
      if (hitHandle(box, x, y, 0.02)) {
        edit = { session: BoxEditSession.grab(box, x, y)!, entity: i, which };
        canvas.setPointerCapture(event.pointerId);
        return;
      }
    }
  }
  draw.pointerDown(x, y);
  canvas.setPointerCapture(event.pointerId);
  renderCanvas();
});

canvas.addEventListener("pointermove", (event) => {
  const [x, y] = norm(event);
  if (edit) {
    session.entities[edit.entity][edit.which] = edit.session.move(x, y);
  } else {
    draw.pointerMove(x, y);
  }
  renderCanvas();
});

canvas.addEventListener("pointerup", (event) => {
  const [x, y] = norm(event);
  if (edit) {
    session.entities[edit.entity][edit.which] = edit.session.finish();
    edit = null;
  } else {
    const pair = draw.pointerUp(x, y);
    if (pair) {
      if (!session.selectedDescription) {
        hintEl.textContent = "pick a description first";
      } else {
        session.commitDraw(pair);
        renderEntities();
      }
    }
  }
  renderCanvas();
});

function renderEntities(): void {
  entityList.innerHTML = "";
  session.entities.forEach((e, i) => {
    const item = document.createElement("li");
    item.textContent = `${e.description}${e.reference ? ` [${e.reference}]` : ""}`;
    item.style.borderLeft = `4px solid ${e.displayColor}`;
    const remove = document.createElement("button");
    remove.textContent = "x";
    remove.addEventListener("click", () => {
      session.removeEntity(i);
      renderEntities();
      renderCanvas();
    });
    item.appendChild(remove);
    entityList.appendChild(item);
  });
}

function renderHistory(): void {
  historyList.innerHTML = "";
  for (const entry of [...session.history].reverse()) {
    const item = document.createElement("li");
    item.textContent = `${entry.jobId.slice(0, 8)} ${entry.status}`;
    const replay = document.createElement("button");
    replay.textContent = "replay";
    replay.disabled = entry.status !== "done";
    // identical bytes, identical seed: the service returns identical frames
    replay.addEventListener("click", () => submitJson(entry.requestJson));
    item.appendChild(replay);
    historyList.appendChild(item);
  }
}

async function loadVocab(): Promise<void> {
  vocab = await client.vocab();
  descriptionSelect.innerHTML = "";
  for (const d of vocab.descriptions) {
    const option = document.createElement("option");
    option.value = d.text;
    option.textContent = d.text;
    descriptionSelect.appendChild(option);
  }
  session.selectedDescription = vocab.descriptions[0]?.text ?? "";
  swatchGallery.innerHTML = "";
  for (const s of vocab.swatches) {
    const tile = document.createElement("button");
    tile.className = "swatch";
    tile.title = s.id;
    tile.style.background = `rgb(${s.rgb.join(",")})`;
    tile.addEventListener("click", () => {
      session.selectedSwatch = session.selectedSwatch === s.id ? null : s.id;
      for (const el of swatchGallery.children) el.classList.remove("selected");
      if (session.selectedSwatch) tile.classList.add("selected");
    });
    swatchGallery.appendChild(tile);
  }
}

descriptionSelect.addEventListener("change", () => {
  session.selectedDescription = descriptionSelect.value;
});

promptInput.addEventListener("input", () => {
  session.prompt = promptInput.value;
});

for (const key of ["steps", "guidance_scale", "temperature", "seed"] as const) {
  $<HTMLInputElement>(`decode-${key}`).addEventListener("change", (event) => {
    const raw = (event.target as HTMLInputElement).value;
    session.decode[key] = key === "guidance_scale" || key === "temperature" ? parseFloat(raw) : parseInt(raw, 10);
  });
}

$<HTMLButtonElement>("submit").addEventListener("click", () => {
  const errors = validateRequest(session.toRequest(), vocab?.limits);
  if (errors.length) {
    statusEl.textContent = `${errors[0].field}: ${errors[0].message}`;
    return;
  }
  void submitJson(session.requestJson());
});

async function submitJson(requestJson: string): Promise<void> {
  pollAbort?.abort();
  pollAbort = new AbortController();
  statusEl.textContent = "submitting";
  try {
    const { job_id } = await client.submit(requestJson);
    session.pushHistory(job_id, requestJson);
    renderHistory();
    statusEl.textContent = `job ${job_id.slice(0, 8)} queued`;
    const done = await client.pollUntilDone(job_id, 500, pollAbort.signal);
    await finishJob(done);
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") return;
    statusEl.textContent = err instanceof ServiceError ? err.message : `network error: ${String(err)}`;
  }
}

async function finishJob(done: JobStatus): Promise<void> {
  session.resolveHistory(
    done.id, done.status, done.result?.clip_id ?? null, done.result?.frame_count ?? 0,
  );
  renderHistory();
  if (done.status === "failed") {
    statusEl.textContent = `generation failed: ${done.error ?? "unknown"}`;
    return;
  }
  statusEl.textContent = "fetching frames";
  const clipId = done.result!.clip_id;
  const count = done.result!.frame_count;
  frames = [];
  for (let k = 0; k < count; k++) {
    frames.push(await createImageBitmap(await client.frame(clipId, k)));
  }
  scrub.max = String(count - 1);
  player.load(count);
  player.play();
  statusEl.textContent = "playing";
}

function renderPlayback(index: number): void {
  scrub.value = String(index);
  playCtx.imageSmoothingEnabled = false;
  playCtx.clearRect(0, 0, playCanvas.width, playCanvas.height);
  const frame = frames[index];
  if (frame) playCtx.drawImage(frame, 0, 0, playCanvas.width, playCanvas.height);
  if (overlayToggle.checked && frames.length) {
    drawOverlay(
      playCtx,
      overlayAtFrame(session.entities, index, frames.length),
      playCanvas.width,
      playCanvas.height,
    );
  }
}

scrub.addEventListener("input", () => {
  player.pause();
  player.seek(parseInt(scrub.value, 10));
});
overlayToggle.addEventListener("change", () => renderPlayback(player.frame));
$<HTMLButtonElement>("play").addEventListener("click", () => player.play());
$<HTMLButtonElement>("pause").addEventListener("click", () => player.pause());
$<HTMLButtonElement>("snapshot-save").addEventListener("click", () => {
  localStorage.setItem("ctrlvid-session", session.snapshot());
  statusEl.textContent = "session saved";
});
$<HTMLButtonElement>("snapshot-load").addEventListener("click", () => {
  const stored = localStorage.getItem("ctrlvid-session");
  if (!stored) return;
  session = StudioSession.restore(stored);
  promptInput.value = session.prompt;
  renderEntities();
  renderHistory();
  renderCanvas();
  statusEl.textContent = "session restored";
});

loadVocab().then(renderCanvas).catch((err) => {
  statusEl.textContent = `vocab load failed: ${String(err)}`;
});
