"""HTTP facade over checkpointed generation: jobs, clips, vocab, health.

Generation is asynchronous: POST /v1/generate parks a job in a bounded
FIFO worker pool and clients poll /v1/jobs/{id} until it lands on done
or failed.  The model state is shared read-only across workers; all job
bookkeeping goes through the locked store.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .. import inference
from ..errors import ConfigError, CtrlvidError, ValidationError
from ..model import load_checkpoint
from ..synthworld.vocab import WORDS, all_descriptions
from . import jobs as jobstore
from .frames import DEFAULT_SCALE, frame_png
from .wire import parse_request, swatch_catalog

CHECKPOINT_ENV = "FACTOR_CHECKPOINT"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8417
    checkpoint: str = ""
    max_concurrency: int = 1
    retention: int = 64
    max_pending: int = 16
    snapshot_path: str | None = None
    pixel_scale: int = DEFAULT_SCALE

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ConfigError(f"max_concurrency must be >= 1, got {self.max_concurrency}")
        if self.retention < 1:
            raise ConfigError(f"retention must be >= 1, got {self.retention}")
        if self.max_pending < 1:
            raise ConfigError(f"max_pending must be >= 1, got {self.max_pending}")


def resolve_checkpoint(config: ServiceConfig) -> str:
    override = os.environ.get(CHECKPOINT_ENV)
    path = override or config.checkpoint
    if not path:
        raise ConfigError(f"no checkpoint configured (flag or {CHECKPOINT_ENV})")
    return path


def _error(status: int, detail: str, field: str | None = None) -> JSONResponse:
    body = {"detail": detail}
    if field:
        body["field"] = field
    return JSONResponse(body, status_code=status)


def build_app(config: ServiceConfig) -> FastAPI:
    checkpoint_path = resolve_checkpoint(config)
    state = load_checkpoint(checkpoint_path)
    store = jobstore.JobStore(config.snapshot_path, config.retention)
    pool = ThreadPoolExecutor(max_workers=config.max_concurrency)

    @asynccontextmanager
    async def lifespan(_app):
        yield
        pool.shutdown(wait=True)

    app = FastAPI(title="ctrlvid", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.state.store = store
    app.state.model = state
    app.state.config = config
    app.state.checkpoint_path = checkpoint_path

    def run_job(job_id: str, gen_request) -> None:
        try:
            store.mark_running(job_id)
            grid = inference.iterative_decode(state, gen_request)
            store.finish_done(job_id, inference.grid_to_clip(grid))
        except Exception as e:  # a worker must never die silently
            try:
                store.finish_failed(job_id, str(e) or type(e).__name__)
            except CtrlvidError:
                pass

    @app.post("/v1/generate", status_code=202)
    async def generate(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON")
        try:
            gen_request = parse_request(body, state.config)
        except ValidationError as e:
            return _error(400, str(e), e.field)
        job = store.submit(body, max_pending=config.max_pending)
        if job is None:
            return _error(429, f"job queue is full ({config.max_pending} pending)")
        pool.submit(run_job, job.id, gen_request)
        return {"job_id": job.id, "status": job.status}

    @app.get("/v1/jobs/{job_id}")
    async def job_status(job_id: str):
        job = store.get(job_id)
        if job is None:
            return _error(404, f"unknown job {job_id!r}")
        return job.to_json()

    @app.get("/v1/clips/{clip_id}/frames/{index}")
    async def clip_frame(clip_id: str, index: int):
        clip = store.get_clip(clip_id)
        if clip is None:
            return _error(404, f"unknown clip {clip_id!r}")
        if not 0 <= index < clip.frames.shape[0]:
            return _error(404, f"frame {index} outside [0, {clip.frames.shape[0]})")
        return Response(frame_png(clip.frames[index], config.pixel_scale), media_type="image/png")

    @app.get("/v1/vocab")
    async def vocab():
        cfg = state.config
        return {
            "words": list(WORDS),
            "descriptions": all_descriptions(),
            "swatches": swatch_catalog(),
            "limits": {
                "n_slots": cfg.n_slots,
                "prompt_len": cfg.prompt_len,
                "box_bins": cfg.box_bins,
                "grid": [cfg.grid_h, cfg.grid_w],
                "frame_count": 2 * cfg.t_steps - 1,
                "k_pal": cfg.k_vocab,
            },
        }

    @app.get("/v1/health")
    async def health():
        return {
            "status": "ok",
            "checkpoint": checkpoint_path,
            "parameters": sum(p.count() for p in state.parameters()),
            "pending_jobs": store.pending_count(),
        }

    return app
