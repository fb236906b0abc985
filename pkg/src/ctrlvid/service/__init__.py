"""Operational shell: CLI subcommands and the HTTP generation service."""

from .app import CHECKPOINT_ENV, ServiceConfig, build_app, resolve_checkpoint
from .cli import main
from .frames import frame_png, frame_rgb, strip_png
from .jobs import DONE, FAILED, QUEUED, RUNNING, Job, JobStore
from .wire import (
    parse_request,
    prompt_text,
    request_from_record,
    swatch_catalog,
    swatch_crop,
    tokenize_prompt,
)

__all__ = [
    "CHECKPOINT_ENV", "ServiceConfig", "build_app", "resolve_checkpoint",
    "main",
    "frame_png", "frame_rgb", "strip_png",
    "QUEUED", "RUNNING", "DONE", "FAILED", "Job", "JobStore",
    "parse_request", "prompt_text", "request_from_record",
    "swatch_catalog", "swatch_crop", "tokenize_prompt",
]
