"""In-memory job store with a crash-safe snapshot file.

Jobs move queued -> running -> done | failed and never any other way.
The store keeps finished jobs (and their clips) up to a retention bound,
snapshots itself to disk on every mutation, and on reload marks any job
that was still in flight as failed — a crash must never resurrect as a
phantom success.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from ..errors import StorageError, ValidationError
from ..tokenizer import VideoClip

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"

_TRANSITIONS = {
    QUEUED: {RUNNING, FAILED},
    RUNNING: {DONE, FAILED},
    DONE: set(),
    FAILED: set(),
}


@dataclass
class Job:
    id: str
    request: dict
    status: str = QUEUED
    error: str | None = None
    clip_id: str | None = None
    frame_count: int | None = None
    created_at: float = field(default_factory=time.time)
    started_at: float | None = None
    finished_at: float | None = None

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "status": self.status,
            "request": self.request,
            "created_at": self.created_at,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }
        if self.status == DONE:
            out["result"] = {"clip_id": self.clip_id, "frame_count": self.frame_count}
        if self.status == FAILED:
            out["error"] = self.error
        return out


def _encode_clip(clip: VideoClip) -> dict:
    return {
        "shape": list(clip.frames.shape),
        "k_pal": clip.k_pal,
        "fps_label": clip.fps_label,
        "data": base64.b64encode(clip.frames.astype(np.uint8).tobytes()).decode("ascii"),
    }


def _decode_clip(blob: dict) -> VideoClip:
    frames = np.frombuffer(base64.b64decode(blob["data"]), dtype=np.uint8)
    return VideoClip(
        frames.reshape(blob["shape"]).copy(), k_pal=blob["k_pal"], fps_label=blob["fps_label"]
    )


class JobStore:
    """Single-writer job/clip registry; every mutation holds the lock."""

    def __init__(self, snapshot_path=None, retention: int = 64):
        if retention < 1:
            raise ValidationError(f"retention must be >= 1, got {retention}")
        self._lock = threading.Lock()
        self._jobs: dict[str, Job] = {}
        self._clips: dict[str, VideoClip] = {}
        self._snapshot_path = str(snapshot_path) if snapshot_path else None
        self.retention = retention
        if self._snapshot_path and os.path.exists(self._snapshot_path):
            self._load(self._snapshot_path)

    # -- queries ---------------------------------------------------------

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def get_clip(self, clip_id: str) -> VideoClip | None:
        with self._lock:
            return self._clips.get(clip_id)

    def pending_count(self) -> int:
        with self._lock:
            return sum(1 for j in self._jobs.values() if j.status in (QUEUED, RUNNING))

    def jobs(self) -> list[Job]:
        with self._lock:
            return list(self._jobs.values())

    # -- mutations -------------------------------------------------------

    def submit(self, request: dict, max_pending: int | None = None) -> Job | None:
        """Register a queued job; None when the pending bound is already met."""
        job = Job(id=uuid.uuid4().hex[:12], request=request)
        with self._lock:
            if max_pending is not None:
                pending = sum(1 for j in self._jobs.values() if j.status in (QUEUED, RUNNING))
                if pending >= max_pending:
                    return None
            self._jobs[job.id] = job
            self._save_locked()
        return job

    def _transition(self, job_id: str, status: str) -> Job:
        job = self._jobs[job_id]
        if status not in _TRANSITIONS[job.status]:
            raise ValidationError(f"job {job_id} cannot move {job.status} -> {status}")
        job.status = status
        return job

    def mark_running(self, job_id: str) -> None:
        with self._lock:
            job = self._transition(job_id, RUNNING)
            job.started_at = time.time()
            self._save_locked()

    def finish_done(self, job_id: str, clip: VideoClip) -> None:
        with self._lock:
            job = self._transition(job_id, DONE)
            job.finished_at = time.time()
            job.clip_id = job.id
            job.frame_count = int(clip.frames.shape[0])
            self._clips[job.clip_id] = clip
            self._prune_locked()
            self._save_locked()

    def finish_failed(self, job_id: str, error: str) -> None:
        with self._lock:
            job = self._transition(job_id, FAILED)
            job.finished_at = time.time()
            job.error = error
            self._prune_locked()
            self._save_locked()

    # -- retention and persistence --------------------------------------

    def _prune_locked(self) -> None:
        terminal = [j for j in self._jobs.values() if j.status in (DONE, FAILED)]
        # dict preserves insertion order, so the oldest finished job goes first
        while len(terminal) > self.retention:
            victim = terminal.pop(0)
            del self._jobs[victim.id]
            self._clips.pop(victim.clip_id, None)

    def _save_locked(self) -> None:
        if not self._snapshot_path:
            return
        payload = {
            "jobs": [j.__dict__.copy() for j in self._jobs.values()],
            "clips": {cid: _encode_clip(c) for cid, c in self._clips.items()},
        }
        tmp = self._snapshot_path + ".tmp"
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(payload, fh)
            os.replace(tmp, self._snapshot_path)
        except OSError as e:
            raise StorageError(f"cannot write job snapshot {self._snapshot_path}: {e}") from e

    def _load(self, path: str) -> None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, ValueError) as e:
            raise StorageError(f"cannot read job snapshot {path}: {e}") from e
        for row in payload.get("jobs", []):
            job = Job(**row)
            if job.status in (QUEUED, RUNNING):
                job.status = FAILED
                job.error = "interrupted by service restart"
                job.finished_at = time.time()
            self._jobs[job.id] = job
        for cid, blob in payload.get("clips", {}).items():
            self._clips[cid] = _decode_clip(blob)
