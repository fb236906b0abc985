"""Two-stage masked-token training.

Stage "pretrain" teaches the base transformer text-conditioned video
prediction (the adaptive branch never runs, so its zero-initialized
parameters stay untouched). Stage "adapt" freezes the base and trains only
the adaptive group against full control conditioning. Both stages replace a
cosine-scheduled subset of token positions with MASK and score only those
positions; with probability `condition_dropout_prob` a sample's prompt and
control are dropped *together* and replaced by the learned null embeddings.

Every step derives its own RNG from (seed, step), so a run interrupted at
any checkpoint resumes with an identical trajectory.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .conditioning import (
    ControlBatch,
    assemble_control_sequence,
    control_batch_from_records,
    embed_prompt,
    joint_encode,
    null_control,
    null_prompt,
)
from .errors import ConfigError, StorageError, ValidationError
from .model import ModelState, TransformerConfig, build_model, forward_logits, load_checkpoint, save_checkpoint
from .numerics import AdamW, Parameter, Tensor, add, masked_cross_entropy, mul
from .tokenizer import encode_video, flatten

STAGE_PRETRAIN = "pretrain"
STAGE_ADAPT = "adapt"

# full-scale reference regime, for comparison with desk defaults below
REFERENCE_BATCH = 128
REFERENCE_STEPS = 500_000
REFERENCE_LR = 4.5e-5

CHECKPOINT_NAME = "model.fckp"
OPTIMIZER_NAME = "optim.npz"
METRICS_NAME = "metrics.ndjson"


@dataclass(frozen=True)
class TrainConfig:
    stage: str
    steps: int
    batch: int = 32
    lr: float = 3e-4
    weight_decay: float = 0.0
    condition_dropout_prob: float = 0.10
    seed: int = 0
    checkpoint_every: int = 0  # 0: only the final checkpoint is written

    def __post_init__(self):
        if self.stage not in (STAGE_PRETRAIN, STAGE_ADAPT):
            raise ConfigError(f"unknown training stage {self.stage!r}")
        if not 0.0 <= self.condition_dropout_prob <= 1.0:
            raise ConfigError(f"condition dropout prob {self.condition_dropout_prob} outside [0, 1]")
        if self.steps < 0:
            raise ConfigError(f"negative step count {self.steps}")
        if self.batch < 1:
            raise ConfigError(f"batch size must be at least 1, got {self.batch}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"negative checkpoint interval {self.checkpoint_every}")


@dataclass(frozen=True)
class MaskSample:
    mask: np.ndarray  # [L] bool
    ratio: float


def sample_mask(rng: np.random.Generator, length: int) -> MaskSample:
    """Cosine-scheduled random mask: ratio = cos(pi*u/2), at least one position."""
    if length < 1:
        raise ValidationError(f"mask length must be at least 1, got {length}")
    u = rng.random()
    ratio = math.cos(math.pi * u / 2.0)
    count = max(1, math.ceil(ratio * length))
    mask = np.zeros(length, dtype=bool)
    mask[rng.choice(length, size=count, replace=False)] = True
    return MaskSample(mask, ratio)


@dataclass
class EncodedDataset:
    tokens: np.ndarray      # [N, L] int64
    prompt_ids: np.ndarray  # [N, prompt_len] int64
    control: ControlBatch

    def __len__(self) -> int:
        return self.tokens.shape[0]


def encode_dataset(records, config: TransformerConfig) -> EncodedDataset:
    """Tokenize every record once so steps only index into arrays."""
    if not records:
        raise ValidationError("dataset is empty")
    tokens = np.stack([flatten(encode_video(r.clip)) for r in records])
    if tokens.shape[1] != config.l_seq:
        raise ConfigError(f"records tokenize to length {tokens.shape[1]}, model expects {config.l_seq}")
    prompts = np.stack([r.prompt_ids for r in records]).astype(np.int64)
    if prompts.shape[1] != config.prompt_len:
        raise ConfigError(f"records carry prompts of length {prompts.shape[1]}, model expects {config.prompt_len}")
    return EncodedDataset(tokens, prompts, control_batch_from_records(records, config.t_steps, config.n_slots))


def prepare_state(config: TrainConfig, model_config: TransformerConfig | None = None,
                  base_checkpoint=None) -> ModelState:
    """Fresh model for pretraining; the stored base model for adaptation."""
    if config.stage == STAGE_ADAPT:
        if base_checkpoint is None:
            raise ConfigError("adapt stage requires a pretrained checkpoint")
        return load_checkpoint(base_checkpoint)
    return build_model(model_config or TransformerConfig(), config.seed)


def stage_parameters(state: ModelState, stage: str) -> list[Parameter]:
    group = Parameter.Group.PRETRAINED if stage == STAGE_PRETRAIN else Parameter.Group.ADAPTIVE
    return state.group_parameters(group)


def train_step(state: ModelState, optimizer: AdamW, enc: EncodedDataset,
               config: TrainConfig, rng: np.random.Generator,
               params: list[Parameter]) -> tuple[float, int, float]:
    """One optimizer step; returns (loss, masked position count, dropped fraction).

    Draw order from `rng` is part of the format: batch indices, then one mask
    per sample, then the dropout flags. Resume depends on it.
    """
    cfg = state.config
    idx = rng.integers(0, len(enc), config.batch)
    toks = enc.tokens[idx]
    b, l = toks.shape
    mask = np.zeros((b, l), dtype=bool)
    for i in range(b):
        mask[i] = sample_mask(rng, l).mask
    dropped = rng.random(b) < config.condition_dropout_prob

    masked_toks = np.where(mask, cfg.mask_id, toks)
    keep = Tensor((~dropped).astype(cfg.np_dtype)[:, None, None])
    drop = Tensor(dropped.astype(cfg.np_dtype)[:, None, None])

    pe = embed_prompt(state, enc.prompt_ids[idx])
    if config.stage == STAGE_PRETRAIN:
        ctx_p = add(mul(pe, keep), mul(null_prompt(state, b), drop))
        logits = forward_logits(state, masked_toks, ctx_p, None)
    else:
        ce = assemble_control_sequence(state, enc.control.take(idx))
        jp, jc = joint_encode(state, pe, ce)
        ctx_p = add(mul(jp, keep), mul(null_prompt(state, b), drop))
        ctx_c = add(mul(jc, keep), mul(null_control(state, b), drop))
        logits = forward_logits(state, masked_toks, ctx_p, ctx_c)

    loss = masked_cross_entropy(logits, toks, mask)
    loss.backward()
    optimizer.step(params)
    optimizer.zero_grad(state.parameters())  # clear frozen-group grads too
    return float(loss.data), int(mask.sum()), float(dropped.mean())


def _save_snapshot(out_dir, state: ModelState, optimizer: AdamW) -> None:
    ckpt = os.path.join(out_dir, CHECKPOINT_NAME)
    opt_path = os.path.join(out_dir, OPTIMIZER_NAME)
    try:
        save_checkpoint(ckpt, state)
        tmp = opt_path + ".tmp"
        with open(tmp, "wb") as fh:
            np.savez(fh, **optimizer.state_arrays())
        os.replace(tmp, opt_path)
    except OSError as exc:
        raise StorageError(f"cannot write snapshot under {out_dir}: {exc}") from exc


@dataclass
class TrainResult:
    state: ModelState
    metrics: list[dict] = field(default_factory=list)


def run_training(records, config: TrainConfig, out_dir, state: ModelState | None = None,
                 resume: bool = False) -> TrainResult:
    """Drive `config.steps` steps, streaming one metrics line per step.

    `out_dir` collects the model checkpoint, optimizer moments, and the
    newline-delimited metrics log. With resume=True the snapshot in
    `out_dir` is loaded and training continues from its stored step;
    otherwise `state` is the starting model and any old log is truncated.
    """
    os.makedirs(out_dir, exist_ok=True)
    optimizer = AdamW(config.lr, weight_decay=config.weight_decay)
    if resume:
        try:
            state = load_checkpoint(os.path.join(out_dir, CHECKPOINT_NAME))
            with np.load(os.path.join(out_dir, OPTIMIZER_NAME)) as arrays:
                optimizer.load_state_arrays(dict(arrays))
        except OSError as exc:
            raise StorageError(f"cannot resume from {out_dir}: {exc}") from exc
        start = optimizer.step_count
    else:
        if state is None:
            raise ConfigError("run_training needs a model state unless resuming")
        start = 0

    enc = encode_dataset(records, state.config)
    params = stage_parameters(state, config.stage)
    result = TrainResult(state)
    metrics_path = os.path.join(out_dir, METRICS_NAME)
    try:
        log = open(metrics_path, "a" if resume else "w")
    except OSError as exc:
        raise StorageError(f"cannot open metrics log {metrics_path}: {exc}") from exc

    with log:
        for step in range(start, config.steps):
            rng = np.random.default_rng([config.seed, step])
            t0 = time.perf_counter()
            loss, masked_count, drop_rate = train_step(state, optimizer, enc, config, rng, params)
            line = {
                "step": step,
                "loss": loss,
                "masked_count": masked_count,
                "dropout_flag_rate": drop_rate,
                "trainable_fraction": state.trainable_fraction(),
                "secs": time.perf_counter() - t0,
            }
            log.write(json.dumps(line) + "\n")
            log.flush()
            result.metrics.append(line)
            if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                _save_snapshot(out_dir, state, optimizer)
    _save_snapshot(out_dir, state, optimizer)
    return result
