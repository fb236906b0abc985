"""Iterative parallel decoding with confidence-based commitment.

A decode starts from an all-MASK grid. Each of S steps forwards the model
(conditionally and, when guidance is active, unconditionally), samples every
still-masked position from the guided logits, and commits the most confident
samples so that exactly ceil(M0*cos(pi*k/(2S))) positions stay masked after
step k. Committed tokens are never revisited. Video extension pre-commits
the previous window's last three token timesteps (the last five frames) and
decodes the rest, adding six frames per window.

Confidence is log p(sampled id) plus temperature*(1 - k/S)*Gumbel noise, the
annealed-noise convention of this model family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditioning import (
    ControlBatch,
    assemble_control_sequence,
    embed_prompt,
    joint_encode,
    null_control,
    null_prompt,
    quantize_box,
)
from .errors import ConfigError, ShapeError, ValidationError
from .model import ModelState, forward_logits
from .numerics import no_grad
from .tokenizer import TokenGrid, VideoClip, decode_tokens, unflatten

OVERLAP_TIMESTEPS = 3   # previous window's tail kept verbatim
WINDOW_TIMESTEPS = 6    # timesteps decoded per window (fresh or extension)
_TINY = 1e-300


@dataclass(frozen=True)
class DecodeConfig:
    steps: int = 12
    guidance_scale: float = 2.0
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"decode needs at least 1 step, got {self.steps}")
        if self.guidance_scale < 0:
            raise ConfigError(f"guidance scale must be nonnegative, got {self.guidance_scale}")
        if self.temperature < 0:
            raise ConfigError(f"temperature must be nonnegative, got {self.temperature}")


# full-scale reference sampling regime, for comparison with the defaults above
REFERENCE_DECODE = DecodeConfig(steps=48, guidance_scale=12.0, temperature=4.0)


@dataclass(frozen=True)
class EntityControl:
    description_id: int
    first_box: tuple
    last_box: tuple
    appearance: np.ndarray  # fixed featurizer output, [appearance_dim]


@dataclass(frozen=True)
class GenerationRequest:
    prompt_ids: np.ndarray
    entities: tuple = ()
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    extension_windows: int = 0

    def __post_init__(self):
        if self.extension_windows < 0:
            raise ValidationError(f"extension count must be nonnegative, got {self.extension_windows}")


def cfg_logits(cond: np.ndarray, uncond: np.ndarray, scale: float) -> np.ndarray:
    """Guided logits: uncond + scale*(cond - uncond).

    scale 1 and 0 return the corresponding operand bit-for-bit; the blended
    form would reintroduce rounding where the contract promises exactness.
    """
    if cond.shape != uncond.shape:
        raise ShapeError(f"guidance shapes disagree: {cond.shape} vs {uncond.shape}")
    if scale == 1.0:
        return cond.copy()
    if scale == 0.0:
        return uncond.copy()
    return uncond + scale * (cond - uncond)


def masked_after_step(step: int, steps: int, initially_masked: int) -> int:
    """How many positions remain masked after decode step `step` (1-based)."""
    if step >= steps:
        return 0
    return math.ceil(initially_masked * math.cos(math.pi * step / (2 * steps)))


def schedule_masked_counts(initially_masked: int, steps: int) -> list[int]:
    return [masked_after_step(k, steps, initially_masked) for k in range(1, steps + 1)]


def interpolate_boxes(first_box, last_box, t_steps: int) -> np.ndarray:
    """Per-coordinate linear path from first to last box, [T, 4] floats."""
    if t_steps < 1:
        raise ValidationError(f"trajectory needs at least 1 timestep, got {t_steps}")
    a = np.asarray(first_box, dtype=float)
    b = np.asarray(last_box, dtype=float)
    if a.shape != (4,) or b.shape != (4,):
        raise ValidationError("boxes need 4 coordinates")
    if t_steps == 1 or np.array_equal(a, b):
        return np.tile(a, (t_steps, 1))
    alpha = np.linspace(0.0, 1.0, t_steps)[:, None]
    # convex form: both endpoints exact
    return a[None, :] * (1 - alpha) + b[None, :] * alpha


def interpolate_trajectory(first_box, last_box, t_steps: int, bins: int = 100) -> np.ndarray:
    """Linear interpolation followed by quantization, [T, 4] bin ids."""
    path = interpolate_boxes(first_box, last_box, t_steps)
    return np.stack([np.asarray(quantize_box(row, bins), dtype=np.int64) for row in path])


def request_control_batches(config, request: GenerationRequest) -> list[ControlBatch]:
    """One ControlBatch (batch axis 1) per decode window.

    Boxes interpolate across the whole extended timeline; each window sees
    its six-timestep slice. Entities occupy the leading slots at every
    timestep; the rest is padding.
    """
    n_e = len(request.entities)
    if n_e > config.n_slots:
        raise ValidationError(
            f"request has {n_e} entities, model supports {config.n_slots}", field="entities"
        )
    total_t = WINDOW_TIMESTEPS + OVERLAP_TIMESTEPS * request.extension_windows
    desc = np.zeros((1, config.n_slots), np.int64)
    boxes = np.zeros((1, total_t, config.n_slots, 4), np.int64)
    app = np.zeros((1, config.n_slots, config.appearance_dim))
    presence = np.zeros((1, total_t, config.n_slots), bool)
    for i, e in enumerate(request.entities):
        if np.asarray(e.appearance).shape != (config.appearance_dim,):
            raise ValidationError(
                f"appearance feature must have {config.appearance_dim} values",
                field=f"entities[{i}].reference",
            )
        desc[0, i] = e.description_id
        boxes[0, :, i] = interpolate_trajectory(e.first_box, e.last_box, total_t, config.box_bins)
        app[0, i] = e.appearance
        presence[0, :, i] = True
    return [
        ControlBatch(
            desc,
            boxes[:, 3 * w : 3 * w + WINDOW_TIMESTEPS],
            app,
            presence[:, 3 * w : 3 * w + WINDOW_TIMESTEPS],
        )
        for w in range(request.extension_windows + 1)
    ]


def decode_batch(state: ModelState, tokens: np.ndarray, committed: np.ndarray,
                 prompt_ctx, control_ctx, null_p, null_c,
                 config: DecodeConfig, rngs: list[np.random.Generator]) -> np.ndarray:
    """Run the S-step commitment loop over a batch; one RNG stream per row.

    Per-row streams make the result independent of how requests are grouped
    into batches. Draw order per row and step: sampling uniforms, then
    Gumbel uniforms.
    """
    cfg = state.config
    tokens = tokens.copy()
    committed = committed.copy()
    b, l = tokens.shape
    if committed.shape != (b, l) or len(rngs) != b:
        raise ShapeError(f"decode state shapes disagree: tokens {tokens.shape}, "
                         f"committed {committed.shape}, {len(rngs)} rngs")
    m0 = (~committed).sum(axis=1)
    tokens[~committed] = cfg.mask_id
    s = config.steps
    with no_grad():
        for k in range(1, s + 1):
            guided = forward_logits(state, tokens, prompt_ctx, control_ctx).data
            if config.guidance_scale != 1.0:
                uncond = forward_logits(state, tokens, null_p, null_c).data
                guided = cfg_logits(guided, uncond, config.guidance_scale)
            anneal = config.temperature * (1.0 - k / s)
            for i in range(b):
                idx = np.nonzero(~committed[i])[0]
                if idx.size == 0:
                    continue
                logit = guided[i, idx].astype(np.float64)
                logit -= logit.max(axis=1, keepdims=True)
                p = np.exp(logit)
                p /= p.sum(axis=1, keepdims=True)
                u = rngs[i].random(idx.size)
                cdf = p.cumsum(axis=1)
                ids = np.minimum((u[:, None] >= cdf).sum(axis=1), cfg.k_vocab - 1)
                picked = p[np.arange(idx.size), ids]
                gumbel_u = np.clip(rngs[i].random(idx.size), _TINY, 1.0 - 1e-16)
                conf = np.log(np.maximum(picked, _TINY)) + anneal * -np.log(-np.log(gumbel_u))
                n_commit = idx.size - masked_after_step(k, s, int(m0[i]))
                if n_commit <= 0:
                    continue
                order = np.argsort(-conf, kind="stable")[:n_commit]
                chosen = idx[order]
                tokens[i, chosen] = ids[order]
                committed[i, chosen] = True
    assert committed.all()  # the schedule reaches zero at step S
    return tokens


def _window_contexts(state, prompt_ids, cb: ControlBatch, batch: int):
    pe = embed_prompt(state, prompt_ids)
    ce = assemble_control_sequence(state, cb)
    jp, jc = joint_encode(state, pe, ce)
    return jp, jc, null_prompt(state, batch), null_control(state, batch)


def extend_video(state: ModelState, request: GenerationRequest, prior: TokenGrid,
                 window: int = 1) -> TokenGrid:
    """Decode the next six-timestep window; the first three timesteps are the
    prior's last three, committed before decoding starts."""
    cfg = state.config
    if prior.tokens.shape != (cfg.t_steps, cfg.grid_h, cfg.grid_w):
        raise ShapeError(f"prior grid shape {prior.tokens.shape}, expected "
                         f"{(cfg.t_steps, cfg.grid_h, cfg.grid_w)}")
    if not 1 <= window <= request.extension_windows:
        raise ValidationError(f"window {window} outside 1..{request.extension_windows}")
    cb = request_control_batches(cfg, request)[window]
    hw = cfg.grid_h * cfg.grid_w
    tokens = np.zeros((1, cfg.l_seq), np.int64)
    committed = np.zeros((1, cfg.l_seq), bool)
    overlap = prior.tokens[-OVERLAP_TIMESTEPS:].reshape(-1)
    tokens[0, : OVERLAP_TIMESTEPS * hw] = overlap
    committed[0, : OVERLAP_TIMESTEPS * hw] = True
    ids = np.asarray(request.prompt_ids, dtype=np.int64)
    ctxs = _window_contexts(state, ids[None, :], cb, 1)
    rng = np.random.default_rng([request.decode.seed, window])
    out = decode_batch(state, tokens, committed, *ctxs, request.decode, [rng])
    return unflatten(out[0], cfg.t_steps, cfg.grid_h, cfg.grid_w, cfg.k_vocab)


def iterative_decode(state: ModelState, request: GenerationRequest) -> TokenGrid:
    """Decode a full request: fresh window plus any extension windows,
    stitched into one grid whose overlap tokens match exactly."""
    cfg = state.config
    ids = np.asarray(request.prompt_ids, dtype=np.int64)
    if ids.shape != (cfg.prompt_len,):
        raise ValidationError(f"prompt must have {cfg.prompt_len} token ids", field="prompt")
    batches = request_control_batches(cfg, request)
    ctxs = _window_contexts(state, ids[None, :], batches[0], 1)
    tokens = np.full((1, cfg.l_seq), cfg.mask_id, np.int64)
    committed = np.zeros((1, cfg.l_seq), bool)
    rng = np.random.default_rng([request.decode.seed, 0])
    out = decode_batch(state, tokens, committed, *ctxs, request.decode, [rng])
    window = unflatten(out[0], cfg.t_steps, cfg.grid_h, cfg.grid_w, cfg.k_vocab)

    pieces = [window.tokens]
    for w in range(1, request.extension_windows + 1):
        window = extend_video(state, request, window, w)
        pieces.append(window.tokens[OVERLAP_TIMESTEPS:])
    full = np.concatenate(pieces, axis=0)
    return TokenGrid(full, cfg.k_vocab)


def decode_requests(state: ModelState, requests, batch_size: int = 16) -> list[VideoClip]:
    """Batch many extension-free requests through shared forward passes.

    Each request keeps its own seed-derived stream, so results are identical
    to decoding it alone.
    """
    cfg = state.config
    clips: list[VideoClip] = [None] * len(requests)
    for r in requests:
        if r.extension_windows:
            raise ValidationError("batched decoding supports only unextended requests")
    for lo in range(0, len(requests), batch_size):
        chunk = list(requests[lo : lo + batch_size])
        b = len(chunk)
        prompt_ids = np.stack([np.asarray(r.prompt_ids, np.int64) for r in chunk])
        cbs = [request_control_batches(cfg, r)[0] for r in chunk]
        cb = ControlBatch(
            np.concatenate([c.desc_ids for c in cbs]),
            np.concatenate([c.boxes_q for c in cbs]),
            np.concatenate([c.appearance for c in cbs]),
            np.concatenate([c.presence for c in cbs]),
        )
        ctxs = _window_contexts(state, prompt_ids, cb, b)
        tokens = np.full((b, cfg.l_seq), cfg.mask_id, np.int64)
        committed = np.zeros((b, cfg.l_seq), bool)
        rngs = [np.random.default_rng([r.decode.seed, 0]) for r in chunk]
        decode = chunk[0].decode
        for r in chunk:
            if (r.decode.steps, r.decode.guidance_scale, r.decode.temperature) != (
                decode.steps, decode.guidance_scale, decode.temperature,
            ):
                raise ValidationError("batched requests must share decode settings (except seed)")
        out = decode_batch(state, tokens, committed, *ctxs, decode, rngs)
        for j in range(b):
            grid = unflatten(out[j], cfg.t_steps, cfg.grid_h, cfg.grid_w, cfg.k_vocab)
            clips[lo + j] = decode_tokens(grid)
    return clips


def grid_to_clip(grid: TokenGrid, fps_label: float = 8.0) -> VideoClip:
    return decode_tokens(grid, fps_label)
