"""Prompt/control encoding: box quantization, appearance features, entity
embedding spans, control-sequence assembly, and the joint contextualizer.

Learned pieces live in the model's `cond.*` / `joint*` parameters; the
featurizer and quantizer are fixed functions so every conditioning input is
reproducible from raw data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .numerics import Tensor, add, concat, embedding_lookup, layer_norm, matmul, mul, narrow, reshape
from .numerics.tensor import gelu

DESK_BOX_BINS = 100
APPEARANCE_POOL = 4     # palette indices per histogram bin
OCCUPANCY_GRID = 4      # occupancy downsample is OCCUPANCY_GRID x OCCUPANCY_GRID


def quantize_box(box, bins: int = DESK_BOX_BINS) -> tuple[int, int, int, int]:
    """Normalized (x1, y1, x2, y2) -> ids in [0, bins); id = min(floor(v*bins), bins-1)."""
    vals = tuple(float(v) for v in box)
    if len(vals) != 4:
        raise ValidationError(f"box needs 4 coordinates, got {len(vals)}")
    x1, y1, x2, y2 = vals
    if not all(0.0 <= v <= 1.0 for v in vals):
        raise ValidationError(f"box coordinates outside [0,1]: {vals}")
    if not (x1 < x2 and y1 < y2):
        raise ValidationError(f"box corners out of order: {vals}")
    return tuple(min(int(np.floor(v * bins)), bins - 1) for v in vals)


def dequantize_box(ids, bins: int = DESK_BOX_BINS) -> tuple[float, float, float, float]:
    """Bin centers; quantize(dequantize(q)) == q exactly."""
    return tuple((int(i) + 0.5) / bins for i in ids)


def extract_appearance_feature(crop: np.ndarray, k_pal: int = 64) -> np.ndarray:
    """Fixed appearance descriptor of a palette crop, length k_pal/4 + 16.

    First k_pal/APPEARANCE_POOL entries: foreground color histogram pooled
    over groups of APPEARANCE_POOL palette indices, normalized to sum 1.
    Last 16: fraction of foreground per cell of a 4x4 occupancy grid.
    """
    crop = np.asarray(crop)
    if crop.ndim != 2 or crop.size == 0:
        raise ValidationError(f"appearance crop must be a non-empty 2d grid, got shape {crop.shape}")
    n_pools = k_pal // APPEARANCE_POOL
    hist = np.zeros(n_pools)
    fg = crop[crop != 0]
    if fg.size:
        counts = np.bincount(fg.astype(np.int64) // APPEARANCE_POOL, minlength=n_pools)
        hist = counts[:n_pools] / fg.size

    ch, cw = crop.shape
    wr = _overlap_weights(ch)
    wc = _overlap_weights(cw)
    fgmask = (crop != 0).astype(float)
    occ = (wr @ fgmask @ wc.T) / (wr @ np.ones((ch, cw)) @ wc.T)

    return np.concatenate([hist, occ.reshape(-1)])


def _overlap_weights(n: int) -> np.ndarray:
    """[OCCUPANCY_GRID, n] area overlap of output buckets with crop cells."""
    b = np.arange(OCCUPANCY_GRID + 1) / OCCUPANCY_GRID
    c = np.arange(n + 1) / n
    lo = np.maximum(b[:-1, None], c[None, :-1])
    hi = np.minimum(b[1:, None], c[None, 1:])
    return np.maximum(hi - lo, 0.0)


@dataclass
class ControlBatch:
    """Raw per-slot control fields for a batch; absent slots carry no meaning."""

    desc_ids: np.ndarray    # [B, N] int64
    boxes_q: np.ndarray     # [B, T, N, 4] int64 bin ids
    appearance: np.ndarray  # [B, N, A] float
    presence: np.ndarray    # [B, T, N] bool

    def __post_init__(self):
        b, t, n = self.presence.shape
        if self.desc_ids.shape != (b, n) or self.boxes_q.shape != (b, t, n, 4):
            raise ShapeError(
                f"control batch shapes disagree: presence {self.presence.shape}, "
                f"desc {self.desc_ids.shape}, boxes {self.boxes_q.shape}"
            )
        if self.appearance.shape[:2] != (b, n):
            raise ShapeError(f"appearance shape {self.appearance.shape} vs batch {(b, n)}")

    @property
    def batch(self) -> int:
        return self.presence.shape[0]

    def take(self, idx) -> "ControlBatch":
        """Row-select along the batch axis."""
        i = np.asarray(idx)
        return ControlBatch(self.desc_ids[i], self.boxes_q[i], self.appearance[i], self.presence[i])


def empty_control_batch(batch: int, t_steps: int, n_slots: int, appearance_dim: int) -> ControlBatch:
    return ControlBatch(
        np.zeros((batch, n_slots), np.int64),
        np.zeros((batch, t_steps, n_slots, 4), np.int64),
        np.zeros((batch, n_slots, appearance_dim)),
        np.zeros((batch, t_steps, n_slots), bool),
    )


def control_batch_from_records(records, t_steps: int, n_slots: int, k_pal: int = 64) -> ControlBatch:
    feats = []
    for r in records:
        row = [
            extract_appearance_feature(c, k_pal) if c is not None else np.zeros(k_pal // APPEARANCE_POOL + OCCUPANCY_GRID**2)
            for c in r.crops
        ]
        feats.append(row)
    return ControlBatch(
        np.stack([r.description_ids for r in records]),
        np.stack([r.boxes_q for r in records]),
        np.asarray(feats, dtype=float),
        np.stack([r.presence for r in records]),
    )


def _tile_batch(vec: Tensor, batch: int, length: int) -> Tensor:
    """[D] or [length, D] parameter -> [batch, length, D] graph node."""
    d = vec.shape[-1]
    base = reshape(vec, (1, 1, d) if len(vec.shape) == 1 else (1,) + vec.shape)
    return add(base, Tensor(np.zeros((batch, length, 1), dtype=vec.dtype)))


def embed_prompt(state, prompt_ids: np.ndarray) -> Tensor:
    """[B, L_p] ids -> [B, L_p, D] prompt embeddings with positions added."""
    ids = np.asarray(prompt_ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.shape[1] != state.config.prompt_len:
        raise ShapeError(f"prompt length {ids.shape[1]}, config expects {state.config.prompt_len}")
    return add(embedding_lookup(state.param("prompt.table"), ids), state.param("prompt.pos"))


def null_prompt(state, batch: int) -> Tensor:
    """The learned unconditional prompt sequence, tiled over the batch."""
    return _tile_batch(state.param("prompt.null"), batch, state.config.prompt_len)


def null_control(state, batch: int) -> Tensor:
    """The learned unconditional control vector tiled to the control length."""
    return _tile_batch(state.param("cond.null"), batch, state.config.control_len)


def encode_entity(state, desc_id: int, box_q, appearance: np.ndarray) -> Tensor:
    """One entity at one timestep -> its [S_e, D] span (no padding, no positions)."""
    cfg = state.config
    desc = embedding_lookup(state.param("cond.desc.table"), [int(desc_id)])
    coord_ids = np.asarray(box_q, dtype=np.int64) + np.arange(4) * cfg.box_bins
    coords = embedding_lookup(state.param("cond.coord.table"), coord_ids)
    img = add(matmul(Tensor(np.asarray(appearance, dtype=float)[None, :]), state.param("cond.img.w")),
              state.param("cond.img.b"))
    img = reshape(img, (cfg.img_spans, cfg.d))
    return concat([desc, coords, img], axis=0)


def assemble_control_sequence(state, cb: ControlBatch) -> Tensor:
    """ControlBatch -> [B, T*N*S_e, D] embeddings.

    Absent slots are sanitized to zeros before entering the graph and then
    replaced by the learned padding vector, so their raw contents can never
    influence the output, bit for bit. Timestep and slot positions are added
    to every span, padded or not.
    """
    cfg = state.config
    bt, t, n = cb.presence.shape
    if (t, n) != (cfg.t_steps, cfg.n_slots):
        raise ShapeError(f"control grid {t}x{n}, config expects {cfg.t_steps}x{cfg.n_slots}")
    se, d = cfg.entity_span, cfg.d

    present_slot = cb.presence.any(axis=1)  # [B, N]
    desc_ids = np.where(present_slot, cb.desc_ids, 0)
    boxes = np.where(cb.presence[..., None], cb.boxes_q, 0)
    app = np.where(present_slot[..., None], cb.appearance, 0.0)
    if boxes.min() < 0 or boxes.max() >= cfg.box_bins:
        raise ValidationError(f"quantized box ids outside [0, {cfg.box_bins})")

    desc_e = embedding_lookup(state.param("cond.desc.table"), desc_ids)       # [B, N, D]
    coord_ids = boxes + np.arange(4) * cfg.box_bins
    coord_e = embedding_lookup(state.param("cond.coord.table"), coord_ids)    # [B, T, N, 4, D]
    img = add(matmul(Tensor(app.astype(cfg.np_dtype)), state.param("cond.img.w")),
              state.param("cond.img.b"))                                      # [B, N, 8D]

    tile_t = Tensor(np.zeros((1, t, 1, 1, 1), dtype=cfg.np_dtype))
    desc_t = add(reshape(desc_e, (bt, 1, n, 1, d)), tile_t)                   # [B, T, N, 1, D]
    img_t = add(reshape(img, (bt, 1, n, cfg.img_spans, d)), tile_t)           # [B, T, N, 8, D]
    span = concat([desc_t, coord_e, img_t], axis=3)                           # [B, T, N, S_e, D]

    m = cb.presence.astype(cfg.np_dtype)[..., None, None]                     # [B, T, N, 1, 1]
    pad = reshape(state.param("cond.pad"), (1, 1, 1, 1, d))
    mixed = add(mul(span, Tensor(m)), mul(pad, Tensor(1.0 - m)))

    pos_slot = reshape(state.param("cond.pos_slot"), (1, 1, n, se, d))
    pos_t = reshape(state.param("cond.pos_t"), (1, t, 1, 1, d))
    out = add(add(mixed, pos_slot), pos_t)
    return reshape(out, (bt, t * n * se, d))


def joint_encode(state, prompt_emb: Tensor, control_emb: Tensor) -> tuple[Tensor, Tensor]:
    """Contextualize prompt and control through shared self-attention blocks.

    Sequences are concatenated, run through the joint encoder, and split at
    the original boundary; output lengths equal input lengths exactly. With
    the encoder's output projections at zero init this is the identity.
    """
    from .model import attention  # deferred: model pulls in this module via the dataset records

    cfg = state.config
    lp = prompt_emb.shape[1]
    lc = control_emb.shape[1]
    x = concat([prompt_emb, control_emb], axis=1)
    for j in range(cfg.joint_blocks):
        p = state.param
        h = layer_norm(x, p(f"joint{j}.ln1.g"), p(f"joint{j}.ln1.b"))
        x = add(x, attention(h, h, p(f"joint{j}.attn.wq"), p(f"joint{j}.attn.wk"),
                             p(f"joint{j}.attn.wv"), p(f"joint{j}.attn.wo"), cfg.heads))
        h = layer_norm(x, p(f"joint{j}.ln2.g"), p(f"joint{j}.ln2.b"))
        hidden = add(matmul(h, p(f"joint{j}.mlp.w1")), p(f"joint{j}.mlp.b1"))
        x = add(x, add(matmul(gelu(hidden), p(f"joint{j}.mlp.w2")), p(f"joint{j}.mlp.b2")))
    return narrow(x, 1, 0, lp), narrow(x, 1, lp, lc)
