"""The bidirectional masked-token video transformer.

Each block runs self-attention over the video tokens, cross-attention into
the prompt context, an adaptive cross-attention into the control context,
and an MLP — all pre-norm residual. The adaptive layers (plus all
conditioning and joint-encoder parameters) form the "adaptive" group; the
rest is the "pretrained" group, frozen during adaptation. Every adaptive
output projection starts at zero, so a freshly adapted model computes
exactly the pretrained text-only function.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .numerics import Parameter, Tensor, add, embedding_lookup, layer_norm, matmul, reshape, scale, softmax, transpose
from .numerics.tensor import gelu
from .synthworld import vocab

_CKPT_MAGIC = b"FCKP"
_CKPT_VERSION = 1

ALIGN_PER_TIMESTEP = "per_timestep"
ALIGN_GLOBAL = "global"


@dataclass(frozen=True)
class TransformerConfig:
    n_blocks: int = 4
    d: int = 128
    heads: int = 4
    mlp_mult: int = 4
    k_vocab: int = 64
    t_steps: int = 6
    grid_h: int = 8
    grid_w: int = 8
    prompt_len: int = 16
    text_vocab: int = vocab.VOCAB_SIZE
    n_slots: int = 4
    box_bins: int = 100
    appearance_dim: int = 32
    img_spans: int = 8
    joint_blocks: int = 2
    alignment: str = ALIGN_PER_TIMESTEP
    dtype: str = "float64"

    def __post_init__(self):
        if self.d % self.heads:
            raise ConfigError(f"width {self.d} not divisible by {self.heads} heads")
        if self.alignment not in (ALIGN_PER_TIMESTEP, ALIGN_GLOBAL):
            raise ConfigError(f"unknown alignment mode {self.alignment!r}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")

    @property
    def l_seq(self) -> int:
        return self.t_steps * self.grid_h * self.grid_w

    @property
    def mask_id(self) -> int:
        return self.k_vocab

    @property
    def entity_span(self) -> int:
        # description + 4 coordinates + image-feature spans
        return 1 + 4 + self.img_spans

    @property
    def control_len(self) -> int:
        return self.t_steps * self.n_slots * self.entity_span

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


class ModelState:
    """Config plus the named, group-tagged parameter set."""

    def __init__(self, config: TransformerConfig):
        self.config = config
        self.params: dict[str, Parameter] = {}

    def _register(self, name: str, data: np.ndarray, group: Parameter.Group) -> None:
        self.params[name] = Parameter(Tensor(data.astype(self.config.np_dtype)), group, name)

    def param(self, name: str) -> Tensor:
        return self.params[name].tensor

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def group_parameters(self, group: Parameter.Group) -> list[Parameter]:
        return [p for p in self.params.values() if p.group == group]

    def trainable_fraction(self) -> float:
        adaptive = sum(p.count() for p in self.group_parameters(Parameter.Group.ADAPTIVE))
        total = sum(p.count() for p in self.parameters())
        return adaptive / total

    def total_parameters(self) -> int:
        return sum(p.count() for p in self.parameters())


def build_model(config: TransformerConfig, seed: int = 0) -> ModelState:
    """Deterministic init: normal(0, 0.02) weights, unit norms, zero biases,
    and exactly-zero adaptive output projections."""
    rng = np.random.default_rng(seed)
    state = ModelState(config)
    d = config.d
    pre, ada = Parameter.Group.PRETRAINED, Parameter.Group.ADAPTIVE

    def w(name, shape, group, zero=False):
        data = np.zeros(shape) if zero else rng.normal(0.0, 0.02, shape)
        state._register(name, data, group)

    def norm(prefix, group):
        state._register(f"{prefix}.g", np.ones(d), group)
        state._register(f"{prefix}.b", np.zeros(d), group)

    w("tok.table", (config.k_vocab + 1, d), pre)  # +1: the MASK row
    w("tok.pos", (config.l_seq, d), pre)
    w("prompt.table", (config.text_vocab, d), pre)
    w("prompt.pos", (config.prompt_len, d), pre)
    w("prompt.null", (config.prompt_len, d), pre)

    hidden = d * config.mlp_mult
    for b in range(config.n_blocks):
        norm(f"blk{b}.ln1", pre)
        for nm in ("wq", "wk", "wv", "wo"):
            w(f"blk{b}.attn.{nm}", (d, d), pre)
        norm(f"blk{b}.ln2", pre)
        for nm in ("wq", "wk", "wv", "wo"):
            w(f"blk{b}.tca.{nm}", (d, d), pre)
        norm(f"blk{b}.ln3", ada)
        for nm in ("wq", "wk", "wv"):
            w(f"blk{b}.aca.{nm}", (d, d), ada)
        w(f"blk{b}.aca.wo", (d, d), ada, zero=True)
        norm(f"blk{b}.ln4", pre)
        w(f"blk{b}.mlp.w1", (d, hidden), pre)
        w(f"blk{b}.mlp.b1", hidden, pre, zero=True)
        w(f"blk{b}.mlp.w2", (hidden, d), pre)
        w(f"blk{b}.mlp.b2", d, pre, zero=True)

    norm("head.ln", pre)
    w("head.w", (d, config.k_vocab), pre)
    w("head.b", config.k_vocab, pre, zero=True)

    w("cond.desc.table", (config.text_vocab, d), ada)
    w("cond.coord.table", (4 * config.box_bins, d), ada)
    w("cond.img.w", (config.appearance_dim, config.img_spans * d), ada)
    w("cond.img.b", config.img_spans * d, ada, zero=True)
    w("cond.pad", d, ada)
    w("cond.pos_t", (config.t_steps, d), ada)
    w("cond.pos_slot", (config.n_slots * config.entity_span, d), ada)
    w("cond.null", d, ada)

    for j in range(config.joint_blocks):
        norm(f"joint{j}.ln1", ada)
        for nm in ("wq", "wk", "wv"):
            w(f"joint{j}.attn.{nm}", (d, d), ada)
        w(f"joint{j}.attn.wo", (d, d), ada, zero=True)
        norm(f"joint{j}.ln2", ada)
        w(f"joint{j}.mlp.w1", (d, hidden), ada)
        w(f"joint{j}.mlp.b1", hidden, ada, zero=True)
        w(f"joint{j}.mlp.w2", (hidden, d), ada, zero=True)
        w(f"joint{j}.mlp.b2", d, ada, zero=True)

    return state


def attention(x_q: Tensor, x_kv: Tensor, wq: Tensor, wk: Tensor, wv: Tensor,
              wo: Tensor, heads: int) -> Tensor:
    """Multi-head attention, [..., Lq, D] x [..., Lk, D] -> [..., Lq, D]."""
    lead = x_q.shape[:-2]
    lq, d = x_q.shape[-2:]
    lk = x_kv.shape[-2]
    dh = d // heads
    nl = len(lead)
    to_heads = tuple(range(nl)) + (nl + 1, nl, nl + 2)

    q = transpose(reshape(matmul(x_q, wq), lead + (lq, heads, dh)), to_heads)
    k = transpose(reshape(matmul(x_kv, wk), lead + (lk, heads, dh)), to_heads)
    v = transpose(reshape(matmul(x_kv, wv), lead + (lk, heads, dh)), to_heads)

    kt = transpose(k, tuple(range(nl + 1)) + (nl + 2, nl + 1))
    # math.sqrt, not np.sqrt: a float64 numpy scalar would silently promote
    # the whole float32 graph from here on
    probs = softmax(scale(matmul(q, kt), 1.0 / math.sqrt(dh)))
    ctx = transpose(matmul(probs, v), to_heads)
    return matmul(reshape(ctx, lead + (lq, d)), wo)


def _ln(state: ModelState, prefix: str, x: Tensor) -> Tensor:
    return layer_norm(x, state.param(f"{prefix}.g"), state.param(f"{prefix}.b"))


def _mlp(state: ModelState, prefix: str, x: Tensor) -> Tensor:
    h = gelu(add(matmul(x, state.param(f"{prefix}.w1")), state.param(f"{prefix}.b1")))
    return add(matmul(h, state.param(f"{prefix}.w2")), state.param(f"{prefix}.b2"))


def forward_logits(state: ModelState, tokens: np.ndarray, prompt_ctx: Tensor,
                   control_ctx: Tensor | None = None) -> Tensor:
    """Logits [B, L, K_vocab] for a batch of (possibly masked) token ids.

    control_ctx=None runs the text-only path: the adaptive branch is
    skipped entirely, which equals the zero-init full path exactly.
    """
    cfg = state.config
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    bt, l = tokens.shape
    if l != cfg.l_seq:
        raise ShapeError(f"token sequence length {l}, config expects {cfg.l_seq}")
    if prompt_ctx.shape != (bt, cfg.prompt_len, cfg.d):
        raise ShapeError(f"prompt context shape {prompt_ctx.shape} vs batch {bt} config {cfg.prompt_len}x{cfg.d}")
    if control_ctx is not None and control_ctx.shape != (bt, cfg.control_len, cfg.d):
        raise ShapeError(f"control context shape {control_ctx.shape}, expected {(bt, cfg.control_len, cfg.d)}")

    x = add(embedding_lookup(state.param("tok.table"), tokens), state.param("tok.pos"))

    per_t = cfg.alignment == ALIGN_PER_TIMESTEP and control_ctx is not None
    if per_t:
        span = cfg.control_len // cfg.t_steps
        hw = cfg.grid_h * cfg.grid_w
        control_t = reshape(control_ctx, (bt, cfg.t_steps, span, cfg.d))

    for b in range(cfg.n_blocks):
        p = state.param
        h1 = _ln(state, f"blk{b}.ln1", x)
        x = add(x, attention(h1, h1,
                             p(f"blk{b}.attn.wq"), p(f"blk{b}.attn.wk"),
                             p(f"blk{b}.attn.wv"), p(f"blk{b}.attn.wo"), cfg.heads))
        x = add(x, attention(_ln(state, f"blk{b}.ln2", x), prompt_ctx,
                             p(f"blk{b}.tca.wq"), p(f"blk{b}.tca.wk"),
                             p(f"blk{b}.tca.wv"), p(f"blk{b}.tca.wo"), cfg.heads))
        if control_ctx is not None:
            q = _ln(state, f"blk{b}.ln3", x)
            if per_t:
                qt = reshape(q, (bt, cfg.t_steps, hw, cfg.d))
                out = attention(qt, control_t,
                                p(f"blk{b}.aca.wq"), p(f"blk{b}.aca.wk"),
                                p(f"blk{b}.aca.wv"), p(f"blk{b}.aca.wo"), cfg.heads)
                x = add(x, reshape(out, (bt, cfg.l_seq, cfg.d)))
            else:
                x = add(x, attention(q, control_ctx,
                                     p(f"blk{b}.aca.wq"), p(f"blk{b}.aca.wk"),
                                     p(f"blk{b}.aca.wv"), p(f"blk{b}.aca.wo"), cfg.heads))
        x = add(x, _mlp(state, f"blk{b}.mlp", _ln(state, f"blk{b}.ln4", x)))

    x = _ln(state, "head.ln", x)
    return add(matmul(x, state.param("head.w")), state.param("head.b"))


_DTYPE_CODES = {0: np.float64, 1: np.float32}


def save_checkpoint(path, state: ModelState) -> None:
    """Atomic write of config plus every named parameter blob."""
    cfg_blob = json.dumps(dataclasses.asdict(state.config)).encode()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<4sH", _CKPT_MAGIC, _CKPT_VERSION))
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<I", len(state.params)))
        for p in state.parameters():
            name = p.name.encode()
            dcode = 0 if p.data.dtype == np.float64 else 1
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<BB", 1 if p.group == Parameter.Group.ADAPTIVE else 0, dcode))
            fh.write(struct.pack("<B", p.data.ndim))
            for dim in p.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(p.data).tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> ModelState:
    """Rebuild the model and validate every stored name/shape/group tag."""
    with open(path, "rb") as fh:
        blob = fh.read()
    off = struct.calcsize("<4sH")
    if len(blob) < off:
        raise FormatError("checkpoint truncated before header")
    magic, version = struct.unpack_from("<4sH", blob)
    if magic != _CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != _CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", blob, off); off += 4
    config = TransformerConfig(**json.loads(blob[off : off + cfg_len])); off += cfg_len
    (count,) = struct.unpack_from("<I", blob, off); off += 4

    state = build_model(config, seed=0)
    if count != len(state.params):
        raise FormatError(f"checkpoint stores {count} parameters, model has {len(state.params)}")
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, off); off += 2
            name = blob[off : off + nlen].decode(); off += nlen
            gcode, dcode = struct.unpack_from("<BB", blob, off); off += 2
            (ndim,) = struct.unpack_from("<B", blob, off); off += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, off) if ndim else (); off += 4 * ndim
            if name not in state.params:
                raise FormatError(f"checkpoint parameter {name!r} not in model")
            p = state.params[name]
            want_group = 1 if p.group == Parameter.Group.ADAPTIVE else 0
            if gcode != want_group:
                raise FormatError(f"parameter {name!r} group tag {gcode} != {want_group}")
            if tuple(shape) != p.data.shape:
                raise FormatError(f"parameter {name!r} shape {shape} != {p.data.shape}")
            dtype = _DTYPE_CODES.get(dcode)
            if dtype is None or dtype != config.np_dtype:
                raise FormatError(f"parameter {name!r} dtype code {dcode} does not match config")
            nbytes = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize if shape else np.dtype(dtype).itemsize
            raw = blob[off : off + nbytes]
            if len(raw) != nbytes:
                raise FormatError(f"parameter {name!r} data truncated")
            off += nbytes
            p.tensor.data = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    except struct.error as exc:
        raise FormatError(f"checkpoint truncated: {exc}") from exc
    if off != len(blob):
        raise FormatError(f"{len(blob) - off} trailing bytes in checkpoint")
    return state


def states_equal(a: ModelState, b: ModelState, group: Parameter.Group | None = None) -> bool:
    """Bit-exact equality of (optionally one group's) parameters."""
    names = [p.name for p in (a.parameters() if group is None else a.group_parameters(group))]
    return all(
        np.array_equal(a.param(n).data, b.param(n).data)
        and a.param(n).data.dtype == b.param(n).data.dtype
        for n in names
    )
