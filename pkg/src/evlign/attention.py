"""Cross-modal fusion attention stack: CMFA -> MSA -> MCA, forward pass.

One layer refines N landmark token embeddings against M patch features:

1. CMFA: queries are the layer-normalized tokens plus the landmark query;
   keys are RGB features plus their structure encoding.
2. MSA: plain multi-head self-attention over the refined tokens.
3. MCA: cross-attention whose keys are event features plus their structure
   encoding, applied to the post-MSA residual sum.

Each sub-block is residual: x + Attn(LN(x)). One set of per-head
query/key/value projections and one output projection are shared by the
three blocks; each block owns its layer-norm scale/shift.

``value_source`` selects what the attention weights average: the block's
own (normalized) input tokens (``input_embedding``, the default) or the
block's cross-modal feature tensor (``rgb_features``: RGB features in
CMFA, event features in MCA). MSA always averages its tokens. Averaging
N token rows with N x M cross-attention weights is only defined when each
token has its own patch, so ``input_embedding`` requires M == N; the
``rgb_features`` path works for any M.

All forwards are pure, float64, and use fixed reduction order, so repeat
runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

VAR_FLOOR = 1e-5
VALUE_SOURCES = ("input_embedding", "rgb_features")


@dataclass(frozen=True)
class Embeddings:
    """Token and feature tensors entering one alignment layer.

    tokens/query are N x C; the four feature/encoding tensors are M x C.
    """

    tokens: np.ndarray
    query: np.ndarray
    rgb_features: np.ndarray
    rgb_encoding: np.ndarray
    event_features: np.ndarray
    event_encoding: np.ndarray

    def __post_init__(self):
        for name in ("tokens", "query", "rgb_features", "rgb_encoding",
                     "event_features", "event_encoding"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), np.float64))
        n, c = self.tokens.shape
        if self.query.shape != (n, c):
            raise ShapeError(f"query shape {self.query.shape} != tokens shape {(n, c)}")
        m = self.rgb_features.shape[0]
        for name in ("rgb_features", "rgb_encoding", "event_features", "event_encoding"):
            got = getattr(self, name).shape
            if got != (m, c):
                raise ShapeError(f"{name} shape {got}, expected {(m, c)}")
        for name in ("tokens", "query", "rgb_features", "rgb_encoding",
                     "event_features", "event_encoding"):
            if not np.isfinite(getattr(self, name)).all():
                raise NumericError(f"non-finite values in embeddings field {name!r}")

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def num_patches(self) -> int:
        return self.rgb_features.shape[0]

    @property
    def channels(self) -> int:
        return self.tokens.shape[1]

    @staticmethod
    def random(num_tokens: int, num_patches: int, channels: int,
               seed: int = 0, scale: float = 1.0) -> "Embeddings":
        rng = np.random.default_rng(seed)
        def draw(rows):
            return scale * rng.standard_normal((rows, channels))
        return Embeddings(
            tokens=draw(num_tokens), query=draw(num_tokens),
            rgb_features=draw(num_patches), rgb_encoding=draw(num_patches),
            event_features=draw(num_patches), event_encoding=draw(num_patches),
        )


@dataclass(frozen=True)
class AttentionParams:
    """Learnable tensors of one layer.

    Per-head projections w_query/w_key/w_value are (H, C_h, C_h); w_out is
    (C, C). ln_* are (2, C) rows of [scale, shift] for the fusion (CMFA),
    self (MSA), and cross (MCA) blocks.
    """

    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_out: np.ndarray
    ln_fuse: np.ndarray
    ln_self: np.ndarray
    ln_cross: np.ndarray

    def __post_init__(self):
        for name in ("w_query", "w_key", "w_value", "w_out",
                     "ln_fuse", "ln_self", "ln_cross"):
            arr = np.asarray(getattr(self, name), np.float64)
            if not np.isfinite(arr).all():
                raise NumericError(f"non-finite values in parameter {name!r}")
            object.__setattr__(self, name, arr)
        h, ch, ch2 = self.w_query.shape
        if ch != ch2:
            raise ShapeError(f"per-head projections must be square, got {self.w_query.shape}")
        for name in ("w_key", "w_value"):
            if getattr(self, name).shape != (h, ch, ch):
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != {(h, ch, ch)}")
        c = h * ch
        if self.w_out.shape != (c, c):
            raise ShapeError(f"w_out shape {self.w_out.shape}, expected {(c, c)}")
        for name in ("ln_fuse", "ln_self", "ln_cross"):
            if getattr(self, name).shape != (2, c):
                raise ShapeError(f"{name} shape {getattr(self, name).shape}, expected {(2, c)}")

    @property
    def heads(self) -> int:
        return self.w_query.shape[0]

    @property
    def head_dim(self) -> int:
        return self.w_query.shape[1]

    @property
    def channels(self) -> int:
        return self.heads * self.head_dim

    @staticmethod
    def random(channels: int, heads: int, seed: int = 0, scale: float = 0.5) -> "AttentionParams":
        if channels % heads:
            raise ParameterError(f"channels {channels} not divisible by heads {heads}")
        rng = np.random.default_rng(seed)
        ch = channels // heads
        def ln_init():
            ln = np.zeros((2, channels))
            ln[0] = 1.0
            return ln
        return AttentionParams(
            w_query=scale * rng.standard_normal((heads, ch, ch)),
            w_key=scale * rng.standard_normal((heads, ch, ch)),
            w_value=scale * rng.standard_normal((heads, ch, ch)),
            w_out=scale * rng.standard_normal((channels, channels)),
            ln_fuse=ln_init(), ln_self=ln_init(), ln_cross=ln_init(),
        )

    @staticmethod
    def zeros(channels: int, heads: int) -> "AttentionParams":
        """All projections zero (layer-norm stays scale 1, shift 0)."""
        return AttentionParams.random(channels, heads, seed=0, scale=0.0)


@dataclass(frozen=True)
class LayerOutput:
    tokens_out: np.ndarray
    attention_maps: dict[str, np.ndarray]  # block name -> (H, N, M or N)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x: np.ndarray, ln: np.ndarray) -> np.ndarray:
    """Per-row normalization over channels, variance floored at VAR_FLOOR."""
    y, _ = _ln_forward(x, ln)
    return y


def _ln_forward(x, ln):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    denom = np.sqrt(np.maximum(var, VAR_FLOOR))
    normed = centered / denom
    y = ln[0] * normed + ln[1]
    cache = (centered, var, denom, normed, ln)
    return y, cache


def _head_slices(x, heads):
    """Contiguous channel split: head h owns channels [h*C_h, (h+1)*C_h)."""
    ch = x.shape[1] // heads
    return [x[:, h * ch:(h + 1) * ch] for h in range(heads)]


def _check_emb_params(emb: Embeddings, params: AttentionParams) -> None:
    if emb.channels != params.channels:
        raise ShapeError(
            f"embedding channels {emb.channels} != parameter channels {params.channels}"
        )
    if emb.channels % params.heads:
        raise ShapeError(
            f"channels {emb.channels} not divisible by {params.heads} heads"
        )


def _block_forward(query_in, key_in, value_in, params: AttentionParams):
    """Shared multi-head attention core; returns output, maps, and a cache
    for the manual backward pass."""
    if value_in.shape[0] != key_in.shape[0]:
        raise ShapeError(
            f"value rows {value_in.shape[0]} != key rows {key_in.shape[0]}; "
            "value_source='input_embedding' needs one patch per token "
            "(use 'rgb_features' when counts differ)"
        )
    heads, ch = params.heads, params.head_dim
    n = query_in.shape[0]
    q_h = _head_slices(query_in, heads)
    k_h = _head_slices(key_in, heads)
    v_h = _head_slices(value_in, heads)
    scale = 1.0 / np.sqrt(ch)

    maps = np.empty((heads, n, key_in.shape[0]))
    concat = np.empty((n, heads * ch))
    per_head = []
    for h in range(heads):
        q = q_h[h] @ params.w_query[h]
        k = k_h[h] @ params.w_key[h]
        logits = (q @ k.T) * scale
        attn = softmax_rows(logits)
        vproj = v_h[h] @ params.w_value[h]
        concat[:, h * ch:(h + 1) * ch] = attn @ vproj
        maps[h] = attn
        per_head.append((q, k, attn, vproj))
    out = concat @ params.w_out
    cache = (query_in, key_in, value_in, per_head, concat, scale)
    return out, maps, cache


def cmfa_weights(emb: Embeddings, params: AttentionParams, head: int) -> np.ndarray:
    """Attention weight matrix of one fusion head (rows sum to 1).

    softmax_rows(((tokens_h + query_h) Wq_h) ((rgb_features_h + rgb_encoding_h) Wk_h)^T
                 / sqrt(C_h))
    """
    _check_emb_params(emb, params)
    if not 0 <= head < params.heads:
        raise ParameterError(f"head {head} out of range for {params.heads} heads")
    ch = params.head_dim
    sl = slice(head * ch, (head + 1) * ch)
    q = (emb.tokens + emb.query)[:, sl] @ params.w_query[head]
    k = (emb.rgb_features + emb.rgb_encoding)[:, sl] @ params.w_key[head]
    return softmax_rows((q @ k.T) / np.sqrt(ch))


def cmfa_forward(emb: Embeddings, params: AttentionParams,
                 value_source: str = "input_embedding") -> np.ndarray:
    """Fusion attention output for all heads: concat_h(A_h V_h Wv_h) W_out."""
    _check_emb_params(emb, params)
    _check_value_source(value_source)
    value_in = emb.tokens if value_source == "input_embedding" else emb.rgb_features
    out, _, _ = _block_forward(
        emb.tokens + emb.query, emb.rgb_features + emb.rgb_encoding, value_in, params
    )
    return out


def cmfa_block(t_prev: np.ndarray, emb: Embeddings, params: AttentionParams,
               value_source: str = "input_embedding") -> np.ndarray:
    """Residual fusion block: t_prev + CMFA(LN(t_prev))."""
    out, _ = _cmfa_block_cached(t_prev, emb, params, value_source)
    return out


def _cmfa_block_cached(t_prev, emb, params, value_source):
    _check_emb_params(emb, params)
    _check_value_source(value_source)
    t_prev = np.asarray(t_prev, np.float64)
    if t_prev.shape != emb.tokens.shape:
        raise ShapeError(f"t_prev shape {t_prev.shape} != tokens shape {emb.tokens.shape}")
    normed, ln_cache = _ln_forward(t_prev, params.ln_fuse)
    value_in = normed if value_source == "input_embedding" else emb.rgb_features
    attn_out, maps, blk_cache = _block_forward(
        normed + emb.query, emb.rgb_features + emb.rgb_encoding, value_in, params
    )
    return t_prev + attn_out, (ln_cache, blk_cache, maps)


def layer_forward(t_prev: np.ndarray, emb: Embeddings, params: AttentionParams,
                  value_source: str = "input_embedding") -> LayerOutput:
    """One full alignment layer: fusion, self-attention, cross-attention.

    t_out = t2 + MCA(LN(t2)) with t2 = t1 + MSA(LN(t1)) and
    t1 = t_prev + CMFA(LN(t_prev)).
    """
    out, caches = _layer_forward_cached(t_prev, emb, params, value_source)
    maps = {"cmfa": caches[0][2], "msa": caches[1][2], "mca": caches[2][2]}
    return LayerOutput(tokens_out=out, attention_maps=maps)


def _layer_forward_cached(t_prev, emb, params, value_source):
    t1, fuse_cache = _cmfa_block_cached(t_prev, emb, params, value_source)

    self_normed, self_ln_cache = _ln_forward(t1, params.ln_self)
    msa_out, msa_maps, msa_cache = _block_forward(
        self_normed, self_normed, self_normed, params
    )
    t2 = t1 + msa_out

    cross_normed, cross_ln_cache = _ln_forward(t2, params.ln_cross)
    cross_value = cross_normed if value_source == "input_embedding" else emb.event_features
    mca_out, mca_maps, mca_cache = _block_forward(
        cross_normed, emb.event_features + emb.event_encoding, cross_value, params
    )
    t_out = t2 + mca_out
    caches = (
        fuse_cache,
        (self_ln_cache, msa_cache, msa_maps),
        (cross_ln_cache, mca_cache, mca_maps),
    )
    return t_out, caches


def _check_value_source(value_source: str) -> None:
    if value_source not in VALUE_SOURCES:
        raise ParameterError(
            f"value_source must be one of {VALUE_SOURCES}, got {value_source!r}"
        )
