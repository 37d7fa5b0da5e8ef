"""Analytic backward passes for the attention stack, verified against
central finite differences.

The scalar objective is sum(forward_output * G) for a seeded random
cotangent G, so every output entry contributes. ``grad_check`` returns the
maximum relative error max |analytic - fd| / max(1, |analytic|, |fd|) over
every checked array entry; finite differences use step 1e-4 in double
precision.
"""

from __future__ import annotations

import numpy as np

from .attention import (
    VAR_FLOOR,
    AttentionParams,
    Embeddings,
    _block_forward,
    _cmfa_block_cached,
    _layer_forward_cached,
)
from .errors import NumericError, ParameterError

GRAD_CHECK_OPS = ("linear", "cmfa_forward", "cmfa_block", "layer_forward")


def finite_difference_gradient(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar f with respect to array x.

    x is perturbed in place and restored, so f may close over it.
    """
    grad = np.zeros_like(x, np.float64)
    flat, gflat = x.ravel(), grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


# ---------------------------------------------------------------------------
# backward passes


def softmax_vjp(attn: np.ndarray, d_attn: np.ndarray) -> np.ndarray:
    """Pull d_attn back through a row-wise softmax with output attn."""
    inner = (d_attn * attn).sum(axis=-1, keepdims=True)
    return attn * (d_attn - inner)


def _ln_backward(dy, cache):
    centered, var, denom, normed, ln = cache
    d_ln = np.stack([(dy * normed).sum(axis=0), dy.sum(axis=0)])
    d_normed = dy * ln[0]
    mean_dn = d_normed.mean(axis=-1, keepdims=True)
    mean_dn_x = (d_normed * normed).mean(axis=-1, keepdims=True)
    # rows at the variance floor have a constant denominator
    dx = np.where(
        var > VAR_FLOOR,
        (d_normed - mean_dn - normed * mean_dn_x) / denom,
        (d_normed - mean_dn) / denom,
    )
    return dx, d_ln


def _block_backward(d_out, cache, params: AttentionParams):
    query_in, key_in, value_in, per_head, concat, scale = cache
    heads, ch = params.heads, params.head_dim
    grads = {
        "w_query": np.zeros_like(params.w_query),
        "w_key": np.zeros_like(params.w_key),
        "w_value": np.zeros_like(params.w_value),
        "w_out": concat.T @ d_out,
    }
    d_concat = d_out @ params.w_out.T
    d_query_in = np.zeros_like(query_in)
    d_key_in = np.zeros_like(key_in)
    d_value_in = np.zeros_like(value_in)
    for h in range(heads):
        sl = slice(h * ch, (h + 1) * ch)
        q, k, attn, vproj = per_head[h]
        d_oh = d_concat[:, sl]
        d_attn = d_oh @ vproj.T
        d_vproj = attn.T @ d_oh
        grads["w_value"][h] = value_in[:, sl].T @ d_vproj
        d_value_in[:, sl] += d_vproj @ params.w_value[h].T
        d_logits = softmax_vjp(attn, d_attn) * scale
        d_q = d_logits @ k
        d_k = d_logits.T @ q
        grads["w_query"][h] = query_in[:, sl].T @ d_q
        d_query_in[:, sl] += d_q @ params.w_query[h].T
        grads["w_key"][h] = key_in[:, sl].T @ d_k
        d_key_in[:, sl] += d_k @ params.w_key[h].T
    return d_query_in, d_key_in, d_value_in, grads


def _zero_emb_grads(emb: Embeddings):
    return {
        "query": np.zeros_like(emb.query),
        "rgb_features": np.zeros_like(emb.rgb_features),
        "rgb_encoding": np.zeros_like(emb.rgb_encoding),
        "event_features": np.zeros_like(emb.event_features),
        "event_encoding": np.zeros_like(emb.event_encoding),
    }


def _cmfa_block_backward(d_t1, cache, emb, params, value_source):
    ln_cache, blk_cache, _ = cache
    d_qin, d_kin, d_vin, grads = _block_backward(d_t1, blk_cache, params)
    demb = _zero_emb_grads(emb)
    demb["query"] += d_qin
    demb["rgb_features"] += d_kin
    demb["rgb_encoding"] += d_kin
    d_normed = d_qin.copy()
    if value_source == "input_embedding":
        d_normed += d_vin
    else:
        demb["rgb_features"] += d_vin
    d_prev_ln, d_ln = _ln_backward(d_normed, ln_cache)
    grads["ln_fuse"] = d_ln
    return d_t1 + d_prev_ln, demb, grads


def _layer_backward(d_out, caches, emb, params, value_source):
    fuse_cache, (self_ln_cache, msa_cache, _), (cross_ln_cache, mca_cache, _) = caches

    # t_out = t2 + mca_out
    d_qin, d_kin, d_vin, g_mca = _block_backward(d_out, mca_cache, params)
    demb = _zero_emb_grads(emb)
    demb["event_features"] += d_kin
    demb["event_encoding"] += d_kin
    d_cross_normed = d_qin.copy()
    if value_source == "input_embedding":
        d_cross_normed += d_vin
    else:
        demb["event_features"] += d_vin
    dx, d_ln_cross = _ln_backward(d_cross_normed, cross_ln_cache)
    d_t2 = d_out + dx

    # t2 = t1 + msa_out
    d_qin, d_kin, d_vin, g_msa = _block_backward(d_t2, msa_cache, params)
    dx, d_ln_self = _ln_backward(d_qin + d_kin + d_vin, self_ln_cache)
    d_t1 = d_t2 + dx

    d_t_prev, demb_fuse, g_fuse = _cmfa_block_backward(
        d_t1, fuse_cache, emb, params, value_source
    )
    grads = {
        name: g_fuse[name] + g_msa[name] + g_mca[name]
        for name in ("w_query", "w_key", "w_value", "w_out")
    }
    grads["ln_fuse"] = g_fuse["ln_fuse"]
    grads["ln_self"] = d_ln_self
    grads["ln_cross"] = d_ln_cross
    for name in demb:
        demb[name] += demb_fuse[name]
    return d_t_prev, demb, grads


# ---------------------------------------------------------------------------
# the verification harness


def grad_check(op: str, *, n_tokens: int = 3, n_patches: int = 4, channels: int = 8,
               heads: int = 2, seed: int = 0, step: float = 1e-4,
               value_source: str = "rgb_features") -> float:
    """Compare analytic gradients against central finite differences.

    Checks every parameter array of the requested forward (plus its token
    input and the embedding fields it consumes) and returns the maximum
    relative error. The default value source is the cross-feature one so
    the check is defined for any token/patch counts; pass
    ``value_source='input_embedding'`` with n_tokens == n_patches to cover
    the token-valued path.
    """
    if op not in GRAD_CHECK_OPS:
        raise ParameterError(f"op must be one of {GRAD_CHECK_OPS}, got {op!r}")
    rng = np.random.default_rng(seed)
    params = AttentionParams.random(channels, heads, seed=rng.integers(2**31))
    emb = Embeddings.random(n_tokens, n_patches, channels, seed=rng.integers(2**31))
    t_prev = rng.standard_normal((n_tokens, channels))
    cotangent = rng.standard_normal((n_tokens, channels))

    if op == "linear":
        def forward():
            return float(((t_prev @ params.w_out) * cotangent).sum())

        analytic = {"w_out": t_prev.T @ cotangent, "t_prev": cotangent @ params.w_out.T}
        arrays = {"w_out": params.w_out, "t_prev": t_prev}
        return _compare(forward, arrays, analytic, step)

    if op == "cmfa_forward":
        def run():
            value_in = emb.tokens if value_source == "input_embedding" else emb.rgb_features
            return _block_forward(
                emb.tokens + emb.query, emb.rgb_features + emb.rgb_encoding,
                value_in, params,
            )

        def forward():
            out, _, _ = run()
            return float((out * cotangent).sum())

        _, _, cache = run()
        d_qin, d_kin, d_vin, grads = _block_backward(cotangent, cache, params)
        analytic = dict(grads)
        analytic["tokens"] = d_qin.copy()
        analytic["query"] = d_qin
        analytic["rgb_features"] = d_kin.copy()
        analytic["rgb_encoding"] = d_kin
        if value_source == "input_embedding":
            analytic["tokens"] = analytic["tokens"] + d_vin
        else:
            analytic["rgb_features"] = analytic["rgb_features"] + d_vin
        arrays = {
            "w_query": params.w_query, "w_key": params.w_key,
            "w_value": params.w_value, "w_out": params.w_out,
            "tokens": emb.tokens, "query": emb.query,
            "rgb_features": emb.rgb_features, "rgb_encoding": emb.rgb_encoding,
        }
        return _compare(forward, arrays, analytic, step)

    if op == "cmfa_block":
        def forward():
            out, _ = _cmfa_block_cached(t_prev, emb, params, value_source)
            return float((out * cotangent).sum())

        _, cache = _cmfa_block_cached(t_prev, emb, params, value_source)
        d_t_prev, demb, grads = _cmfa_block_backward(
            cotangent, cache, emb, params, value_source
        )
        analytic = dict(grads)
        analytic["t_prev"] = d_t_prev
        analytic["query"] = demb["query"]
        analytic["rgb_features"] = demb["rgb_features"]
        analytic["rgb_encoding"] = demb["rgb_encoding"]
        arrays = {
            "w_query": params.w_query, "w_key": params.w_key,
            "w_value": params.w_value, "w_out": params.w_out,
            "ln_fuse": params.ln_fuse, "t_prev": t_prev,
            "query": emb.query, "rgb_features": emb.rgb_features,
            "rgb_encoding": emb.rgb_encoding,
        }
        return _compare(forward, arrays, analytic, step)

    # layer_forward
    def forward():
        out, _ = _layer_forward_cached(t_prev, emb, params, value_source)
        return float((out * cotangent).sum())

    _, caches = _layer_forward_cached(t_prev, emb, params, value_source)
    d_t_prev, demb, grads = _layer_backward(cotangent, caches, emb, params, value_source)
    analytic = dict(grads)
    analytic["t_prev"] = d_t_prev
    analytic.update(demb)
    arrays = {
        "w_query": params.w_query, "w_key": params.w_key,
        "w_value": params.w_value, "w_out": params.w_out,
        "ln_fuse": params.ln_fuse, "ln_self": params.ln_self,
        "ln_cross": params.ln_cross, "t_prev": t_prev,
        "query": emb.query, "rgb_features": emb.rgb_features,
        "rgb_encoding": emb.rgb_encoding, "event_features": emb.event_features,
        "event_encoding": emb.event_encoding,
    }
    return _compare(forward, arrays, analytic, step)


def _compare(forward, arrays, analytic, step) -> float:
    worst = 0.0
    for name in sorted(arrays):
        grad_a = np.asarray(analytic[name], np.float64)
        if not np.isfinite(grad_a).all():
            raise NumericError(f"non-finite analytic gradient for {name!r}")
        grad_fd = finite_difference_gradient(forward, arrays[name], step)
        worst = max(worst, max_relative_error(grad_a, grad_fd))
    return worst
