"""Self-supervised multi-event representation learning.

The loss family pairs the three representations of one event window
(frame-voxel, voxel-timesurface, timesurface-frame), pushes each pair
through encoder + projector + predictor branches, and sums the symmetric
negative-cosine losses:

    D(p, z) = -(p/|p|) . (z/|z|)
    L_pair  = D(p1, z2)/2 + D(p2, z1)/2
    L_total = sum over the three pairs

The projector outputs z are constants under differentiation
(stop-gradient); that contract is what keeps symmetric branches from
collapsing, and the toy trainer can disable it to demonstrate the
collapse.

Heads follow the published recipe: projector = two (linear, batch-norm,
rectifier) layers then a final affine map; predictor = two (linear,
batch-norm, rectifier) layers. Batch norm uses batch statistics in train
mode and running statistics in eval mode, with variance floored at 1e-5.

Everything is plain float64 numpy with hand-written backward passes; the
trainer is single-threaded and seed-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import augment_view
from .errors import NumericError, ParameterError, TrainingError
from .events import EventStream, SensorGeometry
from .representations import build_frame, build_timesurface, build_voxel, default_tau, scale_unit

BN_FLOOR = 1e-5
REPRESENTATION_PAIRS = (
    ("frame", "voxel"),
    ("voxel", "timesurface"),
    ("timesurface", "frame"),
)
DEFAULT_PROJECTOR_DIM = 32


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class BranchOutputs:
    """Projector outputs z1/z2 and predictor outputs p1/p2, (D,) or (B, D)."""

    z1: np.ndarray
    z2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray

    def __post_init__(self):
        for name in ("z1", "z2", "p1", "p2"):
            arr = np.asarray(getattr(self, name), np.float64)
            if not np.isfinite(arr).all():
                raise NumericError(f"non-finite values in branch output {name!r}")
            object.__setattr__(self, name, arr)


def _rows(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, np.float64)
    return v[None, :] if v.ndim == 1 else v


def _unit_rows(v: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise NumericError(f"zero-norm row in {name}; embedding is degenerate")
    return v / norms, norms


def cosine_distance(p: np.ndarray, z: np.ndarray) -> float:
    """Negative cosine similarity in [-1, 1]; batched inputs are averaged."""
    p2, z2 = _rows(p), _rows(z)
    if p2.shape != z2.shape:
        raise ParameterError(f"shape mismatch {p2.shape} vs {z2.shape}")
    phat, _ = _unit_rows(p2, "p")
    zhat, _ = _unit_rows(z2, "z")
    return float(-(phat * zhat).sum(axis=-1).mean())


def cosine_distance_grad(p: np.ndarray, z: np.ndarray) -> np.ndarray:
    """d cosine_distance / dp with z held constant; shape follows p.

    For batched inputs the distance is the batch mean, so rows carry 1/B.
    """
    p2, z2 = _rows(p), _rows(z)
    phat, pnorm = _unit_rows(p2, "p")
    zhat, _ = _unit_rows(z2, "z")
    cos = (phat * zhat).sum(axis=-1, keepdims=True)
    grad = -(zhat - cos * phat) / pnorm / p2.shape[0]
    return grad[0] if np.asarray(p).ndim == 1 else grad


def symmetric_pair_loss(b: BranchOutputs) -> float:
    """Stop-gradient symmetric loss: D(p1, z2)/2 + D(p2, z1)/2."""
    return 0.5 * cosine_distance(b.p1, b.z2) + 0.5 * cosine_distance(b.p2, b.z1)


def multi_rep_loss(pair_outputs) -> float:
    """Sum of the three pair losses; range [-3, 3]."""
    pair_outputs = list(pair_outputs)
    if len(pair_outputs) != 3:
        raise ParameterError(f"expected 3 pair outputs, got {len(pair_outputs)}")
    return float(sum(symmetric_pair_loss(b) for b in pair_outputs))


def multi_rep_loss_grads(pair_outputs) -> list[tuple[np.ndarray, np.ndarray]]:
    """Analytic (dL/dp1, dL/dp2) per pair, z branches held constant."""
    out = []
    for b in pair_outputs:
        out.append((
            0.5 * cosine_distance_grad(b.p1, b.z2),
            0.5 * cosine_distance_grad(b.p2, b.z1),
        ))
    return out


# ---------------------------------------------------------------------------
# layers (manual forward/backward)


class Dense:
    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = np.asarray(w, np.float64)
        self.b = np.asarray(b, np.float64)

    @staticmethod
    def random(fan_in: int, fan_out: int, rng: np.random.Generator) -> "Dense":
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        return Dense(w, np.zeros(fan_out))

    @staticmethod
    def identity(dim: int) -> "Dense":
        return Dense(np.eye(dim), np.zeros(dim))

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x, train):
        return x @ self.w + self.b, x

    def backward(self, dy, cache):
        x = cache
        return dy @ self.w.T, [x.T @ dy, dy.sum(axis=0)]


class BatchNorm:
    def __init__(self, dim: int, momentum: float = 0.1):
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum

    @property
    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, train):
        if train:
            if x.shape[0] < 2:
                raise ParameterError("batch norm needs a batch of >= 2 in train mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mean, var = self.running_mean, self.running_var
        denom = np.sqrt(np.maximum(var, BN_FLOOR))
        xhat = (x - mean) / denom
        return self.gamma * xhat + self.beta, (xhat, var, denom, train)

    def backward(self, dy, cache):
        xhat, var, denom, train = cache
        dgamma = (dy * xhat).sum(axis=0)
        dbeta = dy.sum(axis=0)
        dxhat = dy * self.gamma
        if train:
            dx = np.where(
                var > BN_FLOOR,
                (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)) / denom,
                (dxhat - dxhat.mean(axis=0)) / denom,
            )
        else:
            dx = dxhat / denom
        return dx, [dgamma, dbeta]


class Relu:
    params: list = []

    def forward(self, x, train):
        return np.maximum(x, 0.0), x > 0.0

    def backward(self, dy, cache):
        return dy * cache, []


class Stack:
    """A sequence of layers with functional caches for reverse-mode grads."""

    def __init__(self, layers):
        self.layers = list(layers)

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def forward(self, x, train):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, train)
            caches.append(cache)
        return x, caches

    def backward(self, dy, caches):
        grads = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy, g = layer.backward(dy, cache)
            grads = g + grads
        return dy, grads


# ---------------------------------------------------------------------------
# heads and encoder


class SsmerHeads:
    """Projector (linear-BN-ReLU x2 then affine) and predictor (linear-BN-ReLU x2)."""

    def __init__(self, projector: Stack, predictor: Stack):
        self.projector = projector
        self.predictor = predictor

    @staticmethod
    def random(in_dim: int, hidden_dim: int, out_dim: int,
               rng: np.random.Generator) -> "SsmerHeads":
        projector = Stack([
            Dense.random(in_dim, hidden_dim, rng), BatchNorm(hidden_dim), Relu(),
            Dense.random(hidden_dim, hidden_dim, rng), BatchNorm(hidden_dim), Relu(),
            Dense.random(hidden_dim, out_dim, rng),
        ])
        predictor = Stack([
            Dense.random(out_dim, out_dim, rng), BatchNorm(out_dim), Relu(),
            Dense.random(out_dim, out_dim, rng), BatchNorm(out_dim), Relu(),
        ])
        return SsmerHeads(projector, predictor)

    @staticmethod
    def identity(dim: int) -> "SsmerHeads":
        """Identity affine maps, zero shifts, unit running statistics."""
        projector = Stack([
            Dense.identity(dim), BatchNorm(dim), Relu(),
            Dense.identity(dim), BatchNorm(dim), Relu(),
            Dense.identity(dim),
        ])
        predictor = Stack([
            Dense.identity(dim), BatchNorm(dim), Relu(),
            Dense.identity(dim), BatchNorm(dim), Relu(),
        ])
        return SsmerHeads(projector, predictor)

    @property
    def params(self):
        return self.projector.params + self.predictor.params

    @property
    def out_dim(self) -> int:
        return self.projector.layers[-1].w.shape[1]


def heads_forward(x: np.ndarray, heads: SsmerHeads, mode: str = "train"):
    """(z, p) = (projector(x), predictor(z)).

    Train mode normalizes with batch statistics (and advances the running
    ones); eval mode reads the running statistics.
    """
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, np.float64)
    if x.ndim != 2:
        raise ParameterError(f"expected a (batch, dim) input, got shape {x.shape}")
    train = mode == "train"
    if train and x.shape[0] < 2:
        raise ParameterError("train mode needs a batch of >= 2 samples")
    z, _ = heads.projector.forward(x, train)
    p, _ = heads.predictor.forward(z, train)
    return z, p


class ToyEncoder:
    """Per-representation input adapter plus trunk perceptron.

    The trunk is shared across representation kinds by default; pass
    shared_trunk=False for per-representation trunks.
    """

    def __init__(self, input_dims: dict[str, int], hidden_dim: int, out_dim: int,
                 rng: np.random.Generator, shared_trunk: bool = True):
        self.kinds = sorted(input_dims)
        self.adapters = {k: Dense.random(input_dims[k], hidden_dim, rng) for k in self.kinds}
        if shared_trunk:
            trunk = Dense.random(hidden_dim, out_dim, rng)
            self.trunks = {k: trunk for k in self.kinds}
        else:
            self.trunks = {k: Dense.random(hidden_dim, out_dim, rng) for k in self.kinds}
        self.shared_trunk = shared_trunk
        self.relu = Relu()
        self.out_dim = out_dim

    @property
    def params(self):
        out = [p for k in self.kinds for p in self.adapters[k].params]
        if self.shared_trunk:
            out += self.trunks[self.kinds[0]].params
        else:
            out += [p for k in self.kinds for p in self.trunks[k].params]
        return out

    def forward(self, x, kind):
        h, c1 = self.adapters[kind].forward(x, True)
        a, c2 = self.relu.forward(h, True)
        y, c3 = self.trunks[kind].forward(a, True)
        return y, (kind, c1, c2, c3)

    def backward(self, dy, cache, accum):
        kind, c1, c2, c3 = cache
        da, g3 = self.trunks[kind].backward(dy, c3)
        _accumulate(accum, self.trunks[kind].params, g3)
        dh, _ = self.relu.backward(da, c2)
        dx, g1 = self.adapters[kind].backward(dh, c1)
        _accumulate(accum, self.adapters[kind].params, g1)
        return dx


def _accumulate(accum: dict, params, grads) -> None:
    for p, g in zip(params, grads):
        key = id(p)
        if key in accum:
            accum[key] += g
        else:
            accum[key] = g.copy()


# ---------------------------------------------------------------------------
# toy data and trainer


@dataclass(frozen=True)
class RepresentationPairSet:
    """The three per-window representations, ready for pair sampling.

    grids maps kind -> (n_samples, C_kind, H, W); all kinds of one sample
    derive from the same event window.
    """

    grids: dict[str, np.ndarray]

    def __post_init__(self):
        sizes = {k: v.shape[0] for k, v in self.grids.items()}
        if set(self.grids) != {"frame", "voxel", "timesurface"}:
            raise ParameterError(f"need frame/voxel/timesurface grids, got {sorted(self.grids)}")
        if len(set(sizes.values())) != 1:
            raise ParameterError(f"per-kind sample counts differ: {sizes}")

    def __len__(self) -> int:
        return self.grids["frame"].shape[0]

    def input_dims(self) -> dict[str, int]:
        return {k: int(np.prod(v.shape[1:])) for k, v in self.grids.items()}

    def views(self, kind: str, ids: np.ndarray, rng: np.random.Generator,
              augment: bool = True) -> np.ndarray:
        """Flattened (len(ids), dim) views, augmented per sample when asked."""
        grids = self.grids[kind][ids]
        if augment:
            grids = np.stack([augment_view(g, rng) for g in grids])
        return grids.reshape(len(ids), -1)


def synthetic_windows(count: int, seed: int = 0, width: int = 16, height: int = 16,
                      duration_us: int = 40_000,
                      events_range: tuple[int, int] = (150, 400)) -> list[EventStream]:
    """Random event windows with a per-window spatial blob, for toy training."""
    rng = np.random.default_rng(seed)
    geometry = SensorGeometry(width=width, height=height)
    out = []
    for _ in range(count):
        n = int(rng.integers(*events_range))
        cx, cy = rng.uniform(2, width - 2), rng.uniform(2, height - 2)
        sigma = rng.uniform(1.0, 4.0)
        x = np.clip(np.round(rng.normal(cx, sigma, n)), 0, width - 1).astype(np.int32)
        y = np.clip(np.round(rng.normal(cy, sigma, n)), 0, height - 1).astype(np.int32)
        t = np.sort(rng.integers(0, duration_us, n)).astype(np.int64)
        pos_frac = rng.uniform(0.3, 0.7)
        p = np.where(rng.random(n) < pos_frac, 1, -1).astype(np.int8)
        out.append(EventStream(geometry, t, x, y, p))
    return out


def build_pair_set(windows, voxel_bins: int = 5) -> RepresentationPairSet:
    """Frame/voxel/timesurface grids (unit-scaled) for each window."""
    frames, voxels, surfaces = [], [], []
    for w in windows:
        frames.append(scale_unit(build_frame(w).grid))
        voxels.append(scale_unit(build_voxel(w, voxel_bins).grid))
        dt = max(int(w.t[-1] - w.t[0]), 1) if len(w) else 1
        t_ref = int(w.t[-1]) if len(w) else 0
        surfaces.append(build_timesurface(w, t_ref, default_tau(dt)).grid)
    return RepresentationPairSet(grids={
        "frame": np.stack(frames),
        "voxel": np.stack(voxels),
        "timesurface": np.stack(surfaces),
    })


@dataclass(frozen=True)
class TrainResult:
    losses: np.ndarray        # (epochs,) mean multi-representation loss
    pair_losses: np.ndarray   # (epochs, 3)
    spreads: np.ndarray       # (epochs,) mean per-dim std of normalized z
    stop_gradient: bool


def _branch(encoder, heads, x, kind):
    e, enc_cache = encoder.forward(x, kind)
    z, proj_caches = heads.projector.forward(e, True)
    p, pred_caches = heads.predictor.forward(z, True)
    return z, p, (enc_cache, proj_caches, pred_caches)


def _branch_backward(encoder, heads, dz_direct, dp, caches, accum):
    enc_cache, proj_caches, pred_caches = caches
    dz, g_pred = heads.predictor.backward(dp, pred_caches)
    _accumulate(accum, heads.predictor.params, g_pred)
    de, g_proj = heads.projector.backward(dz + dz_direct, proj_caches)
    _accumulate(accum, heads.projector.params, g_proj)
    encoder.backward(de, enc_cache, accum)


def _embedding_spread(pair_set, encoder, heads):
    zs = []
    for kind in sorted(pair_set.grids):
        flat = pair_set.grids[kind].reshape(len(pair_set), -1)
        e, _ = encoder.forward(flat, kind)
        z, _ = heads.projector.forward(e, False)
        zs.append(z)
    z = np.concatenate(zs, axis=0)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return float((z / norms).std(axis=0).mean())


def train_toy(pair_set: RepresentationPairSet, *, epochs: int = 50, lr: float = 0.05,
              momentum: float = 0.9, batch_size: int = 16, seed: int = 0,
              stop_gradient: bool = True, augment: bool = True, shuffle: bool = True,
              hidden_dim: int = 64, encoder_dim: int = 64,
              projector_dim: int = DEFAULT_PROJECTOR_DIM,
              shared_trunk: bool = True) -> TrainResult:
    """Momentum-SGD on the multi-representation loss over a toy pair set.

    Returns the per-epoch loss trajectory and the embedding-spread collapse
    monitor (mean per-dimension std of L2-normalized projector outputs over
    the whole set, eval mode). Runs are bit-identical for identical
    arguments.
    """
    if len(pair_set) < 2:
        raise ParameterError("need at least 2 samples to train")
    rng = np.random.default_rng(seed)
    encoder = ToyEncoder(pair_set.input_dims(), hidden_dim, encoder_dim, rng,
                         shared_trunk=shared_trunk)
    heads = SsmerHeads.random(encoder_dim, hidden_dim, projector_dim, rng)
    params = encoder.params + heads.params
    velocity = [np.zeros_like(p) for p in params]

    n = len(pair_set)
    losses = np.zeros(epochs)
    pair_losses = np.zeros((epochs, 3))
    spreads = np.zeros(epochs)

    for epoch in range(epochs):
        ids = rng.permutation(n) if shuffle else np.arange(n)
        epoch_loss, epoch_pairs, n_batches = 0.0, np.zeros(3), 0
        for start in range(0, n, batch_size):
            batch = ids[start:start + batch_size]
            if len(batch) < 2:
                continue  # batch statistics undefined for singletons
            accum: dict[int, np.ndarray] = {}
            batch_loss = 0.0
            for i, (kind_a, kind_b) in enumerate(REPRESENTATION_PAIRS):
                x1 = pair_set.views(kind_a, batch, rng, augment)
                x2 = pair_set.views(kind_b, batch, rng, augment)
                z1, p1, caches1 = _branch(encoder, heads, x1, kind_a)
                z2, p2, caches2 = _branch(encoder, heads, x2, kind_b)
                pair = BranchOutputs(z1=z1, z2=z2, p1=p1, p2=p2)
                loss_i = symmetric_pair_loss(pair)
                dp1 = 0.5 * cosine_distance_grad(p1, z2)
                dp2 = 0.5 * cosine_distance_grad(p2, z1)
                if stop_gradient:
                    dz1 = np.zeros_like(z1)
                    dz2 = np.zeros_like(z2)
                else:
                    dz2 = 0.5 * cosine_distance_grad(z2, p1)
                    dz1 = 0.5 * cosine_distance_grad(z1, p2)
                _branch_backward(encoder, heads, dz1, dp1, caches1, accum)
                _branch_backward(encoder, heads, dz2, dp2, caches2, accum)
                batch_loss += loss_i
                epoch_pairs[i] += loss_i
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            for p, v in zip(params, velocity):
                g = accum.get(id(p))
                if g is None:
                    continue
                v *= momentum
                v += g
                p -= lr * v
            epoch_loss += batch_loss
            n_batches += 1
        if n_batches == 0:
            raise ParameterError("no usable batches; increase dataset or batch size")
        losses[epoch] = epoch_loss / n_batches
        pair_losses[epoch] = epoch_pairs / n_batches
        spreads[epoch] = _embedding_spread(pair_set, encoder, heads)
    return TrainResult(losses=losses, pair_losses=pair_losses, spreads=spreads,
                       stop_gradient=stop_gradient)
