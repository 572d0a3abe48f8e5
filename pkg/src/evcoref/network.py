"""Hourglass representation learner.

Four affine+ReLU layers (wide, narrow embedding layer, wide, softmax) trained
against mean categorical cross-entropy over C+1 chain classes plus two
cosine-distance regularizers: an attractive term averaged over same-chain
pairs and a repulsive term driving different-chain pairs apart. Gradients are
derived by hand and verified against central finite differences; no autodiff
framework is involved.

Embeddings are always the post-ReLU activations of the narrow layer, taken
before dropout, both for the pairwise loss terms and at inference.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ModelMismatchError, ParseError

PROB_CLAMP = 1e-12
CHECKPOINT_MAGIC = b"EVCOREF.CKPT.1\n"

_PARAM_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


@dataclass
class NetParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        """(input, hidden1, embedding, hidden3, classes)."""
        return (
            self.w1.shape[0],
            self.w1.shape[1],
            self.w2.shape[1],
            self.w3.shape[1],
            self.w4.shape[1],
        )

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in _PARAM_FIELDS]

    def copy(self) -> "NetParams":
        return NetParams(*[a.copy() for a in self.arrays()])


def init_params(
    rng: np.random.Generator,
    n_inputs: int,
    n_classes: int,
    hidden1: int = 1000,
    embed: int = 250,
    hidden3: int = 1000,
) -> NetParams:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""

    def layer(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        return w, np.zeros(fan_out)

    w1, b1 = layer(n_inputs, hidden1)
    w2, b2 = layer(hidden1, embed)
    w3, b3 = layer(embed, hidden3)
    w4, b4 = layer(hidden3, n_classes)
    return NetParams(w1, b1, w2, b2, w3, b3, w4, b4)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


@dataclass
class ForwardCache:
    """Everything backward() needs, plus the public (embeddings, probs)."""

    inputs: np.ndarray
    z1: np.ndarray
    d1: np.ndarray
    z2: np.ndarray
    embeddings: np.ndarray  # relu(z2), pre-dropout
    d2: np.ndarray
    z3: np.ndarray
    d3: np.ndarray
    probs: np.ndarray
    masks: tuple | None
    dropout: float


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(
    params: NetParams,
    inputs: np.ndarray,
    mode: str = "infer",
    masks: tuple | None = None,
    dropout: float = 0.25,
) -> ForwardCache:
    """Run the network. In train mode the supplied binary masks are applied
    after each hidden layer with inverted 1/(1-p) scaling; infer mode uses no
    dropout and is fully deterministic."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != params.w1.shape[0]:
        raise ModelMismatchError(
            f"input width {inputs.shape[-1]} != network input {params.w1.shape[0]}"
        )
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    train = mode == "train"
    if train:
        if masks is None or len(masks) != 3:
            raise ValueError("train mode requires three dropout masks")
        scale = 1.0 / (1.0 - dropout)
    relu = lambda z: np.maximum(z, 0.0)

    z1 = inputs @ params.w1 + params.b1
    a1 = relu(z1)
    d1 = a1 * masks[0] * scale if train else a1

    z2 = d1 @ params.w2 + params.b2
    embeddings = relu(z2)
    d2 = embeddings * masks[1] * scale if train else embeddings

    z3 = d2 @ params.w3 + params.b3
    a3 = relu(z3)
    d3 = a3 * masks[2] * scale if train else a3

    z4 = d3 @ params.w4 + params.b4
    probs = softmax(z4)
    return ForwardCache(
        inputs=inputs,
        z1=z1,
        d1=d1,
        z2=z2,
        embeddings=embeddings,
        d2=d2,
        z3=z3,
        d3=d3,
        probs=probs,
        masks=masks if train else None,
        dropout=dropout,
    )


def embed(params: NetParams, inputs: np.ndarray) -> np.ndarray:
    return forward(params, inputs, mode="infer").embeddings


def make_dropout_masks(
    rng: np.random.Generator, n: int, dims: tuple[int, int, int, int, int], dropout: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    keep = 1.0 - dropout
    return tuple(
        (rng.random((n, width)) < keep).astype(np.float64) for width in dims[1:4]
    )


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    cce: float
    attract: float
    repulse: float
    lambda1: float
    lambda2: float


def loss_cce(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean categorical cross-entropy, probabilities clamped at 1e-12."""
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROB_CLAMP))))


def cosine_distance(e1: np.ndarray, e2: np.ndarray) -> float:
    """(1 - cos)/2 in [0, 1]; a zero-norm operand makes the cosine 0 and the
    distance the neutral 1/2."""
    n1 = np.linalg.norm(e1)
    n2 = np.linalg.norm(e2)
    if n1 == 0.0 or n2 == 0.0:
        return 0.5
    cos = float(np.dot(e1, e2) / (n1 * n2))
    return 0.5 * (1.0 - max(-1.0, min(1.0, cos)))


def _unit_rows(embeddings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(embeddings, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return embeddings / safe[:, None], norms


def _pair_masks(chain_codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric same-chain / different-chain indicator matrices, zero diagonal."""
    codes = np.asarray(chain_codes)
    same = codes[:, None] == codes[None, :]
    np.fill_diagonal(same, False)
    diff = ~(codes[:, None] == codes[None, :])
    return same, diff


def _pairwise_distance_matrix(embeddings: np.ndarray) -> np.ndarray:
    units, _ = _unit_rows(embeddings)
    cos = units @ units.T
    return 0.5 * (1.0 - cos)


def loss_attract(embeddings: np.ndarray, chain_codes: np.ndarray) -> float:
    """Mean cosine distance over unordered same-chain pairs."""
    same, _ = _pair_masks(chain_codes)
    n_pairs = int(same.sum()) // 2
    if n_pairs == 0:
        warnings.warn("no same-chain pair in batch; attractive term is 0")
        return 0.0
    dist = _pairwise_distance_matrix(embeddings)
    return float(dist[same].sum() / 2.0 / n_pairs)


def loss_repulse(embeddings: np.ndarray, chain_codes: np.ndarray) -> float:
    """One minus the mean cosine distance over unordered cross-chain pairs."""
    _, diff = _pair_masks(chain_codes)
    n_pairs = int(diff.sum()) // 2
    if n_pairs == 0:
        warnings.warn("no cross-chain pair in batch; repulsive term is 0")
        return 0.0
    dist = _pairwise_distance_matrix(embeddings)
    return float(1.0 - dist[diff].sum() / 2.0 / n_pairs)


def loss_total(
    probs: np.ndarray,
    embeddings: np.ndarray,
    labels: np.ndarray,
    chain_codes: np.ndarray,
    lambda1: float,
    lambda2: float,
    use_cce: bool = True,
) -> LossBreakdown:
    """Combined objective. Both pairwise terms come from one embedding-matrix
    product; use_cce=False drops the classification term (the CORE-only
    variant), reported as cce=0 so total = cce + l1*attract + l2*repulse
    always holds."""
    cce = loss_cce(probs, labels) if use_cce else 0.0
    attract = loss_attract(embeddings, chain_codes) if lambda1 != 0.0 else 0.0
    repulse = loss_repulse(embeddings, chain_codes) if lambda2 != 0.0 else 0.0
    total = cce + lambda1 * attract + lambda2 * repulse
    return LossBreakdown(
        total=float(total),
        cce=cce,
        attract=attract,
        repulse=repulse,
        lambda1=lambda1,
        lambda2=lambda2,
    )


def core_embedding_grad(
    embeddings: np.ndarray,
    chain_codes: np.ndarray,
    lambda1: float,
    lambda2: float,
) -> np.ndarray:
    """Gradient of l1*attract + l2*repulse with respect to the embeddings.

    With unit rows u_i and c_ij = u_i . u_j, each pair's distance has
    d(d_ij)/d(e_i) = -(u_j - c_ij u_i) / (2 |e_i|); pairs are weighted
    +l1/|S| (same chain) and -l2/|D| (different chain, from the leading
    minus in the repulsive term). Zero-norm rows have constant distance to
    everything, so they receive and contribute no gradient.
    """
    units, norms = _unit_rows(embeddings)
    same, diff = _pair_masks(chain_codes)
    n_same = int(same.sum()) // 2
    n_diff = int(diff.sum()) // 2
    weights = np.zeros_like(same, dtype=np.float64)
    if lambda1 != 0.0 and n_same > 0:
        weights[same] += lambda1 / n_same
    if lambda2 != 0.0 and n_diff > 0:
        weights[diff] -= lambda2 / n_diff
    cos = units @ units.T
    projected = weights @ units
    radial = (weights * cos).sum(axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    grad = -(projected - radial[:, None] * units) / (2.0 * safe[:, None])
    grad[norms == 0.0] = 0.0
    return grad


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def backward(
    params: NetParams,
    cache: ForwardCache,
    labels: np.ndarray,
    chain_codes: np.ndarray,
    lambda1: float,
    lambda2: float,
    use_cce: bool = True,
) -> NetParams:
    """Exact gradients of loss_total for every parameter, returned in a
    NetParams-shaped container. The pairwise terms feed the embedding layer
    directly (pre-dropout); the cross-entropy path routes through the same
    dropout masks the forward pass used."""
    n = cache.inputs.shape[0]
    train = cache.masks is not None
    scale = 1.0 / (1.0 - cache.dropout) if train else 1.0

    if use_cce:
        d_z4 = cache.probs.copy()
        d_z4[np.arange(n), labels] -= 1.0
        d_z4 /= n
    else:
        d_z4 = np.zeros_like(cache.probs)

    g_w4 = cache.d3.T @ d_z4
    g_b4 = d_z4.sum(axis=0)

    d_d3 = d_z4 @ params.w4.T
    d_a3 = d_d3 * cache.masks[2] * scale if train else d_d3
    d_z3 = d_a3 * (cache.z3 > 0.0)

    g_w3 = cache.d2.T @ d_z3
    g_b3 = d_z3.sum(axis=0)

    d_d2 = d_z3 @ params.w3.T
    d_emb = d_d2 * cache.masks[1] * scale if train else d_d2
    if lambda1 != 0.0 or lambda2 != 0.0:
        d_emb = d_emb + core_embedding_grad(
            cache.embeddings, chain_codes, lambda1, lambda2
        )
    d_z2 = d_emb * (cache.z2 > 0.0)

    g_w2 = cache.d1.T @ d_z2
    g_b2 = d_z2.sum(axis=0)

    d_d1 = d_z2 @ params.w2.T
    d_a1 = d_d1 * cache.masks[0] * scale if train else d_d1
    d_z1 = d_a1 * (cache.z1 > 0.0)

    g_w1 = cache.inputs.T @ d_z1
    g_b1 = d_z1.sum(axis=0)

    return NetParams(g_w1, g_b1, g_w2, g_b2, g_w3, g_b3, g_w4, g_b4)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params: NetParams) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in params.arrays()],
            v=[np.zeros_like(a) for a in params.arrays()],
            t=0,
        )


def adam_step(
    params: NetParams,
    state: AdamState,
    grads: NetParams,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    t = state.t
    for i, (param, grad) in enumerate(zip(params.arrays(), grads.arrays())):
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad * grad
        m_hat = state.m[i] / (1.0 - beta1**t)
        v_hat = state.v[i] / (1.0 - beta2**t)
        param -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Checkpoints: versioned binary with Adam state, epoch, and rng seed
# ---------------------------------------------------------------------------


def save_checkpoint(
    path,
    params: NetParams,
    state: AdamState,
    epoch: int,
    seed: int,
    config_hash: int = 0,
) -> None:
    dims = params.dims
    with open(path, "wb") as out:
        out.write(CHECKPOINT_MAGIC)
        out.write(struct.pack("<5I", *dims))
        out.write(struct.pack("<IQQ", epoch, seed, config_hash))
        out.write(struct.pack("<Q", state.t))
        for arr in params.arrays() + state.m + state.v:
            out.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[NetParams, AdamState, dict]:
    with open(path, "rb") as handle:
        magic = handle.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ParseError(path, 1, "not a checkpoint file (bad magic)")
        dims = struct.unpack("<5I", handle.read(20))
        epoch, seed, config_hash = struct.unpack("<IQQ", handle.read(20))
        (t,) = struct.unpack("<Q", handle.read(8))
        d, h1, he, h3, k = dims
        shapes = [
            (d, h1), (h1,), (h1, he), (he,), (he, h3), (h3,), (h3, k), (k,),
        ]

        def read_arrays():
            out = []
            for shape in shapes:
                count = int(np.prod(shape))
                buf = handle.read(count * 8)
                if len(buf) != count * 8:
                    raise ParseError(path, 1, "truncated checkpoint")
                out.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
            return out

        params = NetParams(*read_arrays())
        state = AdamState(m=read_arrays(), v=read_arrays(), t=t)
    meta = {"epoch": epoch, "seed": seed, "config_hash": config_hash}
    return params, state, meta
