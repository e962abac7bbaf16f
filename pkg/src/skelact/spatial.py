"""Per-frame spatial feature extraction for one stream.

Pipeline per frame: affine embedding of each joint (or line) vector, a
fixed number of relational message-passing iterations over the fully
connected node graph, then a learnable per-node mask followed by an affine
reduction to the frame feature vector.

Message passing keeps one state vector per node. Every iteration computes a
message for every ordered node pair (i, j), j != i, with a 3-layer MLP on
the concatenated pair states, sums the incoming messages per node, and
updates the node state with a gated recurrent unit whose input is the
node's embedding concatenated with its message sum. The initial state of a
node is its embedding. Parameters are shared across nodes, iterations, and
frames.

All functions accept node matrices whose rows may span several frames;
frames never exchange information because pair indices stay inside each
frame's block of rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ConfigError, sequence_lines

__all__ = [
    "EmbeddingParams",
    "MessageMlpParams",
    "NodeGruParams",
    "AttentionParams",
    "init_embedding",
    "init_message_mlp",
    "init_node_gru",
    "init_attention",
    "embed_frame",
    "rrn_forward",
    "attend_reduce",
    "spatial_forward",
]


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """Uniform values in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class EmbeddingParams:
    """Shared affine map from raw joint/line vectors to node embeddings."""

    weight: Tensor  # (input_dim, embed_dim)
    bias: Tensor  # (embed_dim,)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


@dataclass
class MessageMlpParams:
    """3-layer message MLP, 2M -> M -> M -> M, tanh after layers 1 and 2."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2,
            f"{prefix}.w3": self.w3, f"{prefix}.b3": self.b3,
        }


@dataclass
class NodeGruParams:
    """Gated recurrent node update.

    Input is the concatenation of the node embedding and its message sum
    (width 2M); the state is the node vector (width M). Reset and update
    gates are fused column-wise in ``gate_*``; the candidate uses the
    reset-scaled previous state:

        r, z   = sigmoid(x Wg + h Ug + bg)         (split in halves)
        h_cand = tanh(x Wc + (r * h) Uc + bc)
        h_next = z * h + (1 - z) * h_cand
    """

    gate_wx: Tensor  # (2M, 2M)
    gate_wh: Tensor  # (M, 2M)
    gate_b: Tensor  # (2M,)
    cand_wx: Tensor  # (2M, M)
    cand_wh: Tensor  # (M, M)
    cand_b: Tensor  # (M,)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.gate_wx": self.gate_wx,
            f"{prefix}.gate_wh": self.gate_wh,
            f"{prefix}.gate_b": self.gate_b,
            f"{prefix}.cand_wx": self.cand_wx,
            f"{prefix}.cand_wh": self.cand_wh,
            f"{prefix}.cand_b": self.cand_b,
        }


@dataclass
class AttentionParams:
    """Learnable per-node mask plus affine reduction of the masked nodes.

    The mask has one scalar gate per node index, shared across frames and
    trained with everything else; it starts at all ones so an untrained
    model matches the unmasked variant exactly.
    """

    mask: Tensor  # (num_joints,)
    reduce_weight: Tensor  # (num_joints * embed_dim, attention_dim)
    reduce_bias: Tensor  # (attention_dim,)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.mask": self.mask,
            f"{prefix}.reduce_weight": self.reduce_weight,
            f"{prefix}.reduce_bias": self.reduce_bias,
        }


def init_embedding(input_dim: int, embed_dim: int,
                   rng: np.random.Generator) -> EmbeddingParams:
    return EmbeddingParams(
        weight=ad.parameter(uniform_init(rng, input_dim, (input_dim, embed_dim))),
        bias=ad.parameter(uniform_init(rng, input_dim, (embed_dim,))),
    )


def init_message_mlp(embed_dim: int, rng: np.random.Generator) -> MessageMlpParams:
    m = embed_dim
    return MessageMlpParams(
        w1=ad.parameter(uniform_init(rng, 2 * m, (2 * m, m))),
        b1=ad.parameter(uniform_init(rng, 2 * m, (m,))),
        w2=ad.parameter(uniform_init(rng, m, (m, m))),
        b2=ad.parameter(uniform_init(rng, m, (m,))),
        w3=ad.parameter(uniform_init(rng, m, (m, m))),
        b3=ad.parameter(uniform_init(rng, m, (m,))),
    )


def init_node_gru(embed_dim: int, rng: np.random.Generator) -> NodeGruParams:
    m = embed_dim
    return NodeGruParams(
        gate_wx=ad.parameter(uniform_init(rng, 2 * m, (2 * m, 2 * m))),
        gate_wh=ad.parameter(uniform_init(rng, m, (m, 2 * m))),
        gate_b=ad.parameter(uniform_init(rng, 2 * m, (2 * m,))),
        cand_wx=ad.parameter(uniform_init(rng, 2 * m, (2 * m, m))),
        cand_wh=ad.parameter(uniform_init(rng, m, (m, m))),
        cand_b=ad.parameter(uniform_init(rng, 2 * m, (m,))),
    )


def init_attention(num_joints: int, embed_dim: int, attention_dim: int,
                   rng: np.random.Generator) -> AttentionParams:
    fan_in = num_joints * embed_dim
    return AttentionParams(
        mask=ad.parameter(np.ones(num_joints)),
        reduce_weight=ad.parameter(
            uniform_init(rng, fan_in, (fan_in, attention_dim))
        ),
        reduce_bias=ad.parameter(uniform_init(rng, fan_in, (attention_dim,))),
    )


# ---------------------------------------------------------------------------
# forward computation
# ---------------------------------------------------------------------------

def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else ad.constant(x)


def embed_frame(inputs, params: EmbeddingParams) -> Tensor:
    """Embed each row of ``(J, input_dim)`` inputs with the shared affine map."""
    x = _as_tensor(inputs)
    return ad.add(ad.matmul(x, params.weight), params.bias)


_pair_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _pair_indices(n_frames: int, num_nodes: int):
    """Row indices (self, other) for all ordered node pairs, per frame block.

    For node i the partners appear in ascending j order with j == i omitted,
    so a ``(rows, J-1, M)`` reshape groups messages by receiving node.
    """
    key = (n_frames, num_nodes)
    cached = _pair_cache.get(key)
    if cached is not None:
        return cached
    j = num_nodes
    self_idx = np.repeat(np.arange(j), j - 1)
    other_idx = np.concatenate(
        [np.delete(np.arange(j), i) for i in range(j)]
    ) if j > 1 else np.zeros(0, dtype=np.intp)
    offsets = (np.arange(n_frames) * j).repeat(j * (j - 1))
    self_all = np.tile(self_idx, n_frames) + offsets
    other_all = np.tile(other_idx, n_frames) + offsets
    _pair_cache[key] = (self_all, other_all)
    return self_all, other_all


def _message_mlp(x: Tensor, p: MessageMlpParams) -> Tensor:
    a1 = ad.tanh(ad.add(ad.matmul(x, p.w1), p.b1))
    a2 = ad.tanh(ad.add(ad.matmul(a1, p.w2), p.b2))
    return ad.add(ad.matmul(a2, p.w3), p.b3)


def _gru_update(h: Tensor, x: Tensor, p: NodeGruParams) -> Tensor:
    m = h.shape[1]
    gates = ad.sigmoid(ad.add(
        ad.add(ad.matmul(x, p.gate_wx), ad.matmul(h, p.gate_wh)), p.gate_b
    ))
    reset = ad.slice_cols(gates, 0, m)
    update = ad.slice_cols(gates, m, 2 * m)
    cand = ad.tanh(ad.add(
        ad.add(ad.matmul(x, p.cand_wx), ad.matmul(ad.mul(reset, h), p.cand_wh)),
        p.cand_b,
    ))
    ones = ad.constant(np.ones_like(update.data))
    return ad.add(ad.mul(update, h), ad.mul(ad.sub(ones, update), cand))


def _rrn_core(v: Tensor, mlp: MessageMlpParams, gru: NodeGruParams,
              iterations: int, n_frames: int, num_nodes: int) -> Tensor:
    if iterations < 1:
        raise ConfigError(f"iteration count must be >= 1, got {iterations}")
    self_idx, other_idx = _pair_indices(n_frames, num_nodes)
    embed_dim = v.shape[1]
    h = v
    for _ in range(iterations):
        if num_nodes > 1:
            pair = ad.concat(
                [ad.take_rows(h, self_idx), ad.take_rows(h, other_idx)], axis=1
            )
            messages = _message_mlp(pair, mlp)
            msg_sum = ad.sum_axis(
                ad.reshape(messages,
                           (n_frames * num_nodes, num_nodes - 1, embed_dim)),
                axis=1,
            )
        else:
            msg_sum = ad.constant(np.zeros_like(h.data))
        x = ad.concat([v, msg_sum], axis=1)
        h = _gru_update(h, x, gru)
    return h


def rrn_forward(v, mlp: MessageMlpParams, gru: NodeGruParams,
                iterations: int) -> Tensor:
    """Run message passing over one frame's ``(J, M)`` node embeddings.

    Permutation-equivariant in the node axis: permuting the rows of ``v``
    permutes the output rows identically.
    """
    v = _as_tensor(v)
    if v.data.ndim != 2:
        raise ad.DimensionError(
            f"expected (nodes, embed_dim) input, got shape {v.data.shape}"
        )
    return _rrn_core(v, mlp, gru, iterations, 1, v.shape[0])


def _attend_reduce_core(w: Tensor, params: AttentionParams,
                        n_frames: int, num_nodes: int) -> Tensor:
    mask_col = ad.reshape(params.mask, (num_nodes, 1))
    if n_frames > 1:
        tile_idx = np.tile(np.arange(num_nodes), n_frames)
        mask_col = ad.take_rows(mask_col, tile_idx)
    masked = ad.mul(w, mask_col)
    flat = ad.reshape(masked, (n_frames, num_nodes * w.shape[1]))
    return ad.add(ad.matmul(flat, params.reduce_weight), params.reduce_bias)


def attend_reduce(w, params: AttentionParams) -> Tensor:
    """Scale node row i by mask entry i, concatenate the rows in node
    order, and affine-reduce to the frame feature vector."""
    w = _as_tensor(w)
    num_nodes = params.mask.shape[0]
    if w.data.ndim != 2 or w.data.shape[0] != num_nodes:
        raise ad.DimensionError(
            f"expected ({num_nodes}, embed_dim) node outputs, "
            f"got shape {w.data.shape}"
        )
    out = _attend_reduce_core(w, params, 1, num_nodes)
    return ad.reshape(out, (out.shape[1],))


def spatial_forward(frames: np.ndarray, stream: str,
                    embedding: EmbeddingParams, mlp: MessageMlpParams,
                    gru: NodeGruParams, attention: AttentionParams,
                    iterations: int) -> Tensor:
    """Frame features for a normalized ``(T, J, 3)`` sequence.

    Every frame runs the embed -> message passing -> mask/reduce pipeline
    independently with shared parameters; the result stacks the per-frame
    feature vectors into ``(T, attention_dim)``. ``stream`` selects raw
    joint coordinates ("joint") or pairwise difference features ("line").
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[2] != 3:
        raise ad.DimensionError(
            f"expected (T, J, 3) frames, got shape {frames.shape}"
        )
    n_frames, num_nodes = frames.shape[0], frames.shape[1]
    if stream == "joint":
        feats = frames.reshape(n_frames * num_nodes, 3)
    elif stream == "line":
        feats = sequence_lines(frames).reshape(n_frames * num_nodes, -1)
    else:
        raise ConfigError(f"unknown stream kind: {stream!r}")
    v = embed_frame(ad.constant(feats), embedding)
    h = _rrn_core(v, mlp, gru, iterations, n_frames, num_nodes)
    return _attend_reduce_core(h, attention, n_frames, num_nodes)
