"""Stacked LSTM over per-frame features, plus the per-stream classifier.

The stack consumes the frame feature sequence in order; layer l feeds its
full output sequence to layer l+1. Hidden and cell states start at zero.
The classifier flattens the top layer's whole output sequence in frame
order and maps it through one affine layer to class logits, then softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .spatial import uniform_init

__all__ = [
    "LstmCellParams",
    "LstmStackParams",
    "ClassifierParams",
    "init_lstm_stack",
    "init_classifier",
    "lstm_forward",
    "classify",
]


@dataclass
class LstmCellParams:
    """One LSTM layer; gates packed column-wise as [input, forget, cell, output].

        gates  = x Wx + h Wh + b
        i,f,o  = sigmoid(...)   g = tanh(...)
        c_next = f * c + i * g
        h_next = o * tanh(c_next)
    """

    wx: Tensor  # (input_dim, 4 * width)
    wh: Tensor  # (width, 4 * width)
    b: Tensor  # (4 * width,)

    @property
    def width(self) -> int:
        return self.wh.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.wx": self.wx,
            f"{prefix}.wh": self.wh,
            f"{prefix}.b": self.b,
        }


@dataclass
class LstmStackParams:
    layers: list[LstmCellParams]

    @property
    def output_width(self) -> int:
        return self.layers[-1].width

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.named(f"{prefix}.layer{i}"))
        return out


@dataclass
class ClassifierParams:
    weight: Tensor  # (seq_len * lstm_output_width, num_classes)
    bias: Tensor  # (num_classes,)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


def init_lstm_stack(input_dim: int, widths, rng: np.random.Generator) -> LstmStackParams:
    layers = []
    prev = input_dim
    for width in widths:
        layers.append(LstmCellParams(
            wx=ad.parameter(uniform_init(rng, prev, (prev, 4 * width))),
            wh=ad.parameter(uniform_init(rng, width, (width, 4 * width))),
            b=ad.parameter(uniform_init(rng, prev, (4 * width,))),
        ))
        prev = width
    return LstmStackParams(layers)


def init_classifier(input_dim: int, num_classes: int,
                    rng: np.random.Generator) -> ClassifierParams:
    return ClassifierParams(
        weight=ad.parameter(uniform_init(rng, input_dim, (input_dim, num_classes))),
        bias=ad.parameter(uniform_init(rng, input_dim, (num_classes,))),
    )


def _cell_step(x: Tensor, h: Tensor, c: Tensor,
               p: LstmCellParams) -> tuple[Tensor, Tensor]:
    width = p.width
    gates = ad.add(ad.add(ad.matmul(x, p.wx), ad.matmul(h, p.wh)), p.b)
    i_gate = ad.sigmoid(ad.slice_cols(gates, 0, width))
    f_gate = ad.sigmoid(ad.slice_cols(gates, width, 2 * width))
    g_cand = ad.tanh(ad.slice_cols(gates, 2 * width, 3 * width))
    o_gate = ad.sigmoid(ad.slice_cols(gates, 3 * width, 4 * width))
    c_next = ad.add(ad.mul(f_gate, c), ad.mul(i_gate, g_cand))
    h_next = ad.mul(o_gate, ad.tanh(c_next))
    return h_next, c_next


def lstm_forward(p, params: LstmStackParams) -> Tensor:
    """Run the stack over a ``(T, input_dim)`` sequence.

    Returns the top layer's full output sequence ``(T, output_width)``.
    Causal: output row t never depends on input rows after t.
    """
    seq = p if isinstance(p, Tensor) else ad.constant(p)
    if seq.data.ndim != 2:
        raise ad.DimensionError(
            f"expected (T, input_dim) sequence, got shape {seq.data.shape}"
        )
    n_steps = seq.shape[0]
    for layer in params.layers:
        if seq.shape[1] != layer.wx.shape[0]:
            raise ad.DimensionError(
                f"layer expects input width {layer.wx.shape[0]}, "
                f"got {seq.shape[1]}"
            )
        h = ad.constant(np.zeros((1, layer.width)))
        c = ad.constant(np.zeros((1, layer.width)))
        outputs = []
        for t in range(n_steps):
            x = ad.take_rows(seq, [t])
            h, c = _cell_step(x, h, c, layer)
            outputs.append(h)
        seq = ad.concat(outputs, axis=0) if len(outputs) > 1 else outputs[0]
    return seq


def classify(q, params: ClassifierParams) -> Tensor:
    """Class probabilities from the LSTM output sequence.

    ``q`` is flattened in frame order, affine-mapped to logits, and passed
    through softmax; the result is a probability vector.
    """
    q = q if isinstance(q, Tensor) else ad.constant(q)
    if q.data.ndim != 2:
        raise ad.DimensionError(
            f"expected (T, width) sequence, got shape {q.data.shape}"
        )
    if q.data.size != params.weight.shape[0]:
        raise ad.DimensionError(
            f"classifier expects {params.weight.shape[0]} flattened inputs, "
            f"got {q.data.size} from shape {q.data.shape}"
        )
    flat = ad.reshape(q, (1, q.data.size))
    logits = ad.add(ad.matmul(flat, params.weight), params.bias)
    return ad.softmax(ad.reshape(logits, (logits.shape[1],)))
