"""Small layer objects whose weights live in a shared :class:`ParamStore`."""

from __future__ import annotations

import math
from typing import Sequence

from .autodiff import ParamStore, Tensor, leaky_relu, linear

SLOPE = 0.2
LRELU_GAIN = math.sqrt(2.0 / (1.0 + SLOPE**2))


class Linear:
    def __init__(
        self, store: ParamStore, name: str, d_in: int, d_out: int, bias: bool = True, gain: float = LRELU_GAIN
    ):
        self.name = name
        self.d_in = d_in
        self.d_out = d_out
        self.store = store
        store.kaiming_uniform(f"{name}.weight", d_in, d_out, gain)
        if bias:
            store.zeros(f"{name}.bias", d_out)
        self.has_bias = bias

    def __call__(self, x: Tensor) -> Tensor:
        W = self.store[f"{self.name}.weight"]
        b = self.store[f"{self.name}.bias"] if self.has_bias else None
        return linear(x, W, b)

    def param_names(self) -> list[str]:
        names = [f"{self.name}.weight"]
        if self.has_bias:
            names.append(f"{self.name}.bias")
        return names


class MLP:
    """Stack of linear layers with leaky ReLU between them.

    ``final_act`` controls whether the last layer is activated too; flow
    heads leave it off since flow is unbounded.
    """

    def __init__(self, store: ParamStore, name: str, widths: Sequence[int], final_act: bool = True):
        if len(widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        last = len(widths) - 2
        self.layers = [
            Linear(store, f"{name}.{i}", a, b, gain=LRELU_GAIN if i < last or final_act else 1.0)
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]
        self.final_act = final_act
        self.d_in = widths[0]
        self.d_out = widths[-1]

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.final_act:
                x = leaky_relu(x, SLOPE)
        return x

    def param_names(self) -> list[str]:
        return [n for layer in self.layers for n in layer.param_names()]
