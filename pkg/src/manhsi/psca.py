"""Progressive spectral channel attention.

Per-pixel channel mixing in two steps: a dynamic mixing whose attention
map is rescaled per position by a learned projection of the input, a
GELU, then a static learned channel mixing. The block touches each
(b, s, h, w) position independently; it performs no spatial or spectral
mixing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


@dataclass
class PscaParams:
    """Three square C x C matrices (3*C^2 weights, no biases)."""

    dcm_w1: Tensor  # static attention map inside the dynamic mixing
    dcm_w2: Tensor  # per-pixel scaling projection
    scm_w: Tensor   # static channel mixing

    @property
    def channels(self) -> int:
        return self.scm_w.shape[0]

    @staticmethod
    def init(channels: int, rng: np.random.Generator, dtype=np.float32) -> "PscaParams":
        # dcm_w1 and scm_w start near identity. dcm_w2 needs enough scale
        # that s = x . w2 is O(1); with a tiny w2 the whole block outputs
        # ~0 with a ~0 Jacobian and upstream layers never see a gradient.
        eye = np.eye(channels)
        noise = 0.05 / np.sqrt(channels)

        def near_identity():
            w = eye + rng.uniform(-noise, noise, size=(channels, channels))
            return Tensor(w.astype(dtype), requires_grad=True)

        bound = np.sqrt(12.0 / channels)
        w2 = rng.uniform(-bound, bound, size=(channels, channels))
        return PscaParams(
            dcm_w1=near_identity(),
            dcm_w2=Tensor(w2.astype(dtype), requires_grad=True),
            scm_w=near_identity(),
        )

    def named(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        yield prefix + "dcm_w1", self.dcm_w1
        yield prefix + "dcm_w2", self.dcm_w2
        yield prefix + "scm_w", self.scm_w

    def count(self) -> int:
        return sum(t.size for _, t in self.named())


def scm(x: Tensor, w: Tensor) -> Tensor:
    """Static channel mixing: out[..., d] = sum_c x[..., c] * w[c, d],
    the same map at every position."""
    return T.pointwise_linear(x, w)


def dcm(x: Tensor, w1: Tensor, w2: Tensor) -> Tensor:
    """Dynamic channel mixing: s = x . w2 per position, then
    out = (x * s) . w1 - the static map w1 rescaled per pixel by s."""
    s = T.pointwise_linear(x, w2)
    return T.pointwise_linear(T.mul(x, s), w1)


def psca_forward(x: Tensor, p: PscaParams) -> Tensor:
    """scm(gelu(dcm(x))) applied on the channel axis of (B, C, S, H, W)
    features; output shape equals input shape."""
    if x.ndim != 5:
        raise DimensionError(f"expected (B, C, S, H, W) features, got ndim {x.ndim}")
    if x.shape[1] != p.channels:
        raise DimensionError(f"feature channels {x.shape[1]} != parameter channels {p.channels}")
    xl = T.moveaxis(x, 1, -1)
    y = scm(T.gelu(dcm(xl, p.dcm_w1, p.dcm_w2)), p.scm_w)
    return T.moveaxis(y, -1, 1)
