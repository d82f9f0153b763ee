"""Skip-connection fusers for the encoder-decoder: the attentive gate
plus the plain additive and concat baselines it is compared against.

The attentive fuser computes a per-element gate M in (0, 1) from both
feature stacks and blends them convexly: (1 - M) * decoder + M * encoder.
The convolutions are spatial-only (1x1x1 and 1x3x3) and shared across
bands; band-varying gates still arise because the inputs vary per band.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import DEFAULT_LEAKY_SLOPE, Tensor


@dataclass
class AscParams:
    """Fusion kernel (C, 2C, 1, 1, 1), gate kernel (C, C, 1, 3, 3), and
    the LeakyReLU slope. No biases; the gate kernel starts at zero so an
    untrained block averages its inputs exactly (M = 0.5)."""

    fuse_w: Tensor
    gate_w: Tensor
    slope: float = DEFAULT_LEAKY_SLOPE

    @property
    def channels(self) -> int:
        return self.fuse_w.shape[0]

    @staticmethod
    def init(channels: int, rng: np.random.Generator, dtype=np.float32,
             slope: float = DEFAULT_LEAKY_SLOPE) -> "AscParams":
        bound = float(np.sqrt(3.0 / (2 * channels)))
        fuse = rng.uniform(-bound, bound, size=(channels, 2 * channels, 1, 1, 1))
        gate = np.zeros((channels, channels, 1, 3, 3))
        return AscParams(
            fuse_w=Tensor(fuse.astype(dtype), requires_grad=True),
            gate_w=Tensor(gate.astype(dtype), requires_grad=True),
            slope=slope,
        )

    def named(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        yield prefix + "fuse_w", self.fuse_w
        yield prefix + "gate_w", self.gate_w

    def count(self) -> int:
        return sum(t.size for _, t in self.named())


def _check_pair(f_d: Tensor, f_e: Tensor) -> None:
    if f_d.shape != f_e.shape:
        raise DimensionError(f"skip fusion: decoder shape {f_d.shape} != encoder shape {f_e.shape}")


def asc_fuse(f_d: Tensor, f_e: Tensor, p: AscParams, trace: dict | None = None,
             trace_key: str = "asc") -> Tensor:
    """Gated convex blend of decoder features f_d and encoder features f_e.

    F = LeakyReLU(Conv1x1([f_d, f_e])); M = sigmoid(Conv3x3(F));
    out = (1 - M) * f_d + M * f_e. Every output element lies between the
    two inputs. With ``trace`` set, M is stored under trace_key + ".gate".
    """
    _check_pair(f_d, f_e)
    cat = T.concat([f_d, f_e], axis=1)
    fused = T.leaky_relu(T.conv3d(cat, p.fuse_w), p.slope)
    m = T.sigmoid(T.conv3d(fused, p.gate_w, padding=(0, 1, 1)))
    if trace is not None:
        trace[trace_key + ".gate"] = m
    return T.add(T.mul(T.affine(m, -1.0, 1.0), f_d), T.mul(m, f_e))


def additive_fuse(f_d: Tensor, f_e: Tensor) -> Tensor:
    """Plain sum of the two feature stacks."""
    _check_pair(f_d, f_e)
    return T.add(f_d, f_e)


def concat_fuse(f_d: Tensor, f_e: Tensor, w: Tensor) -> Tensor:
    """1x1x1 convolution of the channel-concatenated pair [f_e, f_d]
    with kernel w of shape (C, 2C, 1, 1, 1). Equals w1 applied to f_e
    plus w2 applied to f_d, where w1, w2 are the channel halves of w."""
    _check_pair(f_d, f_e)
    return T.conv3d(T.concat([f_e, f_d], axis=1), w)


def concat_params_init(channels: int, rng: np.random.Generator, dtype=np.float32) -> Tensor:
    bound = float(np.sqrt(3.0 / (2 * channels)))
    w = rng.uniform(-bound, bound, size=(channels, 2 * channels, 1, 1, 1))
    return Tensor(w.astype(dtype), requires_grad=True)
