"""Multi-head recurrent spectral attention.

Mixes features across spectral bands with a gated running average: two
per-position MLPs produce candidate features Z in (-1, 1) and merging
weights W in (0, 1); a linear-time recurrence then blends each band with
the accumulated output of the previous bands. The channel halves run the
recurrence in opposite band directions so every band sees both sides of
the spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor

HEAD_COUNT = 2

DIRECTIONS = ("forward", "backward")


@dataclass
class MhrsaParams:
    """Four square C x C projection matrices, no biases (4*C^2 weights).

    ``mlp1_*`` feed the candidate branch, ``mlp2_*`` the gate branch;
    ``*_w2`` is the inner projection, ``*_w1`` the outer one.
    """

    mlp1_w2: Tensor
    mlp1_w1: Tensor
    mlp2_w2: Tensor
    mlp2_w1: Tensor

    @property
    def channels(self) -> int:
        return self.mlp1_w2.shape[0]

    @staticmethod
    def init(channels: int, rng: np.random.Generator, dtype=np.float32) -> "MhrsaParams":
        # Fan-in uniform init, +/- sqrt(1/C) per matrix.
        bound = float(np.sqrt(1.0 / channels))

        def mat():
            w = rng.uniform(-bound, bound, size=(channels, channels))
            return Tensor(w.astype(dtype), requires_grad=True)

        return MhrsaParams(mat(), mat(), mat(), mat())

    def named(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        yield prefix + "mlp1_w2", self.mlp1_w2
        yield prefix + "mlp1_w1", self.mlp1_w1
        yield prefix + "mlp2_w2", self.mlp2_w2
        yield prefix + "mlp2_w1", self.mlp2_w1

    def count(self) -> int:
        return sum(t.size for _, t in self.named())


def _check_channels(f: Tensor, p: MhrsaParams) -> None:
    if f.ndim != 5:
        raise DimensionError(f"expected (B, C, S, H, W) features, got ndim {f.ndim}")
    if f.shape[1] != p.channels:
        raise DimensionError(f"feature channels {f.shape[1]} != parameter channels {p.channels}")


def project(f: Tensor, p: MhrsaParams) -> tuple[Tensor, Tensor]:
    """Per-position candidate/gate projections.

    Z = tanh(W1 . tanh(W2 . F)) and W = sigmoid(W1' . tanh(W2' . F)),
    applied independently at every (b, s, h, w). Z is strictly in (-1, 1)
    and W strictly in (0, 1).
    """
    _check_channels(f, p)
    fl = T.moveaxis(f, 1, -1)
    z = T.tanh(T.pointwise_linear(T.tanh(T.pointwise_linear(fl, p.mlp1_w2)), p.mlp1_w1))
    w = T.sigmoid(T.pointwise_linear(T.tanh(T.pointwise_linear(fl, p.mlp2_w2)), p.mlp2_w1))
    return T.moveaxis(z, -1, 1), T.moveaxis(w, -1, 1)


def _band_order(s: int, direction: str) -> range:
    if direction == "forward":
        return range(s)
    if direction == "backward":
        return range(s - 1, -1, -1)
    raise ContractError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def recurrent_merge(z: Tensor, w: Tensor, direction: str = "forward") -> Tensor:
    """Gated running blend along the band axis, linear in S.

    With O_0 = 0, walking bands in the given direction:
    O_i = (1 - W_i) * Z_i + W_i * O_(i-1).
    """
    if z.shape != w.shape:
        raise DimensionError(f"recurrent_merge: Z shape {z.shape} != W shape {w.shape}")
    wd = w.data
    if wd.min() < 0.0 or wd.max() > 1.0:
        raise ContractError("merge weights must lie in [0, 1]")
    s = z.shape[2]
    z_bands = T.split_axis(z, axis=2)
    w_bands = T.split_axis(w, axis=2)
    out_bands: list[Tensor | None] = [None] * s
    prev: Tensor | None = None
    for i in _band_order(s, direction):
        zi, wi = z_bands[i], w_bands[i]
        cur = T.mul(T.affine(wi, -1.0, 1.0), zi)
        if prev is not None:
            cur = T.add(cur, T.mul(wi, prev))
        out_bands[i] = cur
        prev = cur
    return T.concat([b for b in out_bands if b is not None], axis=2)


def unrolled_oracle(z, w, direction: str = "forward") -> np.ndarray:
    """Closed-form reference for recurrent_merge (testing path only).

    O_j = sum over visited bands i of (1 - W_i) * prod(W_k, k after i
    up to j) * Z_i, evaluated by explicit summation on numpy arrays.
    """
    zd = np.asarray(getattr(z, "data", z), dtype=np.float64)
    wd = np.asarray(getattr(w, "data", w), dtype=np.float64)
    s = zd.shape[2]
    order = list(_band_order(s, direction))
    out = np.zeros_like(zd)
    for jpos, j in enumerate(order):
        acc = np.zeros_like(zd[:, :, 0])
        for ipos in range(jpos + 1):
            i = order[ipos]
            term = (1.0 - wd[:, :, i]) * zd[:, :, i]
            for kpos in range(ipos + 1, jpos + 1):
                term = term * wd[:, :, order[kpos]]
            acc += term
        out[:, :, j] = acc
    return out


def mhrsa_forward(f: Tensor, p: MhrsaParams, trace: dict | None = None,
                  trace_key: str = "mhrsa") -> Tensor:
    """Project, split channels into two heads, merge in opposite band
    directions, and concatenate. Output shape equals input shape.

    When ``trace`` is given, the full gate tensor W is stored under
    ``trace_key + ".gate"``.
    """
    _check_channels(f, p)
    c = f.shape[1]
    if c % HEAD_COUNT != 0:
        raise ConfigError(f"channel count {c} not divisible by {HEAD_COUNT} heads")
    z, w = project(f, p)
    if trace is not None:
        trace[trace_key + ".gate"] = w
    half = c // 2
    fwd = recurrent_merge(z[:, :half], w[:, :half], "forward")
    bwd = recurrent_merge(z[:, half:], w[:, half:], "backward")
    return T.concat([fwd, bwd], axis=1)


def spectral_attention_matrix(w, direction: str = "forward") -> np.ndarray:
    """S x S band-interaction summary: entry (j, i) is the mean effective
    weight of band i's candidate in the output at band j, averaged over
    batch, channel, and space. Rows sum to the mean of 1 - prod(W) over
    the visited bands (the share not owed to the zero initial state)."""
    wd = np.asarray(getattr(w, "data", w), dtype=np.float64)
    s = wd.shape[2]
    order = list(_band_order(s, direction))
    mat = np.zeros((s, s))
    for jpos, j in enumerate(order):
        coeff = np.ones_like(wd[:, :, 0])
        # walk back from band j: coefficient of Z_i is (1-W_i) * prod of
        # the gates strictly between i and j
        for ipos in range(jpos, -1, -1):
            i = order[ipos]
            mat[j, i] = np.mean(coeff * (1.0 - wd[:, :, i]))
            coeff = coeff * wd[:, :, i]
    return mat
