"""Hyperspectral cubes: the HSC1 file container, patch extraction,
augmentation, and a synthetic dataset generator for runs without
external data.

A cube is a band-major (S, H, W) float32 array; clean imagery lives in
[0, 1] while simulated noisy cubes may exceed that range.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError, GeometryError, NumericError

HSC_MAGIC = b"HSC1"
_DTYPE_F32 = 1

AUGMENT_OPS = ("identity", "rot90", "rot180", "rot270", "flip_h", "flip_v",
               "scale_half", "scale_full")


@dataclass
class HsiCube:
    """One hyperspectral image: band-major (S, H, W) float32 values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ContractError(f"cube must be (S, H, W), got ndim {arr.ndim}")
        if any(e < 1 for e in arr.shape):
            raise ContractError(f"cube extents must be >= 1, got {arr.shape}")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise NumericError("cube contains non-finite values")
        self.data = arr

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def write_hsc(cube: HsiCube, path) -> None:
    """Serialize to HSC1: magic, u8 dtype code (1 = float32 LE), u8
    reserved, u32 LE extents S/H/W, then band-major row-major floats."""
    s, h, w = cube.shape
    header = HSC_MAGIC + struct.pack("<BBIII", _DTYPE_F32, 0, s, h, w)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())


def read_hsc(path) -> HsiCube:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != HSC_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {HSC_MAGIC!r}")
    if len(blob) < 18:
        raise FormatError("truncated header")
    dtype_code, _reserved, s, h, w = struct.unpack_from("<BBIII", blob, 4)
    if dtype_code != _DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype_code}")
    if min(s, h, w) < 1 or max(s, h, w) > (1 << 31):
        raise FormatError(f"extents out of range: {(s, h, w)}")
    n = s * h * w
    if len(blob) - 18 != 4 * n:
        raise FormatError(f"payload is {len(blob) - 18} bytes, expected {4 * n}")
    data = np.frombuffer(blob, dtype="<f4", count=n, offset=18).reshape(s, h, w)
    if not np.all(np.isfinite(data)):
        raise FormatError("payload contains non-finite values")
    return HsiCube(data.copy())


def crop_patches(cube: HsiCube, patch_hw: int = 64, stride: int | None = None) -> list[HsiCube]:
    """Even-stride spatial crops with full spectral extent.

    Top-left corners sit at multiples of ``stride`` on both axes; the
    last partial window is dropped, so the count is
    (floor((H - p)/stride) + 1) * (floor((W - p)/stride) + 1).
    """
    if stride is None:
        raise ContractError("crop stride must be given explicitly")
    if stride < 1:
        raise ContractError(f"stride must be positive, got {stride}")
    s, h, w = cube.shape
    if patch_hw > h or patch_hw > w:
        raise GeometryError(f"patch {patch_hw} larger than cube {h}x{w}")
    patches = []
    for top in range(0, h - patch_hw + 1, stride):
        for left in range(0, w - patch_hw + 1, stride):
            patches.append(HsiCube(cube.data[:, top:top + patch_hw, left:left + patch_hw].copy()))
    return patches


def _resize_bilinear(data: np.ndarray, factor: float) -> np.ndarray:
    """Per-band bilinear resample using half-pixel-centre coordinates."""
    s, h, w = data.shape
    oh, ow = max(1, round(h * factor)), max(1, round(w * factor))
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0).astype(np.float64)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0).astype(np.float64)[None, :]
    d = data.astype(np.float64)
    top = d[:, y0[:, None], x0[None, :]] * (1 - wx) + d[:, y0[:, None], x1[None, :]] * wx
    bot = d[:, y1[:, None], x0[None, :]] * (1 - wx) + d[:, y1[:, None], x1[None, :]] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def augment(cube: HsiCube, op: str, seed: int = 0) -> HsiCube:
    """Apply one augmentation op; ``op="random"`` samples one using seed.

    Rotations and flips permute pixels within each band; scaling
    resamples bilinearly and leaves the spectral extent untouched.
    """
    if op == "random":
        rng = np.random.default_rng(seed)
        op = AUGMENT_OPS[rng.integers(len(AUGMENT_OPS))]
    d = cube.data
    if op == "identity" or op == "scale_full":
        return HsiCube(d.copy())
    if op in ("rot90", "rot180", "rot270"):
        if cube.height != cube.width:
            raise GeometryError(f"rotation needs a square patch, got {cube.height}x{cube.width}")
        k = {"rot90": 1, "rot180": 2, "rot270": 3}[op]
        return HsiCube(np.ascontiguousarray(np.rot90(d, k, axes=(1, 2))))
    if op == "flip_h":
        return HsiCube(np.ascontiguousarray(d[:, :, ::-1]))
    if op == "flip_v":
        return HsiCube(np.ascontiguousarray(d[:, ::-1, :]))
    if op == "scale_half":
        return HsiCube(_resize_bilinear(d, 0.5))
    raise ContractError(f"unknown augmentation op {op!r}")


def synth_dataset(count: int, bands: int, height: int, width: int, seed: int = 0) -> list[HsiCube]:
    """Smooth synthetic cubes standing in for real captures.

    Each cube sums a handful of low-frequency spatial patterns modulated
    by smooth, strictly positive spectral signatures, then min-max
    normalizes to [0, 1]. Adjacent bands are strongly correlated, like
    real hyperspectral imagery.
    """
    root = np.random.SeedSequence([0x48534331, seed])
    cubes = []
    for child in root.spawn(count):
        rng = np.random.default_rng(child)
        n_comp = int(rng.integers(3, 6))
        yy = np.linspace(0.0, 1.0, height)[:, None]
        xx = np.linspace(0.0, 1.0, width)[None, :]
        band_axis = np.linspace(0.0, 1.0, bands)
        cube = np.zeros((bands, height, width))
        for _ in range(n_comp):
            fy, fx = rng.uniform(0.3, 2.5, size=2)
            phase_y, phase_x = rng.uniform(0, 2 * np.pi, size=2)
            spatial = np.cos(2 * np.pi * fy * yy + phase_y) * np.cos(2 * np.pi * fx * xx + phase_x)
            cy, cx = rng.uniform(0.1, 0.9, size=2)
            rad = rng.uniform(0.15, 0.5)
            spatial += np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rad ** 2)))
            centre = rng.uniform(0.0, 1.0)
            sig_w = rng.uniform(0.3, 0.8)
            signature = 0.5 + np.exp(-((band_axis - centre) ** 2) / (2 * sig_w ** 2))
            cube += signature[:, None, None] * spatial[None, :, :]
        lo, hi = cube.min(), cube.max()
        cube = (cube - lo) / (hi - lo) if hi > lo else np.zeros_like(cube)
        cubes.append(HsiCube(cube.astype(np.float32)))
    return cubes
