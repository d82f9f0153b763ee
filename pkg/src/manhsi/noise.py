"""Simulated corruption for clean cubes: i.i.d. and non-i.i.d. Gaussian
noise plus the structured stripe / deadline / impulse / mixture settings
used for complex-noise training and evaluation.

Sigmas are quoted on the 8-bit scale throughout: sigma = 50 means a
standard deviation of 50/255 on [0, 1] data. Noisy values are NOT
clipped to [0, 1], so the noisy-input PSNR matches the analytic
20*log10(255/sigma).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .hsidata import HsiCube

GAUSSIAN_KINDS = ("gaussian_fixed", "gaussian_blind", "noniid_gaussian")
COMPLEX_KINDS = ("stripe", "deadline", "impulse", "mixture")
NOISE_KINDS = GAUSSIAN_KINDS + COMPLEX_KINDS

SIGMA_TRAIN_SET = (30.0, 40.0, 50.0, 60.0, 70.0)
SIGMA_BLIND_RANGE = (30.0, 70.0)


@dataclass(frozen=True)
class ComplexNoiseConfig:
    """Constants of the structured-noise settings, kept in one record so
    they are auditable and overridable."""

    band_fraction: float = 1.0 / 3.0            # share of bands that get structured noise
    base_sigma_range: tuple[float, float] = (10.0, 70.0)  # per-band Gaussian base, 8-bit scale
    column_fraction: tuple[float, float] = (0.05, 0.15)   # stripe/deadline column share
    stripe_offset_range: tuple[float, float] = (-0.25, 0.25)
    deadline_width_range: tuple[int, int] = (1, 3)
    impulse_ratios: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7)


DEFAULT_COMPLEX = ComplexNoiseConfig()


@dataclass(frozen=True)
class NoiseSpec:
    """Declarative corruption description: kind + parameters + seed."""

    kind: str
    seed: int = 0
    sigma: float = 50.0                                   # gaussian_fixed
    sigma_range: tuple[float, float] = SIGMA_BLIND_RANGE  # gaussian_blind / noniid base
    complex_config: ComplexNoiseConfig = field(default_factory=ComplexNoiseConfig)

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}; choose from {NOISE_KINDS}")
        if self.sigma < 0:
            raise ContractError(f"sigma must be >= 0, got {self.sigma}")

    def to_text(self) -> str:
        lines = [f"kind={self.kind}", f"seed={self.seed}", f"sigma={self.sigma!r}",
                 f"sigma_range={self.sigma_range[0]!r},{self.sigma_range[1]!r}"]
        cc = self.complex_config
        lines += [
            f"band_fraction={cc.band_fraction!r}",
            f"base_sigma_range={cc.base_sigma_range[0]!r},{cc.base_sigma_range[1]!r}",
            f"column_fraction={cc.column_fraction[0]!r},{cc.column_fraction[1]!r}",
            f"stripe_offset_range={cc.stripe_offset_range[0]!r},{cc.stripe_offset_range[1]!r}",
            f"deadline_width_range={cc.deadline_width_range[0]},{cc.deadline_width_range[1]}",
            "impulse_ratios=" + ",".join(repr(r) for r in cc.impulse_ratios),
        ]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "NoiseSpec":
        kv: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"malformed noise spec line: {line!r}")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()

        def pair(key, cast=float):
            a, b = kv[key].split(",")
            return (cast(a), cast(b))

        try:
            cc = ComplexNoiseConfig(
                band_fraction=float(kv["band_fraction"]),
                base_sigma_range=pair("base_sigma_range"),
                column_fraction=pair("column_fraction"),
                stripe_offset_range=pair("stripe_offset_range"),
                deadline_width_range=pair("deadline_width_range", int),
                impulse_ratios=tuple(float(r) for r in kv["impulse_ratios"].split(",")),
            )
            return NoiseSpec(kind=kv["kind"], seed=int(kv["seed"]), sigma=float(kv["sigma"]),
                             sigma_range=pair("sigma_range"), complex_config=cc)
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad noise spec: {e}") from None


def _rng(seed, *stream) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([0x4E4F4953, int(seed), *stream]))


def add_gaussian(clean: HsiCube, sigma_8bit: float, seed: int = 0) -> HsiCube:
    """clean + N(0, (sigma/255)^2) i.i.d. per element, unclipped."""
    if sigma_8bit < 0:
        raise ContractError(f"sigma must be >= 0, got {sigma_8bit}")
    if sigma_8bit == 0:
        return HsiCube(clean.data.copy())
    noise = _rng(seed, 0).normal(0.0, sigma_8bit / 255.0, size=clean.shape)
    return HsiCube((clean.data.astype(np.float64) + noise).astype(np.float32))


def sample_sigma(mode: str, seed_or_rng) -> float:
    """Draw a training sigma: ``train_set`` picks uniformly from the
    discrete set {30, 40, 50, 60, 70}; ``blind_range`` draws uniformly
    continuous from [30, 70]."""
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else _rng(seed_or_rng, 1)
    if mode == "train_set":
        return float(SIGMA_TRAIN_SET[rng.integers(len(SIGMA_TRAIN_SET))])
    if mode == "blind_range":
        return float(rng.uniform(*SIGMA_BLIND_RANGE))
    raise ConfigError(f"unknown sigma mode {mode!r}")


def add_noniid_gaussian(clean: HsiCube, sigma_range=(10.0, 70.0), seed: int = 0,
                        rng: np.random.Generator | None = None) -> HsiCube:
    """Per-band Gaussian noise with sigma drawn uniformly per band."""
    rng = rng if rng is not None else _rng(seed, 2)
    sigmas = rng.uniform(sigma_range[0], sigma_range[1], size=clean.bands) / 255.0
    noise = rng.normal(0.0, 1.0, size=clean.shape) * sigmas[:, None, None]
    return HsiCube((clean.data.astype(np.float64) + noise).astype(np.float32))


def _structured_band(band: np.ndarray, kind: str, rng: np.random.Generator,
                     cc: ComplexNoiseConfig) -> np.ndarray:
    h, w = band.shape
    out = band.astype(np.float64)
    if kind == "stripe":
        frac = rng.uniform(*cc.column_fraction)
        ncols = max(1, int(round(frac * w)))
        cols = rng.choice(w, size=ncols, replace=False)
        offsets = rng.uniform(*cc.stripe_offset_range, size=ncols)
        out[:, cols] += offsets[None, :]
    elif kind == "deadline":
        frac = rng.uniform(*cc.column_fraction)
        target = max(1, int(round(frac * w)))
        dead: set[int] = set()
        while len(dead) < target:
            width = int(rng.integers(cc.deadline_width_range[0], cc.deadline_width_range[1] + 1))
            start = int(rng.integers(0, max(1, w - width + 1)))
            dead.update(range(start, min(start + width, w)))
        out[:, sorted(dead)] = 0.0
    elif kind == "impulse":
        ratio = float(cc.impulse_ratios[rng.integers(len(cc.impulse_ratios))])
        mask = rng.random(size=(h, w)) < ratio
        salt = rng.random(size=(h, w)) < 0.5
        out[mask & salt] = 1.0
        out[mask & ~salt] = 0.0
    else:
        raise ConfigError(f"unknown structured noise kind {kind!r}")
    return out


def add_complex(clean: HsiCube, kind: str, seed: int = 0,
                config: ComplexNoiseConfig = DEFAULT_COMPLEX) -> HsiCube:
    """Non-i.i.d. Gaussian base noise everywhere, then structured noise
    (stripe / deadline / impulse, or a per-band mixture of the three) on
    a random one-third of the bands. Unselected bands carry only the
    Gaussian base."""
    if kind not in COMPLEX_KINDS:
        raise ConfigError(f"unknown complex noise kind {kind!r}; choose from {COMPLEX_KINDS}")
    rng = _rng(seed, 3)
    base = add_noniid_gaussian(clean, config.base_sigma_range, rng=rng)
    s = clean.bands
    n_affected = max(1, int(round(config.band_fraction * s)))
    affected = rng.choice(s, size=n_affected, replace=False)
    data = base.data.astype(np.float64)
    for b in sorted(affected):
        band_kind = kind
        if kind == "mixture":
            band_kind = ("stripe", "deadline", "impulse")[rng.integers(3)]
        data[b] = _structured_band(data[b], band_kind, rng, config)
    return HsiCube(data.astype(np.float32))


def apply_noise(clean: HsiCube, spec: NoiseSpec) -> HsiCube:
    """Dispatch a NoiseSpec onto the matching generator."""
    if spec.kind == "gaussian_fixed":
        return add_gaussian(clean, spec.sigma, spec.seed)
    if spec.kind == "gaussian_blind":
        rng = _rng(spec.seed, 4)
        sigma = float(rng.uniform(*spec.sigma_range))
        noise = rng.normal(0.0, sigma / 255.0, size=clean.shape)
        return HsiCube((clean.data.astype(np.float64) + noise).astype(np.float32))
    if spec.kind == "noniid_gaussian":
        return add_noniid_gaussian(clean, spec.sigma_range, seed=spec.seed)
    return add_complex(clean, spec.kind, spec.seed, spec.complex_config)
