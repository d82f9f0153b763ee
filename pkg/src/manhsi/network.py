"""Mixed-attention blocks and the full U-shaped denoising network.

A mixed attention block (MAB) is a 3x3x3 convolution followed by the
recurrent spectral attention and the channel attention; the network is a
two-level encoder-decoder of MABs with strided-conv downsampling,
transposed-conv upsampling, and one skip fusion per depth. Spatial
extents halve per level; the spectral extent is preserved everywhere.

S/M/L variants differ only in channel widths, chosen to land on the
0.50M / 0.89M / 1.39M parameter budgets; a "tiny" variant exists for
desk-scale experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from . import tensor as T
from .asc import AscParams, additive_fuse, asc_fuse, concat_fuse, concat_params_init
from .errors import ConfigError, DimensionError, GeometryError
from .mhrsa import MhrsaParams, mhrsa_forward
from .psca import PscaParams, psca_forward
from .tensor import Tensor

SKIP_KINDS = ("attentive", "additive", "concat")

VARIANT_WIDTHS = {
    "S": (20, 40, 80),
    "M": (26, 52, 104),
    "L": (34, 68, 136),
    "tiny": (8, 16, 32),
}


@dataclass(frozen=True)
class ManConfig:
    widths: tuple[int, ...]    # channel width per depth level, shallow first
    levels: int                # number of spatial downsamplings
    bands: int                 # spectral extent the model is built for
    variant: str = "custom"
    skip: str = "attentive"
    use_mhrsa: bool = True
    use_psca: bool = True
    residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if len(self.widths) != self.levels + 1:
            raise ConfigError(
                f"need {self.levels + 1} widths for {self.levels} levels, got {len(self.widths)}")
        if self.use_mhrsa and any(w % 2 for w in self.widths):
            raise ConfigError(f"widths must be even for the two-head split, got {self.widths}")
        if self.skip not in SKIP_KINDS:
            raise ConfigError(f"skip must be one of {SKIP_KINDS}, got {self.skip!r}")

    def to_text(self) -> str:
        return "".join(
            f"{k}={v}\n" for k, v in (
                ("variant", self.variant),
                ("widths", ",".join(str(w) for w in self.widths)),
                ("levels", self.levels),
                ("bands", self.bands),
                ("skip", self.skip),
                ("use_mhrsa", int(self.use_mhrsa)),
                ("use_psca", int(self.use_psca)),
                ("residual", int(self.residual)),
            ))

    @staticmethod
    def from_text(text: str) -> tuple["ManConfig", dict[str, str]]:
        """Parse key=value lines; returns the config and any extra keys."""
        kv: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"malformed config line: {line!r}")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
        try:
            cfg = ManConfig(
                widths=tuple(int(w) for w in kv.pop("widths").split(",")),
                levels=int(kv.pop("levels")),
                bands=int(kv.pop("bands")),
                variant=kv.pop("variant", "custom"),
                skip=kv.pop("skip", "attentive"),
                use_mhrsa=bool(int(kv.pop("use_mhrsa", "1"))),
                use_psca=bool(int(kv.pop("use_psca", "1"))),
                residual=bool(int(kv.pop("residual", "0"))),
            )
        except KeyError as e:
            raise ConfigError(f"config text missing key {e}") from None
        except ValueError as e:
            raise ConfigError(f"bad config value: {e}") from None
        return cfg, kv


@dataclass
class MabParams:
    conv_w: Tensor
    conv_b: Tensor
    mhrsa: MhrsaParams | None
    psca: PscaParams | None

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield prefix + ".conv_w", self.conv_w
        yield prefix + ".conv_b", self.conv_b
        if self.mhrsa is not None:
            yield from self.mhrsa.named(prefix + ".mhrsa.")
        if self.psca is not None:
            yield from self.psca.named(prefix + ".psca.")


@dataclass
class UpParams:
    w: Tensor
    b: Tensor

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield prefix + ".w", self.w
        yield prefix + ".b", self.b


@dataclass
class ManParams:
    """Every learnable tensor of one model, in a stable named order."""

    stem: MabParams
    downs: list[MabParams]
    bottleneck: MabParams
    ups: list[UpParams]
    skips: list[AscParams | Tensor | None]
    decs: list[MabParams]
    head_w: Tensor
    head_b: Tensor

    def named(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.stem.named("stem")
        for i, d in enumerate(self.downs):
            yield from d.named(f"down{i}")
        yield from self.bottleneck.named("bottleneck")
        for i in range(len(self.ups)):
            yield from self.ups[i].named(f"up{i}")
            skip = self.skips[i]
            if isinstance(skip, AscParams):
                yield from skip.named(f"skip{i}.")
            elif isinstance(skip, Tensor):
                yield f"skip{i}.w", skip
            yield from self.decs[i].named(f"dec{i}")
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    def tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, t in self.named():
            if name in out:
                raise ConfigError(f"duplicate parameter name {name!r}")
            out[name] = t
        return out

    def zero_grads(self) -> None:
        for _, t in self.named():
            t.zero_grad()

    def astype(self, dtype) -> "ManParams":
        """Copy of the model with every tensor cast to dtype."""
        mapping = {n: Tensor(t.data.astype(dtype), requires_grad=t.requires_grad)
                   for n, t in self.named()}
        return rebuild(self, mapping)

    def with_tensor(self, name: str, tensor: Tensor) -> "ManParams":
        """Copy of the model with one named tensor replaced (the copy
        shares every other tensor object with the original)."""
        mapping = dict(self.tensors())
        if name not in mapping:
            raise ConfigError(f"unknown parameter name {name!r}")
        mapping[name] = tensor
        return rebuild(self, mapping)


def rebuild(proto: ManParams, mapping: Mapping[str, Tensor]) -> ManParams:
    def remap_mab(m: MabParams, prefix: str) -> MabParams:
        return MabParams(
            conv_w=mapping[prefix + ".conv_w"],
            conv_b=mapping[prefix + ".conv_b"],
            mhrsa=None if m.mhrsa is None else MhrsaParams(
                *(mapping[prefix + ".mhrsa." + k] for k in
                  ("mlp1_w2", "mlp1_w1", "mlp2_w2", "mlp2_w1"))),
            psca=None if m.psca is None else PscaParams(
                *(mapping[prefix + ".psca." + k] for k in ("dcm_w1", "dcm_w2", "scm_w"))),
        )

    skips: list[AscParams | Tensor | None] = []
    for i, s in enumerate(proto.skips):
        if isinstance(s, AscParams):
            skips.append(AscParams(mapping[f"skip{i}.fuse_w"], mapping[f"skip{i}.gate_w"], s.slope))
        elif isinstance(s, Tensor):
            skips.append(mapping[f"skip{i}.w"])
        else:
            skips.append(None)
    return ManParams(
        stem=remap_mab(proto.stem, "stem"),
        downs=[remap_mab(d, f"down{i}") for i, d in enumerate(proto.downs)],
        bottleneck=remap_mab(proto.bottleneck, "bottleneck"),
        ups=[UpParams(mapping[f"up{i}.w"], mapping[f"up{i}.b"]) for i in range(len(proto.ups))],
        skips=skips,
        decs=[remap_mab(d, f"dec{i}") for i, d in enumerate(proto.decs)],
        head_w=mapping["head.w"],
        head_b=mapping["head.b"],
    )


def _conv_init(rng, c_out, c_in, ksize, dtype) -> tuple[Tensor, Tensor]:
    # unit-gain uniform init (variance 1/fan_in); the channel attention is
    # quadratic in its input scale, so sub-unit conv gains would shrink
    # activations geometrically across blocks and starve deep gradients
    fan_in = c_in * int(np.prod(ksize))
    bound = float(np.sqrt(3.0 / fan_in))
    w = rng.uniform(-bound, bound, size=(c_out, c_in, *ksize)).astype(dtype)
    b = np.zeros(c_out, dtype=dtype)
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


def _mab_init(rng, c_in, c_out, config: ManConfig, dtype) -> MabParams:
    w, b = _conv_init(rng, c_out, c_in, (3, 3, 3), dtype)
    return MabParams(
        conv_w=w, conv_b=b,
        mhrsa=MhrsaParams.init(c_out, rng, dtype) if config.use_mhrsa else None,
        psca=PscaParams.init(c_out, rng, dtype) if config.use_psca else None,
    )


def init_man(config: ManConfig, seed: int = 0, dtype=np.float32) -> ManParams:
    """Fresh, seeded model parameters for the given configuration."""
    rng = np.random.default_rng(np.random.SeedSequence([0x4D414E, seed]))
    ws = config.widths
    stem = _mab_init(rng, 1, ws[0], config, dtype)
    downs = [_mab_init(rng, ws[i], ws[i + 1], config, dtype) for i in range(config.levels)]
    bottleneck = _mab_init(rng, ws[-1], ws[-1], config, dtype)
    ups, skips, decs = [], [], []
    for i in range(config.levels):  # decoder params stored shallow-first
        # each upsampled position draws from one input position per channel
        ub = np.sqrt(3.0 / ws[i + 1])
        uw = rng.uniform(-ub, ub, size=(ws[i + 1], ws[i], 1, 2, 2)).astype(dtype)
        ups.append(UpParams(Tensor(uw, requires_grad=True),
                            Tensor(np.zeros(ws[i], dtype=dtype), requires_grad=True)))
        if config.skip == "attentive":
            skips.append(AscParams.init(ws[i], rng, dtype))
        elif config.skip == "concat":
            skips.append(concat_params_init(ws[i], rng, dtype))
        else:
            skips.append(None)
        decs.append(_mab_init(rng, ws[i], ws[i], config, dtype))
    # 1x1x1 output projection back to a single channel
    head_w, head_b = _conv_init(rng, 1, ws[0], (1, 1, 1), dtype)
    return ManParams(stem, downs, bottleneck, ups, skips, decs, head_w, head_b)


def mab_forward(f: Tensor, mab: MabParams, stride=(1, 1, 1),
                trace: dict | None = None, trace_key: str = "mab") -> Tensor:
    """conv3d (3x3x3, pad 1, given stride) -> spectral attention ->
    channel attention. Without the spectral attention the block falls
    back to a LeakyReLU, which is the conv-only ablation baseline."""
    out = T.conv3d(f, mab.conv_w, mab.conv_b, stride=stride, padding=(1, 1, 1))
    if mab.mhrsa is not None:
        out = mhrsa_forward(out, mab.mhrsa, trace=trace, trace_key=trace_key + ".mhrsa")
    else:
        out = T.leaky_relu(out)
    if mab.psca is not None:
        out = psca_forward(out, mab.psca)
    return out


def man_forward(x: Tensor, params: ManParams, config: ManConfig,
                trace: dict | None = None) -> Tensor:
    """Denoise a (B, 1, S, H, W) stack; output shape equals input shape.

    H and W must be divisible by 2**levels. ``trace``, when given,
    collects every attention gate tensor produced during the pass.
    """
    if x.ndim != 5:
        raise DimensionError(f"expected (B, 1, S, H, W) input, got ndim {x.ndim}")
    if x.shape[1] != 1:
        raise DimensionError(f"expected a single input channel, got {x.shape[1]}")
    div = 1 << config.levels
    if x.shape[3] % div or x.shape[4] % div:
        raise GeometryError(
            f"spatial extents {x.shape[3]}x{x.shape[4]} not divisible by {div}")

    f = mab_forward(x, params.stem, trace=trace, trace_key="stem")
    enc = [f]
    for i, down in enumerate(params.downs):
        f = mab_forward(f, down, stride=(1, 2, 2), trace=trace, trace_key=f"down{i}")
        enc.append(f)
    f = mab_forward(f, params.bottleneck, trace=trace, trace_key="bottleneck")

    for i in range(config.levels - 1, -1, -1):
        f = T.conv_transpose3d(f, params.ups[i].w, params.ups[i].b, stride=(1, 2, 2))
        skip = params.skips[i]
        if isinstance(skip, AscParams):
            f = asc_fuse(f, enc[i], skip, trace=trace, trace_key=f"skip{i}.asc")
        elif isinstance(skip, Tensor):
            f = concat_fuse(f, enc[i], skip)
        else:
            f = additive_fuse(f, enc[i])
        f = mab_forward(f, params.decs[i], trace=trace, trace_key=f"dec{i}")

    y = T.conv3d(f, params.head_w, params.head_b)
    if config.residual:
        y = T.add(y, x)
    return y


def build_variant(name: str, bands: int, seed: int = 0, dtype=np.float32,
                  skip: str = "attentive") -> tuple[ManParams, ManConfig]:
    """Construct one of the published size variants (S, M, L) or the
    desk-scale "tiny" model for the given band count."""
    if name not in VARIANT_WIDTHS:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANT_WIDTHS)}")
    config = ManConfig(widths=VARIANT_WIDTHS[name], levels=2, bands=bands,
                       variant=name, skip=skip)
    return init_man(config, seed=seed, dtype=dtype), config


def param_count(params) -> int:
    """Total element count over all learnable tensors."""
    if isinstance(params, ManParams):
        return sum(t.size for _, t in params.named())
    if isinstance(params, Mapping):
        return sum(int(np.asarray(getattr(t, "data", t)).size) for t in params.values())
    raise ConfigError(f"cannot count parameters of {type(params).__name__}")
