"""MSE training with Adam on a staged noise curriculum.

The schedule keeps the three-stage structure (fixed-sigma Gaussian,
blind Gaussian from a sigma set, complex noise) while letting configs
scale epochs and dataset size down to desk scale. Every source of
randomness (shuffling, per-item noise, augmentation) is derived from the
config seed, the stage index, and the epoch, so a fixed seed reproduces
final weights bitwise and an epoch-boundary checkpoint resumes bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import load_model, save_model
from .errors import ConfigError, ContractError, DimensionError, NumericError, TrainingDivergence
from .hsidata import HsiCube, augment
from .network import ManConfig, ManParams, init_man, man_forward
from .noise import (COMPLEX_KINDS, NoiseSpec, add_complex, add_gaussian,
                    add_noniid_gaussian, apply_noise, sample_sigma)
from .tensor import Tape, Tensor, backward

STAGE_NOISE_KINDS = ("gaussian_fixed", "gaussian_train_set", "gaussian_blind",
                     "noniid_gaussian") + COMPLEX_KINDS

_SHAPE_PRESERVING_AUGS = ("identity", "rot90", "rot180", "rot270", "flip_h", "flip_v")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all elements of the squared difference (differentiable)."""
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss: shape {pred.shape} vs {target.shape}")
    d = T.sub(pred, target)
    return T.mean_all(T.mul(d, d))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter shapes."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def init(params: Mapping[str, Tensor]) -> "AdamState":
        return AdamState(
            m={n: np.zeros_like(t.data) for n, t in params.items()},
            v={n: np.zeros_like(t.data) for n, t in params.items()},
        )


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray | None],
              state: AdamState, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, in place on params and state.

    A missing (None) gradient means "no update" for that tensor; a
    non-finite gradient aborts the whole step before anything mutates.
    """
    for name in params:
        g = grads.get(name)
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r}; step aborted")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


# ---------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class LrPlan:
    """Piecewise-constant rate: base, then x0.1 at each milestone epoch,
    never decaying below the floor."""

    base: float = 1e-3
    milestones: tuple[int, ...] = (5, 10)
    floor: float = 1e-5

    def __post_init__(self):
        if self.base < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.base}")


def lr_at_epoch(plan: LrPlan, epoch: int) -> float:
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    decays = sum(1 for m in plan.milestones if epoch >= m)
    lr = plan.base * (0.1 ** decays)
    return max(lr, min(plan.base, plan.floor))


@dataclass(frozen=True)
class Stage:
    """One curriculum stage: epoch count, noise kind, learning-rate plan."""

    epochs: int
    noise: str
    sigma: float = 50.0  # used by gaussian_fixed
    lr_plan: LrPlan = field(default_factory=LrPlan)

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.noise not in STAGE_NOISE_KINDS:
            raise ConfigError(f"unknown stage noise {self.noise!r}; choose from {STAGE_NOISE_KINDS}")


@dataclass(frozen=True)
class TrainConfig:
    stages: tuple[Stage, ...]
    batch_size: int = 16
    seed: int = 0
    precision: str = "float32"
    patch: int = 64
    stride: int = 64
    augment_data: bool = False
    grad_clip: float = 0.0   # global-norm clip; 0 disables
    checkpoint_every: int = 1  # epochs between checkpoints when a path is given

    def __post_init__(self):
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    def to_text(self) -> str:
        lines = [
            f"batch_size={self.batch_size}",
            f"seed={self.seed}",
            f"precision={self.precision}",
            f"patch={self.patch}",
            f"stride={self.stride}",
            f"augment={int(self.augment_data)}",
            f"grad_clip={self.grad_clip!r}",
            f"checkpoint_every={self.checkpoint_every}",
        ]
        for i, st in enumerate(self.stages):
            lines += [
                f"stage.{i}.epochs={st.epochs}",
                f"stage.{i}.noise={st.noise}",
                f"stage.{i}.sigma={st.sigma!r}",
                f"stage.{i}.lr={st.lr_plan.base!r}",
                f"stage.{i}.milestones=" + ",".join(str(m) for m in st.lr_plan.milestones),
                f"stage.{i}.lr_floor={st.lr_plan.floor!r}",
            ]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "TrainConfig":
        kv: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"malformed train config line: {line!r}")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
        stages = []
        i = 0
        while f"stage.{i}.epochs" in kv:
            ms = kv.get(f"stage.{i}.milestones", "")
            milestones = tuple(int(m) for m in ms.split(",") if m != "")
            stages.append(Stage(
                epochs=int(kv[f"stage.{i}.epochs"]),
                noise=kv.get(f"stage.{i}.noise", "gaussian_fixed"),
                sigma=float(kv.get(f"stage.{i}.sigma", "50")),
                lr_plan=LrPlan(base=float(kv.get(f"stage.{i}.lr", "1e-3")),
                               milestones=milestones,
                               floor=float(kv.get(f"stage.{i}.lr_floor", "1e-5"))),
            ))
            i += 1
        if not stages:
            raise ConfigError("train config defines no stages")
        return TrainConfig(
            stages=tuple(stages),
            batch_size=int(kv.get("batch_size", "16")),
            seed=int(kv.get("seed", "0")),
            precision=kv.get("precision", "float32"),
            patch=int(kv.get("patch", "64")),
            stride=int(kv.get("stride", "64")),
            augment_data=bool(int(kv.get("augment", "0"))),
            grad_clip=float(kv.get("grad_clip", "0")),
            checkpoint_every=int(kv.get("checkpoint_every", "1")),
        )


def paper_schedule(seed: int = 0) -> TrainConfig:
    """The published full-scale plan: 20 epochs at sigma 50, 40 blind
    epochs over the sigma set, 30 complex epochs; lr restarts at 1e-3
    per stage with x0.1 decays down to 1e-5."""
    return TrainConfig(stages=(
        Stage(20, "gaussian_fixed", sigma=50.0, lr_plan=LrPlan(1e-3, (5, 10))),
        Stage(40, "gaussian_train_set", lr_plan=LrPlan(1e-3, (10, 20))),
        Stage(30, "mixture", lr_plan=LrPlan(1e-3, (5, 10))),
    ), seed=seed)


def desk_schedule(epochs: tuple[int, int, int] = (16, 3, 3), batch_size: int = 4,
                  seed: int = 0, patch: int = 32, stride: int = 32) -> TrainConfig:
    """Scaled-down three-stage schedule for desk-scale runs: a long
    fixed-sigma stage decaying late, then short blind and complex
    fine-tunes at a tenth of the rate."""
    first = Stage(epochs[0], "gaussian_fixed", sigma=50.0,
                  lr_plan=LrPlan(1e-3, (max(1, (4 * epochs[0]) // 5),
                                        max(2, epochs[0] - 1))))
    return TrainConfig(stages=(
        first,
        Stage(epochs[1], "gaussian_train_set",
              lr_plan=LrPlan(1e-4, (max(1, epochs[1] - 1),))),
        Stage(epochs[2], "mixture",
              lr_plan=LrPlan(1e-4, (max(1, epochs[2] - 1),))),
    ), batch_size=batch_size, seed=seed, patch=patch, stride=stride)


# ---------------------------------------------------------------------------
# training loops


def corrupt_for_stage(clean: HsiCube, stage: Stage, item_seed: int) -> HsiCube:
    """Fresh corruption for one training item, pure in (clean, stage, seed)."""
    k = stage.noise
    if k == "gaussian_fixed":
        return add_gaussian(clean, stage.sigma, seed=item_seed)
    if k == "gaussian_train_set":
        return add_gaussian(clean, sample_sigma("train_set", item_seed), seed=item_seed)
    if k == "gaussian_blind":
        return apply_noise(clean, NoiseSpec("gaussian_blind", seed=item_seed))
    if k == "noniid_gaussian":
        return add_noniid_gaussian(clean, seed=item_seed)
    return add_complex(clean, k, seed=item_seed)


def _epoch_rng(seed: int, stage_index: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([0x545241, seed, stage_index, epoch]))


def _clip_grads(grads: dict[str, np.ndarray | None], max_norm: float) -> None:
    total = 0.0
    for g in grads.values():
        if g is not None:
            total += float(np.sum(g.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for name, g in grads.items():
            if g is not None:
                grads[name] = g * factor


def train_stage(params: ManParams, net_cfg: ManConfig, dataset: Sequence[HsiCube],
                stage: Stage, tcfg: TrainConfig, stage_index: int = 0,
                adam: AdamState | None = None, start_epoch: int = 0,
                on_epoch_end: Callable[[int, int, float], None] | None = None,
                log: Callable[[str], None] | None = None) -> tuple[ManParams, list[float]]:
    """Run one curriculum stage; returns the model and per-epoch mean loss.

    Each epoch reshuffles the data and re-corrupts every patch with fresh
    noise. A non-finite loss or gradient aborts with a diagnostic.
    """
    if not dataset:
        raise ContractError("training dataset is empty")
    T.tune_allocator()
    tensors = params.tensors()
    if adam is None:
        adam = AdamState.init(tensors)
    dtype = tcfg.dtype
    losses: list[float] = []
    n = len(dataset)
    for epoch in range(start_epoch, stage.epochs):
        rng = _epoch_rng(tcfg.seed, stage_index, epoch)
        perm = rng.permutation(n)
        item_seeds = rng.integers(0, 2 ** 62, size=n)
        aug_picks = rng.integers(0, len(_SHAPE_PRESERVING_AUGS), size=n)
        lr = lr_at_epoch(stage.lr_plan, epoch)
        epoch_losses = []
        for lo in range(0, n, tcfg.batch_size):
            idxs = perm[lo:lo + tcfg.batch_size]
            clean_stack, noisy_stack = [], []
            for idx in idxs:
                cube = dataset[idx]
                if tcfg.augment_data:
                    cube = augment(cube, _SHAPE_PRESERVING_AUGS[aug_picks[idx]])
                noisy = corrupt_for_stage(cube, stage, int(item_seeds[idx]))
                clean_stack.append(cube.data)
                noisy_stack.append(noisy.data)
            x = Tensor(np.stack(noisy_stack)[:, None].astype(dtype))
            y = Tensor(np.stack(clean_stack)[:, None].astype(dtype))
            try:
                with Tape() as tape:
                    out = man_forward(x, params, net_cfg)
                    loss = mse_loss(out, y)
                loss_val = float(loss.data)
                if not math.isfinite(loss_val):
                    raise NumericError(f"loss = {loss_val}")
                backward(loss, tape)
            except NumericError as e:
                raise TrainingDivergence(
                    f"diverged at stage {stage_index} epoch {epoch} "
                    f"step {lo // tcfg.batch_size}: {e}") from e
            grads: dict[str, np.ndarray | None] = {name: t.grad for name, t in tensors.items()}
            if tcfg.grad_clip > 0:
                _clip_grads(grads, tcfg.grad_clip)
            adam_step(tensors, grads, adam, lr)
            params.zero_grads()
            epoch_losses.append(loss_val)
        mean_loss = float(np.mean(epoch_losses))
        losses.append(mean_loss)
        if log:
            log(f"stage {stage_index} epoch {epoch}: lr={lr:g} loss={mean_loss:.6g}")
        if on_epoch_end:
            on_epoch_end(stage_index, epoch, mean_loss)
    return params, losses


@dataclass
class TrainResult:
    params: ManParams
    config: ManConfig
    history: list[tuple[int, int, float]]  # (stage, epoch, mean loss)

    def history_csv(self) -> str:
        out = "stage,epoch,loss\n"
        for s, e, l in self.history:
            out += f"{s},{e},{l!r}\n"
        return out


def _save_checkpoint(path, params: ManParams, net_cfg: ManConfig, adam: AdamState,
                     stage_index: int, epochs_done: int) -> None:
    extra = {"train.stage": str(stage_index), "train.epoch": str(epochs_done),
             "adam.step": str(adam.step)}
    extra_tensors = {}
    for name in adam.m:
        extra_tensors[f"adam.m.{name}"] = adam.m[name]
        extra_tensors[f"adam.v.{name}"] = adam.v[name]
    save_model(path, params, net_cfg, extra=extra, extra_tensors=extra_tensors)


def load_checkpoint(path, dtype=np.float32) -> tuple[ManParams, ManConfig, AdamState, int, int]:
    """Restore (params, config, adam, stage_index, epochs_done_in_stage)."""
    params, net_cfg, extra, extra_tensors = load_model(path, dtype=dtype)
    adam = AdamState.init(params.tensors())
    adam.step = int(extra.get("adam.step", "0"))
    for name in adam.m:
        mk, vk = f"adam.m.{name}", f"adam.v.{name}"
        if mk in extra_tensors:
            adam.m[name] = extra_tensors[mk].astype(dtype)
        if vk in extra_tensors:
            adam.v[name] = extra_tensors[vk].astype(dtype)
    return params, net_cfg, adam, int(extra.get("train.stage", "0")), \
        int(extra.get("train.epoch", "0"))


def run_schedule(net_cfg: ManConfig, dataset: Sequence[HsiCube], tcfg: TrainConfig,
                 checkpoint_path=None, resume=None,
                 log: Callable[[str], None] | None = None) -> TrainResult:
    """Train a freshly initialized model through every stage.

    With ``checkpoint_path`` set, a resumable checkpoint is written every
    ``checkpoint_every`` epochs; ``resume`` restarts from such a file and
    reproduces the uninterrupted run bitwise.
    """
    dtype = tcfg.dtype
    if resume is not None:
        params, net_cfg, adam, start_stage, start_epoch = load_checkpoint(resume, dtype=dtype)
    else:
        params = init_man(net_cfg, seed=tcfg.seed, dtype=dtype)
        adam = AdamState.init(params.tensors())
        start_stage, start_epoch = 0, 0
    history: list[tuple[int, int, float]] = []

    def make_hook(stage_index):
        def hook(si, epoch, mean_loss):
            history.append((si, epoch, mean_loss))
            done = epoch + 1
            if checkpoint_path is not None and tcfg.checkpoint_every > 0 \
                    and done % tcfg.checkpoint_every == 0:
                _save_checkpoint(checkpoint_path, params, net_cfg, adam, si, done)
        return hook

    for si in range(start_stage, len(tcfg.stages)):
        stage = tcfg.stages[si]
        first = start_epoch if si == start_stage else 0
        if first >= stage.epochs:
            continue
        params, _ = train_stage(params, net_cfg, dataset, stage, tcfg, stage_index=si,
                                adam=adam, start_epoch=first,
                                on_epoch_end=make_hook(si), log=log)
    if checkpoint_path is not None:
        last_stage = len(tcfg.stages) - 1
        _save_checkpoint(checkpoint_path, params, net_cfg, adam, last_stage,
                         tcfg.stages[last_stage].epochs)
    return TrainResult(params=params, config=net_cfg, history=history)
