"""Training loop: Adam on the joint loss with an annealed pseudo-fragment
schedule.

Early epochs reveal a sampled extra fraction of residues as if they were
fragments, which shrinks linearly to zero; after the anneal window only the
real fragments condition the model. Everything is driven by one seeded
generator, so a (seed, data, config) triple fixes the parameter trajectory
bit for bit.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as mdl
from .data import ProteinRecord

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 5e-4
    anneal_epochs: int = 10
    anneal_max_fraction: float = 0.85
    anneal_literal: bool = False
    grad_clip_norm: float = 1.0  # 0 disables clipping
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        # zero is allowed for diagnostics (a no-op optimizer step)
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.anneal_epochs < 1:
            raise ValueError("anneal_epochs must be >= 1")
        if not 0.0 <= self.anneal_max_fraction <= 1.0:
            raise ValueError("anneal_max_fraction must lie in [0, 1]")
        if self.grad_clip_norm < 0:
            raise ValueError("grad_clip_norm must be >= 0")


def anneal_fraction(epoch: int, config: TrainConfig) -> float:
    """Pseudo-fragment fraction for a 1-based epoch: a linear ramp from
    near anneal_max_fraction down to zero across the anneal window, then
    zero (real fragments only).

    anneal_literal switches to the ramp max*(window-epoch)/epoch, clamped
    into [0, 1]; it diverges for small epochs and is offered for
    side-by-side inspection only.
    """
    if epoch < 1:
        raise ValueError("epoch is 1-based")
    if epoch > config.anneal_epochs:
        return 0.0
    if config.anneal_literal:
        return min(1.0, config.anneal_max_fraction * (config.anneal_epochs - epoch) / epoch)
    return config.anneal_max_fraction * (config.anneal_epochs - epoch) / config.anneal_epochs


def sample_pseudo_fragments(
    record: ProteinRecord, fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Real fragments plus floor(fraction*N) extra residues sampled without
    replacement from the free positions (capped at all of them)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    free = record.free_indices()
    count = min(int(fraction * record.n), free.size)
    if count == 0:
        return record.fragments.copy()
    extra = rng.choice(free, size=count, replace=False)
    return np.sort(np.concatenate([record.fragments, extra]))


@dataclass
class OptimizerState:
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def init_optimizer(params: mdl.ModelParams) -> OptimizerState:
    state = OptimizerState()
    for name, tensor in mdl.named_tensors(params):
        state.first_moment[name] = np.zeros_like(tensor.data)
        state.second_moment[name] = np.zeros_like(tensor.data)
    return state


def global_grad_norm(params: mdl.ModelParams) -> float:
    total = 0.0
    for _, tensor in mdl.named_tensors(params):
        if tensor.grad is not None:
            total += float((tensor.grad * tensor.grad).sum())
    return float(np.sqrt(total))


def train_step(
    batch: list[ProteinRecord],
    params: mdl.ModelParams,
    opt: OptimizerState,
    config: mdl.ModelConfig,
    train_config: TrainConfig,
    rng: np.random.Generator,
    fragment_sets: list[np.ndarray] | None = None,
) -> float:
    """One optimizer step on the mean loss over the batch. fragment_sets,
    when given, override each record's fragments (pseudo-fragment sampling
    happens in fit, not here)."""
    if not batch:
        raise ValueError("empty batch")
    for _, tensor in mdl.named_tensors(params):
        tensor.zero_grad()

    total = None
    for bi, record in enumerate(batch):
        frags = fragment_sets[bi] if fragment_sets is not None else None
        pred = mdl.forward(record, params, config, rng=rng, fragments=frags)
        term = mdl.loss(record, pred, config.coord_loss_weight)
        if not np.isfinite(term.data):
            raise RuntimeError(f"non-finite loss on record {record.id!r}; step aborted")
        total = term if total is None else total + term
    mean_loss = total * (1.0 / len(batch))
    ad.backward(mean_loss)

    clip = train_config.grad_clip_norm
    scale = 1.0
    if clip > 0:
        norm = global_grad_norm(params)
        if norm > clip:
            scale = clip / norm

    opt.step += 1
    t = opt.step
    lr = train_config.learning_rate
    for name, tensor in mdl.named_tensors(params):
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if scale != 1.0:
            g = g * scale
        m = opt.first_moment[name]
        v = opt.second_moment[name]
        m[:] = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v[:] = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return float(mean_loss.data)


def validation_loss(
    records: list[ProteinRecord],
    params: mdl.ModelParams,
    config: mdl.ModelConfig,
    rng: np.random.Generator,
) -> float | None:
    if not records:
        return None
    with ad.no_grad():
        total = 0.0
        for record in records:
            pred = mdl.forward(record, params, config, rng=rng)
            total += float(mdl.loss(record, pred, config.coord_loss_weight).data)
    return total / len(records)


@dataclass
class FitResult:
    log: list[dict]
    best_val_loss: float | None
    best_tensors: dict[str, np.ndarray]  # snapshot by parameter name


def fit(
    train_records: list[ProteinRecord],
    val_records: list[ProteinRecord],
    params: mdl.ModelParams,
    config: mdl.ModelConfig,
    train_config: TrainConfig,
) -> FitResult:
    """Epoch loop: seeded shuffling, annealed pseudo-fragments, per-epoch
    validation, best-validation parameter snapshot. The returned log has one
    dict per epoch; wall_time is the only non-deterministic field."""
    if not train_records:
        raise ValueError("training split is empty")
    rng = np.random.default_rng(train_config.seed)
    opt = init_optimizer(params)
    log: list[dict] = []
    best_val: float | None = None
    best_tensors = {name: t.data.copy() for name, t in mdl.named_tensors(params)}

    for epoch in range(1, train_config.epochs + 1):
        started = time.monotonic()
        fraction = anneal_fraction(epoch, train_config)
        order = rng.permutation(len(train_records))
        epoch_losses = []
        for lo in range(0, len(order), train_config.batch_size):
            batch = [train_records[i] for i in order[lo : lo + train_config.batch_size]]
            frags = [sample_pseudo_fragments(r, fraction, rng) for r in batch]
            epoch_losses.append(
                train_step(batch, params, opt, config, train_config, rng, fragment_sets=frags)
            )
        val = validation_loss(val_records, params, config, rng)
        if val is not None and (best_val is None or val < best_val):
            best_val = val
            best_tensors = {name: t.data.copy() for name, t in mdl.named_tensors(params)}
        elif val is None:
            best_tensors = {name: t.data.copy() for name, t in mdl.named_tensors(params)}
        log.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)),
                "val_loss": val,
                "anneal_fraction": fraction,
                "wall_time": time.monotonic() - started,
            }
        )
        logger.info(
            "epoch %d train %.6f val %s anneal %.3f",
            epoch,
            log[-1]["train_loss"],
            "-" if val is None else f"{val:.6f}",
            fraction,
        )
    return FitResult(log=log, best_val_loss=best_val, best_tensors=best_tensors)


def apply_tensors(params: mdl.ModelParams, tensors: dict[str, np.ndarray]) -> None:
    """Load a fit snapshot back into a parameter tree."""
    for name, tensor in mdl.named_tensors(params):
        tensor.data = tensors[name].copy()


def configs_from_mapping(mapping: dict[str, str]) -> tuple[mdl.ModelConfig, TrainConfig]:
    """Build both configs from a flat key=value mapping (config files).
    The `seed` key feeds both configs; unknown keys are errors."""
    model_fields = {f.name: f for f in dataclasses.fields(mdl.ModelConfig)}
    train_fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    model_kwargs: dict = {}
    train_kwargs: dict = {}
    for key, raw in mapping.items():
        known = False
        for fields, kwargs in ((model_fields, model_kwargs), (train_fields, train_kwargs)):
            if key in fields:
                kwargs[key] = _coerce(key, raw, fields[key].type)
                known = True
        if not known:
            raise ValueError(f"unknown config key {key!r}")
    return mdl.ModelConfig(**model_kwargs), TrainConfig(**train_kwargs)


def _coerce(key: str, raw: str, annotation) -> object:
    text = str(annotation)
    if "bool" in text:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if "int" in text:
        return int(raw)
    if "float" in text:
        return float(raw)
    return raw
