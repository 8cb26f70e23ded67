"""Probe training: Adam/SGD with decoupled weight decay, cosine schedule,
global-norm clipping, and best-validation checkpointing.

Everything is deterministic given the config seed: one rng drives the epoch
shuffles, batches are visited in shuffle order, and gradient reduction is the
tape's fixed reverse pass, so two runs with the same seed produce bit-identical
parameters and history on one machine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, ContractError, NumericError
from .probes import ProbeModel, forward_batch
from .tensor import Tape, backward

OPTIMIZERS = ("adam", "sgd")
SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    momentum: float = 0.0
    lr_schedule: str = "cosine"
    warmup_epochs: int = 5
    grad_clip_norm: float | None = 1.0
    seed: int = 42
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        # lr 0 is allowed: a zero step must leave parameters bit-identical
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("adam betas must lie in (0, 1)")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in SCHEDULES:
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ConfigError("grad_clip_norm must be positive or None")

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def schedule_lr(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for ``epoch`` (0-based), stepped per epoch.

    Linear warmup to the configured rate over ``warmup_epochs``, then either
    constant or cosine decay to zero at the final epoch.
    """
    if cfg.warmup_epochs > 0 and epoch < cfg.warmup_epochs:
        return cfg.learning_rate * (epoch + 1) / cfg.warmup_epochs
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    span = max(cfg.epochs - cfg.warmup_epochs, 1)
    progress = min((epoch - cfg.warmup_epochs) / span, 1.0)
    return cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))


class OptimizerState:
    """Per-parameter moment buffers plus the shared step counter."""

    def __init__(self):
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def _buffers(state: OptimizerState, name: str, template: np.ndarray,
             second: bool) -> tuple[np.ndarray, np.ndarray | None]:
    if name not in state.m:
        state.m[name] = np.zeros_like(template, dtype=np.float64)
        if second:
            state.v[name] = np.zeros_like(template, dtype=np.float64)
    return state.m[name], state.v.get(name)


def adam_step(params, grads, state: OptimizerState, cfg: TrainConfig,
              lr: float | None = None) -> None:
    """One bias-corrected Adam update with decoupled weight decay, in place.

    ``params``/``grads`` are dicts of numpy arrays keyed by parameter name.
    Moments are kept at float64 regardless of parameter dtype.
    """
    if lr is None:
        lr = cfg.learning_rate
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads[name].astype(np.float64)
        m, v = _buffers(state, name, p, second=True)
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        if cfg.weight_decay > 0.0:
            update = update + cfg.weight_decay * p.astype(np.float64)
        p -= (lr * update).astype(p.dtype)


def sgd_step(params, grads, state: OptimizerState, cfg: TrainConfig,
             lr: float | None = None) -> None:
    """Momentum SGD with the same decoupled weight-decay convention."""
    if lr is None:
        lr = cfg.learning_rate
    state.step += 1
    for name, p in params.items():
        g = grads[name].astype(np.float64)
        buf, _ = _buffers(state, name, p, second=False)
        buf *= cfg.momentum
        buf += g
        update = buf
        if cfg.weight_decay > 0.0:
            update = update + cfg.weight_decay * p.astype(np.float64)
        p -= (lr * update).astype(p.dtype)


def clip_global_norm(grads, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2))
                          for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = float("nan")

    def to_dict(self) -> dict:
        return {"train_loss": self.train_loss, "val_acc": self.val_acc,
                "lr": self.lr, "best_epoch": self.best_epoch,
                "best_val_acc": self.best_val_acc}


def predict_batched(model: ProbeModel, features, batch_size: int = 64) -> np.ndarray:
    """Argmax predictions over a feature list, computed tape-free.

    Ties break toward the lowest class index (np.argmax convention), which
    matters for near-tied symmetric pairs.
    """
    preds = []
    for start in range(0, len(features), batch_size):
        logits = forward_batch(model, features[start:start + batch_size])
        preds.append(np.argmax(logits.data, axis=-1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def _split_accuracy(model: ProbeModel, features, labels: np.ndarray) -> float:
    return float(np.mean(predict_batched(model, features) == labels))


def train(model: ProbeModel, dataset, cfg: TrainConfig) -> tuple[ProbeModel, TrainHistory]:
    """Train ``model`` on the dataset's train split.

    Keeps the parameters from the epoch with the best validation accuracy
    (strictly-greater improvements, so the earliest best wins). With an empty
    validation split the final parameters are kept instead. Raises
    NumericError with epoch/batch/lr diagnostics if the loss goes non-finite,
    and ContractError for an empty train split or a label-space mismatch.
    """
    examples = dataset.examples("train")
    if not examples:
        raise ContractError("training split is empty")
    num_classes = model.config.num_classes
    if dataset.manifest.num_classes != num_classes:
        raise ContractError(
            f"probe expects {num_classes} classes but manifest defines "
            f"{dataset.manifest.num_classes}")

    features = [f for f, _ in examples]
    labels = np.array([y for _, y in examples], dtype=np.int64)
    val_examples = dataset.examples("val")
    val_features = [f for f, _ in val_examples]
    val_labels = np.array([y for _, y in val_examples], dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState()
    step_fn = adam_step if cfg.optimizer == "adam" else sgd_step
    history = TrainHistory()
    best_params: dict[str, np.ndarray] | None = None

    for epoch in range(cfg.epochs):
        lr = schedule_lr(cfg, epoch)
        order = rng.permutation(len(features))
        epoch_loss = 0.0
        for batch_idx, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            batch = [features[i] for i in idx]
            model.zero_grad()
            with Tape() as tape:
                logits = forward_batch(model, batch)
                loss = ops.cross_entropy(logits, labels[idx])
            loss_val = loss.item()
            if not math.isfinite(loss_val):
                raise NumericError(
                    f"non-finite loss {loss_val} at epoch {epoch}, "
                    f"batch {batch_idx}, lr {lr:.3e}")
            backward(loss)
            # free this batch's graph now; cyclic collection lags by
            # gigabytes over a 50-epoch run otherwise
            tape.release()
            grads = {name: p.grad for name, p in model.params.items()}
            if cfg.grad_clip_norm is not None:
                clip_global_norm(grads, cfg.grad_clip_norm)
            live = {name: p.data for name, p in model.params.items()}
            step_fn(live, grads, state, cfg, lr=lr)
            epoch_loss += loss_val * len(idx)

        history.train_loss.append(epoch_loss / len(features))
        history.lr.append(lr)
        if val_features and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1):
            acc = _split_accuracy(model, val_features, val_labels)
            history.val_acc.append(acc)
            if not (acc <= history.best_val_acc):  # NaN-safe strict improvement
                history.best_val_acc = acc
                history.best_epoch = epoch
                best_params = {k: v.data.copy() for k, v in model.params.items()}
        else:
            history.val_acc.append(float("nan"))

    if best_params is not None:
        model.load_param_arrays(best_params)
    return model, history
