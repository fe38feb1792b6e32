"""Objective, optimizer, schedule, and the train/eval loops.

The optimizer owns the freeze contract: it builds moment buffers only for
trainable tensors and refuses to run if a frozen tensor somehow acquired a
gradient. Training records per-epoch metrics for both splits and hashes
every frozen tensor before and after so the freeze can be audited.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor, Tape
from .errors import ConfigError, ContractError, NumericError
from .model import POLICIES, VideoModel
from .storage import array_sha256, save_checkpoint


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label] in stable log-sum-exp form."""
    k = logits.shape[0]
    if logits.ndim != 1:
        raise ContractError(f"cross_entropy: logits must be 1-D, got {logits.shape}")
    if not (0 <= label < k):
        raise ContractError(f"cross_entropy: label {label} outside [0, {k})")
    # constant shift: gradient is exact for any constant, max gives stability
    shift = Tensor(np.max(logits.data))
    z = logits - shift
    lse = ag.log(ag.reduce_sum(ag.exp(z)))
    onehot = np.zeros(k)
    onehot[label] = 1.0
    return lse - ag.reduce_sum(z * Tensor(onehot))


def batch_loss(model: VideoModel, videos: np.ndarray, labels: np.ndarray) -> tuple[Tensor, int]:
    """(mean cross-entropy over the batch, number of top-1 hits)."""
    losses = []
    hits = 0
    for video, label in zip(videos, labels):
        logits, _ = model.forward(video)
        losses.append(cross_entropy(logits, int(label)))
        hits += int(np.argmax(logits.data) == label)
    total = losses[0]
    for piece in losses[1:]:
        total = total + piece
    return total * (1.0 / len(losses)), hits


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    warmup_epochs: int
    total_epochs: int
    peak_lr: float
    min_lr: float = 0.0

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ConfigError("Schedule: total_epochs must be >= 1")
        if not (0 <= self.warmup_epochs <= self.total_epochs):
            raise ConfigError("Schedule: warmup_epochs outside [0, total_epochs]")
        if self.peak_lr < 0 or self.min_lr < 0:
            raise ConfigError("Schedule: learning rates must be >= 0")


def lr_at(schedule: Schedule, t: float) -> float:
    """Learning rate at run fraction t in [0, 1]: linear warmup then cosine."""
    if not (0.0 <= t <= 1.0):
        raise ContractError(f"lr_at: t={t} outside [0, 1]")
    warm = schedule.warmup_epochs / schedule.total_epochs
    if warm > 0.0 and t < warm:
        return schedule.peak_lr * (t / warm)
    u = (t - warm) / (1.0 - warm) if warm < 1.0 else 1.0
    span = schedule.peak_lr - schedule.min_lr
    return schedule.min_lr + span * 0.5 * (1.0 + math.cos(math.pi * u))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class AdamW:
    """Decoupled-weight-decay adaptive optimizer over named tensors."""

    def __init__(self, named: dict[str, Tensor], trainable: dict[str, bool],
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        missing = sorted(set(trainable) - set(named)) + sorted(set(named) - set(trainable))
        if missing:
            raise ContractError(f"AdamW: mask/tensor name mismatch on {missing[:3]}")
        self.named = dict(named)
        self.trainable = dict(trainable)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.moment1 = {n: np.zeros_like(t.data)
                        for n, t in named.items() if trainable[n]}
        self.moment2 = {n: np.zeros_like(t.data)
                        for n, t in named.items() if trainable[n]}

    def zero_grad(self) -> None:
        for t in self.named.values():
            t.grad = None

    def clip_global_norm(self, max_norm: float) -> float:
        """Scale trainable grads so their joint L2 norm is <= max_norm."""
        total = 0.0
        for name in self.moment1:
            g = self.named[name].grad
            if g is not None:
                total += float(np.sum(g * g))
        norm = math.sqrt(total)
        if max_norm > 0 and norm > max_norm:
            scale = max_norm / (norm + 1e-12)
            for name in self.moment1:
                g = self.named[name].grad
                if g is not None:
                    self.named[name].grad = g * scale
        return norm

    def step(self, lr: float) -> int:
        """Apply one update; returns the number of tensors updated."""
        for name, t in self.named.items():
            if not self.trainable[name] and t.grad is not None:
                raise ContractError(f"AdamW: frozen tensor {name!r} has a gradient")
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        updated = 0
        for name in self.moment1:
            t = self.named[name]
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            m = self.moment1[name]
            v = self.moment2[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            t.data = t.data - lr * ((m / c1) / (np.sqrt(v / c2) + self.eps)) \
                            - lr * self.weight_decay * t.data
            updated += 1
        return updated


# ---------------------------------------------------------------------------
# loops
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 50
    batch_size: int = 8
    peak_lr: float = 3e-3
    min_lr: float = 0.0
    warmup_epochs: int = 5
    weight_decay: float = 0.05
    clip_norm: float = 1.0
    policy: str = "full"
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(
                f"TrainSettings: epochs and batch_size must be >= 1, "
                f"got {self.epochs}, {self.batch_size}")
        if self.weight_decay < 0 or self.clip_norm <= 0:
            raise ConfigError(
                f"TrainSettings: weight_decay >= 0 and clip_norm > 0 required, "
                f"got {self.weight_decay}, {self.clip_norm}")
        if self.policy not in POLICIES:
            raise ConfigError(
                f"TrainSettings: unknown policy {self.policy!r}; "
                f"choose one of {POLICIES}")
        Schedule(self.warmup_epochs, self.epochs, self.peak_lr, self.min_lr)

    def schedule(self) -> Schedule:
        return Schedule(self.warmup_epochs, self.epochs, self.peak_lr, self.min_lr)


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)   # epoch/split/loss/top1/lr rows
    best_val_top1: float = 0.0
    best_epoch: int = -1
    frozen_before: dict[str, str] = field(default_factory=dict)
    frozen_after: dict[str, str] = field(default_factory=dict)

    @property
    def frozen_intact(self) -> bool:
        return self.frozen_before == self.frozen_after


def evaluate(model: VideoModel, videos: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(mean loss, top-1 accuracy) without recording gradients."""
    total = 0.0
    hits = 0
    for video, label in zip(videos, labels):
        logits, _ = model.forward(video)
        total += float(cross_entropy(logits, int(label)).data)
        hits += int(np.argmax(logits.data) == label)
    n = len(labels)
    return total / n, hits / n


def _frozen_hashes(model: VideoModel, trainable: dict[str, bool]) -> dict[str, str]:
    return {name: array_sha256(t.data)
            for name, t in model.named_tensors() if not trainable[name]}


def write_metrics_csv(path: str | Path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "split", "loss", "top1", "lr"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)


def train(model: VideoModel,
          train_videos: np.ndarray, train_labels: np.ndarray,
          val_videos: np.ndarray, val_labels: np.ndarray,
          settings: TrainSettings,
          out_dir: str | Path | None = None,
          log=None,
          keep: str = "final") -> TrainResult:
    """Train under the freeze policy; returns history + freeze audit.

    When out_dir is given, writes metrics.csv, checkpoints/best and
    checkpoints/final under it, plus frozen_report.json. ``keep`` decides
    which weights the in-memory model ends with: "final" (last epoch, the
    default) or "best" (restored from the best-val-top1 epoch); on-disk
    checkpoints always carry both.
    """
    if len(train_videos) == 0 or len(val_videos) == 0:
        raise ContractError("train: both splits must be non-empty")
    if keep not in ("final", "best"):
        raise ConfigError(f"train: keep must be 'final' or 'best', got {keep!r}")
    trainable = model.apply_policy(settings.policy)
    optim = AdamW(dict(model.named_tensors()), trainable,
                  weight_decay=settings.weight_decay)
    sched = settings.schedule()
    result = TrainResult(frozen_before=_frozen_hashes(model, trainable))

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        (out_path / "checkpoints").mkdir(parents=True, exist_ok=True)

    n_train = len(train_videos)
    steps_per_epoch = max(1, math.ceil(n_train / settings.batch_size))
    total_steps = settings.epochs * steps_per_epoch
    global_step = 0
    best_state: dict[str, np.ndarray] | None = None

    for epoch in range(settings.epochs):
        order = np.random.default_rng(
            [settings.shuffle_seed, epoch, 23]).permutation(n_train)
        epoch_loss = 0.0
        epoch_hits = 0
        last_lr = 0.0
        for start in range(0, n_train, settings.batch_size):
            chosen = order[start:start + settings.batch_size]
            optim.zero_grad()
            with Tape() as tape:
                loss, hits = batch_loss(model, train_videos[chosen], train_labels[chosen])
                loss_value = float(loss.data)
                if not np.isfinite(loss_value):
                    if out_path is not None:
                        save_checkpoint(out_path / "checkpoints" / "abort", model.state_dict())
                        (out_path / "abort.json").write_text(json.dumps(
                            {"epoch": epoch, "step": global_step, "loss": loss_value}))
                    raise NumericError(
                        f"train: non-finite loss {loss_value} at epoch {epoch}, "
                        f"step {global_step}")
                tape.backward(loss)
            optim.clip_global_norm(settings.clip_norm)
            global_step += 1
            last_lr = lr_at(sched, global_step / total_steps)
            optim.step(last_lr)
            epoch_loss += loss_value * len(chosen)
            epoch_hits += hits
        val_loss, val_top1 = evaluate(model, val_videos, val_labels)
        result.history.append({"epoch": epoch, "split": "train",
                               "loss": epoch_loss / n_train,
                               "top1": epoch_hits / n_train, "lr": last_lr})
        result.history.append({"epoch": epoch, "split": "val",
                               "loss": val_loss, "top1": val_top1, "lr": last_lr})
        if log is not None:
            log(f"epoch {epoch:3d}  train loss {epoch_loss / n_train:.4f} "
                f"top1 {epoch_hits / n_train:.3f}  val loss {val_loss:.4f} "
                f"top1 {val_top1:.3f}  lr {last_lr:.2e}")
        if val_top1 > result.best_val_top1 or result.best_epoch < 0:
            result.best_val_top1 = val_top1
            result.best_epoch = epoch
            if keep == "best":
                best_state = model.state_dict()
            if out_path is not None:
                save_checkpoint(out_path / "checkpoints" / "best", model.state_dict())

    result.frozen_after = _frozen_hashes(model, trainable)
    if out_path is not None:
        save_checkpoint(out_path / "checkpoints" / "final", model.state_dict())
        write_metrics_csv(out_path / "metrics.csv", result.history)
        (out_path / "frozen_report.json").write_text(json.dumps(
            {"intact": result.frozen_intact,
             "before": result.frozen_before, "after": result.frozen_after},
            indent=2) + "\n")
    if best_state is not None:
        model.load_state_dict(best_state)
    return result
