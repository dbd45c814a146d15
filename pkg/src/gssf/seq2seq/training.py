"""Teacher-forced training with adaptive-moment updates and early stopping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..ink import RawInk, extract_features, resample_and_normalize
from .model import (ArchConfig, ModelParams, init_params, loss_and_gradients,
                    teacher_forced_accuracy)
from .vocab import build_vocabulary


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    arch: ArchConfig = field(default_factory=ArchConfig)
    learning_rate: float = 1e-3
    clip_norm: float = 5.0
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 20
    val_fraction: float = 0.2


class _Adam:
    """Adaptive moment estimation over the named parameter tensors."""

    def __init__(self, tensors: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in tensors:
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            tensors[name] -= self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)


def _clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> None:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if clip_norm > 0 and total > clip_norm:
        scale = clip_norm / total
        for g in grads.values():
            g *= scale


def _stratified_split(label_keys: list[tuple], val_fraction: float,
                      rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Per-label shuffle split; every label keeps at least one training sample.

    Degenerate corpora where no validation sample can be held out fall back
    to validating on the training set itself (memorization fixtures)."""
    groups: dict[tuple, list[int]] = {}
    for i, key in enumerate(label_keys):
        groups.setdefault(key, []).append(i)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for key in sorted(groups):
        members = groups[key]
        perm = rng.permutation(len(members))
        n_val = min(int(round(val_fraction * len(members))), len(members) - 1)
        chosen = {members[perm[j]] for j in range(n_val)}
        for i in members:
            (val_idx if i in chosen else train_idx).append(i)
    if not val_idx:
        val_idx = list(train_idx)
    return sorted(train_idx), sorted(val_idx)


def train(dataset: list[tuple[RawInk, list[str]]], config: TrainConfig, seed: int,
          on_epoch: Callable[[dict], None] | None = None) -> ModelParams:
    """Train a recognizer on labelled ink; deterministic for a fixed seed.

    Returns the epoch snapshot with the best held-out token accuracy
    (accuracy ties resolved toward the lower training loss). Raises
    ``TrainingError`` when the loss diverges.
    """
    if not dataset:
        raise TrainingError("empty dataset")
    if any(label is None or ink is None for ink, label in dataset):
        raise TrainingError("every sample needs ink and a label")
    vocab = build_vocabulary([list(label) for _, label in dataset])
    arch = config.arch
    samples = []
    for ink, label in dataset:
        feats = extract_features(resample_and_normalize(ink, arch.resample_spacing))
        samples.append((feats, vocab.encode(list(label))))
    label_keys = [tuple(label) for _, label in dataset]
    split_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    train_idx, val_idx = _stratified_split(label_keys, config.val_fraction, split_rng)
    val_batch = [samples[i] for i in val_idx]

    params = init_params(arch, vocab, seed)
    opt = _Adam(params.tensors, config.learning_rate)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    best_key = (-1.0, -math.inf)
    best_tensors = {k: v.copy() for k, v in params.tensors.items()}
    best_acc = -1.0
    best_acc_epoch = 0

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_idx))
        epoch_tokens = 0
        epoch_ce = 0.0
        for start in range(0, len(order), config.batch_size):
            chunk = [samples[train_idx[j]] for j in order[start : start + config.batch_size]]
            try:
                loss, grads = loss_and_gradients(params, chunk)
            except Exception as exc:
                raise TrainingError(f"training diverged at epoch {epoch}: {exc}") from exc
            _clip_gradients(grads, config.clip_norm)
            opt.step(params.tensors, grads)
            n_tok = sum(len(t) + 1 for _, t in chunk)
            epoch_tokens += n_tok
            epoch_ce += loss * n_tok
        epoch_loss = epoch_ce / epoch_tokens
        val_acc = teacher_forced_accuracy(params, val_batch)
        if on_epoch is not None:
            on_epoch({"epoch": epoch, "loss": epoch_loss, "val_token_acc": val_acc})
        if (val_acc, -epoch_loss) > best_key:
            best_key = (val_acc, -epoch_loss)
            best_tensors = {k: v.copy() for k, v in params.tensors.items()}
        if val_acc > best_acc:
            best_acc = val_acc
            best_acc_epoch = epoch
        if epoch - best_acc_epoch >= config.patience:
            break
    return ModelParams(arch, vocab, best_tensors)
