"""Optimizer construction and deterministic batching shared by trainers."""

from __future__ import annotations

import numpy as np
import torch

from .config import TrainingConfig


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def make_optimizer(params, config: TrainingConfig, lr: float | None = None):
    lr = config.learning_rate if lr is None else lr
    params = list(params)
    if config.optimizer == "adam":
        return torch.optim.Adam(params, lr=lr)
    return torch.optim.SGD(params, lr=lr, momentum=config.momentum)


def make_scheduler(optimizer, config: TrainingConfig, steps_per_epoch: int):
    """Cyclic schedule for SGD runs; Adam runs keep a flat rate."""
    if config.optimizer != "sgd":
        return None
    return torch.optim.lr_scheduler.CyclicLR(
        optimizer,
        base_lr=config.learning_rate,
        max_lr=config.cyclic_max_lr,
        step_size_up=max(1, steps_per_epoch * 2),
        cycle_momentum=True,
        base_momentum=config.momentum * 0.9,
        max_momentum=config.momentum,
    )


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def validation_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/validation index split; validation gets >= 1 item."""
    rng = np.random.default_rng([seed, 0x5A1])
    order = rng.permutation(n)
    n_val = max(1, int(round(fraction * n)))
    if n_val >= n:
        n_val = n - 1
    return order[n_val:], order[:n_val]
