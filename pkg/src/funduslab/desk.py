"""Pinned desk-scale reference experiments.

These are the fixed-seed protocols the acceptance suite and the demo CLI
share: small synthetic datasets, short schedules, and hyperparameters
chosen so each mechanism's direction is visible within minutes on CPU.
Changing anything here changes the reference results.
"""

from __future__ import annotations

from .config import TrainingConfig
from .data import make_synthetic
from .data.types import DatasetSplit


def uda_config(seed: int = 0) -> TrainingConfig:
    return TrainingConfig.desk(
        seed=seed,
        pretext_epochs=5,
        seg_epochs=6,
        adapt_epochs=10,
        lambda_ent=1e-4,
        lambda_adv=0.2,
        lambda_w=0.01,
        eta=10.0,
        n_critic=5,
    )


def uda_data(seed: int = 0) -> tuple[DatasetSplit, DatasetSplit]:
    """Small labeled source (16 train images) against a 40-image shifted
    target; scarcity is what gives adaptation room to help."""
    source, target = make_synthetic(seed=seed, n=40, size=64, domain_shift=0.6)
    source = DatasetSplit(source.name, source.train[:16], source.test)
    return source, target


def run_uda_reference(seed: int = 0) -> dict:
    from .uda import run_uda_ablation

    source, target = uda_data(seed)
    return run_uda_ablation(source, target, uda_config(seed))


def grading_config(seed: int = 0) -> TrainingConfig:
    return TrainingConfig.desk(
        seed=seed,
        pretext_epochs=5,
        seg_epochs=6,
        grading_epochs=18,
        attention_epochs=10,
        validation_fraction=0.2,
    )


def grading_data(seed: int = 0) -> DatasetSplit:
    source, _ = make_synthetic(seed=seed, n=120, size=64, domain_shift=0.0)
    return source


def pretrain_config(seed: int = 0) -> TrainingConfig:
    return TrainingConfig.desk(seed=seed, pretext_epochs=6, seg_epochs=8)


def simulation_config(seed: int = 0) -> TrainingConfig:
    return TrainingConfig.desk(
        seed=seed,
        pretext_epochs=5,
        seg_epochs=6,
        grading_epochs=14,
        attention_epochs=8,
        validation_fraction=0.2,
    )


def simulation_data(seed: int = 0) -> DatasetSplit:
    source, _ = make_synthetic(seed=seed, n=72, size=64, domain_shift=0.0)
    return source
