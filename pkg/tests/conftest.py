import pytest

from funduslab.config import TrainingConfig
from funduslab.data import make_synthetic
from funduslab.pipeline import train_system


@pytest.fixture(scope="session")
def tiny_config() -> TrainingConfig:
    """Minimal schedule: quality is irrelevant, mechanics are the point."""
    return TrainingConfig.desk(
        seed=0,
        pretext_epochs=2,
        seg_epochs=2,
        grading_epochs=3,
        attention_epochs=2,
        adapt_epochs=2,
    )


@pytest.fixture(scope="session")
def tiny_system(tiny_config):
    source, _ = make_synthetic(seed=0, n=12, size=64, domain_shift=0.0)
    return train_system(source, tiny_config)
