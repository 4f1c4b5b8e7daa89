from .losses import (
    UdaWeights,
    batch_to_patches,
    binary_prob_pair,
    domain_adv_loss,
    entropy_loss,
    entropy_map,
    gradient_penalty,
    join_patches,
    patch_adv_loss,
    self_information_map,
    split_patches,
    total_objective,
    wasserstein_loss,
)
from .networks import DomainCritic, EntropyDiscriminator, PatchDiscriminator, flatten_features
from .train import (
    VARIANTS,
    PatchAdversary,
    build_discriminators,
    clone_models,
    run_uda_ablation,
    train_source_models,
    train_uda,
)

__all__ = [
    "UdaWeights",
    "split_patches",
    "join_patches",
    "batch_to_patches",
    "patch_adv_loss",
    "wasserstein_loss",
    "gradient_penalty",
    "entropy_map",
    "entropy_loss",
    "self_information_map",
    "binary_prob_pair",
    "domain_adv_loss",
    "total_objective",
    "PatchDiscriminator",
    "DomainCritic",
    "EntropyDiscriminator",
    "flatten_features",
    "PatchAdversary",
    "train_source_models",
    "train_uda",
    "run_uda_ablation",
    "build_discriminators",
    "clone_models",
    "VARIANTS",
]
