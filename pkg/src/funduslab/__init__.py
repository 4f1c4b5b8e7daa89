"""funduslab: joint multi-lesion segmentation and DR-grading workbench.

Lesion segmenters with adversarial domain adaptation, attention-gated
grading with activation-map supervision, explanation bundles, and an
expert-feedback fine-tuning loop, all runnable at desk scale on CPU.
"""

from .config import LESIONS, NUM_GRADES, TrainingConfig, parse_config

__version__ = "0.1.0"

__all__ = ["TrainingConfig", "parse_config", "LESIONS", "NUM_GRADES", "__version__"]
