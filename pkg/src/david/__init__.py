"""DAVID: VAE + weighted smoothed bootstrap for imbalanced-regression augmentation."""

from .data import TabularDataset, load_csv, simulate_illustration
from .generators import AugmentationPlan, GeneratorKind, david_generate, generate
from .vae import VaeConfig, train

__all__ = [
    "AugmentationPlan",
    "GeneratorKind",
    "TabularDataset",
    "VaeConfig",
    "david_generate",
    "generate",
    "load_csv",
    "simulate_illustration",
    "train",
]
__version__ = "0.1.0"
