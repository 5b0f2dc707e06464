"""Noisy clipped gradient descent on random-features regression.

The package splits along the story's joints: ``rf_model`` builds data and
feature maps, ``dp_gd`` runs the clipped noisy descent, ``privacy`` prices
it, ``dynamics`` carries the continuous-time (gradient-flow / OU) picture,
``diagnostics`` checks structural claims, and ``harness`` drives experiment
sweeps for the ``dpflow`` CLI.
"""

from .dp_gd import DPGDConfig, DivergenceError, Trajectory, run_dp_gd, run_gd
from .dynamics import BrownianPath, SpectralDecomp, decompose, gradient_flow
from .privacy import PrivacyBudget, calibrate_sigma, verify_tail
from .rf_model import Dataset, FeatureMap, featurize, init_features, sample_data

__all__ = [
    "BrownianPath",
    "DPGDConfig",
    "Dataset",
    "DivergenceError",
    "FeatureMap",
    "PrivacyBudget",
    "SpectralDecomp",
    "Trajectory",
    "calibrate_sigma",
    "decompose",
    "featurize",
    "gradient_flow",
    "init_features",
    "run_dp_gd",
    "run_gd",
    "sample_data",
    "verify_tail",
]

__version__ = "0.1.0"
