"""Dropout as local-minimum escape, convexifying regulariser and private learner."""
from .core_math import ConstraintSet, DropoutMask, SeededRng
from .dropout_sgd import SgdConfig, dropout_sgd_train
from .errors import DropescapeError
from .glm_core import Dataset, GlmLoss

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet",
    "Dataset",
    "DropescapeError",
    "DropoutMask",
    "GlmLoss",
    "SeededRng",
    "SgdConfig",
    "dropout_sgd_train",
]
