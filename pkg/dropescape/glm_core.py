"""
Losses, datasets and the data-dependent curvature statistics.

Conventions:
- squared loss is (u - y)^2, so its curvature in u is the constant 2
- logistic loss is log(1 + exp(-y u)) with labels in {-1, +1}
- Delta1 is the smallest mean squared column entry; Lambda is its
  leave-one-row-out analogue; Lambda_Gamma removes the Gamma worst rows
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    DataError,
    DimensionError,
    InsufficientDataError,
    LabelError,
    ParameterError,
)

logger = logging.getLogger(__name__)

LOSS_KINDS = ("squared", "logistic")


# ---------------------- losses ----------------------
@dataclass(frozen=True)
class GlmLoss:
    kind: str = "squared"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ParameterError(f"unsupported loss '{self.kind}'")

    def check_labels(self, y):
        if self.kind == "logistic":
            y = np.asarray(y, dtype=np.float64)
            if not np.all((y == 1.0) | (y == -1.0)):
                raise LabelError("logistic loss needs labels in {-1, +1}")

    # vectorised evaluators over arrays of (u, y)
    def value(self, u, y):
        if self.kind == "squared":
            return (u - y) ** 2
        return np.logaddexp(0.0, -y * u)

    def first(self, u, y):
        if self.kind == "squared":
            return 2.0 * (u - y)
        return -y * expit(-y * u)

    def second(self, u, y):
        if self.kind == "squared":
            return np.full(np.shape(u), 2.0) if np.ndim(u) else 2.0
        s = expit(y * u)
        return s * (1.0 - s)

    def derivative(self, u, y):
        """Scalar first derivative, used in the per-step SGD loop."""
        if self.kind == "squared":
            return 2.0 * (u - y)
        z = y * u
        if z >= 0:
            e = math.exp(-z)
            return -y * e / (1.0 + e)
        return -y / (1.0 + math.exp(z))

    def strong_convexity(self, u_max):
        """Lower bound on the curvature over |u| <= u_max."""
        if self.kind == "squared":
            return 2.0
        s = float(expit(u_max))
        return s * (1.0 - s)

    def lipschitz(self, u_max, y_max):
        """Upper bound on |dl/du| over |u| <= u_max and |y| <= y_max."""
        if self.kind == "squared":
            return 2.0 * (u_max + y_max)
        return float(expit(u_max))


def loss_eval(loss, u, y):
    if not (math.isfinite(u) and math.isfinite(y)):
        raise ParameterError("loss_eval needs finite u and y")
    loss.check_labels(y)
    return (float(loss.value(u, y)), float(loss.first(u, y)), float(loss.second(u, y)))


# ---------------------- datasets ----------------------
@dataclass(frozen=True)
class Dataset:
    """Immutable labelled data with a declared row-norm bound ``B``."""

    X: np.ndarray
    y: np.ndarray
    bound: float = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        if X.ndim != 2:
            raise DimensionError(f"features must be a 2-d array, got shape {X.shape}")
        if X.shape[0] == 0:
            raise DataError("dataset is empty")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset has non-finite entries")
        norms = np.sqrt((X ** 2).sum(axis=1))
        if self.bound is None:
            bound = float(norms.max()) or 1.0
        else:
            bound = float(self.bound)
            if not bound > 0:
                raise ParameterError(f"norm bound must be positive, got {bound}")
        if norms.max() > bound * (1 + 1e-12):
            raise DataError(f"row norm {norms.max():.6g} exceeds declared bound {bound:.6g}")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "bound", bound)

    @classmethod
    def from_arrays(cls, X, y, bound=None):
        return cls(X, y, bound)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def __len__(self):
        return self.n

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            raise DataError("subset would leave no rows")
        return Dataset(self.X[rows], self.y[rows], self.bound)

    def replace_row(self, index, x, y):
        if not 0 <= index < self.n:
            raise ParameterError(f"row index {index} out of range for n={self.n}")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.p,):
            raise DimensionError(f"replacement row has shape {x.shape}, expected ({self.p},)")
        if np.linalg.norm(x) > self.bound * (1 + 1e-12):
            raise ParameterError("replacement row violates the norm bound")
        X = self.X.copy()
        labels = self.y.copy()
        X[index] = x
        labels[index] = y
        return Dataset(X, labels, self.bound)


# ---------------------- curvature statistics ----------------------
def dataset_delta1(d):
    return float((d.X ** 2).mean(axis=0).min())


def dataset_lambda(d, variant="squared"):
    """Leave-one-row-out minimum column statistic, scaled by 1/n.

    ``variant="squared"`` sums squared entries; ``"binary"`` sums the raw
    entries (the form used on {0,1} data).
    """
    if d.n < 2:
        raise InsufficientDataError("leave-one-out statistic needs at least two rows")
    if variant == "squared":
        entries = d.X ** 2
    elif variant == "binary":
        entries = d.X
    else:
        raise ParameterError(f"unknown lambda variant '{variant}'")
    loo = entries.sum(axis=0) - entries.max(axis=0)
    return float(loo.min() / d.n)


def dataset_lambda_gamma(d, gamma):
    gamma = int(gamma)
    if gamma < 0 or gamma >= d.n:
        raise ParameterError(f"gamma must satisfy 0 <= gamma < n={d.n}, got {gamma}")
    if gamma == 0:
        kept = (d.X ** 2).sum(axis=0)
    else:
        kept = np.sort(d.X ** 2, axis=0)[: d.n - gamma].sum(axis=0)
    return float(kept.min() / d.n)


@dataclass
class DataStats:
    delta1: float
    lambda_sq: float
    lambda_binary: float
    lambda_gamma: dict
    column_sq_sums: np.ndarray
    delta: float = None

    @property
    def delta_or_plugin(self):
        return self.delta1 if self.delta is None else self.delta


def compute_data_stats(d, gammas=(0, 1), delta=None):
    stats = DataStats(
        delta1=dataset_delta1(d),
        lambda_sq=dataset_lambda(d, "squared"),
        lambda_binary=dataset_lambda(d, "binary"),
        lambda_gamma={g: dataset_lambda_gamma(d, g) for g in gammas if g < d.n},
        column_sq_sums=(d.X ** 2).sum(axis=0),
        delta=delta,
    )
    logger.debug("data stats n=%d p=%d delta1=%.4g lambda=%.4g", d.n, d.p, stats.delta1, stats.lambda_sq)
    return stats


def lipschitz_over_constraint(loss, d, c, scale=1.0):
    """Bound on |dl/du| for u = scale * <theta, x>, theta in C, x in d."""
    if len(d) == 0:
        raise DataError("dataset is empty")
    if not c.bounded:
        raise ParameterError("Lipschitz constant needs a bounded constraint set")
    u_max = abs(scale) * d.bound * c.max_norm(d.p)
    return loss.lipschitz(u_max, float(np.abs(d.y).max()))
