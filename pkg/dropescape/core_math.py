"""
Seeded randomness, dropout masks, noise samplers and projections.

Everything random in dropescape flows through :class:`SeededRng`, a numpy
``Generator`` on the counter-based Philox bit generator keyed by
``(seed, stream)``. Two objects built from the same pair replay the same
draws on every platform, which is what the common-random-number experiments
and the byte-reproducible benchmark CSVs rely on.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError


# ---------------------- vectors ----------------------
def as_real_vector(x, name="vector"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} has non-finite entries")
    return arr


# ---------------------- randomness ----------------------
class SeededRng:
    """Reproducible random stream identified by ``(seed, stream)``."""

    def __init__(self, seed, stream=0):
        seed = int(seed)
        if seed < 0 or seed >= 2 ** 64:
            raise ParameterError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self.stream = int(stream)
        seq = np.random.SeedSequence(seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def spawn(self, stream):
        """Child stream; independent of the parent and of its siblings."""
        return SeededRng(derive_seed(self.seed, self.stream), stream)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def derive_seed(seed, stream):
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _generator(rng):
    if isinstance(rng, SeededRng):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise ParameterError(f"expected a SeededRng, got {type(rng).__name__}")


# ---------------------- masks ----------------------
@dataclass(frozen=True)
class DropoutMask:
    bits: np.ndarray
    rate: float = 0.5

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise DimensionError("mask bits must be one-dimensional")
        if not np.all((bits == 0) | (bits == 1)):
            raise ParameterError("mask bits must be 0 or 1")
        _check_rate(self.rate)
        bits = bits.astype(np.uint8)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)

    @classmethod
    def ones(cls, length, rate=1.0):
        return cls(np.ones(length, dtype=np.uint8), rate)

    @classmethod
    def zeros(cls, length, rate=0.5):
        return cls(np.zeros(length, dtype=np.uint8), rate)


def _check_rate(rate):
    if not (0.0 < rate <= 1.0):
        raise ParameterError(f"dropout rate must lie in (0, 1], got {rate}")


def hadamard(x, b):
    x = as_real_vector(x, "x")
    bits = b.bits if isinstance(b, DropoutMask) else np.asarray(b)
    if bits.shape != x.shape:
        raise DimensionError(f"length mismatch: vector {x.shape} vs mask {bits.shape}")
    return x * bits


def sample_mask(length, rate, rng):
    if length < 1:
        raise ParameterError(f"mask length must be positive, got {length}")
    _check_rate(rate)
    bits = _generator(rng).random(int(length)) < rate
    return DropoutMask(bits.astype(np.uint8), rate)


def sample_mask_matrix(rows, length, rate, rng):
    """``rows`` independent masks stacked as a uint8 array."""
    _check_rate(rate)
    return (_generator(rng).random((int(rows), int(length))) < rate).astype(np.uint8)


# ---------------------- noise ----------------------
def sample_laplace(scale, rng, size=None):
    if not scale > 0:
        raise ParameterError(f"Laplace scale must be positive, got {scale}")
    draw = _generator(rng).laplace(0.0, scale, size=size)
    return float(draw) if size is None else draw


def sample_gaussian_vector(p, sigma, rng):
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if p < 1:
        raise ParameterError(f"dimension must be positive, got {p}")
    return _generator(rng).normal(0.0, sigma, size=int(p))


# ---------------------- projections ----------------------
CONSTRAINT_KINDS = ("simplex", "l2_ball", "box", "unconstrained")


def project_simplex(theta):
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(theta, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError("simplex projection needs a non-empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = ind[u - css / ind > 0][-1]
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def project_l2_ball(theta, radius):
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    theta = np.asarray(theta, dtype=np.float64)
    norm = math.sqrt(float(theta @ theta))
    if norm <= radius:
        return theta
    return theta * (radius / norm)


def project_box(theta, low, high):
    if not low < high:
        raise ParameterError(f"box needs low < high, got [{low}, {high}]")
    return np.clip(np.asarray(theta, dtype=np.float64), low, high)


@dataclass(frozen=True)
class ConstraintSet:
    """Descriptor for the feasible set C of a model."""

    kind: str = "l2_ball"
    radius: float = 1.0
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ParameterError(f"unknown constraint set '{self.kind}'")
        if self.kind == "l2_ball" and not self.radius > 0:
            raise ParameterError(f"radius must be positive, got {self.radius}")
        if self.kind == "box" and not self.low < self.high:
            raise ParameterError(f"box needs low < high, got [{self.low}, {self.high}]")

    @classmethod
    def simplex(cls):
        return cls("simplex")

    @classmethod
    def l2_ball(cls, radius):
        return cls("l2_ball", radius=float(radius))

    @classmethod
    def box(cls, low, high):
        return cls("box", low=float(low), high=float(high))

    @classmethod
    def unconstrained(cls):
        return cls("unconstrained")

    @classmethod
    def parse(cls, text):
        """Parse ``simplex``, ``l2:R``, ``box:LO:HI`` or ``none``."""
        parts = str(text).strip().lower().split(":")
        try:
            if parts[0] == "simplex" and len(parts) == 1:
                return cls.simplex()
            if parts[0] in ("l2", "l2_ball") and len(parts) == 2:
                return cls.l2_ball(float(parts[1]))
            if parts[0] == "box" and len(parts) == 3:
                return cls.box(float(parts[1]), float(parts[2]))
            if parts[0] in ("none", "unconstrained") and len(parts) == 1:
                return cls.unconstrained()
        except ValueError:
            pass
        raise ParameterError(f"cannot parse constraint set '{text}'")

    @property
    def bounded(self):
        return self.kind != "unconstrained"

    def project(self, theta):
        if self.kind == "simplex":
            return project_simplex(theta)
        if self.kind == "l2_ball":
            return project_l2_ball(theta, self.radius)
        if self.kind == "box":
            return project_box(theta, self.low, self.high)
        return np.asarray(theta, dtype=np.float64)

    def contains(self, theta, tol=1e-9):
        theta = np.asarray(theta, dtype=np.float64)
        if self.kind == "simplex":
            return bool(theta.min() >= -tol and abs(theta.sum() - 1.0) <= tol)
        if self.kind == "l2_ball":
            return bool(np.linalg.norm(theta) <= self.radius + tol)
        if self.kind == "box":
            return bool(theta.min() >= self.low - tol and theta.max() <= self.high + tol)
        return True

    def max_norm(self, p):
        """Largest Euclidean norm of a point of C in ``p`` dimensions."""
        if self.kind == "simplex":
            return 1.0
        if self.kind == "l2_ball":
            return self.radius
        if self.kind == "box":
            return math.sqrt(p) * max(abs(self.low), abs(self.high))
        return math.inf

    def initial_point(self, p):
        if self.kind == "simplex":
            return np.full(p, 1.0 / p)
        return self.project(np.zeros(p))
