"""
Dropout gradient descent for GLMs and the dropout risk it minimises.

A model sees the masked prediction u = (1/alpha) <theta, b * x> with b a
Bernoulli(alpha) mask, which is unbiased for <theta, x>. At alpha = 1/2 this
is the 2 <x * b, theta> form of the fixed-mask ERM objective.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core_math import ConstraintSet, SeededRng, as_real_vector, sample_mask_matrix
from .errors import ConvergenceError, DegenerateDataError, DimensionError, ParameterError
from .glm_core import dataset_delta1

logger = logging.getLogger(__name__)

_BLOCK = 4096


@dataclass(frozen=True)
class SgdConfig:
    T: int = 1000
    alpha: float = 0.5
    constraint: ConstraintSet = field(default_factory=lambda: ConstraintSet.l2_ball(10.0))
    learning_rate: object = None  # callable t -> eta_t; None means 1/(Delta1 t)
    lr_scale: float = 1.0
    theta0: np.ndarray = None
    seed: int = 0
    log_every: int = 0
    risk_samples: int = 256

    def __post_init__(self):
        if self.T < 0:
            raise ParameterError(f"T must be nonnegative, got {self.T}")
        if not (0.0 < self.alpha <= 1.0):
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass
class TrainedModel:
    theta: np.ndarray
    trajectory: list  # (step, dropout risk) pairs
    config: SgdConfig


def _rate_rule(d, cfg):
    if cfg.learning_rate is not None:
        return cfg.learning_rate
    delta1 = dataset_delta1(d)
    if delta1 <= 0:
        raise DegenerateDataError("Delta1 = 0: the default 1/(Delta1 t) learning rate is undefined")
    scale = cfg.lr_scale / delta1
    return lambda t: scale / t


def dropout_stochastic_gradient(theta, x, y, mask, loss, alpha):
    """Single-step update direction (1/alpha) l'(u) (b * x)."""
    z = x * mask
    u = float(z @ theta) / alpha
    return (loss.derivative(u, y) / alpha) * z


def dropout_sgd_train(d, loss, cfg):
    loss.check_labels(d.y)
    c = cfg.constraint
    theta = c.initial_point(d.p) if cfg.theta0 is None else as_real_vector(cfg.theta0, "theta0").copy()
    if theta.shape != (d.p,):
        raise DimensionError(f"initial theta has shape {theta.shape}, expected ({d.p},)")
    trajectory = []
    if cfg.T == 0:
        return TrainedModel(theta, trajectory, cfg)

    eta = _rate_rule(d, cfg)
    rng = SeededRng(cfg.seed)
    project = c.project
    t = 0
    while t < cfg.T:
        block = min(_BLOCK, cfg.T - t)
        idx = rng.generator.integers(0, d.n, size=block)
        if cfg.alpha < 1.0:
            masks = sample_mask_matrix(block, d.p, cfg.alpha, rng)
        else:
            masks = np.ones((block, d.p), dtype=np.uint8)
        for i, b in zip(idx, masks):
            t += 1
            step = dropout_stochastic_gradient(theta, d.X[i], d.y[i], b, loss, cfg.alpha)
            theta = project(theta - eta(t) * step)
            if cfg.log_every and t % cfg.log_every == 0:
                trajectory.append((t, _risk_for_log(theta, d, loss, cfg, t)))
    logger.debug("dropout SGD finished T=%d alpha=%.3g |theta|=%.4g", cfg.T, cfg.alpha, np.linalg.norm(theta))
    return TrainedModel(theta, trajectory, cfg)


def _risk_for_log(theta, d, loss, cfg, t):
    if loss.kind == "squared":
        return dropout_risk_exact_ls(theta, d, cfg.alpha)
    return dropout_risk_mc(theta, d, loss, cfg.alpha, cfg.risk_samples, seed=cfg.seed + t)


# ---------------------- dropout risk ----------------------
def dropout_risk_mc(theta, d, loss, alpha, samples, seed=0):
    if samples < 1:
        raise ParameterError(f"samples must be positive, got {samples}")
    theta = as_real_vector(theta, "theta")
    if alpha == 1.0:
        return float(loss.value(d.X @ theta, d.y).mean())
    rng = SeededRng(seed)
    Xt = d.X * theta
    chunk = max(1, (1 << 20) // (d.n * d.p))
    total = 0.0
    done = 0
    while done < samples:
        s = min(chunk, samples - done)
        masks = sample_mask_matrix(s * d.n, d.p, alpha, rng).reshape(s, d.n, d.p)
        u = (masks * Xt).sum(axis=2) / alpha
        total += float(loss.value(u, d.y).sum())
        done += s
    return total / (samples * d.n)


def dropout_risk_exact_ls(theta, d, alpha=0.5):
    """Exact expected masked squared loss; at alpha=1/2 the regulariser weight is 1."""
    theta = as_real_vector(theta, "theta")
    resid = d.y - d.X @ theta
    diag_s = (d.X ** 2).mean(axis=0)
    return float((resid ** 2).mean() + (1.0 - alpha) / alpha * float(diag_s @ theta ** 2))


def dropout_risk_exact_ls_grad(theta, d, alpha=0.5):
    theta = as_real_vector(theta, "theta")
    resid = d.X @ theta - d.y
    diag_s = (d.X ** 2).mean(axis=0)
    return 2.0 * (d.X.T @ resid) / d.n + 2.0 * (1.0 - alpha) / alpha * diag_s * theta


def dropout_ridge_solution_ls(d, alpha=0.5):
    """Unconstrained minimiser of :func:`dropout_risk_exact_ls`."""
    S = d.X.T @ d.X / d.n
    A = S + (1.0 - alpha) / alpha * np.diag(np.diag(S))
    try:
        return np.linalg.solve(A, d.X.T @ d.y / d.n)
    except np.linalg.LinAlgError as e:
        raise DegenerateDataError(f"dropout risk has no unique minimiser: {e}") from e


# ---------------------- fixed-mask ERM ----------------------
def _stack_masks(masks, n, p):
    if isinstance(masks, np.ndarray):
        M = masks
    else:
        M = np.array([m.bits if hasattr(m, "bits") else m for m in masks])
    if M.shape != (n, p):
        raise DimensionError(f"need one length-{p} mask per row ({n} rows), got shape {M.shape}")
    return M.astype(np.float64)


def erm_dropout_solve(d, masks, loss, c, tol=1e-8, alpha=0.5, theta0=None, max_iter=100_000):
    """Projected full-gradient descent on (1/n) sum l((1/alpha) <x_i * b_i, theta>; y_i)."""
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    loss.check_labels(d.y)
    Z = d.X * _stack_masks(masks, d.n, d.p) / alpha
    theta = c.initial_point(d.p) if theta0 is None else c.project(as_real_vector(theta0, "theta0"))
    curvature = 2.0 if loss.kind == "squared" else 0.25
    smooth = curvature * float(np.linalg.eigvalsh(Z.T @ Z / d.n).max())
    if smooth <= 0:
        return theta
    step = 1.0 / smooth
    residual = math.inf
    for it in range(max_iter):
        grad = Z.T @ loss.first(Z @ theta, d.y) / d.n
        nxt = c.project(theta - step * grad)
        residual = float(np.linalg.norm(theta - nxt)) / step
        theta = nxt
        if residual <= tol:
            logger.debug("fixed-mask ERM converged in %d iterations", it + 1)
            return theta
    raise ConvergenceError(f"no convergence in {max_iter} iterations", residual)


# ---------------------- curvature ----------------------
def expected_hessian_ls(d, alpha=0.5):
    S = d.X.T @ d.X / d.n
    return 2.0 * ((1.0 - alpha) / alpha * np.diag(np.diag(S)) + S)


def expected_hessian_min_eig_ls(d, alpha=0.5):
    return float(np.linalg.eigvalsh(expected_hessian_ls(d, alpha)).min())


def empirical_hessian_min_eig_ls(d):
    """Smallest eigenvalue of the unmasked least-squares Hessian 2S."""
    return float(np.linalg.eigvalsh(2.0 * d.X.T @ d.X / d.n).min())


def generalization_bound(G, B, Delta1, T, n, Delta=None, c=1.0):
    """c ((GB)^2 ln T / (Delta1 T) + (GB)^2 ln n / (Delta n)), Delta defaulting to Delta1."""
    Delta = Delta1 if Delta is None else Delta
    if min(G, B, Delta1, Delta, c) <= 0 or T < 2 or n < 2:
        raise ParameterError("bound needs positive constants, T >= 2 and n >= 2")
    gb2 = (G * B) ** 2
    return c * (gb2 * math.log(T) / (Delta1 * T) + gb2 * math.log(n) / (Delta * n))
