"""
Private GLM training: model-stability bounds, boosting, output perturbation
and the propose-test-release gate.

Pipeline of :func:`private_glm_train`:
1. gate on the leave-one-out curvature statistic Lambda with a Laplace test
2. run boosted dropout SGD (k = ceil(ln(1/delta)) runs, keep the best)
3. add Gaussian noise scaled to the high-probability model-stability bound
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core_math import SeededRng, derive_seed, sample_gaussian_vector, sample_laplace
from .dropout_sgd import dropout_risk_exact_ls, dropout_risk_mc, dropout_sgd_train
from .errors import ParameterError
from .glm_core import dataset_delta1, dataset_lambda, lipschitz_over_constraint
from .workers import WorkerPool

logger = logging.getLogger(__name__)

BOOST_RISK_SAMPLES = 10_000


@dataclass(frozen=True)
class PrivacyBudget:
    eps: float
    delta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError(f"eps must be positive, got {self.eps}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def log_inv_delta(self):
        return math.log(1.0 / self.delta)

    @property
    def boosting_runs(self):
        # tolerate ln(1/delta) landing a hair above an integer
        return max(1, math.ceil(self.log_inv_delta - 1e-9))


@dataclass
class StabilityBound:
    eps_mod: float
    G: float
    B: float
    Lambda: float
    Delta1: float
    T: float
    n: float
    c: float
    highprob_delta: float = None

    @property
    def high_probability(self):
        return self.highprob_delta is not None


def epsilon_mod_bound(G, B, Lambda, Delta1, T, n, c=1.0, highprob_delta=None):
    if min(G, B, Lambda, Delta1, n, c) <= 0:
        raise ParameterError("stability bound needs positive G, B, Lambda, Delta1, n and c")
    if T < 2:
        raise ParameterError(f"T must be at least 2, got {T}")
    ratio = max(Delta1 / Lambda, Lambda / Delta1)
    eps_mod = c * (G * B / Lambda) * (math.sqrt(math.log(T) * ratio / T) + 1.0 / n)
    if highprob_delta is not None:
        if not 0 < highprob_delta < 1:
            raise ParameterError(f"highprob_delta must lie in (0, 1), got {highprob_delta}")
        eps_mod *= math.sqrt(math.log(1.0 / highprob_delta))
    return StabilityBound(eps_mod, G, B, Lambda, Delta1, T, n, c, highprob_delta)


def model_stability_risk_bound(L, m, eps_mod):
    """Change of an L-Lipschitz functional of the model after m replaced rows."""
    if L < 0 or m < 0 or eps_mod < 0:
        raise ParameterError("model-stability risk bound needs nonnegative inputs")
    return L * m * eps_mod


def learning_bounds(G, B, p, sigma):
    """(improper, proper) excess-risk bounds of the Gaussian-perturbed model."""
    return G * sigma, G * B * math.sqrt(p) * sigma


# ---------------------- boosting ----------------------
@dataclass
class BoostResult:
    theta: np.ndarray
    j_star: int
    risks: list
    seeds: list


def _dropout_risk(theta, d, loss, alpha, seed):
    if loss.kind == "squared":
        return dropout_risk_exact_ls(theta, d, alpha)
    return dropout_risk_mc(theta, d, loss, alpha, BOOST_RISK_SAMPLES, seed=seed)


def boosted_dropout_sgd(d, loss, cfg, k, threads=1, progress=False):
    if k < 1:
        raise ParameterError(f"k must be at least 1, got {k}")
    seeds = [derive_seed(cfg.seed, j) for j in range(k)]
    pool = WorkerPool(threads, progress, desc="boosting")
    models = pool.map(lambda s: dropout_sgd_train(d, loss, cfg.with_seed(s)), seeds)
    eval_seed = derive_seed(cfg.seed, k)
    risks = [_dropout_risk(m.theta, d, loss, cfg.alpha, eval_seed) for m in models]
    j_star = int(np.argmin(risks))
    logger.info("boosting k=%d picked run %d with risk %.6g", k, j_star, risks[j_star])
    return BoostResult(models[j_star].theta, j_star, risks, seeds)


# ---------------------- mechanisms ----------------------
def gaussian_noise_scale(sensitivity, budget):
    if not sensitivity > 0:
        raise ParameterError(f"sensitivity must be positive, got {sensitivity}")
    return 2.0 * sensitivity * math.sqrt(budget.log_inv_delta) / budget.eps


def gaussian_perturb_private(theta, sensitivity, budget, rng):
    theta = np.asarray(theta, dtype=np.float64)
    sigma = gaussian_noise_scale(sensitivity, budget)
    return theta + sample_gaussian_vector(theta.shape[0], sigma, rng)


@dataclass
class PtrOutcome:
    passed: bool
    g_hat: float
    threshold: float


def ptr_gate(g_value, sensitivity, zeta, budget, rng, noise=None):
    if not sensitivity > 0:
        raise ParameterError(f"sensitivity must be positive, got {sensitivity}")
    if noise is None:
        noise = sample_laplace(sensitivity / budget.eps, rng)
    g_hat = g_value + noise
    threshold = zeta + sensitivity * budget.log_inv_delta / budget.eps
    return PtrOutcome(bool(g_hat > threshold), g_hat, threshold)


# ---------------------- private training ----------------------
@dataclass
class PrivateGlmResult:
    passed: bool
    theta: np.ndarray
    lam: float
    lam_hat: float
    zeta: float
    k: int
    sigma: float
    dropout_risk: float
    epsilon_total: float
    bound: StabilityBound = None
    boost: BoostResult = field(default=None, repr=False)


def stability_threshold(G, B, Delta1, T, n, budget, sigma_cap, c=1.0):
    """Smallest Lambda whose Gaussian noise scale stays within ``sigma_cap``, floored at Delta1/2."""
    if not sigma_cap > 0:
        raise ParameterError(f"sigma_cap must be positive, got {sigma_cap}")

    def excess(lam):
        eps_mod = epsilon_mod_bound(G, B, lam, Delta1, T, n, c, budget.delta).eps_mod
        return math.log(gaussian_noise_scale(eps_mod, budget)) - math.log(sigma_cap)

    lo, hi = Delta1 * 1e-12, Delta1
    if excess(hi) > 0:
        while excess(hi) > 0:
            hi *= 2.0
            if hi > Delta1 * 1e12:
                raise ParameterError("sigma_cap is unreachable for any curvature level")
        required = brentq(excess, lo, hi, xtol=1e-14 * hi)
    elif excess(lo) <= 0:
        required = lo
    else:
        required = brentq(excess, lo, hi, xtol=1e-14 * hi)
    return max(required, Delta1 / 2.0)


def private_glm_train(d, loss, cfg, budget, sigma_cap, proper=False, c=1.0,
                      sensitivity_mode="squared", noise=None, threads=1):
    """Gate, boost, perturb. ``noise`` pins the Laplace draw of the gate."""
    rng = SeededRng(cfg.seed, stream=1)
    lam = dataset_lambda(d, "squared")
    delta1 = dataset_delta1(d)
    G = lipschitz_over_constraint(loss, d, cfg.constraint, scale=1.0 / cfg.alpha)
    B = d.bound
    T = max(cfg.T, 2)
    if sensitivity_mode == "squared":
        eta = B ** 2 / d.n
    elif sensitivity_mode == "linear":
        eta = B / d.n
    else:
        raise ParameterError(f"unknown sensitivity mode '{sensitivity_mode}'")

    zeta = stability_threshold(G, B, delta1, T, d.n, budget, sigma_cap, c)
    gate = ptr_gate(lam, eta, zeta, budget, rng, noise=noise)
    k = budget.boosting_runs
    if not gate.passed:
        logger.warning("PTR gate failed: lambda=%.4g lambda_hat=%.4g threshold=%.4g", lam, gate.g_hat, gate.threshold)
        return PrivateGlmResult(False, None, lam, gate.g_hat, zeta, k, math.nan, math.nan, 2 * budget.eps)

    boost = boosted_dropout_sgd(d, loss, cfg, k, threads=threads)
    # after a pass Lambda >= zeta w.h.p., so the bound at zeta covers the data
    bound = epsilon_mod_bound(G, B, zeta, delta1, T, d.n, c, budget.delta)
    sigma = gaussian_noise_scale(bound.eps_mod, budget)
    theta = gaussian_perturb_private(boost.theta, bound.eps_mod, budget, rng)
    if proper:
        theta = cfg.constraint.project(theta)
    risk = _dropout_risk(theta, d, loss, cfg.alpha, derive_seed(cfg.seed, k + 1))
    logger.info("private GLM released: sigma=%.4g dropout risk=%.6g", sigma, risk)
    return PrivateGlmResult(True, theta, lam, gate.g_hat, zeta, k, sigma, risk, 2 * budget.eps, bound, boost)


# ---------------------- empirical stability ----------------------
@dataclass
class StabilityMeasurement:
    mean: float
    distances: np.ndarray

    @property
    def median(self):
        return float(np.median(self.distances))


def model_stability_measure(d, row_index, replacement, loss, cfg, trials, threads=1, progress=False):
    """Mean ||theta_T(D) - theta_T(D')|| with shared sample and mask streams per trial."""
    if trials < 1:
        raise ParameterError(f"trials must be at least 1, got {trials}")
    x_new, y_new = replacement
    d_prime = d.replace_row(row_index, x_new, y_new)

    def trial(t):
        run_cfg = cfg.with_seed(derive_seed(cfg.seed, t))
        a = dropout_sgd_train(d, loss, run_cfg).theta
        b = dropout_sgd_train(d_prime, loss, run_cfg).theta
        return float(np.linalg.norm(a - b))

    distances = np.array(WorkerPool(threads, progress, desc="stability").map(trial, range(trials)))
    return StabilityMeasurement(float(distances.mean()), distances)
