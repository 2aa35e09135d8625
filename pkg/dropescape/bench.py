"""
Stability benchmark: how much does a model's test error move when part of
its training set is removed (at random, or adversarially by smallest margin)?

Methods compared per cell:
- ``none``: plain SGD (keep rate 1)
- ``l2``: ridge-penalised ERM, penalty picked by k-fold cross-validation
- ``dropout``: dropout SGD
- ``deterministic``: full-batch minimisation of the expected dropout risk
"""
import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.optimize import minimize
from sklearn.model_selection import KFold

from .core_math import ConstraintSet, derive_seed
from .datasets import (
    adversarial_removal,
    load_dataset,
    make_synthetic,
    random_removal,
    split_dataset,
)
from .dropout_sgd import SgdConfig, dropout_risk_exact_ls, dropout_sgd_train
from .errors import ConfigError, ParameterError
from .glm_core import GlmLoss
from .workers import CellWorker, WorkerPool

logger = logging.getLogger(__name__)

METHODS = ("none", "l2", "dropout", "deterministic")
REMOVALS = ("random", "adversarial")
CSV_HEADER = ("method", "rho", "test_error", "marginal_error", "std")

_GH_NODES, _GH_WEIGHTS = hermgauss(20)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(math.pi)


# ---------------------- deterministic dropout ----------------------
def _gaussian_moments(theta, d, alpha):
    mean = d.X @ theta
    var = (1.0 - alpha) / alpha * ((d.X ** 2) @ (theta ** 2))
    return mean, np.sqrt(var)


def deterministic_dropout_risk(theta, d, loss, alpha=0.5):
    """Expected masked loss: exact for squared loss, Gauss-Hermite under a Gaussian surrogate for logistic."""
    theta = np.asarray(theta, dtype=np.float64)
    if loss.kind == "squared":
        return dropout_risk_exact_ls(theta, d, alpha)
    if loss.kind != "logistic":
        raise ParameterError(f"unsupported loss '{loss.kind}'")
    mean, sd = _gaussian_moments(theta, d, alpha)
    u = mean[:, None] + math.sqrt(2.0) * sd[:, None] * _GH_NODES[None, :]
    quad = loss.value(u, d.y[:, None]) @ _GH_WEIGHTS
    exact = loss.value(mean, d.y)
    return float(np.where(sd > 0, quad, exact).mean())


def deterministic_dropout_grad(theta, d, loss, alpha=0.5):
    theta = np.asarray(theta, dtype=np.float64)
    r = (1.0 - alpha) / alpha
    if loss.kind == "squared":
        resid = d.X @ theta - d.y
        return 2.0 * d.X.T @ resid / d.n + 2.0 * r * (d.X ** 2).mean(axis=0) * theta
    mean, sd = _gaussian_moments(theta, d, alpha)
    u = mean[:, None] + math.sqrt(2.0) * sd[:, None] * _GH_NODES[None, :]
    first = loss.first(u, d.y[:, None])
    d_mean = first @ _GH_WEIGHTS
    # d/d(sd) of the quadrature over sd, with the sd -> 0 limit l''(mean)
    safe = np.where(sd > 0, sd, 1.0)
    d_sd_over_sd = np.where(
        sd > 0,
        (first * (math.sqrt(2.0) * _GH_NODES)[None, :]) @ _GH_WEIGHTS / safe,
        loss.second(mean, d.y),
    )
    return (d.X.T @ d_mean + r * (d.X ** 2).T @ d_sd_over_sd * theta) / d.n


def _minimize(objective, grad, p):
    res = minimize(objective, np.zeros(p), jac=grad, method="L-BFGS-B",
                   options={"maxiter": 2000, "gtol": 1e-9})
    if not res.success:
        logger.debug("L-BFGS-B stopped early: %s", res.message)
    return res.x


def fit_deterministic_dropout(d, loss, alpha):
    return _minimize(lambda t: deterministic_dropout_risk(t, d, loss, alpha),
                     lambda t: deterministic_dropout_grad(t, d, loss, alpha), d.p)


def fit_l2(d, loss, lam):
    def objective(theta):
        return float(loss.value(d.X @ theta, d.y).mean()) + lam * float(theta @ theta)

    def grad(theta):
        return d.X.T @ loss.first(d.X @ theta, d.y) / d.n + 2.0 * lam * theta

    return _minimize(objective, grad, d.p)


def select_l2_penalty(d, loss, grid, folds, seed):
    """Penalty with the lowest mean held-out error over ``folds`` shuffled folds."""
    n_splits = max(2, min(int(folds), d.n))
    splitter = KFold(n_splits=n_splits, shuffle=True, random_state=derive_seed(seed, 0) % 2 ** 32)
    splits = list(splitter.split(d.X))
    best_lam, best_err = grid[0], math.inf
    for lam in grid:
        errs = [held_out_error(fit_l2(d.subset(train), loss, lam), d.subset(held), loss) for train, held in splits]
        err = float(np.mean(errs))
        if err < best_err:
            best_lam, best_err = lam, err
    return best_lam


def held_out_error(theta, d, loss):
    """Misclassification rate for logistic loss, mean squared error otherwise."""
    scores = d.X @ theta
    if loss.kind == "logistic":
        return float(np.mean(np.where(scores > 0, 1.0, -1.0) != d.y))
    return float(np.mean((scores - d.y) ** 2))


# ---------------------- experiment config ----------------------
@dataclass
class ExperimentConfig:
    dataset: str = ""
    format: str = "csv"
    synthetic: str = "logistic"
    n: int = 400
    p: int = 20
    noise: float = 0.1
    loss: str = "logistic"
    train_fraction: float = 0.5
    rhos: list = field(default_factory=lambda: [0.0, 0.5])
    removal: str = "adversarial"
    methods: list = field(default_factory=lambda: ["none", "dropout"])
    repeats: int = 20
    seed: int = 0
    l2_grid: list = field(default_factory=lambda: list(np.logspace(-4, 1, 7)))
    cv_folds: int = 5
    keep_rate: float = 0.5
    T: int = 2000
    constraint: str = "l2:100"
    lr_scale: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if not self.rhos or any(not 0.0 <= r < 1.0 for r in self.rhos):
            raise ConfigError(f"removal fractions must lie in [0, 1), got {self.rhos}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be at least 1, got {self.repeats}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train fraction must lie in (0, 1), got {self.train_fraction}")
        if self.removal not in REMOVALS:
            raise ConfigError(f"unknown removal mode '{self.removal}'")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
        if not 0.0 < self.keep_rate <= 1.0:
            raise ConfigError(f"keep rate must lie in (0, 1], got {self.keep_rate}")

    @classmethod
    def from_settings(cls, settings, seed=None):
        grid = settings.get_floats("l2_grid") or list(np.logspace(-4, 1, 7))
        return cls(
            dataset=settings.get_str("dataset"),
            format=settings.get_str("format"),
            synthetic=settings.get_str("synthetic"),
            n=settings.get_int("n"),
            p=settings.get_int("p"),
            noise=settings.get_float("noise"),
            loss=settings.get_str("loss"),
            train_fraction=settings.get_float("train_fraction"),
            rhos=settings.get_floats("rho"),
            removal=settings.get_str("removal"),
            methods=settings.get_list("methods"),
            repeats=settings.get_int("repeats"),
            seed=settings.get_int("seed") if seed is None else seed,
            l2_grid=grid,
            cv_folds=settings.get_int("cv_folds"),
            keep_rate=settings.get_float("keep_rate"),
            T=settings.get_int("T"),
            constraint=settings.get_str("constraint"),
            lr_scale=settings.get_float("lr_scale"),
            threads=settings.get_int("threads"),
        )

    def load_data(self):
        if self.dataset:
            return load_dataset(self.dataset, self.format)
        kwargs = {} if self.synthetic == "logistic" else {"noise": self.noise}
        return make_synthetic(self.synthetic, self.n, self.p, self.seed, **kwargs)


@dataclass
class StabilityRow:
    method: str
    rho: float
    test_error: float
    marginal_error: float
    std: float


@dataclass
class ExperimentResult:
    rows: list
    failures: list  # (method, rho, repeat, message)


# ---------------------- experiment ----------------------
def _train(method, d, loss, cfg, seed):
    if method == "l2":
        lam = select_l2_penalty(d, loss, cfg.l2_grid, cfg.cv_folds, seed)
        return fit_l2(d, loss, lam)
    if method == "deterministic":
        return fit_deterministic_dropout(d, loss, cfg.keep_rate)
    alpha = 1.0 if method == "none" else cfg.keep_rate
    sgd = SgdConfig(T=cfg.T, alpha=alpha, constraint=ConstraintSet.parse(cfg.constraint),
                    lr_scale=cfg.lr_scale, seed=seed)
    return dropout_sgd_train(d, loss, sgd).theta


def _repeat_cell(method, repeat, data, loss, cfg, rhos):
    """All removal fractions of one (method, repeat); returns {rho: test error}.

    Seeds depend on the repeat only, so every method of a repeat sees the
    same split, the same removed rows and the same SGD sample stream.
    """
    seed = derive_seed(cfg.seed, repeat)
    train, test = split_dataset(data, cfg.train_fraction, derive_seed(seed, 0))
    theta_full = _train(method, train, loss, cfg, derive_seed(seed, 1))
    errors = {}
    for i, rho in enumerate(rhos):
        if rho == 0.0:
            theta = theta_full
        else:
            if cfg.removal == "random":
                reduced = random_removal(train, rho, derive_seed(seed, 2 + 2 * i))
            else:
                reduced = adversarial_removal(train, rho, theta_full)
            theta = _train(method, reduced, loss, cfg, derive_seed(seed, 3 + 2 * i))
        errors[rho] = held_out_error(theta, test, loss)
    return errors


def run_stability_experiment(cfg, data=None, progress=False):
    loss = GlmLoss(cfg.loss)
    data = cfg.load_data() if data is None else data
    loss.check_labels(data.y)
    rhos = sorted(set([0.0] + list(cfg.rhos)))
    workers = [
        CellWorker((method, r), _repeat_cell, method, r, data, loss, cfg, rhos)
        for method in cfg.methods
        for r in range(cfg.repeats)
    ]
    outcomes = WorkerPool(cfg.threads, progress, desc="bench").run(workers)

    failures = []
    rows = []
    for method in cfg.methods:
        per_rho = {rho: [] for rho in rhos}
        for o in outcomes:
            if o.key[0] != method:
                continue
            if not o.ok:
                failures.append((method, None, o.key[1], o.error))
                continue
            for rho, err in o.value.items():
                per_rho[rho].append(err)
        base = float(np.mean(per_rho[0.0])) if per_rho[0.0] else math.nan
        for rho in cfg.rhos:
            errs = per_rho[rho]
            mean = float(np.mean(errs)) if errs else math.nan
            std = float(np.std(errs)) if errs else math.nan
            rows.append(StabilityRow(method, rho, mean, abs(mean - base), std))
    logger.info("bench finished: %d rows, %d failed cells", len(rows), len(failures))
    return ExperimentResult(rows, failures)


def format_rows(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.method, repr(float(r.rho)), repr(r.test_error), repr(r.marginal_error), repr(r.std)])
    return buf.getvalue()


# ---------------------- adversarial risk ----------------------
def adversarial_risk_bound(eps, delta, m, B, base_risk):
    """Risk after m corrupted rows for an (eps, delta)-stable learner."""
    if min(eps, delta, m, B, base_risk) < 0 or delta >= 1:
        raise ParameterError("adversarial bound needs nonnegative inputs and delta < 1")
    return math.exp(m * eps) * base_risk + m * B * delta


def l2_adversarial_risk_bound(base_risk, m, n, lam):
    """Comparator for an L2-regularised learner: base + m/(n lam)."""
    if n <= 0 or lam <= 0 or m < 0:
        raise ParameterError("l2 bound needs n > 0, lam > 0 and m >= 0")
    return base_risk + m / (n * lam)
