"""
One-hidden-layer network lab: dropout perturbation of the hidden nodes,
distributional error norms, plain SGD on the hidden weights and the
perturbation-restart loop.

A network is g(x) = sum_i alpha_i phi_i(<theta_i, x>) with fixed output
weights alpha_i >= 0. Its dropout perturbation keeps node i with
probability 1/2 and doubles the surviving weights, so E[g_hat(x)] = g(x).
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from .core_math import SeededRng, derive_seed, sample_mask_matrix
from .errors import DimensionError, ParameterError

logger = logging.getLogger(__name__)

LINK_KINDS = ("identity", "tanh", "monomial")
DIST_KINDS = ("normal", "uniform")
# relative gain a perturbation must beat; equal-valued masks differ only by summation rounding
_MIN_GAIN = 1e-9


# ---------------------- networks ----------------------
@dataclass(frozen=True)
class Link:
    kind: str = "identity"
    degree: int = 1

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ParameterError(f"unknown link '{self.kind}'")
        if self.kind == "monomial" and self.degree < 1:
            raise ParameterError(f"monomial degree must be positive, got {self.degree}")

    def apply(self, z, lib=np):
        """Evaluate on numpy arrays (``lib=np``) or torch tensors (``lib=torch``)."""
        if self.kind == "identity":
            return z
        if self.kind == "tanh":
            return lib.tanh(z)
        return z ** self.degree


@dataclass(frozen=True)
class OneHiddenNet:
    alphas: np.ndarray
    thetas: np.ndarray
    links: tuple = None

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=np.float64).reshape(-1)
        thetas = np.array(self.thetas, dtype=np.float64)
        if thetas.ndim != 2 or thetas.shape[0] != alphas.shape[0]:
            raise DimensionError(f"need one weight vector per node: alphas {alphas.shape}, thetas {thetas.shape}")
        if np.any(alphas < 0):
            raise ParameterError("output weights must be nonnegative")
        links = self.links
        if links is None:
            links = (Link(),) * alphas.shape[0]
        elif isinstance(links, Link):
            links = (links,) * alphas.shape[0]
        links = tuple(links)
        if len(links) != alphas.shape[0]:
            raise DimensionError(f"{len(links)} links for {alphas.shape[0]} nodes")
        alphas.flags.writeable = False
        thetas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "links", links)

    @property
    def m(self):
        return self.alphas.shape[0]

    @property
    def p(self):
        return self.thetas.shape[1]

    @property
    def alpha_min(self):
        return float(np.abs(self.alphas).min())

    def node_outputs(self, X):
        """Matrix of g_i(x) = phi_i(<theta_i, x>), one column per node."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.p:
            raise DimensionError(f"inputs have dimension {X.shape[1]}, network expects {self.p}")
        Z = X @ self.thetas.T
        return np.column_stack([link.apply(Z[:, i]) for i, link in enumerate(self.links)])

    def __call__(self, X):
        return self.node_outputs(X) @ self.alphas

    def with_thetas(self, thetas):
        return OneHiddenNet(self.alphas, thetas, self.links)

    def with_alphas(self, alphas):
        return OneHiddenNet(alphas, self.thetas, self.links)


def net_eval(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.p,):
        raise DimensionError(f"input has shape {x.shape}, network expects ({net.p},)")
    return float(net(x[None, :])[0])


def perturbed_net(net, mask, rate=0.5):
    return net.with_alphas(net.alphas * np.asarray(mask, dtype=np.float64) / rate)


def dropout_perturb(net, rng, rate=0.5):
    """Return (x -> 2 sum_i alpha_i b_i g_i(x), b) for a fresh node mask b."""
    mask = sample_mask_matrix(1, net.m, rate, rng)[0]
    return perturbed_net(net, mask, rate), mask


def exhaustive_mask_mean(net, X):
    """Average of the perturbed network over all 2^m node masks at the points X."""
    if net.m > 20:
        raise ParameterError("exhaustive mask enumeration is limited to m <= 20")
    G = net.node_outputs(X) * net.alphas
    codes = np.arange(1 << net.m)
    masks = ((codes[:, None] >> np.arange(net.m)) & 1).astype(np.float64)
    return (2.0 * G @ masks.T).mean(axis=1)


def expected_delta_norm_sq(net, X):
    """E over node masks of ||g_hat - g||^2 on the sample set X, by enumeration."""
    G = net.node_outputs(X) * net.alphas
    codes = np.arange(1 << net.m)
    signs = 2.0 * ((codes[:, None] >> np.arange(net.m)) & 1) - 1.0
    return float(((G @ signs.T) ** 2).mean())


# ---------------------- distributions and norms ----------------------
@dataclass(frozen=True)
class SampleDistribution:
    kind: str = "normal"
    p: int = 1

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ParameterError(f"unknown distribution '{self.kind}'")
        if self.p < 1:
            raise ParameterError(f"dimension must be positive, got {self.p}")

    def draw(self, samples, rng):
        gen = rng.generator if isinstance(rng, SeededRng) else SeededRng(rng).generator
        if self.kind == "normal":
            return gen.standard_normal((int(samples), self.p))
        return gen.uniform(-1.0, 1.0, (int(samples), self.p))


def _samples(dist, samples, seed):
    if samples < 1:
        raise ParameterError(f"samples must be positive, got {samples}")
    return dist.draw(samples, SeededRng(seed))


def dist_sq_mc(g, f, dist, samples, seed):
    X = _samples(dist, samples, seed)
    return float(np.mean((g(X) - f(X)) ** 2))


def inner_prod_mc(g, h, dist, samples, seed):
    X = _samples(dist, samples, seed)
    return float(np.mean(g(X) * h(X)))


def error_identity_decompose(g, g_hat, f, X):
    """(lhs, A, B) with lhs = ||g_hat - f||^2 - ||g - f||^2, A = ||g_hat - g||^2, B = 2<g_hat - g, g - f>."""
    gX, hX, fX = g(X), g_hat(X), f(X)
    lhs = float(np.mean((hX - fX) ** 2) - np.mean((gX - fX) ** 2))
    A = float(np.mean((hX - gX) ** 2))
    B = float(2.0 * np.mean((hX - gX) * (gX - fX)))
    return lhs, A, B


# ---------------------- escape trials ----------------------
def escape_factor(alpha_min, m):
    return 1.0 - math.sqrt(alpha_min / (16.0 * m))


@dataclass
class EscapeReport:
    initial_error: float
    perturbed_errors: np.ndarray
    successes: np.ndarray
    factor: float
    norm_g: float
    norm_f: float
    error_threshold: float
    norm_ok: bool
    threshold_ok: bool

    @property
    def frequency(self):
        return float(self.successes.mean()) if self.successes.size else 0.0

    @property
    def preconditions_hold(self):
        return self.norm_ok and self.threshold_ok


def escape_trial(g, f, dist, n_draws, mc_samples, seed, rate=0.5):
    """Perturb ``g`` ``n_draws`` times and count the draws that shrink the error enough.

    All draws are scored on one shared sample set. On that set the error of
    a perturbation with node weights w is the quadratic form
    w'Kw - 2h'w + ||f||^2 built from node Gram statistics, which is exactly
    the sample average of (g_hat - f)^2.
    """
    if g.alpha_min <= 0:
        raise ParameterError("escape trials need alpha_min > 0")
    X = _samples(dist, mc_samples, derive_seed(seed, 0))
    G = g.node_outputs(X)
    fX = f(X)
    gX = G @ g.alphas
    node_sq = (G ** 2).mean(axis=0)
    norm_g_sq = float(np.mean(gX ** 2))
    norm_f_sq = float(np.mean(fX ** 2))
    initial = float(np.mean((gX - fX) ** 2))
    threshold = float(g.alphas @ g.alphas) * float(node_sq.max()) * math.sqrt(g.m) / (16.0 * math.sqrt(g.alpha_min))
    factor = escape_factor(g.alpha_min, g.m)

    Ga = G * g.alphas
    K = Ga.T @ Ga / X.shape[0]
    h = Ga.T @ fX / X.shape[0]
    masks = sample_mask_matrix(n_draws, g.m, rate, SeededRng(derive_seed(seed, 1)))
    W = masks / rate
    errors = np.einsum("di,ij,dj->d", W, K, W) - 2.0 * W @ h + norm_f_sq
    errors = np.maximum(errors, 0.0)
    successes = errors <= factor * initial
    report = EscapeReport(
        initial_error=initial,
        perturbed_errors=errors,
        successes=successes,
        factor=factor,
        norm_g=math.sqrt(norm_g_sq),
        norm_f=math.sqrt(norm_f_sq),
        error_threshold=threshold,
        norm_ok=norm_g_sq >= norm_f_sq,
        threshold_ok=initial >= threshold,
    )
    if not report.preconditions_hold:
        logger.warning("escape preconditions fail (norm_ok=%s threshold_ok=%s); frequencies are diagnostic",
                       report.norm_ok, report.threshold_ok)
    logger.info("escape trial m=%d: frequency %.4f at factor %.4f", g.m, report.frequency, factor)
    return report


def collinear_escape_instance(m, gap, link="identity", p=None, direction=None):
    """Network/target pair stuck at a symmetric configuration.

    Every hidden unit of ``g`` uses the same direction and weight 1; the
    target has the same units with total output weight ``m - gap``.
    """
    if not 0 < gap <= m:
        raise ParameterError(f"gap must lie in (0, m], got {gap}")
    p = p or m
    if direction is None:
        direction = np.zeros(p)
        direction[0] = 1.0
    link = link if isinstance(link, Link) else Link(link)
    thetas = np.tile(np.asarray(direction, dtype=np.float64), (m, 1))
    g = OneHiddenNet(np.ones(m), thetas, link)
    f = OneHiddenNet(np.full(m, (m - gap) / m), thetas, link)
    return g, f


# ---------------------- training ----------------------
def _torch_forward(net, thetas_t, X_t):
    Z = X_t @ thetas_t.T
    cols = [link.apply(Z[:, i], torch) for i, link in enumerate(net.links)]
    return torch.stack(cols, dim=1) @ torch.tensor(net.alphas, dtype=torch.float64)


def net_loss_gradient(net, f, X):
    """Gradient of mean (f(x) - g(x))^2 over X with respect to the hidden weights."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    thetas_t = torch.tensor(net.thetas, dtype=torch.float64, requires_grad=True)
    X_t = torch.as_tensor(X, dtype=torch.float64)
    f_t = torch.as_tensor(np.asarray(f(X), dtype=np.float64))
    loss = ((f_t - _torch_forward(net, thetas_t, X_t)) ** 2).mean()
    loss.backward()
    return thetas_t.grad.detach().numpy().copy()


def sgd_train_net(f, net, dist, eta, steps, seed):
    """One fresh sample per step, gradient step on every theta_i; alphas stay fixed."""
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    if steps <= 0:
        return net
    X = dist.draw(steps, SeededRng(seed))
    fX = torch.as_tensor(np.asarray(f(X), dtype=np.float64))
    X_t = torch.as_tensor(X)
    thetas_t = torch.tensor(net.thetas, dtype=torch.float64, requires_grad=True)
    for t in range(steps):
        out = _torch_forward(net, thetas_t, X_t[t:t + 1])
        loss = ((fX[t] - out[0]) ** 2)
        grad, = torch.autograd.grad(loss, thetas_t)
        with torch.no_grad():
            thetas_t -= eta * grad
    return net.with_thetas(thetas_t.detach().numpy().copy())


# ---------------------- perturbation restarts ----------------------
@dataclass
class EscapeLoopResult:
    net: OneHiddenNet
    error: float
    trajectory: list
    converged: bool
    max_rounds_exceeded: bool
    perturbations_accepted: int = 0
    rounds: int = 0


def dropout_escape_loop(f, net, dist, eta, steps, tol, max_rounds, seed,
                        mc_samples=20_000, grad_samples=256, perturb_tries=8, target_error=1e-12):
    """Alternate SGD phases with dropout perturbations when the gradient stalls.

    Each round first estimates the gradient norm on ``grad_samples`` fresh
    points. Below ``tol`` the net counts as stuck and up to
    ``perturb_tries`` perturbations are scored; the first one that strictly
    lowers the estimated error replaces the current net. Otherwise an SGD
    phase of ``steps`` steps runs. ``tol=inf`` therefore gives a pure
    perturbation search. The returned net is the best one seen.
    """
    X_eval = _samples(dist, mc_samples, derive_seed(seed, 0))
    f_eval = f(X_eval)

    def error(h):
        return float(np.mean((h(X_eval) - f_eval) ** 2))

    current = net
    current_err = error(net)
    best, best_err = current, current_err
    trajectory = [current_err]
    accepted = 0
    for r in range(1, max_rounds + 1):
        if best_err <= target_error:
            return EscapeLoopResult(best, best_err, trajectory, True, False, accepted, r)
        round_seed = derive_seed(seed, r)
        X_grad = _samples(dist, grad_samples, derive_seed(round_seed, 0))
        grad_norm = float(np.linalg.norm(net_loss_gradient(current, f, X_grad)))
        if grad_norm < tol:
            rng = SeededRng(derive_seed(round_seed, 1))
            for _ in range(perturb_tries):
                candidate, mask = dropout_perturb(current, rng)
                cand_err = error(candidate)
                if cand_err < current_err * (1.0 - _MIN_GAIN):
                    logger.debug("round %d: mask %s lowers error %.4g -> %.4g", r, mask, current_err, cand_err)
                    current, current_err = candidate, cand_err
                    accepted += 1
                    break
        else:
            current = sgd_train_net(f, current, dist, eta, steps, derive_seed(round_seed, 2))
            current_err = error(current)
        trajectory.append(current_err)
        if current_err < best_err:
            best, best_err = current, current_err
    converged = best_err <= target_error
    if not converged:
        logger.info("escape loop stopped after %d rounds at error %.4g", max_rounds, best_err)
    return EscapeLoopResult(best, best_err, trajectory, converged, not converged, accepted, max_rounds)
