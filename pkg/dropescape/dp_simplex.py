"""
Private dropout learning of linear losses over the simplex, and its auditors.

On binary data the dropout ERM over the simplex picks a vertex: the column
with the smallest masked count. :func:`private_simplex_learn` releases that
vertex behind a propose-test-release check on the leave-one-out statistic.
The auditors compute the exact distribution of the chosen vertex on two
neighbouring datasets so the privacy ratio can be inspected directly.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .core_math import SeededRng, sample_laplace, sample_mask_matrix
from .errors import InputError, InsufficientDataError, ParameterError, SizeError
from .workers import WorkerPool

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 20
_ENUM_BLOCK = 1 << 14


@dataclass(frozen=True)
class BinaryDataset:
    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows)
        if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
            raise InputError(f"binary data must be a non-empty n x p array, got shape {rows.shape}")
        if not np.all((rows == 0) | (rows == 1)):
            raise InputError("binary data entries must be 0 or 1")
        rows = rows.astype(np.int64)
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def p(self):
        return self.rows.shape[1]


@dataclass
class SimplexPrivateResult:
    outcome: int  # chosen coordinate (0-based) or None on failure
    lambda_hat: float
    threshold: float
    lam: float
    eps: float
    delta: float

    @property
    def success(self):
        return self.outcome is not None

    @property
    def epsilon_total(self):
        # test and release each spend eps
        return 2.0 * self.eps

    def vertex(self, p):
        if self.outcome is None:
            return None
        e = np.zeros(p)
        e[self.outcome] = 1.0
        return e


def compute_c_lambda(d):
    if d.n < 2:
        raise InsufficientDataError("leave-one-out statistic needs at least two rows")
    c = (d.rows.sum(axis=0) - d.rows.max(axis=0)) / d.n
    return c.astype(np.float64), float(c.min())


def _mask_array(d, masks):
    if isinstance(masks, np.ndarray):
        M = masks
    else:
        M = np.array([m.bits if hasattr(m, "bits") else m for m in masks])
    if M.shape != d.rows.shape:
        raise InputError(f"need one length-{d.p} mask per row, got shape {M.shape}")
    return M


def dropout_argmin(d, masks):
    """Index (0-based) of the smallest masked column sum; ties go to the lowest index."""
    sums = (d.rows * _mask_array(d, masks)).sum(axis=0)
    return int(np.argmin(sums))


def ptr_threshold(n, eps, delta):
    return 2.0 * math.log(1.0 / delta) / (n * eps)


def private_simplex_learn(d, eps, delta, rng, noise=None):
    """Propose-test-release vertex selection; ``noise`` pins the Laplace draw."""
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    _, lam = compute_c_lambda(d)
    if noise is None:
        noise = sample_laplace(1.0 / (d.n * eps), rng)
    lam_hat = lam + noise
    threshold = ptr_threshold(d.n, eps, delta)
    outcome = None
    if lam_hat > threshold:
        outcome = dropout_argmin(d, sample_mask_matrix(d.n, d.p, 0.5, rng))
    else:
        logger.info("simplex PTR failed: lambda_hat=%.4g <= threshold=%.4g", lam_hat, threshold)
    return SimplexPrivateResult(outcome, lam_hat, threshold, lam, eps, delta)


# ---------------------- audits ----------------------
@dataclass
class AuditTable:
    probs_d: list  # Fraction per outcome
    probs_d_prime: list
    method: str
    lower: list = field(default=None)  # confidence bounds (sampled audits only)
    upper: list = field(default=None)

    @property
    def ratios(self):
        out = []
        for a, b in zip(self.probs_d, self.probs_d_prime):
            if a == 0 and b == 0:
                out.append(None)
            elif a == 0 or b == 0:
                out.append(math.inf)
            else:
                out.append(float(max(a / b, b / a)))
        return out

    @property
    def max_ratio(self):
        finite = [r for r in self.ratios if r is not None]
        return max(finite) if finite else 1.0

    def rows(self):
        for j, (a, b, r) in enumerate(zip(self.probs_d, self.probs_d_prime, self.ratios)):
            yield j, float(a), float(b), r


def _check_neighbors(d, d_prime):
    if d.rows.shape != d_prime.rows.shape:
        raise InputError(f"datasets have shapes {d.rows.shape} and {d_prime.rows.shape}")
    differing = int(np.any(d.rows != d_prime.rows, axis=1).sum())
    if differing > 1:
        raise InputError(f"datasets differ in {differing} rows, neighbours differ in at most one")


def _argmin_counts_block(rows, start, stop):
    cells = rows.size
    codes = np.arange(start, stop, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(cells, dtype=np.int64)) & 1
    sums = (bits.reshape(-1, *rows.shape) * rows).sum(axis=1)
    return np.bincount(np.argmin(sums, axis=1), minlength=rows.shape[1])


def _exhaustive_distribution(d, threads):
    total = 1 << (d.n * d.p)
    blocks = [(s, min(s + _ENUM_BLOCK, total)) for s in range(0, total, _ENUM_BLOCK)]
    parts = WorkerPool(threads).map(lambda b: _argmin_counts_block(d.rows, *b), blocks)
    counts = np.sum(parts, axis=0)
    return [Fraction(int(c), total) for c in counts]


def _binomial_pmf(nu):
    return [Fraction(math.comb(nu, v), 1 << nu) for v in range(nu + 1)]


def _binomial_distribution(d):
    # column sums are independent Binomial(nu_j, 1/2) under uniform masks
    nus = [int(v) for v in d.rows.sum(axis=0)]
    pmfs = [_binomial_pmf(nu) for nu in nus]

    def tail(j, v, strict):
        # P(f_j > v) if strict else P(f_j >= v)
        lo = v + 1 if strict else v
        return sum(pmfs[j][max(lo, 0):], Fraction(0))

    probs = []
    for j in range(d.p):
        pj = Fraction(0)
        for v, mass in enumerate(pmfs[j]):
            if mass == 0:
                continue
            term = mass
            for k in range(d.p):
                if k == j:
                    continue
                term *= tail(k, v, strict=k < j)
                if term == 0:
                    break
            pj += term
        probs.append(pj)
    return probs


def audit_argmin_distribution(d, d_prime, method="exhaustive", threads=1):
    """Exact distribution of the dropout argmin on two neighbouring datasets.

    ``method="exhaustive"`` enumerates all 2^(n p) mask assignments and is
    limited to n p <= 20; ``method="binomial"`` uses the independence of the
    column sums and works at any size.
    """
    _check_neighbors(d, d_prime)
    if method == "exhaustive":
        if d.n * d.p > EXHAUSTIVE_LIMIT:
            raise SizeError(f"n*p = {d.n * d.p} exceeds the exhaustive limit {EXHAUSTIVE_LIMIT}")
        a = _exhaustive_distribution(d, threads)
        b = _exhaustive_distribution(d_prime, threads)
    elif method == "binomial":
        a = _binomial_distribution(d)
        b = _binomial_distribution(d_prime)
    else:
        raise ParameterError(f"unknown audit method '{method}'")
    table = AuditTable(a, b, method)
    logger.info("audit (%s) n=%d p=%d max ratio %.6g", method, d.n, d.p, table.max_ratio)
    return table


def sampled_audit_argmin(d, d_prime, samples, rng, confidence=0.95):
    """Monte Carlo audit with Clopper-Pearson intervals per outcome."""
    _check_neighbors(d, d_prime)
    if samples < 1:
        raise ParameterError(f"samples must be positive, got {samples}")
    gen = rng.generator if isinstance(rng, SeededRng) else rng
    a_counts = np.zeros(d.p, dtype=np.int64)
    b_counts = np.zeros(d.p, dtype=np.int64)
    done = 0
    while done < samples:
        s = min(_ENUM_BLOCK, samples - done)
        masks = (gen.random((s, d.n, d.p)) < 0.5).astype(np.int64)
        a_counts += np.bincount(np.argmin((masks * d.rows).sum(axis=1), axis=1), minlength=d.p)
        b_counts += np.bincount(np.argmin((masks * d_prime.rows).sum(axis=1), axis=1), minlength=d.p)
        done += s
    tail = (1.0 - confidence) / 2.0
    lower, upper = [], []
    for counts in (a_counts, b_counts):
        k = counts.astype(np.float64)
        lo = np.where(k > 0, stats.beta.ppf(tail, k, samples - k + 1), 0.0)
        hi = np.where(k < samples, stats.beta.ppf(1 - tail, k + 1, samples - k), 1.0)
        lower.append(lo.tolist())
        upper.append(hi.tolist())
    return AuditTable(
        [Fraction(int(c), samples) for c in a_counts],
        [Fraction(int(c), samples) for c in b_counts],
        "sampled",
        lower=lower,
        upper=upper,
    )


def binomial_ratio_check(nu):
    """Exact point-mass ratios of Binomial(nu+1, 1/2) vs Binomial(nu, 1/2) at nu/2 + k."""
    if nu < 2 or nu % 2:
        raise ParameterError(f"nu must be even and at least 2, got {nu}")
    out = []
    for k in range(nu // 2):
        v = nu // 2 + k
        with_row = Fraction(math.comb(nu + 1, v), 1 << (nu + 1))
        without_row = Fraction(math.comb(nu, v), 1 << nu)
        ratio = max(with_row / without_row, without_row / with_row)
        bound = Fraction(nu // 2 + k + 1, nu // 2 - k)
        out.append((k, ratio, bound))
    return out
