import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from dropescape.core_math import SeededRng
from dropescape.dp_simplex import (
    AuditTable,
    BinaryDataset,
    audit_argmin_distribution,
    binomial_ratio_check,
    compute_c_lambda,
    dropout_argmin,
    private_simplex_learn,
    ptr_threshold,
    sampled_audit_argmin,
)
from dropescape.errors import InputError, InsufficientDataError, ParameterError, SizeError


def _pair(n, p, seed, density=0.5):
    gen = np.random.default_rng(seed)
    rows = (gen.random((n, p)) < density).astype(int)
    other = rows.copy()
    other[0] = 1 - other[0]
    return BinaryDataset(rows), BinaryDataset(other)


def _enumerated_distribution(d):
    counts = np.zeros(d.p, dtype=int)
    for bits in itertools.product((0, 1), repeat=d.n * d.p):
        masks = np.array(bits).reshape(d.n, d.p)
        counts[dropout_argmin(d, masks)] += 1
    total = 2 ** (d.n * d.p)
    return [Fraction(int(c), total) for c in counts]


def test_binary_dataset_validation():
    with pytest.raises(InputError):
        BinaryDataset([[0, 2]])
    with pytest.raises(InputError):
        BinaryDataset(np.zeros((0, 3)))
    d = BinaryDataset([[1, 0], [0, 1]])
    assert (d.n, d.p) == (2, 2)


def test_compute_c_lambda():
    c, lam = compute_c_lambda(BinaryDataset([[1, 1], [1, 0], [0, 1], [1, 1]]))
    np.testing.assert_allclose(c, [0.5, 0.5])
    assert lam == 0.5
    with pytest.raises(InsufficientDataError):
        compute_c_lambda(BinaryDataset([[1, 1]]))


def test_dropout_argmin_ties_go_low():
    d = BinaryDataset([[1, 1], [1, 1]])
    assert dropout_argmin(d, np.zeros((2, 2), dtype=int)) == 0
    assert dropout_argmin(d, np.array([[1, 0], [0, 0]])) == 1
    with pytest.raises(InputError):
        dropout_argmin(d, np.zeros((3, 2), dtype=int))


def test_ptr_threshold():
    assert ptr_threshold(50, 0.5, 0.01) == pytest.approx(2 * math.log(100) / 25)


def test_private_simplex_pinned_noise():
    d = BinaryDataset(np.ones((50, 2), dtype=int))
    ok = private_simplex_learn(d, 0.5, 0.01, SeededRng(0), noise=0.0)
    assert ok.success and ok.outcome in (0, 1)
    assert ok.epsilon_total == 1.0
    assert ok.lam == pytest.approx(0.98)
    assert ok.vertex(2).sum() == 1.0
    failed = private_simplex_learn(d, 0.5, 0.01, SeededRng(0), noise=-1.0)
    assert not failed.success and failed.outcome is None and failed.vertex(2) is None


def test_private_simplex_parameter_checks():
    d = BinaryDataset(np.ones((4, 2), dtype=int))
    with pytest.raises(ParameterError):
        private_simplex_learn(d, 0.0, 0.1, SeededRng(0))
    with pytest.raises(ParameterError):
        private_simplex_learn(d, 1.0, 1.0, SeededRng(0))


@pytest.mark.slow
def test_private_simplex_rarely_passes_on_unstable_data():
    rows = np.zeros((20, 2), dtype=int)
    rows[0, 1] = 1
    d = BinaryDataset(rows)
    rng = SeededRng(4)
    delta = 0.1
    passes = sum(private_simplex_learn(d, 1.0, delta, rng).success for _ in range(10_000))
    assert passes / 10_000 <= delta


@pytest.mark.slow
def test_private_simplex_rarely_fails_on_stable_data():
    gen = np.random.default_rng(6)
    d = BinaryDataset((gen.random((40, 3)) < 0.7).astype(int))
    _, lam = compute_c_lambda(d)
    delta = 0.05
    # smallest eps with Lambda >= 4 ln(1/delta) / (eps n)
    eps = 4.0 * math.log(1.0 / delta) / (d.n * lam)
    rng = SeededRng(7)
    trials = 100_000
    fails = sum(not private_simplex_learn(d, eps, delta, rng).success for _ in range(trials))
    assert fails / trials <= delta + 3 * math.sqrt(delta / trials)


def test_exhaustive_audit_matches_enumeration():
    d, d_prime = _pair(3, 2, 1)
    table = audit_argmin_distribution(d, d_prime)
    assert table.probs_d == _enumerated_distribution(d)
    assert table.probs_d_prime == _enumerated_distribution(d_prime)


def test_binomial_audit_matches_exhaustive():
    for seed, (n, p) in enumerate([(6, 2), (4, 3), (5, 4)]):
        d, d_prime = _pair(n, p, seed)
        exact = audit_argmin_distribution(d, d_prime, method="exhaustive", threads=2)
        binom = audit_argmin_distribution(d, d_prime, method="binomial")
        assert exact.probs_d == binom.probs_d
        assert exact.probs_d_prime == binom.probs_d_prime


def test_audit_checks_inputs():
    d, d_prime = _pair(6, 2, 0)
    with pytest.raises(InputError):
        audit_argmin_distribution(d, BinaryDataset(np.ones((5, 2), dtype=int)))
    far = d.rows.copy()
    far[:2] = 1 - far[:2]
    with pytest.raises(InputError):
        audit_argmin_distribution(d, BinaryDataset(far))
    big, big_prime = _pair(11, 2, 0)
    with pytest.raises(SizeError):
        audit_argmin_distribution(big, big_prime)
    with pytest.raises(ParameterError):
        audit_argmin_distribution(d, d_prime, method="guess")


def test_audit_table_ratios():
    table = AuditTable([Fraction(1, 2), Fraction(1, 2), Fraction(0)], [Fraction(1, 4), Fraction(3, 4), Fraction(0)], "x")
    assert table.ratios == [2.0, 1.5, None]
    assert table.max_ratio == 2.0
    inf_table = AuditTable([Fraction(1), Fraction(0)], [Fraction(1, 2), Fraction(1, 2)], "x")
    assert inf_table.max_ratio == math.inf
    assert list(inf_table.rows())[1] == (1, 0.0, 0.5, math.inf)


def test_sampled_audit_brackets_exact_distribution():
    d, d_prime = _pair(5, 3, 7)
    exact = audit_argmin_distribution(d, d_prime, method="binomial")
    sampled = sampled_audit_argmin(d, d_prime, 20_000, SeededRng(3), confidence=0.999)
    assert sum(sampled.probs_d) == 1
    for probs, lower, upper in ((exact.probs_d, sampled.lower[0], sampled.upper[0]),
                                (exact.probs_d_prime, sampled.lower[1], sampled.upper[1])):
        for p, lo, hi in zip(probs, lower, upper):
            assert lo <= float(p) <= hi


def test_binomial_ratio_check_small():
    rows = binomial_ratio_check(4)
    assert [k for k, _, _ in rows] == [0, 1]
    k, ratio, bound = rows[0]
    assert ratio == Fraction(6, 5)
    assert bound == Fraction(3, 2)
    with pytest.raises(ParameterError):
        binomial_ratio_check(5)
