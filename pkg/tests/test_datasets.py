import numpy as np
import pytest
from sklearn.datasets import load_svmlight_file

from dropescape.datasets import (
    adversarial_removal,
    load_binary_dataset,
    load_dataset,
    make_binary,
    make_rank_one,
    make_regression,
    make_separable_logistic,
    make_synthetic,
    random_removal,
    split_dataset,
)
from dropescape.errors import DataError, ParameterError, ParseError
from dropescape.glm_core import Dataset


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_csv(tmp_path):
    d = load_dataset(_write(tmp_path, "a.csv", "a,b,y\n1,0,1\n"), "csv")
    np.testing.assert_array_equal(d.X, [[1.0, 0.0]])
    np.testing.assert_array_equal(d.y, [1.0])
    assert d.bound == 1.0


def test_load_csv_reports_bad_line(tmp_path):
    with pytest.raises(ParseError) as info:
        load_dataset(_write(tmp_path, "b.csv", "a,b,y\n1,notanumber,0\n"), "csv")
    assert info.value.line == 2
    with pytest.raises(ParseError) as info:
        load_dataset(_write(tmp_path, "c.csv", "a,b,y\n1,2,3\n1,2\n"), "csv")
    assert info.value.line == 3


def test_load_empty_files(tmp_path):
    with pytest.raises(DataError):
        load_dataset(_write(tmp_path, "e.csv", ""), "csv")
    with pytest.raises(DataError):
        load_dataset(_write(tmp_path, "h.csv", "a,b,y\n"), "csv")
    with pytest.raises(DataError):
        load_dataset(str(tmp_path / "missing.csv"), "csv")


def test_load_svmlight(tmp_path):
    d = load_dataset(_write(tmp_path, "a.svm", "−1 2:3\n"), "svmlight")
    np.testing.assert_array_equal(d.X, [[0.0, 3.0]])
    np.testing.assert_array_equal(d.y, [-1.0])


def test_load_svmlight_densifies_and_skips_qid(tmp_path):
    text = "1 qid:4 1:0.5 3:2 # comment\n-1 2:1\n\n"
    d = load_dataset(_write(tmp_path, "b.svm", text), "svmlight")
    np.testing.assert_array_equal(d.X, [[0.5, 0.0, 2.0], [0.0, 1.0, 0.0]])
    with pytest.raises(ParseError) as info:
        load_dataset(_write(tmp_path, "c.svm", "1 1:2\n1 x:2\n"), "svmlight")
    assert info.value.line == 2
    with pytest.raises(ParseError):
        load_dataset(_write(tmp_path, "d.svm", "1 0:2\n"), "svmlight")


def test_load_svmlight_agrees_with_sklearn_reader(tmp_path):
    text = "1 1:0.25 4:-2\n-1 qid:2 2:1.5\n# trailing note\n1 3:7 4:1e-3\n"
    d = load_dataset(_write(tmp_path, "e.svm", text), "svmlight")
    X, y = load_svmlight_file(str(tmp_path / "e.svm"), zero_based=False)
    np.testing.assert_array_equal(d.X, X.toarray())
    np.testing.assert_array_equal(d.y, y)
    assert d.X.shape == (3, 4)


def test_load_svmlight_reports_line_of_bad_index_order(tmp_path):
    with pytest.raises(ParseError) as info:
        load_dataset(_write(tmp_path, "f.svm", "1 1:2\n\n-1 3:1 2:1\n"), "svmlight")
    assert info.value.line == 3
    with pytest.raises(ParseError) as info:
        load_dataset(_write(tmp_path, "g.svm", "1 1:2 qid:3\n"), "svmlight")
    assert info.value.line == 1


def test_unknown_format(tmp_path):
    with pytest.raises(ParameterError):
        load_dataset(_write(tmp_path, "a.txt", "x"), "parquet")


def test_load_binary(tmp_path):
    d = load_binary_dataset(_write(tmp_path, "b.csv", "c1,c2\n1,0\n0,1\n1,1\n"))
    assert (d.n, d.p) == (3, 2)
    with pytest.raises(ParseError) as info:
        load_binary_dataset(_write(tmp_path, "c.csv", "c1,c2\n1,0\n0,2\n"))
    assert info.value.line == 3


def test_generators_are_seeded():
    a = make_regression(20, 3, seed=1)
    b = make_regression(20, 3, seed=1)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert np.abs(a.X).max() <= 1.0
    logistic = make_separable_logistic(50, 4, seed=2)
    assert set(np.unique(logistic.y)) <= {-1.0, 1.0}
    rank_one = make_rank_one(10, 3, seed=3)
    assert np.linalg.matrix_rank(rank_one.X) == 1
    binary = make_binary(6, 2, seed=4)
    assert set(np.unique(binary.rows)) <= {0, 1}
    with pytest.raises(ParameterError):
        make_synthetic("spiral", 10, 2, 0)


def test_split_dataset():
    d = make_regression(10, 2, seed=5)
    train, test = split_dataset(d, 0.5, seed=0)
    assert (train.n, test.n) == (5, 5)
    assert sorted(np.concatenate([train.y, test.y]).tolist()) == sorted(d.y.tolist())
    with pytest.raises(ParameterError):
        split_dataset(d, 1.0, seed=0)


def test_random_removal():
    d = make_regression(10, 2, seed=6)
    assert random_removal(d, 0.0, seed=1) is d
    half = random_removal(d, 0.5, seed=1)
    assert half.n == 5
    np.testing.assert_array_equal(half.X, random_removal(d, 0.5, seed=1).X)
    with pytest.raises(ParameterError):
        random_removal(d, 1.0, seed=1)


def test_adversarial_removal_drops_smallest_margin():
    d = Dataset([[0.1, 0.0], [0.9, 0.0], [0.5, 0.0]], [0.0, 0.0, 0.0])
    reduced = adversarial_removal(d, 1 / 3, np.array([1.0, 0.0]))
    np.testing.assert_array_equal(reduced.X[:, 0], [0.9, 0.5])
    assert adversarial_removal(d, 0.0, np.array([1.0, 0.0])) is d


def test_adversarial_removal_ties_go_to_lowest_index():
    d = Dataset([[1.0, 0.0]] * 4, [0.0, 1.0, 2.0, 3.0])
    reduced = adversarial_removal(d, 0.5, np.array([1.0, 0.0]))
    np.testing.assert_array_equal(reduced.y, [2.0, 3.0])


def test_adversarial_removal_composes():
    d = make_regression(12, 3, seed=7)
    theta = np.array([0.5, -1.0, 2.0])
    twice = adversarial_removal(adversarial_removal(d, 0.25, theta), 1 / 3, theta)
    once = adversarial_removal(d, 0.5, theta)
    assert {tuple(r) for r in twice.X} == {tuple(r) for r in once.X}
