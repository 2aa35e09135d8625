"""
Dataset ingestion (CSV and svmlight), synthetic generators and the two
training-set removal schemes of the stability benchmark.
"""
import csv
import io
import logging
import math
import re

import numpy as np
from sklearn.datasets import load_svmlight_file

from .core_math import SeededRng, as_real_vector
from .dp_simplex import BinaryDataset
from .errors import DataError, ParameterError, ParseError
from .glm_core import Dataset

logger = logging.getLogger(__name__)

FORMATS = ("csv", "svmlight")

_PAIR = re.compile(r"^(\d+):(\S+)$")


# ---------------------- loaders ----------------------
def _read_lines(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read().replace("−", "-").splitlines()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e


def _parse_csv(lines):
    reader = csv.reader(lines)
    header = None
    rows, labels = [], []
    for lineno, record in enumerate(reader, start=1):
        if not record or all(not cell.strip() for cell in record):
            continue
        if header is None:
            header = record
            if len(header) < 2:
                raise ParseError("header needs at least one feature and a label column", lineno)
            continue
        if len(record) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(record)}", lineno)
        try:
            values = [float(cell) for cell in record]
        except ValueError as e:
            raise ParseError(str(e), lineno) from e
        rows.append(values[:-1])
        labels.append(values[-1])
    return rows, labels


def _check_svmlight_line(tokens, lineno):
    try:
        float(tokens[0])
    except ValueError as e:
        raise ParseError(f"bad label {tokens[0]!r}", lineno) from e
    last = 0
    for pos, tok in enumerate(tokens[1:], start=1):
        if tok.startswith("qid:"):
            if pos != 1:
                raise ParseError("qid must directly follow the label", lineno)
            continue
        match = _PAIR.match(tok)
        if match is None:
            raise ParseError(f"bad feature token {tok!r}", lineno)
        idx = int(match.group(1))
        if idx < 1:
            raise ParseError(f"feature indices are 1-based, got {idx}", lineno)
        if idx <= last:
            raise ParseError(f"feature indices must increase, got {idx} after {last}", lineno)
        try:
            float(match.group(2))
        except ValueError as e:
            raise ParseError(f"bad feature value in {tok!r}", lineno) from e
        last = idx


def _parse_svmlight(lines):
    data_lines = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            _check_svmlight_line(line.split(), lineno)
            data_lines += 1
    if not data_lines:
        return [], []
    payload = io.BytesIO("\n".join(lines).encode("utf-8"))
    try:
        X, y = load_svmlight_file(payload, dtype=np.float64, zero_based=False)
    except ValueError as e:
        raise ParseError(str(e)) from e
    return X.toarray(), y


def load_dataset(path, fmt="csv"):
    """Read a CSV (header row, label last) or svmlight file into a :class:`Dataset`."""
    if fmt not in FORMATS:
        raise ParameterError(f"unknown data format '{fmt}'")
    lines = _read_lines(path)
    rows, labels = _parse_csv(lines) if fmt == "csv" else _parse_svmlight(lines)
    if len(labels) == 0:
        raise DataError(f"{path} holds no data rows")
    X = np.asarray(rows, dtype=np.float64).reshape(len(labels), -1)
    if X.shape[1] == 0:
        raise DataError(f"{path} holds no feature columns")
    logger.info("loaded %s: n=%d p=%d", path, X.shape[0], X.shape[1])
    return Dataset(X, np.asarray(labels, dtype=np.float64))


def load_binary_dataset(path):
    """CSV of 0/1 features (header row, every column a feature)."""
    lines = _read_lines(path)
    reader = csv.reader(lines)
    header, rows = None, []
    for lineno, record in enumerate(reader, start=1):
        if not record:
            continue
        if header is None:
            header = record
            continue
        try:
            values = [int(cell) for cell in record]
        except ValueError as e:
            raise ParseError(str(e), lineno) from e
        if len(values) != len(header) or any(v not in (0, 1) for v in values):
            raise ParseError("expected one 0/1 entry per header column", lineno)
        rows.append(values)
    if not rows:
        raise DataError(f"{path} holds no data rows")
    return BinaryDataset(np.asarray(rows))


# ---------------------- synthetic data ----------------------
def make_regression(n, p, seed, noise=0.1):
    """Features uniform on [-1, 1]^p, y = <w, x> + N(0, noise^2) with w ~ N(0, I)."""
    gen = SeededRng(seed).generator
    X = gen.uniform(-1.0, 1.0, (n, p))
    w = gen.standard_normal(p)
    y = X @ w + noise * gen.standard_normal(n)
    return Dataset(X, y)


def make_separable_logistic(n, p, seed):
    """Gaussian features, labels sign(<w, x>) in {-1, +1}."""
    gen = SeededRng(seed).generator
    X = gen.standard_normal((n, p)) / math.sqrt(p)
    w = gen.standard_normal(p)
    y = np.where(X @ w >= 0, 1.0, -1.0)
    return Dataset(X, y)


def make_rank_one(n, p, seed, noise=0.1):
    """All rows parallel to one unit direction; their Gram matrix has rank one."""
    gen = SeededRng(seed).generator
    v = gen.standard_normal(p)
    v /= np.linalg.norm(v)
    scale = gen.uniform(-1.0, 1.0, n)
    X = np.outer(scale, v)
    y = 2.0 * scale + noise * gen.standard_normal(n)
    return Dataset(X, y)


def make_binary(n, p, seed, density=0.5):
    gen = SeededRng(seed).generator
    return BinaryDataset((gen.random((n, p)) < density).astype(np.int64))


SYNTHETIC = {
    "regression": make_regression,
    "logistic": make_separable_logistic,
    "rank_one": make_rank_one,
}


def make_synthetic(kind, n, p, seed, **kwargs):
    try:
        maker = SYNTHETIC[kind]
    except KeyError:
        raise ParameterError(f"unknown synthetic dataset '{kind}'") from None
    return maker(n, p, seed, **kwargs)


# ---------------------- splits and removals ----------------------
def _count(x):
    # guard against (1 - rho) * n landing a hair above an integer
    return round(x, 9)


def _check_rho(rho):
    if not 0.0 <= rho < 1.0:
        raise ParameterError(f"removal fraction must lie in [0, 1), got {rho}")


def split_dataset(d, train_fraction, seed):
    if not 0.0 < train_fraction < 1.0:
        raise ParameterError(f"train fraction must lie in (0, 1), got {train_fraction}")
    perm = SeededRng(seed).generator.permutation(d.n)
    n_train = min(max(1, int(math.floor(_count(train_fraction * d.n)))), d.n - 1)
    return d.subset(np.sort(perm[:n_train])), d.subset(np.sort(perm[n_train:]))


def random_removal(d, rho, seed):
    _check_rho(rho)
    keep = math.ceil(_count((1.0 - rho) * d.n))
    if keep < 1:
        raise DataError("removal would leave no rows")
    if keep == d.n:
        return d
    rows = SeededRng(seed).generator.choice(d.n, size=keep, replace=False)
    return d.subset(np.sort(rows))


def adversarial_removal(d, rho, theta_full):
    """Drop the floor(n rho) rows with the smallest |<x, theta_full>|, lowest index first on ties."""
    _check_rho(rho)
    theta_full = as_real_vector(theta_full, "theta_full")
    drop = math.floor(_count(d.n * rho))
    if drop >= d.n:
        raise DataError("removal would leave no rows")
    if drop == 0:
        return d
    margins = np.abs((d.X * theta_full).sum(axis=1))
    order = np.argsort(margins, kind="stable")
    return d.subset(np.sort(order[drop:]))
