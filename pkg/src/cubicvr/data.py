"""LIBSVM-format datasets: parsing, serialization, subsampling.

Feature indices are 1-based in files and 0-based in memory.  Labels are
mapped to {0, 1}.
"""

from __future__ import annotations

import gzip
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

DATA_DIR_ENV = "CUBICVR_DATA_DIR"

# name -> (n_features, label threshold or None)
KNOWN_DATASETS = {
    "a9a": (123, None),
    "ijcnn1": (22, None),
    # covtype.binary uses labels {1, 2}
    "covtype": (54, 1.5),
}


class ParseError(ValueError):
    """Malformed LIBSVM input.  ``lineno`` is 1-based, or None."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class FormatError(ParseError):
    """Well-formed tokens that violate the format (e.g. unsorted indices)."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sparse design matrix with binary labels.

    ``X`` is a CSR matrix of shape (n_samples, n_features) with sorted,
    unique column indices per row; ``y`` holds floats in {0, 1}.
    """

    X: sp.csr_matrix
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("number of rows and labels differ")
        if self.X.shape[0] == 0:
            raise ValueError("no samples")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def row(self, i: int) -> list[tuple[int, float]]:
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return list(zip(self.X.indices[lo:hi].tolist(), self.X.data[lo:hi].tolist()))

    @property
    def rows(self) -> list[list[tuple[int, float]]]:
        return [self.row(i) for i in range(self.n_samples)]

    def equals(self, other: "Dataset") -> bool:
        a, b = self.X, other.X
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and np.array_equal(self.y, other.y)
        )


def _map_label(raw: float, threshold: float | None, lineno: int) -> float:
    if threshold is not None:
        return 1.0 if raw > threshold else 0.0
    if raw == 1.0:
        return 1.0
    if raw == -1.0 or raw == 0.0:
        return 0.0
    raise ParseError(f"label {raw!r} outside {{-1, 0, +1}}; pass binarize_threshold", lineno)


def _iter_lines(source) -> Iterable[str]:
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def parse_libsvm(
    source,
    *,
    n_features: int | None = None,
    binarize_threshold: float | None = None,
) -> Dataset:
    """Parse LIBSVM text ``<label> <idx>:<val> ...`` into a :class:`Dataset`.

    ``source`` is a string or any iterable of lines.  Blank lines and
    ``#`` comments are ignored.  By default labels -1 and 0 map to 0 and
    +1 maps to 1; with ``binarize_threshold`` every label above the
    threshold maps to 1 and the rest to 0.  ``n_features`` fixes the
    dimension; otherwise the largest index seen is used.
    """
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    labels: list[float] = []
    for lineno, line in enumerate(_iter_lines(source), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            raw = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        labels.append(_map_label(raw, binarize_threshold, lineno))
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"bad token {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"bad token {tok!r}", lineno) from None
            if idx < 1:
                raise FormatError(f"feature index {idx} < 1", lineno)
            if idx <= prev:
                raise FormatError(f"feature indices not strictly increasing at {tok!r}", lineno)
            if n_features is not None and idx > n_features:
                raise FormatError(f"feature index {idx} exceeds n_features={n_features}", lineno)
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        indptr.append(len(indices))
    if not labels:
        raise ParseError("no samples")
    if n_features is None:
        n_features = (max(indices) + 1) if indices else 0
    X = sp.csr_matrix(
        (np.asarray(values, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), n_features),
    )
    return Dataset(X, np.asarray(labels, dtype=float))


def read_libsvm(path, **kwargs) -> Dataset:
    """Read a LIBSVM file; ``.gz`` files are decompressed transparently."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="ascii") as fh:
        ds = parse_libsvm(fh, **kwargs)
    ds.meta["source"] = str(path)
    return ds


def to_libsvm(ds: Dataset) -> str:
    """Serialize ``ds``; ``parse_libsvm`` of the result reproduces it exactly."""
    out = []
    for i in range(ds.n_samples):
        parts = ["1" if ds.y[i] == 1.0 else "0"]
        parts += [f"{j + 1}:{v!r}" for j, v in ds.row(i)]
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def subsample(ds: Dataset, m: int, seed: int) -> Dataset:
    """Draw ``m`` rows uniformly without replacement (order = draw order)."""
    if not 1 <= m <= ds.n_samples:
        raise ValueError(f"subsample size must lie in [1, {ds.n_samples}], got {m}")
    rng = np.random.default_rng(seed)
    pick = rng.permutation(ds.n_samples)[:m]
    meta = dict(ds.meta, subsample=m, subsample_seed=seed)
    return Dataset(ds.X[pick], ds.y[pick].copy(), meta)


def normalize_rows(ds: Dataset) -> Dataset:
    """Scale every nonzero row to unit Euclidean norm."""
    norms = np.sqrt(np.asarray(ds.X.multiply(ds.X).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    X = sp.csr_matrix(sp.diags(1.0 / norms) @ ds.X)
    return Dataset(X, ds.y.copy(), dict(ds.meta, normalized=True))


def find_dataset(name: str, data_dir=None) -> Path:
    """Locate ``name`` under ``data_dir`` or ``$CUBICVR_DATA_DIR``."""
    root = data_dir if data_dir is not None else os.environ.get(DATA_DIR_ENV)
    if root is None:
        raise FileNotFoundError(f"dataset {name!r}: set {DATA_DIR_ENV} or give a path")
    root = Path(root)
    for cand in (name, f"{name}.txt", f"{name}.libsvm", f"{name}.gz", f"{name}.binary", f"{name}.binary.gz"):
        if (root / cand).is_file():
            return root / cand
    raise FileNotFoundError(f"dataset {name!r} not found in {root}")


def load_dataset(name: str, data_dir=None, **kwargs) -> Dataset:
    """Load a named dataset with its known dimension and label rule."""
    n_features, threshold = KNOWN_DATASETS.get(name, (None, None))
    kwargs.setdefault("n_features", n_features)
    kwargs.setdefault("binarize_threshold", threshold)
    ds = read_libsvm(find_dataset(name, data_dir), **kwargs)
    ds.meta["name"] = name
    return ds


def make_onehot_surrogate(
    n: int,
    group_sizes=(8, 16, 7, 14, 6, 5, 2, 10, 10, 10, 10, 10, 10, 5),
    seed: int = 0,
    positive_rate: float = 0.24,
) -> Dataset:
    """Random one-hot categorical data with logistic labels.

    Every row has exactly one active binary feature per group, which
    mimics the shape of binarized census data (the default groups give
    123 features with 14 ones per row).
    """
    rng = np.random.default_rng(seed)
    sizes = np.asarray(group_sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    d = int(sizes.sum())
    cols = np.empty((n, len(sizes)), dtype=np.int64)
    for g, (k, off) in enumerate(zip(sizes, offsets)):
        p = rng.dirichlet(np.ones(k))
        cols[:, g] = off + rng.choice(k, size=n, p=p)
    w = rng.normal(scale=1.0, size=d)
    score = w[cols].sum(axis=1)
    # intercept chosen so the positive fraction is roughly positive_rate
    score -= np.quantile(score, 1 - positive_rate)
    y = (rng.random(n) < 1 / (1 + np.exp(-2.0 * score))).astype(float)
    X = sp.csr_matrix(
        (np.ones(cols.size), cols.ravel(), np.arange(0, cols.size + 1, len(sizes))),
        shape=(n, d),
    )
    X.sort_indices()
    return Dataset(X, y, {"name": "onehot-surrogate", "seed": seed})
