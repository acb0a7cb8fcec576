"""Sparse labelled data: LIBSVM-style I/O, tf-idf, normalisation and splits."""
from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateSplit,
    DuplicateFeatureInRow,
    MalformedLine,
    NonFiniteValue,
)


@dataclass(frozen=True)
class Dataset:
    """CSR instance matrix plus one leaf label per row.

    ``instance_ids`` are row positions in the originally loaded file, so that
    a split keeps track of where each row came from.
    """

    X: sp.csr_matrix
    labels: np.ndarray
    instance_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        X = self.X if sp.isspmatrix_csr(self.X) else sp.csr_matrix(self.X)
        if not X.has_sorted_indices:
            X = X.sorted_indices()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.instance_ids is None:
            object.__setattr__(self, "instance_ids", np.arange(X.shape[0], dtype=np.int64))
        if len(self.labels) != X.shape[0]:
            raise ValueError("labels and rows differ in length")

    @property
    def num_instances(self) -> int:
        return self.X.shape[0]

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.num_instances

    def row(self, i: int) -> list[tuple[int, float]]:
        start, end = self.X.indptr[i], self.X.indptr[i + 1]
        return list(zip(self.X.indices[start:end].tolist(), self.X.data[start:end].tolist()))

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.X[rows], self.labels[rows], self.instance_ids[rows])

    def with_num_features(self, n: int) -> "Dataset":
        """Pad (or truncate, dropping higher ids) the feature dimension to ``n``."""
        if n == self.num_features:
            return self
        if n > self.num_features:
            X = sp.csr_matrix((self.X.data, self.X.indices, self.X.indptr),
                              shape=(self.num_instances, n))
        else:
            X = self.X[:, :n]
        return Dataset(X, self.labels, self.instance_ids)


# -- I/O ---------------------------------------------------------------------

def _header_base(line: str) -> bool | None:
    text = line.lstrip("#").strip().lower().replace(" ", "")
    if text in ("one-based", "base=1", "one_based"):
        return True
    if text in ("zero-based", "base=0", "zero_based"):
        return False
    return None


def load_sparse(lines: Iterable[str], one_based: bool = False,
                num_features: int | None = None) -> Dataset:
    """Parse ``label idx:val idx:val ...`` lines.

    A leading comment line ``# one-based`` (or ``# base=1``) switches the index
    base, as does ``one_based``. Rows are sorted by feature id.
    """
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    labels: list[int] = []
    seen_data = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if not seen_data:
                base = _header_base(line)
                if base is not None:
                    one_based = base
            continue
        seen_data = True
        parts = line.split()
        try:
            label = int(parts[0])
        except ValueError:
            raise MalformedLine(lineno, f"bad label {parts[0]!r}") from None
        row: dict[int, float] = {}
        for tok in parts[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise MalformedLine(lineno, f"bad pair {tok!r}")
            try:
                idx = int(idx_s) - (1 if one_based else 0)
                val = float(val_s)
            except ValueError:
                raise MalformedLine(lineno, f"bad pair {tok!r}") from None
            if idx < 0:
                raise MalformedLine(lineno, f"negative feature index in {tok!r}")
            if not math.isfinite(val):
                raise NonFiniteValue(lineno, f"non-finite value {val_s!r}")
            if idx in row:
                raise DuplicateFeatureInRow(lineno, f"feature {idx} repeated")
            row[idx] = val
        for idx in sorted(row):
            indices.append(idx)
            data.append(row[idx])
        indptr.append(len(indices))
        labels.append(label)
    width = (max(indices) + 1) if indices else 0
    if num_features is not None:
        if num_features < width:
            raise MalformedLine(0, f"feature id {width - 1} exceeds num_features={num_features}")
        width = num_features
    X = sp.csr_matrix((np.asarray(data, dtype=np.float64),
                       np.asarray(indices, dtype=np.int32),
                       np.asarray(indptr, dtype=np.int64)),
                      shape=(len(labels), width))
    return Dataset(X, np.asarray(labels, dtype=np.int64))


def open_text(path, mode: str = "r"):
    """Open a text file, transparently (de)compressing ``.gz`` paths."""
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def read_dataset(path, one_based: bool = False, num_features: int | None = None) -> Dataset:
    with open_text(path) as fh:
        return load_sparse(fh, one_based=one_based, num_features=num_features)


def dump_sparse(d: Dataset, one_based: bool = False) -> list[str]:
    """Inverse of :func:`load_sparse`; ``repr`` keeps values bit-exact."""
    off = 1 if one_based else 0
    out = ["# one-based\n"] if one_based else []
    X = d.X
    for i in range(d.num_instances):
        s, e = X.indptr[i], X.indptr[i + 1]
        pairs = " ".join(f"{j + off}:{v!r}" for j, v in
                         zip(X.indices[s:e].tolist(), X.data[s:e].tolist()))
        out.append(f"{d.labels[i]} {pairs}".rstrip() + "\n")
    return out


def write_dataset(d: Dataset, path, one_based: bool = False) -> None:
    with open_text(path, "w") as fh:
        fh.writelines(dump_sparse(d, one_based))


# -- transforms ----------------------------------------------------------------

def document_frequency(d: Dataset) -> np.ndarray:
    X = d.X.copy()
    X.eliminate_zeros()
    return np.bincount(X.indices, minlength=d.num_features)


def fit_idf(d: Dataset) -> np.ndarray:
    """``ln(N / df)`` per feature; zero where the feature never occurs."""
    df = document_frequency(d).astype(np.float64)
    idf = np.zeros(d.num_features)
    present = df > 0
    idf[present] = np.log(d.num_instances / df[present])
    return idf


def l2_normalize(d: Dataset) -> Dataset:
    X = d.X.copy().astype(np.float64)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    scale = np.ones_like(norms)
    nz = norms > 0
    scale[nz] = 1.0 / norms[nz]
    X = sp.diags(scale) @ X
    return Dataset(sp.csr_matrix(X), d.labels, d.instance_ids)


def apply_idf(d: Dataset, idf: np.ndarray, normalize: bool = True) -> Dataset:
    """Scale term frequencies by a frozen idf vector (features beyond it drop)."""
    width = len(idf)
    X = d.X if d.num_features == width else d.with_num_features(width).X
    X = sp.csr_matrix(X @ sp.diags(idf))
    X.eliminate_zeros()
    X.sort_indices()
    out = Dataset(X, d.labels, d.instance_ids)
    return l2_normalize(out) if normalize else out


def tfidf_transform(d: Dataset, idf: np.ndarray | None = None) -> Dataset:
    """tf x ln(N/df), then unit L2 rows. Pass ``idf`` to reuse training statistics."""
    if idf is None:
        idf = fit_idf(d)
    return apply_idf(d, idf, normalize=True)


# -- splitting -----------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 42
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split_indices(labels: np.ndarray, s: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise DegenerateSplit("cannot split an empty dataset")
    rng = np.random.default_rng(s.seed)
    # 1 - 0.9 is 0.0999..., which would round a 5-instance class down to 0
    val_frac = round(1.0 - s.train_fraction, 12)
    if s.stratified:
        val_parts = []
        for cls in np.unique(labels):
            members = np.flatnonzero(labels == cls)
            members = members[rng.permutation(len(members))]
            k = int(math.floor(len(members) * val_frac + 0.5))
            if len(members) >= 2:
                k = min(k, len(members) - 1)
            else:
                k = 0
            val_parts.append(members[:k])
        val = np.sort(np.concatenate(val_parts)) if val_parts else np.empty(0, np.int64)
    else:
        k = int(math.floor(n * val_frac + 0.5))
        val = np.sort(rng.permutation(n)[:k])
    mask = np.ones(n, dtype=bool)
    mask[val] = False
    train = np.flatnonzero(mask)
    if len(train) == 0 or len(val) == 0:
        raise DegenerateSplit(f"split of {n} instances leaves train={len(train)} validation={len(val)}")
    return train.astype(np.int64), val.astype(np.int64)


def split(d: Dataset, s: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Deterministic train/validation partition of ``d``."""
    train, val = split_indices(d.labels, s)
    return d.subset(train), d.subset(val)
