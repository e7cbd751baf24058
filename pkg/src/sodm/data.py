"""LIBSVM-format parsing, min-max normalization, and train/test splitting.

Feature indices are 1-based on disk (LIBSVM convention) and 0-based
internally; the parse/serialize boundary converts. Labels are strictly
binary {+1, -1}; anything else is rejected rather than remapped.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class DataError(ValueError):
    """Base class for dataset errors."""


class ParseError(DataError):
    """Malformed LIBSVM line (bad tokens or non-increasing indices)."""


class LabelError(DataError):
    """Label parsed to something outside {+1, -1}."""


@dataclass(frozen=True)
class Instance:
    """One labeled example.

    ``features`` is a tuple of (index, value) pairs with 0-based, strictly
    increasing indices; absent indices are implicit zeros.
    """

    features: tuple[tuple[int, float], ...]
    label: int


class Dataset:
    """Immutable collection of sparse instances with {+1, -1} labels.

    Backed by a CSR matrix of shape (n_instances, num_features) plus a
    float label vector. Safe to share across concurrent workers.
    """

    def __init__(self, features, labels, num_features=None):
        features = sp.csr_matrix(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64).ravel()
        if features.shape[0] != labels.shape[0]:
            raise DataError(
                "feature/label count mismatch: %d vs %d"
                % (features.shape[0], labels.shape[0])
            )
        bad = ~np.isin(labels, (1.0, -1.0))
        if bad.any():
            raise LabelError("labels must be +1 or -1, got %r" % labels[bad][0])
        if num_features is None:
            num_features = features.shape[1]
        elif num_features < features.shape[1]:
            raise DataError("num_features smaller than observed feature index")
        elif num_features > features.shape[1]:
            features = sp.csr_matrix(
                (features.data, features.indices, features.indptr),
                shape=(features.shape[0], num_features),
            )
        self.features = features
        self.labels = labels
        self.num_features = num_features
        self._sq_norms = None

    def __len__(self):
        return self.features.shape[0]

    def instance(self, i):
        row = self.features.getrow(i)
        order = np.argsort(row.indices)
        pairs = tuple(
            (int(row.indices[k]), float(row.data[k])) for k in order if row.data[k] != 0.0
        )
        return Instance(features=pairs, label=int(self.labels[i]))

    def instances(self):
        return [self.instance(i) for i in range(len(self))]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.num_features)

    def sq_norms(self):
        """Per-instance squared Euclidean norms, computed once and cached."""
        if self._sq_norms is None:
            self._sq_norms = np.asarray(
                self.features.multiply(self.features).sum(axis=1)
            ).ravel()
        return self._sq_norms

    @classmethod
    def from_instances(cls, instances, num_features=None):
        if num_features is None:
            num_features = 0
            for inst in instances:
                if inst.features:
                    num_features = max(num_features, inst.features[-1][0] + 1)
        rows, cols, vals, labels = [], [], [], []
        for r, inst in enumerate(instances):
            labels.append(inst.label)
            for idx, val in inst.features:
                rows.append(r)
                cols.append(idx)
                vals.append(val)
        mat = sp.csr_matrix(
            (vals, (rows, cols)), shape=(len(instances), num_features), dtype=np.float64
        )
        return cls(mat, np.asarray(labels, dtype=np.float64), num_features)

    @classmethod
    def from_arrays(cls, dense, labels):
        return cls(sp.csr_matrix(np.asarray(dense, dtype=np.float64)), labels)


def _parse_label(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise ParseError("line %d: cannot parse label %r" % (lineno, token)) from None
    if value == 1.0:
        return 1
    if value == -1.0:
        return -1
    raise LabelError("line %d: label must be +1 or -1, got %r" % (lineno, token))


def parse_libsvm(path):
    """Parse a LIBSVM text file into a Dataset.

    Each nonempty line is ``<label> <idx>:<val> ...`` with 1-based, strictly
    increasing indices. Raises ParseError/LabelError with the offending line
    number. ``num_features`` is the maximum observed index.
    """
    rows, cols, vals, labels = [], [], [], []
    width = 0
    n_rows = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            labels.append(_parse_label(tokens[0], lineno))
            prev_idx = 0
            for tok in tokens[1:]:
                idx_s, _, val_s = tok.partition(":")
                if not val_s:
                    raise ParseError("line %d: expected idx:val, got %r" % (lineno, tok))
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ParseError(
                        "line %d: bad feature token %r" % (lineno, tok)
                    ) from None
                if idx <= prev_idx:
                    raise ParseError(
                        "line %d: feature indices must be strictly increasing "
                        "(%d after %d)" % (lineno, idx, prev_idx)
                    )
                prev_idx = idx
                rows.append(n_rows)
                cols.append(idx - 1)
                vals.append(val)
                width = max(width, idx)
            n_rows += 1
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, width), dtype=np.float64)
    return Dataset(mat, np.asarray(labels, dtype=np.float64), width)


def serialize_libsvm(dataset, path):
    """Write a Dataset back to LIBSVM text (1-based indices, repr floats).

    Stored entries are emitted as-is, explicit zeros included, so a
    parse -> serialize -> parse round trip reproduces the dataset exactly.
    """
    feats = dataset.features
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(dataset)):
            lo, hi = feats.indptr[i], feats.indptr[i + 1]
            order = np.argsort(feats.indices[lo:hi])
            parts = ["+1" if dataset.labels[i] > 0 else "-1"]
            for k in order:
                parts.append(
                    "%d:%s" % (feats.indices[lo + k] + 1, repr(float(feats.data[lo + k])))
                )
            fh.write(" ".join(parts) + "\n")


@dataclass(frozen=True)
class FeatureScaling:
    """Per-feature (min, max) statistics fitted on training data."""

    f_min: np.ndarray
    f_max: np.ndarray

    def to_json(self):
        return {"min": self.f_min.tolist(), "max": self.f_max.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(
            np.asarray(obj["min"], dtype=np.float64),
            np.asarray(obj["max"], dtype=np.float64),
        )


_DENSE_CELL_LIMIT = int(1e8)  # normalize materializes a dense copy


def normalize(dataset):
    """Min-max scale every feature into [0, 1] using this dataset's statistics.

    Returns the scaled dataset and the fitted FeatureScaling so the identical
    transform can be applied to held-out data. Constant features map to 0.
    Implicit zeros participate in the statistics (an unobserved entry is the
    value 0, so columns with min > 0 are necessarily dense).
    """
    if len(dataset) == 0:
        raise DataError("cannot normalize an empty dataset")
    mins = dataset.features.min(axis=0).toarray().ravel()
    maxs = dataset.features.max(axis=0).toarray().ravel()
    scaling = FeatureScaling(mins, maxs)
    return apply_scaling(dataset, scaling, clamp=False), scaling


def apply_scaling(dataset, scaling, clamp=True):
    """Apply a fitted FeatureScaling; clamp to [0, 1] when values exceed it."""
    if dataset.num_features > scaling.f_min.shape[0]:
        raise DataError(
            "dataset has %d features but scaling was fitted on %d"
            % (dataset.num_features, scaling.f_min.shape[0])
        )
    m, d = len(dataset), dataset.num_features
    if m * max(d, 1) > _DENSE_CELL_LIMIT:
        raise DataError("normalize supports desk-scale data only")
    dense = dataset.features.toarray()
    rng = scaling.f_max[:d] - scaling.f_min[:d]
    safe = np.where(rng > 0, rng, 1.0)
    dense = (dense - scaling.f_min[:d]) / safe
    dense[:, rng <= 0] = 0.0
    if clamp:
        np.clip(dense, 0.0, 1.0, out=dense)
    return Dataset(sp.csr_matrix(dense), dataset.labels, dataset.num_features)


def split(dataset, train_fraction, seed):
    """Seeded uniform split: first floor(f*M) permuted instances go to train."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie strictly between 0 and 1")
    if len(dataset) < 2:
        raise DataError("need at least 2 instances to split")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    n_train = int(np.floor(train_fraction * len(dataset)))
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])
