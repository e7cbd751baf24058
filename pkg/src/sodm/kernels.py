"""Kernel evaluation, signed Gram entries, and RKHS geometry.

Kernel values are computed on demand; no full Gram matrix is ever
materialized. Solvers that sweep coordinates repeatedly go through
KernelRowCache, a fixed-capacity LRU of label-signed rows.
"""

from __future__ import annotations

import math
import os
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

LINEAR = "linear"
RBF = "rbf"

DEFAULT_CACHE_ROWS = 4096
CACHE_MB_ENV = "SODM_CACHE_MB"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its bandwidth. RBF has constant norm r = 1."""

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in (LINEAR, RBF):
            raise ValueError("unknown kernel kind %r" % self.kind)
        if self.kind == RBF:
            if self.gamma is None or self.gamma <= 0:
                raise ValueError("rbf kernel requires gamma > 0")
        elif self.gamma is not None:
            raise ValueError("linear kernel takes no gamma")

    def to_json(self):
        obj = {"kind": self.kind}
        if self.gamma is not None:
            obj["gamma"] = self.gamma
        return obj

    @classmethod
    def from_json(cls, obj):
        return cls(kind=obj["kind"], gamma=obj.get("gamma"))


def linear_kernel():
    return KernelSpec(LINEAR)


def rbf_kernel(gamma):
    return KernelSpec(RBF, float(gamma))


def _pairs_dot(x, z):
    """Dot product of two sorted (index, value) sequences."""
    total = 0.0
    i = j = 0
    while i < len(x) and j < len(z):
        xi, zi = x[i][0], z[j][0]
        if xi == zi:
            total += x[i][1] * z[j][1]
            i += 1
            j += 1
        elif xi < zi:
            i += 1
        else:
            j += 1
    return total


def _as_pairs(x):
    return x.features if hasattr(x, "features") else x


def eval_kernel(kernel, x, z):
    """kappa(x, z) for two sparse vectors given as (index, value) pairs."""
    x, z = _as_pairs(x), _as_pairs(z)
    dot = _pairs_dot(x, z)
    if kernel.kind == LINEAR:
        return dot
    # (xx + zz) first keeps the expression exactly symmetric in x and z
    sq = (_pairs_dot(x, x) + _pairs_dot(z, z)) - 2.0 * dot
    return math.exp(-kernel.gamma * max(sq, 0.0))


def rkhs_distance_sq(kernel, x, z):
    """||phi(x) - phi(z)||^2 expanded via the kernel trick, clamped at 0."""
    x, z = _as_pairs(x), _as_pairs(z)
    d2 = eval_kernel(kernel, x, x) - 2.0 * eval_kernel(kernel, x, z) + eval_kernel(
        kernel, z, z
    )
    return max(d2, 0.0)


def kernel_matrix(kernel, a_feats, b_feats, a_sq=None, b_sq=None):
    """Dense kernel block between two CSR feature matrices."""
    dots = np.asarray((a_feats @ b_feats.T).todense())
    if kernel.kind == LINEAR:
        return dots
    if a_sq is None:
        a_sq = np.asarray(a_feats.multiply(a_feats).sum(axis=1)).ravel()
    if b_sq is None:
        b_sq = np.asarray(b_feats.multiply(b_feats).sum(axis=1)).ravel()
    d2 = a_sq[:, None] + b_sq[None, :] - 2.0 * dots
    np.clip(d2, 0.0, None, out=d2)
    return np.exp(-kernel.gamma * d2)


def kernel_row(kernel, dataset, i):
    """kappa(x_i, x_j) for every j in the dataset, as a dense vector."""
    sq = dataset.sq_norms()
    return kernel_matrix(
        kernel, dataset.features[[i]], dataset.features, sq[[i]], sq
    ).ravel()


def kernel_diag(kernel, dataset):
    """kappa(x_i, x_i) for every instance (ones for RBF, squared norms for linear)."""
    if kernel.kind == RBF:
        return np.ones(len(dataset))
    return dataset.sq_norms().copy()


def q_entry(dataset, kernel, i, j):
    """Label-signed Gram entry y_i y_j kappa(x_i, x_j)."""
    m = len(dataset)
    if not (0 <= i < m and 0 <= j < m):
        raise IndexError("q_entry index out of range")
    return float(
        dataset.labels[i]
        * dataset.labels[j]
        * eval_kernel(kernel, dataset.instance(i), dataset.instance(j))
    )


def q_matrix(dataset, kernel):
    """Dense signed Gram matrix; analysis-scale only (oracles, diagnostics)."""
    sq = dataset.sq_norms()
    k = kernel_matrix(kernel, dataset.features, dataset.features, sq, sq)
    y = dataset.labels
    return k * np.outer(y, y)


def cache_rows_from_env(m):
    """Row capacity: min(m, 4096) by default, overridable via SODM_CACHE_MB."""
    mb = os.environ.get(CACHE_MB_ENV)
    if mb:
        rows = int(float(mb) * (1 << 20) / (8 * max(m, 1)))
        return max(1, min(m, rows))
    return min(m, DEFAULT_CACHE_ROWS)


class KernelRowCache:
    """LRU cache of label-signed kernel rows over one dataset.

    Row i is y * kappa(x_i, .), so a solver's s-cache update is a single
    scaled add. Each solve owns its cache (replication per worker), which
    keeps concurrent local solves free of shared mutable state.
    """

    def __init__(self, dataset, kernel, capacity=None):
        self.dataset = dataset
        self.kernel = kernel
        self.capacity = capacity if capacity is not None else cache_rows_from_env(len(dataset))
        self._rows = OrderedDict()
        self.hits = 0
        self.misses = 0

    def signed_row(self, i):
        row = self._rows.get(i)
        if row is not None:
            self.hits += 1
            self._rows.move_to_end(i)
            return row
        self.misses += 1
        row = kernel_row(self.kernel, self.dataset, i) * self.dataset.labels
        self._rows[i] = row
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return row
