"""Dual coordinate descent for the margin-distribution QP.

The dual objective over nonnegative multipliers (zeta, beta) is

    d(zeta, beta) = 1/2 (zeta-beta)' Q (zeta-beta)
                    + (m_scale*c/2) * (nu*||zeta||^2 + ||beta||^2)
                    + (theta-1) 1'zeta + (theta+1) 1'beta

with Q_ij = y_i y_j kappa(x_i, x_j) and c = (1-theta)^2 / (lambda*nu).
Each coordinate has the closed-form clamped minimizer
max(old - grad/h_diag, 0); a cached product s = Q(zeta-beta) makes both the
gradient and the objective O(1)/O(m) to evaluate. ``m_scale`` is the
instance-count factor multiplying c: the local problem of a partition of
size m uses m_scale = m, the merged full problem uses m_scale = M.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import Dataset, FeatureScaling
from .kernels import (
    LINEAR,
    RBF,
    KernelRowCache,
    KernelSpec,
    kernel_diag,
    kernel_matrix,
)

SUPPORT_EPSILON = 1e-10

ZETA = "zeta"
BETA = "beta"

# dense feature rows beat csr row slicing for narrow data
_DENSE_FEATURE_LIMIT = 256
_DENSE_CELL_LIMIT = int(5e7)


@dataclass(frozen=True)
class HyperParams:
    """lambda > 0, deviation tolerance theta in [0, 1), trade-off nu in (0, 1]."""

    lam: float
    theta: float
    nu: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if not 0.0 <= self.theta < 1.0:
            raise ValueError("theta must lie in [0, 1)")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError("nu must lie in (0, 1]")

    @property
    def c(self):
        return (1.0 - self.theta) ** 2 / (self.lam * self.nu)

    def to_json(self):
        return {"lambda": self.lam, "theta": self.theta, "nu": self.nu}

    @classmethod
    def from_json(cls, obj):
        return cls(lam=obj["lambda"], theta=obj["theta"], nu=obj["nu"])


@dataclass
class DualState:
    """Nonnegative dual vectors plus the cached product s = Q(zeta-beta)."""

    zeta: np.ndarray
    beta: np.ndarray
    s_cache: np.ndarray
    m_scale: float
    converged: bool = False

    @classmethod
    def zeros(cls, m, m_scale=None):
        return cls(
            zeta=np.zeros(m),
            beta=np.zeros(m),
            s_cache=np.zeros(m),
            m_scale=float(m if m_scale is None else m_scale),
        )

    def copy(self):
        return DualState(
            self.zeta.copy(),
            self.beta.copy(),
            self.s_cache.copy(),
            self.m_scale,
            self.converged,
        )

    @property
    def gamma(self):
        return self.zeta - self.beta

    def __len__(self):
        return self.zeta.shape[0]


@dataclass
class SolveReport:
    epochs: int
    final_violation: float
    objective_trajectory: list[float]
    wall_time_s: float
    converged: bool


@dataclass(frozen=True)
class KktReport:
    complementarity: float
    stationarity: float


def recompute_s(dataset, kernel, gamma):
    """Fresh s = Q(zeta-beta), chunked so no full Gram is materialized."""
    y = dataset.labels
    m = len(dataset)
    if kernel.kind == LINEAR:
        w = dataset.features.T @ (gamma * y)
        return y * (dataset.features @ w)
    nz = np.flatnonzero(gamma)
    if nz.size == 0:
        return np.zeros(m)
    coef = gamma[nz] * y[nz]
    nz_feats = dataset.features[nz]
    nz_sq = dataset.sq_norms()[nz]
    s = np.empty(m)
    block = max(1, int(4e6) // max(nz.size, 1))
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        k_blk = kernel_matrix(
            kernel, dataset.features[lo:hi], nz_feats, dataset.sq_norms()[lo:hi], nz_sq
        )
        s[lo:hi] = y[lo:hi] * (k_blk @ coef)
    return s


def _gradients_from_s(hp, state):
    a = state.m_scale * hp.c * hp.nu
    b = state.m_scale * hp.c
    gz = state.s_cache + a * state.zeta + (hp.theta - 1.0)
    gb = -state.s_cache + b * state.beta + (hp.theta + 1.0)
    return gz, gb


def _violation(coord, grad):
    return np.where(coord > 0, np.abs(grad), np.maximum(-grad, 0.0))


def max_violation(hp, state):
    """Max projected-gradient violation, from the cached s."""
    gz, gb = _gradients_from_s(hp, state)
    vz = _violation(state.zeta, gz)
    vb = _violation(state.beta, gb)
    return float(max(vz.max(initial=0.0), vb.max(initial=0.0)))


def max_violation_fresh(dataset, kernel, hp, state):
    """Max projected-gradient violation with s recomputed from scratch."""
    fresh = DualState(
        state.zeta, state.beta, recompute_s(dataset, kernel, state.gamma), state.m_scale
    )
    return max_violation(hp, fresh)


def _objective_from_s(hp, zeta, beta, s, m_scale):
    gamma = zeta - beta
    quad = 0.5 * float(gamma @ s)
    reg = 0.5 * m_scale * hp.c * (hp.nu * float(zeta @ zeta) + float(beta @ beta))
    lin = (hp.theta - 1.0) * float(zeta.sum()) + (hp.theta + 1.0) * float(beta.sum())
    return quad + reg + lin


def dual_objective(dataset, kernel, hp, state):
    """d(zeta, beta) with s recomputed from the dataset (cache-independent).

    With per-partition data and m_scale = m this is the local objective d_k;
    summing the values over a partition plan evaluates the block-diagonal
    joint objective.
    """
    if len(state) != len(dataset):
        raise ValueError("state dimension does not match dataset")
    s = recompute_s(dataset, kernel, state.gamma)
    return _objective_from_s(hp, state.zeta, state.beta, s, state.m_scale)


def objective_from_cache(hp, state):
    """d(zeta, beta) using the cached s; O(m)."""
    return _objective_from_s(hp, state.zeta, state.beta, state.s_cache, state.m_scale)


def _q_ii(dataset, kernel, i):
    if kernel.kind == RBF:
        return 1.0
    return float(dataset.sq_norms()[i])


def grad_coordinate(state, dataset, kernel, hp, which, i):
    """Partial derivative of the dual objective at one coordinate (cached s)."""
    if not 0 <= i < len(state):
        raise IndexError("coordinate index out of range")
    if which == ZETA:
        return float(
            state.s_cache[i] + state.m_scale * hp.c * hp.nu * state.zeta[i] + hp.theta - 1.0
        )
    if which == BETA:
        return float(
            -state.s_cache[i] + state.m_scale * hp.c * state.beta[i] + hp.theta + 1.0
        )
    raise ValueError("which must be 'zeta' or 'beta'")


def h_diag(dataset, kernel, hp, state, which, i):
    """Diagonal curvature Q_ii + m_scale*c*nu (zeta) or Q_ii + m_scale*c (beta)."""
    q_ii = _q_ii(dataset, kernel, i)
    if which == ZETA:
        return q_ii + state.m_scale * hp.c * hp.nu
    if which == BETA:
        return q_ii + state.m_scale * hp.c
    raise ValueError("which must be 'zeta' or 'beta'")


def coordinate_update(state, dataset, kernel, hp, which, i, cache=None):
    """Closed-form clamped update of one coordinate; keeps s_cache consistent.

    Returns the new coordinate value. The dual objective never increases.
    """
    g = grad_coordinate(state, dataset, kernel, hp, which, i)
    h = h_diag(dataset, kernel, hp, state, which, i)
    coords = state.zeta if which == ZETA else state.beta
    old = coords[i]
    new = old - g / h
    if new < 0.0:
        new = 0.0
    if new != old:
        coords[i] = new
        if cache is None:
            cache = KernelRowCache(dataset, kernel)
        signed_row = cache.signed_row(i)
        sign = 1.0 if which == ZETA else -1.0
        state.s_cache += (sign * (new - old) * dataset.labels[i]) * signed_row
    return float(new)


def solve_local(
    dataset,
    kernel,
    hp,
    init=None,
    tol=1e-4,
    max_epochs=100,
    seed=0,
    cache_rows=None,
):
    """Coordinate descent over a seeded random permutation of all 2m coordinates.

    Stops when the max projected-gradient violation drops to ``tol`` or
    ``max_epochs`` sweeps elapse (the returned state is then flagged
    non-converged). The warm start's s-cache is rebuilt on entry, so merged
    initial points from other partitions are accepted as-is.
    """
    m = len(dataset)
    if m == 0:
        raise ValueError("cannot solve on an empty dataset")
    if init is None:
        state = DualState.zeros(m)
    else:
        if len(init) != m:
            raise ValueError("warm start dimension does not match dataset")
        if (init.zeta < 0).any() or (init.beta < 0).any():
            raise ValueError("warm start must be componentwise nonnegative")
        state = init.copy()
    state.s_cache = recompute_s(dataset, kernel, state.gamma)

    started = time.perf_counter()
    if kernel.kind == LINEAR:
        epochs, trajectory, violation = _sweep_linear(
            dataset, hp, state, tol, max_epochs, seed
        )
    else:
        epochs, trajectory, violation = _sweep_kernel(
            dataset, kernel, hp, state, tol, max_epochs, seed, cache_rows
        )
    state.converged = violation <= tol
    report = SolveReport(
        epochs=epochs,
        final_violation=violation,
        objective_trajectory=trajectory,
        wall_time_s=time.perf_counter() - started,
        converged=state.converged,
    )
    return state, report


def _sweep_kernel(dataset, kernel, hp, state, tol, max_epochs, seed, cache_rows):
    m = len(dataset)
    rng = np.random.default_rng(seed)
    cache = KernelRowCache(dataset, kernel, cache_rows)
    y = dataset.labels
    kdiag = kernel_diag(kernel, dataset)
    a = state.m_scale * hp.c * hp.nu
    b = state.m_scale * hp.c
    tm1 = hp.theta - 1.0
    tp1 = hp.theta + 1.0
    zeta, beta, s = state.zeta, state.beta, state.s_cache

    trajectory = [objective_from_cache(hp, state)]
    violation = max_violation(hp, state)
    epochs = 0
    while violation > tol and epochs < max_epochs:
        for t in rng.permutation(2 * m).tolist():
            if t < m:
                i = t
                g = s[i] + a * zeta[i] + tm1
                old = zeta[i]
                new = old - g / (kdiag[i] + a)
                if new < 0.0:
                    new = 0.0
                if new != old:
                    zeta[i] = new
                    s += ((new - old) * y[i]) * cache.signed_row(i)
            else:
                i = t - m
                g = -s[i] + b * beta[i] + tp1
                old = beta[i]
                new = old - g / (kdiag[i] + b)
                if new < 0.0:
                    new = 0.0
                if new != old:
                    beta[i] = new
                    s -= ((new - old) * y[i]) * cache.signed_row(i)
        epochs += 1
        trajectory.append(objective_from_cache(hp, state))
        violation = max_violation(hp, state)
    return epochs, trajectory, violation


def _sweep_linear(dataset, hp, state, tol, max_epochs, seed):
    m = len(dataset)
    rng = np.random.default_rng(seed)
    y = dataset.labels
    kdiag = dataset.sq_norms()
    a = state.m_scale * hp.c * hp.nu
    b = state.m_scale * hp.c
    tm1 = hp.theta - 1.0
    tp1 = hp.theta + 1.0
    zeta, beta = state.zeta, state.beta
    feats = dataset.features
    w = feats.T @ (state.gamma * y)

    dense = (
        feats.shape[1] <= _DENSE_FEATURE_LIMIT
        and m * max(feats.shape[1], 1) <= _DENSE_CELL_LIMIT
    )
    if dense:
        xd = feats.toarray()
    else:
        indptr, indices, data = feats.indptr, feats.indices, feats.data

    def refresh():
        state.s_cache = y * (feats @ w)

    trajectory = [objective_from_cache(hp, state)]
    violation = max_violation(hp, state)
    epochs = 0
    while violation > tol and epochs < max_epochs:
        for t in rng.permutation(2 * m).tolist():
            i = t if t < m else t - m
            yi = y[i]
            if dense:
                xi = xd[i]
                si = yi * float(xi @ w)
            else:
                lo, hi = indptr[i], indptr[i + 1]
                cols = indices[lo:hi]
                vals = data[lo:hi]
                si = yi * float(vals @ w[cols])
            if t < m:
                g = si + a * zeta[i] + tm1
                old = zeta[i]
                new = old - g / (kdiag[i] + a)
                if new < 0.0:
                    new = 0.0
                if new != old:
                    zeta[i] = new
                    step = (new - old) * yi
                    if dense:
                        w += step * xi
                    else:
                        w[cols] += step * vals
            else:
                g = -si + b * beta[i] + tp1
                old = beta[i]
                new = old - g / (kdiag[i] + b)
                if new < 0.0:
                    new = 0.0
                if new != old:
                    beta[i] = new
                    step = (old - new) * yi
                    if dense:
                        w += step * xi
                    else:
                        w[cols] += step * vals
        epochs += 1
        refresh()
        trajectory.append(objective_from_cache(hp, state))
        violation = max_violation(hp, state)
    refresh()
    return epochs, trajectory, violation


@dataclass
class Model:
    """Trained decision function f(x) = sum_i gamma_i y_i kappa(x_i, x).

    Kernel models carry their support instances; linear models additionally
    materialize the dense weight vector. ``sign(0)`` predicts +1.
    """

    kernel: KernelSpec
    num_features: int
    support_indices: np.ndarray
    support_labels: np.ndarray
    support_gammas: np.ndarray
    support_features: sp.csr_matrix
    linear_w: np.ndarray | None = None
    hyperparams: HyperParams | None = None
    scaling: FeatureScaling | None = None

    def _aligned(self, feats):
        if feats.shape[1] > self.num_features:
            raise ValueError(
                "data has %d features but model was trained on %d"
                % (feats.shape[1], self.num_features)
            )
        if feats.shape[1] < self.num_features:
            feats = sp.csr_matrix(
                (feats.data, feats.indices, feats.indptr),
                shape=(feats.shape[0], self.num_features),
            )
        return feats

    def decision_function(self, features):
        feats = self._aligned(sp.csr_matrix(features, dtype=np.float64))
        if feats.shape[0] == 0:
            return np.zeros(0)
        if self.linear_w is not None:
            return np.asarray((feats @ self.linear_w)).ravel()
        if self.support_gammas.size == 0:
            return np.zeros(feats.shape[0])
        coef = self.support_gammas * self.support_labels
        k = kernel_matrix(self.kernel, feats, self.support_features)
        return k @ coef

    def predict(self, features):
        f = self.decision_function(features)
        return np.where(f >= 0.0, 1.0, -1.0)

    def norm_sq(self):
        """||w||^2 in the RKHS, computed as gamma' Q gamma over the support."""
        if self.linear_w is not None:
            return float(self.linear_w @ self.linear_w)
        if self.support_gammas.size == 0:
            return 0.0
        coef = self.support_gammas * self.support_labels
        k = kernel_matrix(self.kernel, self.support_features, self.support_features)
        return float(coef @ (k @ coef))


def recover_decision(state, dataset, kernel, hp=None, support_epsilon=SUPPORT_EPSILON):
    """Build the decision function from a dual state via w = X Y (zeta - beta).

    Entries with |gamma_i| <= support_epsilon are pruned from the support
    (storage only). Linear kernels also materialize the dense weights.
    """
    gamma = state.gamma
    keep = np.flatnonzero(np.abs(gamma) > support_epsilon)
    linear_w = None
    if kernel.kind == LINEAR:
        linear_w = dataset.features.T @ (gamma * dataset.labels)
        linear_w = np.asarray(linear_w).ravel()
    return Model(
        kernel=kernel,
        num_features=dataset.num_features,
        support_indices=keep.astype(np.int64),
        support_labels=dataset.labels[keep].copy(),
        support_gammas=gamma[keep].copy(),
        support_features=dataset.features[keep].copy(),
        linear_w=linear_w,
        hyperparams=hp,
    )


def primal_objective(model_or_w, dataset, hp):
    """Primal value at fixed weights, with slacks set to their optima.

    xi_i = max(0, 1-theta - y_i f(x_i)), eps_i = max(0, y_i f(x_i) - 1-theta);
    value = ||w||^2/2 + lambda*(||xi||^2 + nu*||eps||^2) / (2*M*(1-theta)^2).
    """
    if isinstance(model_or_w, Model):
        f = model_or_w.decision_function(dataset.features)
        nsq = model_or_w.norm_sq()
    else:
        w = np.asarray(model_or_w, dtype=np.float64).ravel()
        f = np.asarray(dataset.features @ w).ravel()
        nsq = float(w @ w)
    margins = dataset.labels * f
    xi = np.maximum(0.0, (1.0 - hp.theta) - margins)
    eps = np.maximum(0.0, margins - (1.0 + hp.theta))
    m = len(dataset)
    loss = hp.lam * (float(xi @ xi) + hp.nu * float(eps @ eps))
    return 0.5 * nsq + loss / (2.0 * m * (1.0 - hp.theta) ** 2)


def kkt_residuals(state, dataset, kernel, hp):
    """Complementarity max_i min(zeta_i, beta_i) and fresh stationarity violation."""
    comp = float(np.minimum(state.zeta, state.beta).max(initial=0.0))
    stat = max_violation_fresh(dataset, kernel, hp, state)
    return KktReport(complementarity=comp, stationarity=stat)


def model_to_json(model):
    support = []
    feats = model.support_features
    for row in range(feats.shape[0]):
        lo, hi = feats.indptr[row], feats.indptr[row + 1]
        order = np.argsort(feats.indices[lo:hi])
        pairs = [
            [int(feats.indices[lo + k]) + 1, float(feats.data[lo + k])] for k in order
        ]
        support.append(
            {
                "index": int(model.support_indices[row]),
                "label": int(model.support_labels[row]),
                "gamma": float(model.support_gammas[row]),
                "features": pairs,
            }
        )
    return {
        "schema": "sodm/1",
        "kernel": model.kernel.to_json(),
        "hyperparams": model.hyperparams.to_json() if model.hyperparams else None,
        "num_features": int(model.num_features),
        "support": support,
        "w": None if model.linear_w is None else [float(v) for v in model.linear_w],
        "normalization": model.scaling.to_json() if model.scaling else None,
    }


def model_from_json(obj):
    kernel = KernelSpec.from_json(obj["kernel"])
    num_features = int(obj["num_features"])
    support = obj["support"]
    rows, cols, vals = [], [], []
    for r, entry in enumerate(support):
        for idx, val in entry["features"]:
            rows.append(r)
            cols.append(int(idx) - 1)
            vals.append(float(val))
    feats = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(support), num_features), dtype=np.float64
    )
    return Model(
        kernel=kernel,
        num_features=num_features,
        support_indices=np.asarray([e["index"] for e in support], dtype=np.int64),
        support_labels=np.asarray([e["label"] for e in support], dtype=np.float64),
        support_gammas=np.asarray([e["gamma"] for e in support], dtype=np.float64),
        support_features=feats,
        linear_w=None if obj.get("w") is None else np.asarray(obj["w"], dtype=np.float64),
        hyperparams=HyperParams.from_json(obj["hyperparams"])
        if obj.get("hyperparams")
        else None,
        scaling=FeatureScaling.from_json(obj["normalization"])
        if obj.get("normalization")
        else None,
    )


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
