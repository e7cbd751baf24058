"""Distributed SVRG for the linear-kernel primal problem.

Nodes are simulated in process: every epoch broadcasts the anchor weights,
map-reduces the full gradient over nodes with a deterministic pairwise
reduction, then performs variance-reduced steps serially in round-robin
fashion, one token moving between nodes, sampling each node's instances
without replacement until every node's pool is empty. Communication is
counted (broadcasts, reductions, token passes), not transported.

The per-instance gradient of the primal is

    grad p_i(w) = w + lambda*(y_i w'x_i + theta - 1) y_i x_i / (1-theta)^2   if y_i w'x_i < 1-theta
                  w + lambda*nu*(y_i w'x_i - theta - 1) y_i x_i / (1-theta)^2  if y_i w'x_i > 1+theta
                  w                                                           otherwise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernels import LINEAR
from .partition import build_plan, default_stratums, partition_indices
from .solver import primal_objective


class UnsupportedConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SvrgConfig:
    nodes: int
    epochs: int
    stratums: int | None = None
    eta: float | None = None  # None picks the conservative inverse-smoothness step
    seed: int = 0
    steps_per_visit: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.nodes < 1:
            raise UnsupportedConfigError("need at least one node")
        if self.epochs < 1:
            raise UnsupportedConfigError("need at least one epoch")
        if self.eta is not None and self.eta < 0:
            raise UnsupportedConfigError("eta must be nonnegative")
        if self.steps_per_visit < 1:
            raise UnsupportedConfigError("steps_per_visit must be >= 1")


def _band_coef(margin, label, hp):
    if margin < 1.0 - hp.theta:
        return hp.lam * (margin + hp.theta - 1.0) * label / (1.0 - hp.theta) ** 2
    if margin > 1.0 + hp.theta:
        return hp.lam * hp.nu * (margin - hp.theta - 1.0) * label / (1.0 - hp.theta) ** 2
    return 0.0


def instance_gradient(w, instance, hp):
    """grad p_i(w) for a single instance; exactly w inside the deviation band."""
    w = np.asarray(w, dtype=np.float64)
    dot = 0.0
    for idx, val in instance.features:
        dot += w[idx] * val
    margin = instance.label * dot
    grad = w.copy()
    coef = _band_coef(margin, instance.label, hp)
    if coef != 0.0:
        for idx, val in instance.features:
            grad[idx] += coef * val
    return grad


def instance_primal(w, instance, hp):
    """Per-instance primal contribution whose mean over instances is p(w)."""
    w = np.asarray(w, dtype=np.float64)
    dot = 0.0
    for idx, val in instance.features:
        dot += w[idx] * val
    margin = instance.label * dot
    xi = max(0.0, (1.0 - hp.theta) - margin)
    eps = max(0.0, margin - (1.0 + hp.theta))
    return 0.5 * float(w @ w) + hp.lam * (xi * xi + hp.nu * eps * eps) / (
        2.0 * (1.0 - hp.theta) ** 2
    )


def _node_gradient_sum(feats, labels, w, hp):
    """Sum of grad p_i(w) over one node's instances, fully vectorized."""
    margins = labels * np.asarray(feats @ w).ravel()
    coef = np.zeros(margins.shape[0])
    lo = margins < 1.0 - hp.theta
    hi = margins > 1.0 + hp.theta
    scale = hp.lam / (1.0 - hp.theta) ** 2
    coef[lo] = scale * (margins[lo] + hp.theta - 1.0) * labels[lo]
    coef[hi] = scale * hp.nu * (margins[hi] - hp.theta - 1.0) * labels[hi]
    return margins.shape[0] * w + np.asarray(feats.T @ coef).ravel()


def _pairwise_sum(arrays):
    items = list(arrays)
    while len(items) > 1:
        items = [
            items[i] + items[i + 1] if i + 1 < len(items) else items[i]
            for i in range(0, len(items), 2)
        ]
    return items[0]


def full_gradient(w, dataset, hp, nodes=None, workers=1):
    """(1/M) sum_i grad p_i(w), map-reduced over nodes with a pairwise tree.

    The reduction order is fixed by node index, so the result does not
    depend on the worker count, and different node layouts agree to
    summation rounding (~1e-12 relative).
    """
    w = np.asarray(w, dtype=np.float64)
    if nodes is None:
        nodes = [np.arange(len(dataset))]
    tasks = [(dataset.features[idx], dataset.labels[idx]) for idx in nodes]
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sums = list(
                pool.map(lambda t: _node_gradient_sum(t[0], t[1], w, hp), tasks)
            )
    else:
        sums = [_node_gradient_sum(f, l, w, hp) for f, l in tasks]
    return _pairwise_sum(sums) / len(dataset)


def default_eta(dataset, hp):
    """Conservative inverse-smoothness step 0.1 / (1 + lambda*max||x||^2/(1-theta)^2)."""
    max_sq = float(dataset.sq_norms().max(initial=0.0))
    return 0.1 / (1.0 + hp.lam * max_sq / (1.0 - hp.theta) ** 2)


def dsvrg_train(dataset, kernel, hp, config, plan=None, visit_log=None):
    """Run the round-robin distributed SVRG loop; returns (w, trajectory).

    Each trajectory entry reports the epoch's final primal objective and the
    cumulative communication counters. Only linear kernels are supported.
    ``visit_log``, if given, collects (epoch, node, instance) per inner step.
    """
    if kernel.kind != LINEAR:
        raise UnsupportedConfigError("dsvrg training requires the linear kernel")
    m = len(dataset)
    if plan is None:
        stratums = (
            config.stratums if config.stratums is not None else default_stratums(m)
        )
        plan = build_plan(dataset, kernel, stratums, config.nodes, config.seed)
    nodes = partition_indices(plan.partition_of, config.nodes)
    if any(idx.size == 0 for idx in nodes):
        raise UnsupportedConfigError("partition plan produced an empty node")

    d = dataset.num_features
    feats = dataset.features
    labels = dataset.labels
    dense = d <= 256 and m * max(d, 1) <= int(5e7)
    if dense:
        xd = feats.toarray()
    else:
        indptr, indices, data = feats.indptr, feats.indices, feats.data

    eta = config.eta if config.eta is not None else default_eta(dataset, hp)
    rng = np.random.default_rng(config.seed)
    w = np.zeros(d)
    broadcasts = reductions = token_passes = 0
    trajectory = []

    def row_dot(i, vec):
        if dense:
            return float(xd[i] @ vec)
        lo, hi = indptr[i], indptr[i + 1]
        return float(data[lo:hi] @ vec[indices[lo:hi]])

    def row_axpy(i, scale, vec):
        if dense:
            vec += scale * xd[i]
        else:
            lo, hi = indptr[i], indptr[i + 1]
            vec[indices[lo:hi]] += scale * data[lo:hi]

    for epoch in range(config.epochs):
        anchor = w.copy()
        broadcasts += 1  # anchor weights out to every node
        h = full_gradient(anchor, dataset, hp, nodes, config.workers)
        reductions += 1  # node partials gathered at the center
        broadcasts += 1  # reduced gradient back out

        pools = [rng.permutation(idx).tolist() for idx in nodes]
        cursor = [0] * config.nodes
        active = None
        remaining = m
        while remaining > 0:
            for j in range(config.nodes):
                if cursor[j] >= len(pools[j]):
                    continue
                if active != j:
                    token_passes += 1
                    active = j
                for _ in range(config.steps_per_visit):
                    if cursor[j] >= len(pools[j]):
                        break
                    i = pools[j][cursor[j]]
                    cursor[j] += 1
                    remaining -= 1
                    if visit_log is not None:
                        visit_log.append((epoch, j, i))
                    yi = labels[i]
                    coef_w = _band_coef(yi * row_dot(i, w), yi, hp)
                    coef_a = _band_coef(yi * row_dot(i, anchor), yi, hp)
                    # grad p_i(w) - grad p_i(anchor) + h = (w - anchor + h) + (coef_w-coef_a) x_i
                    w -= eta * (w - anchor + h)
                    if coef_w != coef_a:
                        row_axpy(i, -eta * (coef_w - coef_a), w)
        trajectory.append(
            {
                "epoch": epoch + 1,
                "primal_objective": primal_objective(w, dataset, hp),
                "broadcasts": broadcasts,
                "reductions": reductions,
                "token_passes": token_passes,
            }
        )
    return w, trajectory
