"""Hierarchical divide-and-conquer training with warm-start concatenation.

Training starts from K = p^L stratified partitions with zero dual states.
Each level solves its local problems in parallel (the local objective uses
m_scale = M/p^l, which is exactly the coefficient of the block-diagonal
joint problem), then merges every p consecutive partitions by concatenating
both the instance lists and the dual blocks. If every local state is
already converged at the top of a level, training returns early with the
concatenated solution. By default a final full-data solve (m_scale = M)
refines the concatenation into the returned model; ``final_full_solve=False``
reproduces the literal concatenated return instead.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .kernels import LINEAR, KernelSpec
from .partition import build_plan, default_stratums, partition_indices
from .solver import (
    DualState,
    HyperParams,
    SolveReport,
    dual_objective,
    max_violation_fresh,
    objective_from_cache,
    recover_decision,
    solve_local,
)

# global dual objective is O(M^2) kernel evaluations for nonlinear kernels
_GLOBAL_OBJECTIVE_LIMIT = 5000


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Merge factor p, level count L (K = p^L), stratums, and solve controls."""

    p: int = 2
    levels: int = 0
    stratums: int | None = None
    tol: float = 1e-4
    max_epochs: int = 100
    seed: int = 0
    workers: int = 1
    final_full_solve: bool = True

    def __post_init__(self):
        if self.p < 2:
            raise ConfigError("merge factor p must be >= 2")
        if self.levels < 0:
            raise ConfigError("levels must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class LevelReport:
    level: int
    n_partitions: int
    solve_reports: list[SolveReport]
    merged_objective: float
    global_objective: float | None
    wall_time_s: float
    converged_all: bool
    early_exit: bool = False


def _solve_task(payload):
    (features, labels, num_features, kernel_json, hp_json, zeta, beta, m_scale,
     tol, max_epochs, seed) = payload
    dataset = Dataset(features, labels, num_features)
    kernel = KernelSpec.from_json(kernel_json)
    hp = HyperParams.from_json(hp_json)
    init = DualState(
        zeta=zeta, beta=beta, s_cache=np.zeros(len(zeta)), m_scale=m_scale
    )
    state, report = solve_local(
        dataset, kernel, hp, init=init, tol=tol, max_epochs=max_epochs, seed=seed
    )
    return state.zeta, state.beta, state.s_cache, state.converged, report


def _solve_level(dataset, kernel, hp, locals_, m_scale, config, level, pool):
    """Solve every (indices, state) local problem; deterministic per-partition seeds."""
    payloads = []
    for k, (indices, state) in enumerate(locals_):
        seed = int(
            np.random.SeedSequence([config.seed, level, k]).generate_state(1)[0]
        )
        payloads.append(
            (
                dataset.features[indices],
                dataset.labels[indices],
                dataset.num_features,
                kernel.to_json(),
                hp.to_json(),
                state.zeta,
                state.beta,
                float(m_scale),
                config.tol,
                config.max_epochs,
                seed,
            )
        )
    if pool is None:
        results = [_solve_task(p) for p in payloads]
    else:
        results = list(pool.map(_solve_task, payloads))
    out = []
    reports = []
    for (indices, _), (zeta, beta, s_cache, converged, report) in zip(locals_, results):
        out.append(
            (indices, DualState(zeta, beta, s_cache, float(m_scale), converged))
        )
        reports.append(report)
    return out, reports


def _merge_group(group):
    """Concatenate p partitions: instances positionally aligned with dual blocks."""
    indices = np.concatenate([idx for idx, _ in group])
    zeta = np.concatenate([st.zeta for _, st in group])
    beta = np.concatenate([st.beta for _, st in group])
    s = np.concatenate([st.s_cache for _, st in group])
    return indices, DualState(zeta, beta, s, group[0][1].m_scale)


def check_global_convergence(locals_, dataset, kernel, hp, tol):
    """True iff every local state meets tol on its own local problem."""
    if not locals_:
        raise ConfigError("no local states to check")
    for indices, state in locals_:
        local = dataset.subset(indices)
        if max_violation_fresh(local, kernel, hp, state) > tol:
            return False
    return True


def _global_objective(dataset, kernel, hp, indices, state):
    if kernel.kind != LINEAR and len(dataset) > _GLOBAL_OBJECTIVE_LIMIT:
        return None
    merged = dataset.subset(indices)
    full = DualState(state.zeta, state.beta, np.zeros(len(state)), float(len(dataset)))
    return dual_objective(merged, kernel, hp, full)


def train(dataset, kernel, hp, config, plan=None):
    """Run the full hierarchy and return (model, level reports).

    ``plan`` overrides the stratified partition plan (useful for injecting a
    known partition); otherwise one is built with the configured stratums.
    """
    m_total = len(dataset)
    n_parts = config.p**config.levels
    if n_parts > m_total:
        raise ConfigError(
            "p^levels = %d exceeds the %d available instances" % (n_parts, m_total)
        )
    reports = []
    pool = None
    try:
        if config.workers > 1:
            pool = ProcessPoolExecutor(max_workers=config.workers)
        if config.levels == 0:
            locals_ = [(np.arange(m_total), DualState.zeros(m_total, m_total))]
        else:
            if plan is None:
                stratums = (
                    config.stratums
                    if config.stratums is not None
                    else default_stratums(m_total)
                )
                plan = build_plan(dataset, kernel, stratums, n_parts, config.seed)
            parts = partition_indices(plan.partition_of, n_parts)
            if any(idx.size == 0 for idx in parts):
                raise ConfigError("partition plan produced an empty partition")
            locals_ = [
                (idx, DualState.zeros(idx.size, m_total / n_parts)) for idx in parts
            ]

        for level in range(config.levels, 0, -1):
            started = time.perf_counter()
            m_scale = m_total / config.p**level
            for _, state in locals_:
                state.m_scale = m_scale
            if check_global_convergence(locals_, dataset, kernel, hp, config.tol):
                indices, state = _merge_group(locals_)
                reports.append(
                    LevelReport(
                        level=level,
                        n_partitions=len(locals_),
                        solve_reports=[],
                        merged_objective=sum(
                            dual_objective(dataset.subset(idx), kernel, hp, st)
                            for idx, st in locals_
                        ),
                        global_objective=_global_objective(
                            dataset, kernel, hp, indices, state
                        ),
                        wall_time_s=time.perf_counter() - started,
                        converged_all=True,
                        early_exit=True,
                    )
                )
                model = _finalize(state, dataset, indices, kernel, hp)
                return model, reports
            locals_, solve_reports = _solve_level(
                dataset, kernel, hp, locals_, m_scale, config, level, pool
            )
            merged_objective = sum(objective_from_cache(hp, st) for _, st in locals_)
            locals_ = [
                _merge_group(locals_[g : g + config.p])
                for g in range(0, len(locals_), config.p)
            ]
            concat_idx, concat_state = _merge_group(locals_) if len(locals_) > 1 else locals_[0]
            reports.append(
                LevelReport(
                    level=level,
                    n_partitions=config.p**level,
                    solve_reports=solve_reports,
                    merged_objective=merged_objective,
                    global_objective=_global_objective(
                        dataset, kernel, hp, concat_idx, concat_state
                    ),
                    wall_time_s=time.perf_counter() - started,
                    converged_all=all(r.converged for r in solve_reports),
                )
            )

        indices, state = _merge_group(locals_) if len(locals_) > 1 else locals_[0]
        if not config.final_full_solve and config.levels > 0:
            model = _finalize(state, dataset, indices, kernel, hp)
            return model, reports

        started = time.perf_counter()
        state.m_scale = float(m_total)
        locals_ = [(indices, state)]
        locals_, solve_reports = _solve_level(
            dataset, kernel, hp, locals_, m_total, config, 0, pool
        )
        indices, state = locals_[0]
        reports.append(
            LevelReport(
                level=0,
                n_partitions=1,
                solve_reports=solve_reports,
                merged_objective=objective_from_cache(hp, state),
                global_objective=_global_objective(dataset, kernel, hp, indices, state),
                wall_time_s=time.perf_counter() - started,
                converged_all=all(r.converged for r in solve_reports),
            )
        )
        model = _finalize(state, dataset, indices, kernel, hp)
        return model, reports
    finally:
        if pool is not None:
            pool.shutdown()


def _finalize(state, dataset, indices, kernel, hp):
    """Model over the (possibly permuted) union of partitions, with global indices."""
    merged = dataset.subset(indices)
    model = recover_decision(state, merged, kernel, hp=hp)
    model.support_indices = indices[model.support_indices]
    return model


def level_report_json(report):
    return {
        "schema": "sodm/1",
        "type": "level",
        "level": report.level,
        "partitions": report.n_partitions,
        "epochs": [r.epochs for r in report.solve_reports],
        "final_violations": [r.final_violation for r in report.solve_reports],
        "merged_objective": report.merged_objective,
        "global_objective": report.global_objective,
        "converged_all": report.converged_all,
        "early_exit": report.early_exit,
        "wall_time_s": report.wall_time_s,
    }
