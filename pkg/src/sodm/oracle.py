"""Independent reference solver and bound checkers.

The brute-force solver runs projected gradient descent on the dense
2M x 2M quadratic with step 1/lambda_max (power iteration), deliberately a
different method from coordinate descent so agreement between the two is
evidence rather than tautology. The theorem checkers solve the exact
global problem and its block-diagonal / per-partition counterparts and
report both sides of the bound inequalities:

    0 <= d(approx*) - d(global*) <= U^2 (Q_off + M(M-m)c)
    ||approx* - global*||^2 <= U^2 (Q_off + M(M-m)c) / (M c nu)

for equal-size partitions, and for the stratified plan with a
shift-invariant kernel (r = 1),

    d_k(local_k*) - d(global*) <= U^2 M^2 c + 2UM + (U^2/2)(M^2 + cos(tau)(2C - M^2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .kernels import RBF, KernelSpec, linear_kernel, q_matrix, rbf_kernel
from .partition import build_plan, diagnostics, partition_indices
from .solver import DualState, HyperParams, objective_from_cache
from .svrg import instance_gradient, instance_primal

BRUTE_FORCE_LIMIT = 50
BOUND_SLACK = 1e-9
_PGD_MAX_ITER = 500_000


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class BoundReport:
    """Both sides of a bound inequality for one trial configuration."""

    theorem: int
    u: float
    q_offdiag: float | None
    gap_lhs: float
    gap_rhs: float
    distance_sq: float | None = None
    distance_rhs: float | None = None
    per_partition_lhs: tuple[float, ...] | None = None
    tau: float | None = None
    cross_pairs: int | None = None
    satisfied: bool = False
    skipped: bool = False

    def to_json(self):
        return {
            "theorem": self.theorem,
            "u": self.u,
            "q_offdiag": self.q_offdiag,
            "gap_lhs": self.gap_lhs,
            "gap_rhs": self.gap_rhs,
            "distance_sq": self.distance_sq,
            "distance_rhs": self.distance_rhs,
            "per_partition_lhs": None
            if self.per_partition_lhs is None
            else list(self.per_partition_lhs),
            "tau": self.tau,
            "cross_pairs": self.cross_pairs,
            "satisfied": self.satisfied,
            "skipped": self.skipped,
        }


def _lambda_max(matvec, n, max_iter=10_000, rtol=1e-13):
    # random start: a structured vector can sit orthogonal to the top eigenvector
    v = np.random.default_rng(0x5EED).standard_normal(n)
    v /= np.linalg.norm(v)
    prev = 0.0
    lam = 0.0
    for it in range(max_iter):
        hv = matvec(v)
        lam = float(v @ hv)
        nrm = float(np.linalg.norm(hv))
        if nrm == 0.0:
            return 0.0
        v = hv / nrm
        if it > 0 and abs(lam - prev) <= rtol * max(abs(lam), 1e-300):
            break
        prev = lam
    return lam


def _pgd_box_qp(q, m_scale, hp, tol, max_iter=_PGD_MAX_ITER):
    """Projected gradient descent on the box-constrained dual QP."""
    m = q.shape[0]
    a = m_scale * hp.c * hp.nu
    b = m_scale * hp.c

    def matvec(v):
        vz, vb = v[:m], v[m:]
        u = q @ (vz - vb)
        return np.concatenate([u + a * vz, -u + b * vb])

    lam_max = _lambda_max(matvec, 2 * m)
    if lam_max <= 0.0:
        lam_max = a  # q == 0 edge: curvature is the diagonal shift alone

    # the Rayleigh estimate can only undershoot; halve the step and restart
    # if an undershoot past 2/lambda_max ever makes the iteration diverge
    step = 1.0 / lam_max
    for _attempt in range(8):
        zeta = np.zeros(m)
        beta = np.zeros(m)
        diverged = False
        for _ in range(max_iter):
            s = q @ (zeta - beta)
            gz = s + a * zeta + (hp.theta - 1.0)
            gb = -s + b * beta + (hp.theta + 1.0)
            viol = max(
                np.where(zeta > 0, np.abs(gz), np.maximum(-gz, 0.0)).max(initial=0.0),
                np.where(beta > 0, np.abs(gb), np.maximum(-gb, 0.0)).max(initial=0.0),
            )
            if not np.isfinite(viol):
                diverged = True
                break
            if viol <= tol:
                return zeta, beta, s
            zeta = np.maximum(zeta - step * gz, 0.0)
            beta = np.maximum(beta - step * gb, 0.0)
        if not diverged:
            break
        step *= 0.5
    raise RuntimeError("projected gradient did not reach tol=%g" % tol)


def _objective(q, m_scale, hp, zeta, beta):
    s = q @ (zeta - beta)
    state = DualState(zeta, beta, s, float(m_scale))
    return objective_from_cache(hp, state)


def brute_force_solve(dataset, kernel, hp, tol=1e-10, m_scale=None):
    """Reference solution of the dual QP; dense, M <= 50 only."""
    m = len(dataset)
    if m > BRUTE_FORCE_LIMIT:
        raise OracleError("brute force is limited to M <= %d" % BRUTE_FORCE_LIMIT)
    if m_scale is None:
        m_scale = m
    q = q_matrix(dataset, kernel)
    zeta, beta, s = _pgd_box_qp(q, m_scale, hp, tol)
    return DualState(zeta, beta, s, float(m_scale), converged=True)


def theorem1_check(dataset, kernel, hp, partition_of, tol=1e-10):
    """Verify both block-diagonal approximation bounds on one instance."""
    m_total = len(dataset)
    if m_total > BRUTE_FORCE_LIMIT:
        raise OracleError("theorem check is limited to M <= %d" % BRUTE_FORCE_LIMIT)
    partition_of = np.asarray(partition_of, dtype=np.int64)
    sizes = np.bincount(partition_of)
    if sizes.min() != sizes.max():
        raise OracleError("theorem 1 assumes equal partition cardinalities")
    m_part = int(sizes[0])

    q = q_matrix(dataset, kernel)
    same = partition_of[:, None] == partition_of[None, :]
    q_tilde = np.where(same, q, 0.0)

    zg, bg, _ = _pgd_box_qp(q, m_total, hp, tol)
    za, ba, _ = _pgd_box_qp(q_tilde, m_part, hp, tol)

    d_star = _objective(q, m_total, hp, zg, bg)
    d_approx_global = _objective(q, m_total, hp, za, ba)
    gap = d_approx_global - d_star

    alpha_g = np.concatenate([zg, bg])
    alpha_a = np.concatenate([za, ba])
    u = max(np.abs(alpha_g).max(initial=0.0), np.abs(alpha_a).max(initial=0.0))
    q_off = float(np.abs(q[~same]).sum())
    rhs = u * u * (q_off + m_total * (m_total - m_part) * hp.c)
    dist = float(((alpha_a - alpha_g) ** 2).sum())
    dist_rhs = rhs / (m_total * hp.c * hp.nu)

    satisfied = (
        gap >= -BOUND_SLACK and gap <= rhs + BOUND_SLACK and dist <= dist_rhs + BOUND_SLACK
    )
    return BoundReport(
        theorem=1,
        u=float(u),
        q_offdiag=q_off,
        gap_lhs=float(gap),
        gap_rhs=float(rhs),
        distance_sq=dist,
        distance_rhs=float(dist_rhs),
        satisfied=bool(satisfied),
    )


def theorem2_check(dataset, kernel, hp, plan, tol=1e-10):
    """Verify the stratified-partition bound for every partition of the plan."""
    if kernel.kind != RBF:
        raise OracleError("theorem 2 requires a shift-invariant kernel")
    m_total = len(dataset)
    if m_total > BRUTE_FORCE_LIMIT:
        raise OracleError("theorem check is limited to M <= %d" % BRUTE_FORCE_LIMIT)

    diag = diagnostics(dataset, kernel, plan.stratum_of)
    if diag.tau is None:
        return BoundReport(
            theorem=2,
            u=0.0,
            q_offdiag=None,
            gap_lhs=0.0,
            gap_rhs=0.0,
            tau=None,
            cross_pairs=diag.cross_pairs,
            satisfied=True,
            skipped=True,
        )

    q = q_matrix(dataset, kernel)
    zg, bg, _ = _pgd_box_qp(q, m_total, hp, tol)
    d_star = _objective(q, m_total, hp, zg, bg)
    u = float(np.abs(np.concatenate([zg, bg])).max(initial=0.0))

    lhs = []
    for idx in partition_indices(plan.partition_of, plan.n_partitions):
        q_local = q[np.ix_(idx, idx)]
        zk, bk, _ = _pgd_box_qp(q_local, idx.size, hp, tol)
        d_k = _objective(q_local, idx.size, hp, zk, bk)
        lhs.append(d_k - d_star)
        u = max(u, float(np.abs(np.concatenate([zk, bk])).max(initial=0.0)))

    # r = 1 for the RBF kernel
    rhs = (
        u * u * m_total * m_total * hp.c
        + 2.0 * u * m_total
        + 0.5 * u * u * (m_total**2 + math.cos(diag.tau) * (2 * diag.cross_pairs - m_total**2))
    )
    satisfied = all(v <= rhs + BOUND_SLACK for v in lhs)
    return BoundReport(
        theorem=2,
        u=u,
        q_offdiag=None,
        gap_lhs=float(max(lhs)),
        gap_rhs=float(rhs),
        per_partition_lhs=tuple(float(v) for v in lhs),
        tau=diag.tau,
        cross_pairs=diag.cross_pairs,
        satisfied=bool(satisfied),
    )


def finite_diff_check(dataset, hp, trials=100, seed=0):
    """Max relative deviation between the instance gradient and central differences.

    Draws random (w, i) pairs, skipping any within 1e-4 of the nonsmooth
    margin boundaries; the coordinate step is 1e-6*(1+|w_d|).
    """
    rng = np.random.default_rng(seed)
    d = dataset.num_features
    max_dev = 0.0
    counted = 0
    attempts = 0
    while counted < trials and attempts < 100 * trials:
        attempts += 1
        i = int(rng.integers(len(dataset)))
        w = rng.normal(size=d)
        inst = dataset.instance(i)
        dot = sum(w[idx] * val for idx, val in inst.features)
        margin = inst.label * dot
        if min(abs(margin - (1.0 - hp.theta)), abs(margin - (1.0 + hp.theta))) < 1e-4:
            continue
        grad = instance_gradient(w, inst, hp)
        fd = np.empty(d)
        for k in range(d):
            h = 1e-6 * (1.0 + abs(w[k]))
            wp = w.copy()
            wp[k] += h
            wm = w.copy()
            wm[k] -= h
            fd[k] = (instance_primal(wp, inst, hp) - instance_primal(wm, inst, hp)) / (
                2.0 * h
            )
        dev = float(np.abs(fd - grad).max()) / (1.0 + float(np.abs(grad).max()))
        max_dev = max(max_dev, dev)
        counted += 1
    if counted < trials:
        raise OracleError("could not draw %d off-boundary pairs" % trials)
    return max_dev


# ---------------------------------------------------------------------------
# randomized trial suites (shared by the verify-bounds command and tests)


def random_dataset(rng, m, dim):
    feats = rng.uniform(0.0, 1.0, size=(m, dim))
    labels = rng.choice([-1.0, 1.0], size=m)
    if np.all(labels == labels[0]):
        labels[0] = -labels[0]
    return Dataset.from_arrays(feats, labels)


def random_hyperparams(rng, theta_hi=0.8, nu_lo=0.1, lam_lo=0.1, lam_hi=100.0):
    return HyperParams(
        lam=float(10 ** rng.uniform(math.log10(lam_lo), math.log10(lam_hi))),
        theta=float(rng.uniform(0.0, theta_hi)),
        nu=float(rng.uniform(nu_lo, 1.0)),
    )


def _random_kernel(rng, rbf_only=False):
    if not rbf_only and rng.random() < 0.5:
        return linear_kernel()
    return rbf_kernel(float(rng.uniform(0.1, 4.0)))


def theorem1_trial(seed, index):
    rng = np.random.default_rng([seed, index, 1])
    k_parts = int(rng.choice([2, 4]))
    per = int(rng.integers(3, 21)) if k_parts == 2 else int(rng.integers(2, 11))
    m = k_parts * per
    dataset = random_dataset(rng, m, int(rng.integers(2, 6)))
    hp = random_hyperparams(rng)
    kernel = _random_kernel(rng)
    partition_of = np.empty(m, dtype=np.int64)
    partition_of[rng.permutation(m)] = np.arange(m) // per
    report = theorem1_check(dataset, kernel, hp, partition_of)
    meta = {"trial": index, "m": m, "partitions": k_parts, "kernel": kernel.to_json()}
    return report, meta


def theorem2_trial(seed, index):
    rng = np.random.default_rng([seed, index, 2])
    m = int(rng.integers(8, 41))
    s_count = int(rng.choice([2, 3]))
    k_parts = int(rng.choice([2, 4]))
    dataset = random_dataset(rng, m, int(rng.integers(2, 6)))
    hp = random_hyperparams(rng)
    kernel = rbf_kernel(float(rng.uniform(0.1, 4.0)))
    plan = build_plan(dataset, kernel, s_count, k_parts, int(rng.integers(0, 2**31)))
    report = theorem2_check(dataset, kernel, hp, plan)
    meta = {
        "trial": index,
        "m": m,
        "stratums": s_count,
        "partitions": k_parts,
        "kernel": kernel.to_json(),
    }
    return report, meta


def run_bound_trials(theorem, trials, seed):
    """JSON-ready records for N seeded trials of one or both theorems."""
    records = []
    for t in range(trials):
        if theorem in (1, "1", "both"):
            report, meta = theorem1_trial(seed, t)
            records.append(
                {"schema": "sodm/1", "type": "trial", "seed": seed, **meta, **report.to_json()}
            )
        if theorem in (2, "2", "both"):
            report, meta = theorem2_trial(seed, t)
            records.append(
                {"schema": "sodm/1", "type": "trial", "seed": seed, **meta, **report.to_json()}
            )
    return records
