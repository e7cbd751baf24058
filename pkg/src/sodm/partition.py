"""Distribution-aware stratified partitioning.

Landmarks are picked greedily to maximize the determinant of their Gram
matrix (equivalently, each new landmark minimizes the Schur complement
k' K^-1 k against the already-selected ones). Every instance joins the
stratum of its nearest landmark in the RKHS, and each stratum is dealt
round-robin across the K partitions, so every partition inherits the
stratum proportions of the whole dataset.

For linear kernels the points have non-constant RKHS norm, so selection
and the principal-angle diagnostic run on normalized kernel values
kappa(x, z)/(||x|| ||z||); zero-norm points go to stratum 1 and are not
landmark candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import LINEAR, kernel_matrix, rkhs_distance_sq

RIDGE = 1e-8
PIVOT_FLOOR = 1e-10


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionPlan:
    """Landmarks plus per-instance stratum and partition assignments (0-based)."""

    landmark_indices: np.ndarray
    stratum_of: np.ndarray
    partition_of: np.ndarray
    seed: int
    n_stratums: int
    n_partitions: int

    def to_json(self):
        return {
            "landmarks": [int(i) + 1 for i in self.landmark_indices],
            "stratum_of": [int(s) + 1 for s in self.stratum_of],
            "partition_of": [int(k) + 1 for k in self.partition_of],
            "seed": self.seed,
            "stratums": self.n_stratums,
            "partitions": self.n_partitions,
        }


@dataclass(frozen=True)
class PartitionDiagnostics:
    """Minimal principal angle tau (None if undefined) and cross-stratum pair count."""

    tau: float | None
    cross_pairs: int
    stratum_sizes: np.ndarray

    def to_json(self):
        return {
            "tau": self.tau,
            "cross_pairs": self.cross_pairs,
            "stratum_sizes": [int(n) for n in self.stratum_sizes],
        }


def default_stratums(m):
    if m <= 1:
        return 1
    return min(32, math.ceil(math.sqrt(m)))


def _norms(dataset):
    return np.sqrt(dataset.sq_norms())


def _cosine_row(dataset, kernel, i, norms=None):
    """Normalized kernel values between instance i and all instances."""
    sq = dataset.sq_norms()
    row = kernel_matrix(
        kernel, dataset.features[[i]], dataset.features, sq[[i]], sq
    ).ravel()
    if kernel.kind == LINEAR:
        if norms is None:
            norms = _norms(dataset)
        scale = norms[i] * norms
        safe = np.where(scale > 0, scale, 1.0)
        row = np.where(scale > 0, row / safe, 0.0)
    return row


def select_landmarks(dataset, kernel, n_landmarks):
    """Greedy landmark selection via the Schur complement of the landmark Gram.

    The first landmark is the first (eligible) instance; each next one
    minimizes k' K^-1 k over the remaining candidates, computed through an
    incrementally grown Cholesky factor. A near-zero pivot gets a ridge of
    1e-8 * r^2 on the diagonal for that step. Ties break to the lowest
    instance index.
    """
    m = len(dataset)
    if not 1 <= n_landmarks <= m:
        raise PartitionError("need 1 <= landmarks <= %d, got %d" % (m, n_landmarks))
    norms = _norms(dataset) if kernel.kind == LINEAR else None
    if kernel.kind == LINEAR:
        candidates = np.flatnonzero(norms > 0)
        if candidates.size < n_landmarks:
            raise PartitionError(
                "only %d instances with nonzero norm are landmark candidates"
                % candidates.size
            )
    else:
        candidates = np.arange(m)

    first = int(candidates[0])
    selected = [first]
    if n_landmarks == 1:
        return np.asarray(selected, dtype=np.int64)

    pos_of = {int(idx): p for p, idx in enumerate(candidates)}
    # rows of L^-1 K_cross, one per selected landmark, over all candidates
    v_rows = []
    k0 = _cosine_row(dataset, kernel, first, norms)[candidates]
    v_rows.append(k0 / 1.0)  # kappa-hat(z1, z1) = 1 on normalized values
    schur = v_rows[0] ** 2
    taken = np.zeros(candidates.size, dtype=bool)
    taken[pos_of[first]] = True

    while len(selected) < n_landmarks:
        masked = np.where(taken, np.inf, schur)
        pick_pos = int(np.argmin(masked))
        pick = int(candidates[pick_pos])
        taken[pick_pos] = True
        selected.append(pick)
        if len(selected) == n_landmarks:
            break
        pivot_sq = 1.0 - schur[pick_pos]
        if pivot_sq <= PIVOT_FLOOR:
            pivot_sq += RIDGE
            if pivot_sq <= 0.0:
                pivot_sq = RIDGE
        pivot = math.sqrt(pivot_sq)
        col = np.array([row[pick_pos] for row in v_rows])
        cross = _cosine_row(dataset, kernel, pick, norms)[candidates]
        correction = np.zeros(candidates.size)
        for coeff, row in zip(col, v_rows):
            correction += coeff * row
        v_new = (cross - correction) / pivot
        v_rows.append(v_new)
        schur = schur + v_new**2
    return np.asarray(selected, dtype=np.int64)


def assign_stratums(dataset, kernel, landmarks):
    """Nearest landmark in RKHS distance; ties go to the lowest stratum index.

    Landmark instances always land in their own stratum; zero-norm points
    under a linear kernel fall back to stratum 0.
    """
    landmarks = np.asarray(landmarks, dtype=np.int64)
    if landmarks.size == 0:
        raise PartitionError("need at least one landmark")
    sq = dataset.sq_norms()
    k_cross = kernel_matrix(
        kernel, dataset.features, dataset.features[landmarks], sq, sq[landmarks]
    )
    # ||phi(x) - phi(z)||^2 = k(x,x) - 2 k(x,z) + k(z,z)
    if kernel.kind == LINEAR:
        d2 = sq[:, None] - 2.0 * k_cross + sq[landmarks][None, :]
    else:
        d2 = 2.0 - 2.0 * k_cross
    np.clip(d2, 0.0, None, out=d2)
    stratum_of = np.argmin(d2, axis=1).astype(np.int64)
    if kernel.kind == LINEAR:
        stratum_of[sq == 0] = 0
    stratum_of[landmarks] = np.arange(landmarks.size)
    return stratum_of


def make_partitions(stratum_of, n_partitions, seed):
    """Deal each stratum round-robin into K pieces after a seeded shuffle.

    Piece sizes are floor(n_s/K) or ceil(n_s/K), the larger pieces going to
    the first n_s mod K partitions; partition k is the union of piece k over
    all stratums.
    """
    stratum_of = np.asarray(stratum_of, dtype=np.int64)
    m = stratum_of.shape[0]
    if n_partitions < 1:
        raise PartitionError("need at least one partition")
    if n_partitions > m:
        raise PartitionError("more partitions (%d) than instances (%d)" % (n_partitions, m))
    rng = np.random.default_rng(seed)
    partition_of = np.empty(m, dtype=np.int64)
    for s in np.unique(stratum_of):
        members = np.flatnonzero(stratum_of == s)
        order = rng.permutation(members.size)
        partition_of[members[order]] = np.arange(members.size) % n_partitions
    return partition_of


def build_plan(dataset, kernel, n_stratums, n_partitions, seed):
    landmarks = select_landmarks(dataset, kernel, n_stratums)
    stratum_of = assign_stratums(dataset, kernel, landmarks)
    partition_of = make_partitions(stratum_of, n_partitions, seed)
    return PartitionPlan(
        landmark_indices=landmarks,
        stratum_of=stratum_of,
        partition_of=partition_of,
        seed=seed,
        n_stratums=int(n_stratums),
        n_partitions=int(n_partitions),
    )


def partition_indices(partition_of, n_partitions):
    """Sorted instance indices of each partition."""
    return [np.flatnonzero(partition_of == k) for k in range(n_partitions)]


def diagnostics(dataset, kernel, stratum_of):
    """Minimal principal angle across stratums plus the ordered cross-pair count.

    O(M^2) kernel evaluations; meant for analysis-scale data. tau is absent
    when fewer than two stratums are populated.
    """
    stratum_of = np.asarray(stratum_of, dtype=np.int64)
    m = stratum_of.shape[0]
    sizes = np.bincount(stratum_of)
    cross_pairs = int(m * m - int((sizes.astype(np.int64) ** 2).sum()))
    populated = int((sizes > 0).sum())
    if populated < 2:
        return PartitionDiagnostics(tau=None, cross_pairs=cross_pairs, stratum_sizes=sizes)

    sq = dataset.sq_norms()
    cos = kernel_matrix(kernel, dataset.features, dataset.features, sq, sq)
    if kernel.kind == LINEAR:
        norms = np.sqrt(sq)
        keep = norms > 0
        scale = np.outer(norms, norms)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.where(scale > 0, cos / np.where(scale > 0, scale, 1.0), -np.inf)
        cos[~keep, :] = -np.inf
        cos[:, ~keep] = -np.inf
    different = stratum_of[:, None] != stratum_of[None, :]
    cross_cos = cos[different]
    finite = cross_cos[np.isfinite(cross_cos)]
    if finite.size == 0:
        return PartitionDiagnostics(tau=None, cross_pairs=cross_pairs, stratum_sizes=sizes)
    tau = float(np.arccos(np.clip(finite.max(), -1.0, 1.0)))
    return PartitionDiagnostics(tau=tau, cross_pairs=cross_pairs, stratum_sizes=sizes)
