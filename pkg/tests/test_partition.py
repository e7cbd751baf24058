import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sodm.data import Dataset
from sodm.kernels import eval_kernel, linear_kernel, rbf_kernel
from sodm.partition import (
    PartitionError,
    assign_stratums,
    build_plan,
    default_stratums,
    diagnostics,
    make_partitions,
    partition_indices,
    select_landmarks,
)


def cosine(kern, ds, i, j):
    ki = eval_kernel(kern, ds.instance(i), ds.instance(i))
    kj = eval_kernel(kern, ds.instance(j), ds.instance(j))
    return eval_kernel(kern, ds.instance(i), ds.instance(j)) / math.sqrt(ki * kj)


def exhaustive_greedy(ds, kern, count):
    """Reference landmark selection via explicit linear solves."""
    m = len(ds)
    cos = np.array([[cosine(kern, ds, i, j) for j in range(m)] for i in range(m)])
    selected = [0]
    while len(selected) < count:
        best, best_val = None, np.inf
        for z in range(m):
            if z in selected:
                continue
            k_ss = cos[np.ix_(selected, selected)]
            k_z = cos[selected, z]
            val = float(k_z @ np.linalg.solve(k_ss, k_z))
            if val < best_val - 1e-12:
                best, best_val = z, val
        selected.append(best)
    return selected


class TestSelectLandmarks:
    def test_one_dimensional_rbf_picks_far_point(self):
        ds = Dataset.from_arrays([[0.0], [1.0], [10.0]], [1.0, -1.0, 1.0])
        got = select_landmarks(ds, rbf_kernel(0.1), 2)
        assert_array_equal(got, [0, 2])

    def test_single_landmark_is_first_instance(self):
        ds = Dataset.from_arrays([[5.0], [1.0], [9.0]], [1.0, -1.0, 1.0])
        for kern in (linear_kernel(), rbf_kernel(1.0)):
            assert_array_equal(select_landmarks(ds, kern, 1), [0])

    def test_matches_exhaustive_solver(self):
        # linear cosine Grams of 3-D points saturate at rank 3, so stay below
        rng = np.random.default_rng(0)
        for kern, count in ((rbf_kernel(0.6), 5), (linear_kernel(), 3)):
            for _ in range(5):
                ds = Dataset.from_arrays(
                    rng.uniform(0.25, 1.0, size=(9, 3)), rng.choice([-1.0, 1.0], 9)
                )
                got = select_landmarks(ds, kern, count)
                want = exhaustive_greedy(ds, kern, count)
                assert list(got) == want

    def test_all_points_selected_with_exact_schur_minimum(self):
        rng = np.random.default_rng(1)
        ds = Dataset.from_arrays(rng.uniform(0, 1, size=(6, 2)), rng.choice([-1.0, 1.0], 6))
        kern = rbf_kernel(0.9)
        got = select_landmarks(ds, kern, 6)
        assert sorted(got) == list(range(6))
        assert list(got) == exhaustive_greedy(ds, kern, 6)

    def test_duplicate_points_survive_via_ridge(self):
        ds = Dataset.from_arrays([[1.0], [1.0], [4.0], [9.0]], [1, 1, -1, 1])
        got = select_landmarks(ds, rbf_kernel(0.5), 4)
        assert sorted(got) == [0, 1, 2, 3]

    def test_too_many_landmarks(self):
        ds = Dataset.from_arrays([[1.0], [2.0]], [1, -1])
        with pytest.raises(PartitionError):
            select_landmarks(ds, rbf_kernel(1.0), 3)

    def test_zero_norm_points_not_candidates(self):
        ds = Dataset.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [1, -1, 1])
        got = select_landmarks(ds, linear_kernel(), 2)
        assert 0 not in got


class TestAssignStratums:
    def test_nearest_landmark(self):
        ds = Dataset.from_arrays([[0.0], [1.0], [10.0]], [1.0, -1.0, 1.0])
        got = assign_stratums(ds, rbf_kernel(0.1), np.array([0, 2]))
        assert_array_equal(got, [0, 0, 1])

    def test_equidistant_goes_to_lowest(self):
        ds = Dataset.from_arrays([[0.0], [2.0], [1.0]], [1.0, -1.0, 1.0])
        got = assign_stratums(ds, rbf_kernel(0.3), np.array([0, 1]))
        assert got[2] == 0

    def test_landmark_owns_its_stratum(self):
        # identical landmark points: argmin alone would send both to stratum 0
        ds = Dataset.from_arrays([[1.0], [1.0], [2.0]], [1.0, -1.0, 1.0])
        got = assign_stratums(ds, rbf_kernel(1.0), np.array([0, 1]))
        assert got[0] == 0 and got[1] == 1

    def test_zero_norm_linear_falls_back_to_first_stratum(self):
        ds = Dataset.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]], [1, -1, 1])
        got = assign_stratums(ds, linear_kernel(), np.array([1, 2]))
        assert got[0] == 0


class TestMakePartitions:
    def test_exact_division(self):
        stratum_of = np.array([0, 0, 0, 0, 1, 1])
        part = make_partitions(stratum_of, 2, seed=0)
        counts = np.bincount(part, minlength=2)
        assert_array_equal(counts, [3, 3])
        for s in (0, 1):
            per = np.bincount(part[stratum_of == s], minlength=2)
            assert abs(per[0] - per[1]) <= 1

    def test_remainder_goes_to_first_partitions(self):
        stratum_of = np.zeros(5, dtype=int)
        part = make_partitions(stratum_of, 2, seed=3)
        counts = np.bincount(part, minlength=2)
        assert_array_equal(counts, [3, 2])

    def test_single_partition(self):
        part = make_partitions(np.array([0, 1, 0, 2]), 1, seed=0)
        assert_array_equal(part, [0, 0, 0, 0])

    def test_more_partitions_than_instances(self):
        with pytest.raises(PartitionError):
            make_partitions(np.array([0, 0]), 3, seed=0)

    def test_distribution_preserved_per_stratum(self):
        rng = np.random.default_rng(4)
        stratum_of = rng.integers(0, 5, size=103)
        part = make_partitions(stratum_of, 4, seed=9)
        for s in range(5):
            per = np.bincount(part[stratum_of == s], minlength=4)
            assert per.max() - per.min() <= 1

    def test_deterministic(self):
        stratum_of = np.random.default_rng(5).integers(0, 3, size=40)
        assert_array_equal(
            make_partitions(stratum_of, 4, seed=7), make_partitions(stratum_of, 4, seed=7)
        )


class TestDiagnostics:
    def test_orthogonal_singletons_give_right_angle(self):
        ds = Dataset.from_arrays([[1.0, 0.0], [0.0, 1.0]], [1.0, -1.0])
        diag = diagnostics(ds, linear_kernel(), np.array([0, 1]))
        assert_allclose(diag.tau, math.pi / 2)

    def test_identical_points_give_zero_angle(self):
        ds = Dataset.from_arrays([[1.0], [1.0]], [1.0, -1.0])
        diag = diagnostics(ds, rbf_kernel(1.0), np.array([0, 1]))
        assert_allclose(diag.tau, 0.0, atol=1e-12)

    def test_cross_pair_count(self):
        ds = Dataset.from_arrays(np.arange(4.0)[:, None], [1, 1, -1, -1])
        diag = diagnostics(ds, rbf_kernel(1.0), np.array([0, 0, 1, 1]))
        assert diag.cross_pairs == 8

    def test_single_stratum_has_no_angle(self):
        ds = Dataset.from_arrays([[1.0], [2.0]], [1.0, -1.0])
        diag = diagnostics(ds, rbf_kernel(1.0), np.array([0, 0]))
        assert diag.tau is None

    def test_premise_gives_majority_cross_pairs(self):
        # every stratum below M/2 members implies 2C > M^2
        rng = np.random.default_rng(6)
        for _ in range(20):
            m = int(rng.integers(6, 40))
            stratum_of = rng.integers(0, 3, size=m)
            sizes = np.bincount(stratum_of, minlength=3)
            if sizes.max() >= m / 2:
                continue
            c = m * m - int((sizes**2).sum())
            assert 2 * c > m * m


class TestPlan:
    def test_deterministic_end_to_end(self):
        rng = np.random.default_rng(7)
        ds = Dataset.from_arrays(rng.uniform(0, 1, (30, 3)), rng.choice([-1.0, 1.0], 30))
        p1 = build_plan(ds, rbf_kernel(0.8), 4, 3, seed=5)
        p2 = build_plan(ds, rbf_kernel(0.8), 4, 3, seed=5)
        assert_array_equal(p1.landmark_indices, p2.landmark_indices)
        assert_array_equal(p1.stratum_of, p2.stratum_of)
        assert_array_equal(p1.partition_of, p2.partition_of)

    def test_landmark_in_own_stratum(self):
        rng = np.random.default_rng(8)
        ds = Dataset.from_arrays(rng.uniform(0, 1, (25, 2)), rng.choice([-1.0, 1.0], 25))
        plan = build_plan(ds, rbf_kernel(1.0), 5, 2, seed=1)
        for s, idx in enumerate(plan.landmark_indices):
            assert plan.stratum_of[idx] == s

    def test_json_uses_one_based_ids(self):
        rng = np.random.default_rng(9)
        ds = Dataset.from_arrays(rng.uniform(0, 1, (12, 2)), rng.choice([-1.0, 1.0], 12))
        plan = build_plan(ds, rbf_kernel(1.0), 3, 2, seed=2)
        blob = plan.to_json()
        assert min(blob["stratum_of"]) >= 1 and max(blob["stratum_of"]) <= 3
        assert min(blob["partition_of"]) >= 1 and max(blob["partition_of"]) <= 2
        assert all(1 <= i <= 12 for i in blob["landmarks"])

    def test_partition_indices_cover_everything(self):
        part = np.array([0, 1, 0, 2, 1, 2, 0])
        groups = partition_indices(part, 3)
        got = np.sort(np.concatenate(groups))
        assert_array_equal(got, np.arange(7))


def test_default_stratums_rule():
    assert default_stratums(1) == 1
    assert default_stratums(100) == 10
    assert default_stratums(101) == 11
    assert default_stratums(10_000) == 32
