import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sodm.data import Dataset
from sodm.kernels import linear_kernel, rbf_kernel
from sodm.oracle import finite_diff_check, random_dataset
from sodm.solver import HyperParams, primal_objective
from sodm.svrg import (
    SvrgConfig,
    UnsupportedConfigError,
    default_eta,
    dsvrg_train,
    full_gradient,
    instance_gradient,
    instance_primal,
)
from sodm.synth import separable_2d

HP = HyperParams(lam=2.0, theta=0.2, nu=0.5)


class TestInstanceGradient:
    def test_zero_weights_below_band(self):
        ds = Dataset.from_arrays([[0.5, -1.0]], [1.0])
        hp = HyperParams(lam=1.0, theta=0.0, nu=1.0)
        grad = instance_gradient(np.zeros(2), ds.instance(0), hp)
        assert_allclose(grad, [-0.5, 1.0], rtol=1e-9)

    def test_inside_band_is_exactly_w(self):
        ds = Dataset.from_arrays([[1.0, 0.0]], [1.0])
        w = np.array([1.0, 3.0])  # margin exactly 1, inside [1-theta, 1+theta]
        assert_array_equal(instance_gradient(w, ds.instance(0), HP), w)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        ds = random_dataset(rng, 20, 4)
        assert finite_diff_check(ds, HP, trials=50, seed=1) <= 1e-5

    def test_upper_branch_scaled_by_nu(self):
        ds = Dataset.from_arrays([[1.0]], [1.0])
        hp = HyperParams(lam=3.0, theta=0.1, nu=0.25)
        w = np.array([2.0])  # margin 2 > 1 + theta
        grad = instance_gradient(w, ds.instance(0), hp)
        expected = 2.0 + hp.lam * hp.nu * (2.0 - hp.theta - 1.0) / (1 - hp.theta) ** 2
        assert_allclose(grad, [expected], rtol=1e-12)


class TestFullGradient:
    def test_zero_weights_equal_minus_mean(self):
        rng = np.random.default_rng(2)
        ds = random_dataset(rng, 15, 3)
        hp = HyperParams(lam=1.0, theta=0.0, nu=1.0)
        got = full_gradient(np.zeros(3), ds, hp)
        want = -np.asarray(
            ds.features.multiply(ds.labels[:, None]).mean(axis=0)
        ).ravel()
        assert_allclose(got, want, rtol=1e-12)

    def test_single_instance_degenerate(self):
        ds = Dataset.from_arrays([[0.7, 0.1]], [-1.0])
        w = np.array([0.3, -0.4])
        assert_allclose(
            full_gradient(w, ds, HP), instance_gradient(w, ds.instance(0), HP), rtol=1e-15
        )

    def test_layout_invariance(self):
        rng = np.random.default_rng(3)
        ds = random_dataset(rng, 64, 3)
        w = rng.normal(size=3)
        layouts = [
            [np.arange(64)],
            [np.arange(0, 32), np.arange(32, 64)],
            [np.arange(k, 64, 4) for k in range(4)],
        ]
        grads = [full_gradient(w, ds, HP, nodes=layout) for layout in layouts]
        for g in grads[1:]:
            assert np.abs(g - grads[0]).max() <= 1e-12 * (1.0 + np.abs(grads[0]).max())

    def test_worker_count_does_not_change_result(self):
        rng = np.random.default_rng(4)
        ds = random_dataset(rng, 40, 2)
        w = rng.normal(size=2)
        nodes = [np.arange(0, 10), np.arange(10, 25), np.arange(25, 40)]
        a = full_gradient(w, ds, HP, nodes=nodes, workers=1)
        b = full_gradient(w, ds, HP, nodes=nodes, workers=3)
        assert_array_equal(a, b)

    def test_variance_correction_is_unbiased_at_anchor(self):
        rng = np.random.default_rng(5)
        ds = random_dataset(rng, 12, 3)
        w = rng.normal(size=3)
        anchor = rng.normal(size=3)
        h = full_gradient(anchor, ds, HP)
        corrected = np.zeros(3)
        for i in range(12):
            inst = ds.instance(i)
            corrected += instance_gradient(w, inst, HP) - instance_gradient(anchor, inst, HP) + h
        corrected /= 12
        assert_allclose(corrected, full_gradient(w, ds, HP), rtol=1e-12)


class TestDsvrgTrain:
    def test_requires_linear_kernel(self):
        ds = separable_2d(50, seed=1)
        cfg = SvrgConfig(nodes=2, epochs=1)
        with pytest.raises(UnsupportedConfigError):
            dsvrg_train(ds, rbf_kernel(1.0), HP, cfg)

    def test_zero_step_freezes_weights(self):
        ds = separable_2d(60, seed=2)
        cfg = SvrgConfig(nodes=2, epochs=3, eta=0.0, seed=3)
        w, traj = dsvrg_train(ds, linear_kernel(), HP, cfg)
        assert_array_equal(w, np.zeros(2))
        assert len(traj) == 3

    def test_single_instance_first_step_is_full_gradient_step(self):
        ds = Dataset.from_arrays([[0.4, 0.8]], [1.0])
        eta = 0.05
        cfg = SvrgConfig(nodes=1, epochs=1, eta=eta, seed=4)
        w, _ = dsvrg_train(ds, linear_kernel(), HP, cfg)
        h = full_gradient(np.zeros(2), ds, HP)
        assert_allclose(w, -eta * h, rtol=1e-15)

    def test_every_instance_used_exactly_once_per_epoch(self):
        ds = separable_2d(97, seed=5)
        cfg = SvrgConfig(nodes=3, epochs=2, seed=6)
        log = []
        dsvrg_train(ds, linear_kernel(), HP, cfg, visit_log=log)
        for epoch in (0, 1):
            used = sorted(i for e, _, i in log if e == epoch)
            assert used == list(range(97))

    def test_deterministic_trajectory(self):
        ds = separable_2d(80, seed=7)
        cfg = SvrgConfig(nodes=2, epochs=4, seed=8)
        w1, t1 = dsvrg_train(ds, linear_kernel(), HP, cfg)
        w2, t2 = dsvrg_train(ds, linear_kernel(), HP, cfg)
        assert_array_equal(w1, w2)
        assert t1 == t2

    def test_objective_non_increasing_at_default_eta(self):
        ds = separable_2d(500, seed=9)
        hp = HyperParams(lam=8.0, theta=0.1, nu=1.0)
        cfg = SvrgConfig(nodes=4, epochs=6, stratums=4, seed=10)
        _, traj = dsvrg_train(ds, linear_kernel(), hp, cfg)
        objs = [t["primal_objective"] for t in traj]
        for prev, cur in zip(objs, objs[1:]):
            assert cur <= prev + 1e-12 * (1.0 + abs(prev))

    def test_communication_counters(self):
        ds = separable_2d(30, seed=11)
        cfg = SvrgConfig(nodes=3, epochs=2, seed=12)
        _, traj = dsvrg_train(ds, linear_kernel(), HP, cfg)
        last = traj[-1]
        assert last["broadcasts"] == 2 * 2  # anchor + reduced gradient, per epoch
        assert last["reductions"] == 2
        assert last["token_passes"] > 0
        assert set(traj[0]) == {
            "epoch",
            "primal_objective",
            "broadcasts",
            "reductions",
            "token_passes",
        }


class TestInstancePrimal:
    def test_mean_over_instances_is_primal(self):
        rng = np.random.default_rng(13)
        ds = random_dataset(rng, 25, 3)
        w = rng.normal(size=3)
        mean = np.mean([instance_primal(w, ds.instance(i), HP) for i in range(25)])
        assert_allclose(mean, primal_objective(w, ds, HP), rtol=1e-12)


def test_default_eta_is_inverse_smoothness():
    ds = separable_2d(40, seed=14)
    hp = HyperParams(lam=5.0, theta=0.2, nu=1.0)
    max_sq = float(ds.sq_norms().max())
    assert_allclose(default_eta(ds, hp), 0.1 / (1.0 + 5.0 * max_sq / 0.8**2))
