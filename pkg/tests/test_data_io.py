import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sodm.data import (
    DataError,
    Dataset,
    Instance,
    LabelError,
    ParseError,
    apply_scaling,
    normalize,
    parse_libsvm,
    serialize_libsvm,
    split,
)


def write(tmp_path, text, name="data.libsvm"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestParse:
    def test_basic_lines(self, tmp_path):
        ds = parse_libsvm(write(tmp_path, "+1 1:0.5 3:1.0\n-1 2:0.25\n"))
        assert len(ds) == 2
        assert ds.num_features == 3
        assert ds.instance(0).label == 1
        assert ds.instance(0).features == ((0, 0.5), (2, 1.0))
        assert ds.instance(1).label == -1
        assert ds.instance(1).features == ((1, 0.25),)

    def test_label_spellings(self, tmp_path):
        ds = parse_libsvm(write(tmp_path, "1 1:1\n+1 1:1\n-1 1:1\n"))
        assert_array_equal(ds.labels, [1.0, 1.0, -1.0])

    def test_non_increasing_indices_rejected(self, tmp_path):
        with pytest.raises(ParseError, match="line 1"):
            parse_libsvm(write(tmp_path, "+1 3:1 2:1\n"))

    def test_duplicate_index_rejected(self, tmp_path):
        with pytest.raises(ParseError):
            parse_libsvm(write(tmp_path, "+1 2:1 2:4\n"))

    def test_label_zero_and_two_rejected(self, tmp_path):
        with pytest.raises(LabelError, match="line 1"):
            parse_libsvm(write(tmp_path, "0 1:1\n"))
        with pytest.raises(LabelError, match="line 2"):
            parse_libsvm(write(tmp_path, "+1 1:1\n2 1:1\n"))

    def test_garbage_label_and_token(self, tmp_path):
        with pytest.raises(ParseError):
            parse_libsvm(write(tmp_path, "spam 1:1\n"))
        with pytest.raises(ParseError, match="line 2"):
            parse_libsvm(write(tmp_path, "+1 1:1\n-1 1:x\n"))

    def test_whitespace_and_blank_lines(self, tmp_path):
        ds = parse_libsvm(write(tmp_path, "  +1 1:2.0  \n\n   \n-1 1:3.0\n"))
        assert len(ds) == 2

    def test_empty_file(self, tmp_path):
        ds = parse_libsvm(write(tmp_path, ""))
        assert len(ds) == 0

    def test_disk_indices_are_one_based(self, tmp_path):
        ds = parse_libsvm(write(tmp_path, "+1 1:7.0\n"))
        assert ds.features[0, 0] == 7.0


class TestRoundTrip:
    def test_parse_serialize_parse_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        lines = []
        for _ in range(50):
            label = "+1" if rng.random() < 0.5 else "-1"
            idxs = np.sort(rng.choice(np.arange(1, 20), size=rng.integers(1, 6), replace=False))
            toks = ["%d:%s" % (i, repr(float(rng.normal()))) for i in idxs]
            lines.append(label + " " + " ".join(toks))
        first = parse_libsvm(write(tmp_path, "\n".join(lines) + "\n"))
        out = tmp_path / "echo.libsvm"
        serialize_libsvm(first, str(out))
        second = parse_libsvm(str(out))
        assert len(first) == len(second)
        assert first.num_features == second.num_features
        assert_array_equal(first.labels, second.labels)
        assert (first.features != second.features).nnz == 0

    def test_explicit_zero_token_preserves_width(self, tmp_path):
        first = parse_libsvm(write(tmp_path, "+1 2:1.0 5:0.0\n"))
        assert first.num_features == 5
        out = tmp_path / "echo.libsvm"
        serialize_libsvm(first, str(out))
        second = parse_libsvm(str(out))
        assert second.num_features == 5


class TestNormalize:
    def test_minmax_values(self):
        ds = Dataset.from_arrays([[2.0], [4.0], [6.0]], [1, -1, 1])
        scaled, scaling = normalize(ds)
        assert_allclose(scaled.features.toarray().ravel(), [0.0, 0.5, 1.0])
        assert scaling.f_min[0] == 2.0 and scaling.f_max[0] == 6.0

    def test_constant_feature_maps_to_zero(self):
        ds = Dataset.from_arrays([[3.0, 1.0], [3.0, 2.0]], [1, -1])
        scaled, _ = normalize(ds)
        assert_allclose(scaled.features.toarray()[:, 0], [0.0, 0.0])

    def test_test_values_clamped(self):
        train = Dataset.from_arrays([[2.0], [6.0]], [1, -1])
        _, scaling = normalize(train)
        test = Dataset.from_arrays([[8.0], [0.0]], [1, -1])
        scaled = apply_scaling(test, scaling, clamp=True)
        assert_allclose(scaled.features.toarray().ravel(), [1.0, 0.0])

    def test_implicit_zeros_participate(self):
        # feature 2 is absent in row 0: its value is 0, so min is 0 not 5
        ds = Dataset.from_instances(
            [
                Instance(((0, 1.0),), 1),
                Instance(((0, 2.0), (1, 5.0)), -1),
            ]
        )
        scaled, scaling = normalize(ds)
        assert scaling.f_min[1] == 0.0 and scaling.f_max[1] == 5.0
        assert_allclose(scaled.features.toarray()[:, 1], [0.0, 1.0])

    def test_idempotent_within_tolerance(self):
        rng = np.random.default_rng(1)
        ds = Dataset.from_arrays(rng.uniform(-3, 9, size=(20, 4)), rng.choice([-1.0, 1.0], 20))
        once, _ = normalize(ds)
        twice, _ = normalize(once)
        assert np.abs(once.features.toarray() - twice.features.toarray()).max() < 1e-12

    def test_empty_dataset_rejected(self):
        ds = Dataset.from_arrays(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(DataError):
            normalize(ds)


class TestSplit:
    def test_floor_counts(self):
        ds = Dataset.from_arrays(np.arange(10.0)[:, None], [1, -1] * 5)
        train, test = split(ds, 0.8, seed=0)
        assert (len(train), len(test)) == (8, 2)

    def test_two_instances_half(self):
        ds = Dataset.from_arrays([[1.0], [2.0]], [1, -1])
        train, test = split(ds, 0.5, seed=3)
        assert (len(train), len(test)) == (1, 1)

    def test_deterministic(self):
        ds = Dataset.from_arrays(np.arange(30.0)[:, None], [1, -1] * 15)
        a1, b1 = split(ds, 0.7, seed=9)
        a2, b2 = split(ds, 0.7, seed=9)
        assert_array_equal(a1.features.toarray(), a2.features.toarray())
        assert_array_equal(b1.labels, b2.labels)

    def test_exact_partition_of_multiset(self):
        rng = np.random.default_rng(4)
        vals = rng.normal(size=(41, 1))
        ds = Dataset.from_arrays(vals, rng.choice([-1.0, 1.0], 41))
        train, test = split(ds, 0.33, seed=5)
        got = np.sort(
            np.concatenate([train.features.toarray().ravel(), test.features.toarray().ravel()])
        )
        assert_allclose(got, np.sort(vals.ravel()))

    def test_fraction_bounds(self):
        ds = Dataset.from_arrays([[1.0], [2.0]], [1, -1])
        for frac in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(DataError):
                split(ds, frac, seed=0)

    def test_too_small(self):
        ds = Dataset.from_arrays([[1.0]], [1])
        with pytest.raises(DataError):
            split(ds, 0.5, seed=0)


def test_label_validation_on_construction():
    with pytest.raises(LabelError):
        Dataset.from_arrays([[1.0]], [2.0])
