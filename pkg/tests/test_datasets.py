"""
Tests for negmm.datasets
"""

import numpy as np
import pytest

from negmm.datasets import (
    LabeledDataset,
    Split,
    as_single_split,
    combine_splits,
    example1_truth,
    example2_truth,
    gen_example1,
    gen_example2,
    load_csv,
    load_features,
    save_csv,
    split_and_standardize,
    standardize,
)
from negmm.errors import DataError, DomainError, ParseError, SchemaError


class TestGroundTruth:
    def test_example1_at_zero(self):
        truth = example1_truth(np.array([0.0]))
        assert truth.mean[0] == 0.0
        assert truth.std[0] ** 2 == pytest.approx(0.09)

    def test_example1_at_eleven(self):
        truth = example1_truth(np.array([11.0]))
        assert truth.std[0] ** 2 == pytest.approx(10.98)

    def test_example2_at_two(self):
        truth = example2_truth(np.array([2.0]))
        assert truth.mean[0] == pytest.approx(3.2)
        assert truth.std[0] ** 2 == pytest.approx(9.0 + 0.84 * 64)
        np.testing.assert_allclose(truth.components.weights[0], [0.3, 0.7])
        np.testing.assert_allclose(truth.components.stds[0], [3.0, 3.0])
        np.testing.assert_allclose(truth.components.means[0], [-8.0, 8.0])


class TestGenerators:
    def test_example1_split_sizes(self):
        data = gen_example1(600, seed=0)
        assert data.split.sizes() == (600, 120, 300)
        assert data.features.min() >= -1.0 and data.features.max() <= 11.0

    def test_example2_split_sizes(self):
        data = gen_example2(1000, seed=0)
        assert data.split.sizes() == (1000, 200, 300)
        assert data.ground_truth.components.k == 2

    def test_reproducible(self):
        a, b = gen_example2(50, seed=9), gen_example2(50, seed=9)
        np.testing.assert_array_equal(a.targets, b.targets)
        assert not np.array_equal(a.targets, gen_example2(50, seed=10).targets)

    def test_standardization_attached(self, small_toy):
        x, y = small_toy.standardized("train")
        assert abs(x.mean()) < 1e-12 and abs(y.mean()) < 1e-12

    def test_n_must_be_positive(self):
        with pytest.raises(DomainError):
            gen_example1(0, seed=0)

    @pytest.mark.parametrize("gen,x0", [(gen_example1, 8.0), (gen_example2, 2.0)])
    def test_binned_moments_match_truth(self, gen, x0):
        data = gen(400_000, seed=1, n_test=1)
        x, y = data.features[:, 0], data.targets
        near = np.abs(x - x0) < 0.05
        truth = data.ground_truth.mean[near], data.ground_truth.std[near]
        resid = y[near] - truth[0]
        se = np.sqrt(np.mean(truth[1] ** 2) / near.sum())
        assert abs(resid.mean()) < 4 * se
        assert np.mean(resid ** 2) == pytest.approx(np.mean(truth[1] ** 2), rel=0.1)


class TestCsv:
    def test_small_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
        data = load_csv(path, "y")
        assert data.n == 3 and data.dim == 2
        assert data.feature_names == ("a", "b")
        np.testing.assert_array_equal(data.targets, [3.0, 6.0, 9.0])
        assert data.standardization is None

    def test_headerless_with_index(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,2,3\n4,5,6\n")
        data = load_csv(path, -1, has_header=False)
        assert data.n == 2 and data.dim == 2
        np.testing.assert_array_equal(data.targets, [3.0, 6.0])

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n1,2\nx,3\n")
        with pytest.raises(ParseError) as e:
            load_csv(path, "y")
        assert e.value.row == 3 and e.value.column == "a"

    def test_empty_cell_is_a_parse_error(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n1,\n")
        with pytest.raises(ParseError):
            load_csv(path, "y")

    def test_missing_target(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SchemaError):
            load_csv(path, "y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv", "y")

    def test_round_trip_is_exact(self, tmp_path):
        data = gen_example2(30, seed=3, n_test=10)
        save_csv(data, tmp_path / "all.csv")
        back = load_csv(tmp_path / "all.csv", "y")
        np.testing.assert_array_equal(back.features, data.features)
        np.testing.assert_array_equal(back.targets, data.targets)
        np.testing.assert_array_equal(back.ground_truth.std, data.ground_truth.std)
        np.testing.assert_array_equal(back.ground_truth.components.means, data.ground_truth.components.means)

    def test_truth_columns_are_not_features(self, tmp_path):
        data = gen_example1(10, seed=0, n_test=5)
        save_csv(data, tmp_path / "test.csv", "test")
        back = load_csv(tmp_path / "test.csv", "y")
        assert back.feature_names == ("x",)
        assert back.n == 5
        assert back.ground_truth.components.k == 1

    def test_load_features_ignores_target(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,y,m_true\n1,2,3,0\n")
        x, names = load_features(path, drop=["y"])
        assert names == ("a", "b")
        assert x.shape == (1, 2)


def shifted_dataset(n=100, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2)) + np.linspace(0, 5, n)[:, None]
    y = x.sum(axis=1) + rng.normal(size=n)
    return LabeledDataset(x, y, ("a", "b"))


class TestSplitting:
    def test_sizes(self):
        data = split_and_standardize(shifted_dataset(), (0.64, 0.16, 0.20), seed=0)
        assert data.split.sizes() == (64, 16, 20)

    def test_train_is_standardized(self):
        data = split_and_standardize(shifted_dataset(), (0.64, 0.16, 0.20), seed=0)
        x, y = data.standardized("train")
        np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(x.std(axis=0), 1.0, atol=1e-12)
        assert abs(y.mean()) < 1e-12

    def test_no_leakage(self):
        raw = shifted_dataset()
        split = Split(np.arange(60), np.arange(60, 80), np.arange(80, 100))
        data = standardize(LabeledDataset(raw.features, raw.targets, raw.feature_names, split=split))
        x_val, _ = data.standardized("val")
        assert np.all(np.abs(x_val.mean(axis=0)) > 0.1)
        np.testing.assert_allclose(data.standardization.feature_mean, raw.features[:60].mean(axis=0))

    def test_deterministic(self):
        a = split_and_standardize(shifted_dataset(), (0.64, 0.16, 0.20), seed=5)
        b = split_and_standardize(shifted_dataset(), (0.64, 0.16, 0.20), seed=5)
        np.testing.assert_array_equal(a.split.test, b.split.test)

    @pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.0), (0.5, 0.3, 0.3), (0.9, 0.1)])
    def test_bad_ratios(self, ratios):
        with pytest.raises(DomainError):
            split_and_standardize(shifted_dataset(), ratios, seed=0)

    def test_empty_part(self):
        with pytest.raises(DomainError):
            split_and_standardize(shifted_dataset(n=3), (0.8, 0.1, 0.1), seed=0)

    def test_constant_column(self):
        raw = shifted_dataset()
        x = raw.features.copy()
        x[:, 1] = 4.0
        data = split_and_standardize(LabeledDataset(x, raw.targets, raw.feature_names), (0.6, 0.2, 0.2), seed=0)
        assert data.standardization.feature_std[1] == 1.0
        assert data.standardization.constant_features.tolist() == [False, True]

    def test_overlapping_split_rejected(self):
        raw = shifted_dataset(n=10)
        with pytest.raises(DomainError):
            LabeledDataset(raw.features, raw.targets, raw.feature_names,
                           split=Split(np.arange(5), np.arange(4, 8), np.arange(8, 10)))

    def test_combine_splits(self, tmp_path):
        data = gen_example1(20, seed=2, n_test=10)
        parts = []
        for part in ("train", "val", "test"):
            save_csv(data, tmp_path / f"{part}.csv", part)
            parts.append(load_csv(tmp_path / f"{part}.csv", "y"))
        combined = combine_splits(*parts)
        assert combined.split.sizes() == (20, 4, 10)
        np.testing.assert_array_equal(combined.standardization.feature_mean, data.standardization.feature_mean)

    def test_single_split(self, small_toy):
        whole = as_single_split(small_toy)
        assert whole.split.sizes() == (0, 0, small_toy.n)
