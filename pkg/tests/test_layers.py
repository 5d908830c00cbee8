"""Contract tests for convolution, primary capsules, and compression."""

from __future__ import annotations

import numpy as np
import pytest

from textcaps import autodiff as ad
from textcaps.layers import compress, conv_features, primary_capsules
from textcaps.numerics import squash

from _oracles import squash_ref


def _ones_filter_bank(k: int, v: int, n_filters: int = 1) -> np.ndarray:
    return np.ones((k * v, n_filters))


class TestConvFeatures:
    def test_zero_document_gives_zero_maps(self) -> None:
        X = np.zeros((5, 3))
        maps = conv_features(X, {2: np.random.default_rng(0).normal(size=(6, 4))}, [2])
        np.testing.assert_array_equal(maps[2], 0.0)

    def test_hand_convolution(self) -> None:
        # X = (1; 2; 3), window 2, all-ones filter: windows sum to 3 and 5
        X = np.array([[1.0], [2.0], [3.0]])
        maps = conv_features(X, {2: _ones_filter_bank(2, 1)}, [2])
        np.testing.assert_allclose(maps[2], [[3.0], [5.0]])

    def test_single_position_when_length_equals_window(self) -> None:
        X = np.ones((2, 3))
        maps = conv_features(X, {2: _ones_filter_bank(2, 3, 2)}, [2])
        assert maps[2].shape == (1, 2)

    def test_short_document_left_padded(self) -> None:
        X = np.array([[2.0, 2.0]])
        maps = conv_features(X, {3: _ones_filter_bank(3, 2)}, [3])
        # padded to (0,0),(0,0),(2,2): one position summing to 4
        np.testing.assert_allclose(maps[3], [[4.0]])

    def test_output_lengths_follow_stride_one(self) -> None:
        rng = np.random.default_rng(1)
        X = rng.normal(size=(10, 4))
        filters = {k: rng.normal(size=(k * 4, 5)) for k in (2, 4, 8)}
        maps = conv_features(X, filters, (2, 4, 8))
        for k in (2, 4, 8):
            assert maps[k].shape == (10 - k + 1, 5)
            assert np.all(maps[k] >= 0.0)

    def test_linear_before_relu(self) -> None:
        rng = np.random.default_rng(2)
        X = rng.uniform(0.1, 1.0, size=(6, 3))
        filters = {2: np.abs(rng.normal(size=(6, 4)))}  # nonnegative response
        single = conv_features(X, filters, [2])[2]
        doubled = conv_features(2.0 * X, filters, [2])[2]
        np.testing.assert_allclose(doubled, 2.0 * single, rtol=1e-12)

    def test_empty_document_rejected(self) -> None:
        with pytest.raises(ValueError):
            conv_features(np.zeros((0, 3)), {2: _ones_filter_bank(2, 3)}, [2])


class TestPrimaryCapsules:
    def test_zero_scalar_gives_zero_capsule(self) -> None:
        fm = {2: np.zeros((3, 2))}
        w = np.random.default_rng(0).normal(size=(2, 4))
        caps = primary_capsules(fm, w, 4)
        np.testing.assert_array_equal(caps, 0.0)

    def test_unit_scalar_squashes_weight_vector(self) -> None:
        fm = {2: np.array([[1.0]])}
        w = np.array([[3.0, 4.0]])
        caps = primary_capsules(fm, w, 2)
        assert np.linalg.norm(caps[0]) == pytest.approx(25.0 / 26.0, abs=1e-12)
        np.testing.assert_allclose(caps[0] / np.linalg.norm(caps[0]), [0.6, 0.8], atol=1e-12)

    def test_shared_channel_produces_parallel_capsules(self) -> None:
        fm = {2: np.array([[0.4], [0.9]])}
        w = np.array([[1.0, 2.0, 2.0]])
        caps = primary_capsules(fm, w, 3)
        cos = caps[0] @ caps[1] / (np.linalg.norm(caps[0]) * np.linalg.norm(caps[1]))
        assert cos == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(caps[0]) < np.linalg.norm(caps[1])

    def test_output_count_and_norm_bound(self) -> None:
        rng = np.random.default_rng(3)
        fm = {2: rng.uniform(0, 2, (5, 3)), 4: rng.uniform(0, 2, (3, 3))}
        w = rng.normal(size=(6, 4))
        caps = primary_capsules(fm, w, 4)
        assert caps.shape == (5 * 3 + 3 * 3, 4)
        assert np.all(np.linalg.norm(caps, axis=1) < 1.0)

    def test_matches_scalar_reference(self) -> None:
        rng = np.random.default_rng(4)
        fm = {2: rng.uniform(0, 2, (4, 2))}
        w = rng.normal(size=(2, 3))
        caps = primary_capsules(fm, w, 3)
        expected = []
        for i in range(4):
            for f in range(2):
                expected.append(squash_ref(fm[2][i, f] * w[f]))
        np.testing.assert_allclose(caps, expected, atol=1e-12)

    def test_channel_count_mismatch_rejected(self) -> None:
        fm = {2: np.ones((3, 2))}
        with pytest.raises(ValueError):
            primary_capsules(fm, np.ones((5, 4)), 4)

    def test_dimension_below_two_rejected(self) -> None:
        with pytest.raises(ValueError):
            primary_capsules({2: np.ones((1, 1))}, np.ones((1, 1)), 1)


class TestCompress:
    def test_zero_matrix_gives_zero_capsules(self) -> None:
        caps = np.random.default_rng(0).normal(size=(6, 4)) * 0.3
        out = compress(caps, np.zeros((2, 6)))
        np.testing.assert_array_equal(out, 0.0)

    def test_hand_weighted_sum(self) -> None:
        caps = np.array([[0.3, 0.0], [0.5, 0.5]])
        out = compress(caps, np.array([[1.0, 0.0]]))
        np.testing.assert_allclose(out[0], squash_ref(np.array([0.3, 0.0])), atol=1e-12)

    def test_one_hot_rows_select_and_squash(self) -> None:
        rng = np.random.default_rng(5)
        caps = rng.normal(size=(5, 3)) * 0.4
        B = np.zeros((2, 5))
        B[0, 3] = 1.0
        B[1, 1] = 1.0
        out = compress(caps, B)
        np.testing.assert_allclose(out[0], squash_ref(caps[3]), atol=1e-12)
        np.testing.assert_allclose(out[1], squash_ref(caps[1]), atol=1e-12)

    def test_output_size_fixed_by_matrix(self) -> None:
        rng = np.random.default_rng(6)
        B = rng.normal(size=(3, 8))
        for _ in range(4):
            caps = rng.normal(size=(8, 4))
            assert compress(caps, B).shape == (3, 4)

    def test_column_mismatch_rejected(self) -> None:
        with pytest.raises(ValueError):
            compress(np.ones((4, 3)), np.ones((2, 5)))

    def test_tensor_mode_matches_numpy(self) -> None:
        rng = np.random.default_rng(7)
        caps = rng.normal(size=(6, 3)) * 0.5
        B = rng.normal(size=(2, 6))
        out_np = compress(caps, B)
        out_t = compress(caps, ad.Tensor(B))
        np.testing.assert_array_equal(ad.raw(out_t), out_np)


def test_pipeline_output_independent_of_raw_document_length() -> None:
    # padded to a fixed length upstream, two different-length raw docs
    # produce the same capsule count
    rng = np.random.default_rng(8)
    filters = {2: rng.normal(size=(2 * 3, 2))}
    w = rng.normal(size=(2, 4))
    B = rng.normal(size=(3, (8 - 2 + 1) * 2))
    for raw_len in (2, 5, 8):
        X = np.zeros((8, 3))
        X[:raw_len] = rng.normal(size=(raw_len, 3))
        fm = conv_features(X, filters, [2])
        out = compress(primary_capsules(fm, w, 4), B)
        assert out.shape == (3, 4)
