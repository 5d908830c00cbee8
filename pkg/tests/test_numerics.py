"""Contract and property tests for the shared numeric primitives."""

from __future__ import annotations

import math

import numpy as np
import pytest

from textcaps import autodiff as ad
from textcaps.numerics import (
    cosine_sim,
    epanechnikov,
    epanechnikov_deriv,
    leaky_softmax,
    sq_distance,
    squash,
)


class TestSquash:
    def test_zero_vector_maps_to_zero(self) -> None:
        np.testing.assert_array_equal(squash(np.zeros(3)), np.zeros(3))

    def test_unit_vector_halves(self) -> None:
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=5)
            x /= np.linalg.norm(x)
            assert np.linalg.norm(squash(x)) == pytest.approx(0.5, abs=1e-12)

    def test_three_four_vector(self) -> None:
        out = squash(np.array([3.0, 4.0]))
        assert np.linalg.norm(out) == pytest.approx(25.0 / 26.0, abs=1e-12)
        np.testing.assert_allclose(out / np.linalg.norm(out), [0.6, 0.8], atol=1e-12)

    def test_norm_bounded_and_direction_preserved(self) -> None:
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = rng.normal(size=rng.integers(1, 8)) * rng.uniform(0, 20)
            y = squash(x)
            assert 0.0 <= np.linalg.norm(y) < 1.0
            assert float(y @ x) >= 0.0

    def test_rowwise_on_matrix(self) -> None:
        X = np.array([[3.0, 4.0], [0.0, 0.0]])
        out = squash(X, axis=-1)
        assert np.linalg.norm(out[0]) == pytest.approx(25.0 / 26.0, abs=1e-12)
        np.testing.assert_array_equal(out[1], 0.0)

    def test_tensor_mode_matches_numpy(self) -> None:
        x = np.array([0.3, -1.2, 0.7])
        np.testing.assert_array_equal(ad.raw(squash(ad.Tensor(x))), squash(x))


class TestLeakySoftmax:
    def test_single_zero_logit(self) -> None:
        np.testing.assert_allclose(leaky_softmax(np.array([0.0])), [0.5], atol=1e-15)

    def test_three_zero_logits(self) -> None:
        np.testing.assert_allclose(leaky_softmax(np.zeros(3)), [0.25] * 3, atol=1e-15)

    def test_two_logits_hand_formula(self) -> None:
        # e^1/(e^1+e^2+1) and e^2/(e^1+e^2+1)
        denom = math.e + math.e ** 2 + 1.0
        expected = [math.e / denom, math.e ** 2 / denom]
        np.testing.assert_allclose(leaky_softmax(np.array([1.0, 2.0])), expected, atol=1e-12)

    def test_positive_sum_below_one_order_preserving(self) -> None:
        # logit scale chosen so the orphan mass stays representable in
        # float64 (routing couplings live well inside this range)
        rng = np.random.default_rng(2)
        for _ in range(200):
            row = rng.normal(size=rng.integers(1, 9)) * rng.uniform(0.1, 8.0)
            out = leaky_softmax(row)
            assert np.all(out > 0.0) and np.all(out < 1.0)
            assert out.sum() < 1.0
            assert np.argmax(out) == np.argmax(row)
            expected_sum = 1.0 - 1.0 / (np.exp(row).sum() + 1.0)
            assert out.sum() == pytest.approx(expected_sum, rel=1e-9)

    def test_overflow_safe(self) -> None:
        out = leaky_softmax(np.array([1000.0, 999.0]))
        assert np.all(np.isfinite(out))
        assert np.all(out < 1.0)

    def test_matrix_axis0(self) -> None:
        M = np.zeros((3, 2))
        out = leaky_softmax(M, axis=0)
        np.testing.assert_allclose(out, 0.25, atol=1e-15)


class TestEpanechnikov:
    def test_anchor_values(self) -> None:
        assert epanechnikov(0.0) == 1.0
        assert epanechnikov_deriv(0.0) == -1.0
        assert epanechnikov(1.0) == 0.0
        assert epanechnikov_deriv(1.0) == 0.0
        assert epanechnikov(0.25) == 0.75

    def test_left_limit_at_support_edge(self) -> None:
        eps = 1e-12
        assert epanechnikov(1.0 - eps) == pytest.approx(0.0, abs=1e-11)

    def test_zero_beyond_support(self) -> None:
        assert epanechnikov(3.7) == 0.0
        assert epanechnikov_deriv(2.0) == 0.0

    def test_negative_argument_rejected(self) -> None:
        with pytest.raises(ValueError):
            epanechnikov(-0.1)
        with pytest.raises(ValueError):
            epanechnikov_deriv(-1e-9)

    def test_vectorized(self) -> None:
        x = np.array([0.0, 0.5, 1.0, 2.0])
        np.testing.assert_array_equal(epanechnikov(x), [1.0, 0.5, 0.0, 0.0])
        np.testing.assert_array_equal(epanechnikov_deriv(x), [-1.0, -1.0, 0.0, 0.0])


class TestSqDistance:
    def test_identity_and_unit(self) -> None:
        assert sq_distance(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
        assert sq_distance(np.array([1.0, 0.0]), np.array([0.0, 0.0]), 1.0) == 1.0

    def test_hand_value_with_bandwidth(self) -> None:
        got = sq_distance(np.array([1.0, 2.0]), np.array([4.0, 6.0]), 2.0)
        assert got == pytest.approx(25.0 / 4.0, abs=1e-12)

    def test_symmetry_and_identity_of_indiscernibles(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(100):
            u = rng.normal(size=4)
            v = rng.normal(size=4)
            h = rng.uniform(0.2, 3.0)
            assert sq_distance(u, v, h) == pytest.approx(sq_distance(v, u, h), abs=1e-12)
            assert (sq_distance(u, v, h) == 0.0) == bool(np.all(u == v))

    def test_errors(self) -> None:
        with pytest.raises(ValueError):
            sq_distance(np.zeros(2), np.zeros(3))
        with pytest.raises(ValueError):
            sq_distance(np.zeros(2), np.zeros(2), 0.0)


class TestCosineSim:
    def test_anchor_values(self) -> None:
        assert cosine_sim(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == pytest.approx(1.0, abs=1e-12)
        assert cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0, abs=1e-15)
        assert cosine_sim(np.array([1.0, 2.0]), np.array([2.0, 1.0])) == pytest.approx(0.8, abs=1e-12)

    def test_scale_invariance(self) -> None:
        rng = np.random.default_rng(4)
        for _ in range(100):
            u = rng.normal(size=5)
            v = rng.normal(size=5)
            s = float(cosine_sim(u, v))
            assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
            assert float(cosine_sim(u * 17.5, v * 0.003)) == pytest.approx(s, abs=1e-12)

    def test_zero_norm_rejected(self) -> None:
        with pytest.raises(ValueError):
            cosine_sim(np.zeros(3), np.ones(3))
