import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from confuse_forge.numerics import (GradientEvaluationError, InvalidInputError, check_gradient,
                                    log_prob, make_rng, softmax)

finite_vectors = arrays(np.float64, st.integers(1, 12),
                        elements=st.floats(-300, 300, allow_nan=False, allow_infinity=False))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)

    def test_hand_values(self):
        e = [math.exp(v) for v in (1, 2, 3)]
        expected = [v / sum(e) for v in e]
        np.testing.assert_allclose(expected, [0.09003, 0.24473, 0.66524], atol=1e-5)
        np.testing.assert_allclose(softmax([1.0, 2.0, 3.0]), expected, atol=1e-12)

    def test_large_offset_matches(self):
        np.testing.assert_array_equal(softmax([101.0, 102.0, 103.0]), softmax([1.0, 2.0, 3.0]))

    def test_batch_rows(self):
        out = softmax([[0.0, 0.0], [0.0, math.log(3.0)]])
        np.testing.assert_allclose(out, [[0.5, 0.5], [0.25, 0.75]], atol=1e-15)

    @pytest.mark.parametrize("bad", [[0.0, np.nan], [np.inf, 1.0], [-np.inf, 0.0]])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(InvalidInputError):
            softmax(bad)

    @given(finite_vectors)
    def test_normalized_and_positive(self, z):
        p = softmax(z)
        assert abs(p.sum() - 1.0) < 1e-9
        # exp underflow can only zero entries more than ~745 below the max
        assert np.all(p[z - z.max() > -700] > 0)

    @given(finite_vectors, st.floats(-1e3, 1e3))
    def test_shift_invariance(self, z, c):
        np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-12)


class TestLogProb:
    def test_certainty(self):
        assert log_prob([1.0, 0.0], 0) == 0.0

    def test_half(self):
        assert log_prob([0.5, 0.5], 1) == pytest.approx(-0.693147, abs=1e-6)

    def test_floor(self):
        assert log_prob([1.0, 0.0], 1, eps=1e-12) == pytest.approx(math.log(1e-12))
        assert log_prob([1.0, 0.0], 1) == pytest.approx(-27.631, abs=1e-3)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            log_prob([0.5, 0.5], 2)


class TestCheckGradient:
    def test_quadratic(self):
        err = check_gradient(lambda x: float(x @ x), lambda x: 2 * x, np.array([3.0]))
        assert err < 1e-7

    def test_constant(self):
        assert check_gradient(lambda x: 4.0, lambda x: np.zeros_like(x), np.ones(3)) == 0.0

    def test_two_class_ce(self):
        rng = np.random.default_rng(0)
        z0 = rng.normal(size=2)

        def f(z):
            return -math.log(softmax(z)[1])

        def g(z):
            p = softmax(z)
            return p - np.array([0.0, 1.0])

        assert check_gradient(f, g, z0) < 1e-4

    def test_detects_wrong_gradient(self):
        assert check_gradient(lambda x: float(x @ x), lambda x: 3 * x, np.array([1.0])) > 0.1

    def test_non_finite_probe(self):
        with pytest.raises(GradientEvaluationError):
            check_gradient(lambda x: math.log(x[0]) if x[0] > 0 else float("nan"),
                           lambda x: 1 / x, np.array([1e-7]), step=1e-5)


class TestRng:
    def test_same_seed_same_stream(self):
        a = make_rng(42, "shuffle").random(5)
        b = make_rng(42, "shuffle").random(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent(self):
        assert not np.array_equal(make_rng(42, "init").random(5), make_rng(42, "shuffle").random(5))

    def test_full_u64_seed(self):
        make_rng(2**64 - 1)
        with pytest.raises(InvalidInputError):
            make_rng(-1)
