import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import logit_vectors, probability_vectors
from debatekd.simplex import (
    Distribution,
    LogitVector,
    RngSeed,
    entropy,
    floor_and_renormalize,
    sample,
    softmax,
)


class TestDistribution:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError, match="negative"):
            Distribution(np.array([1.1, -0.1]))

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError, match="sum"):
            Distribution(np.array([0.6, 0.6]))

    def test_rejects_single_entry(self):
        with pytest.raises(ValueError, match="vocab"):
            Distribution(np.array([1.0]))

    def test_tolerates_1e9_sum_error(self):
        Distribution(np.array([0.5, 0.5 + 5e-10]))

    def test_probs_are_immutable(self):
        d = Distribution(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            d.probs[0] = 0.9


class TestSoftmax:
    def test_symmetric_logits(self):
        d = softmax(LogitVector(np.zeros(3)))
        np.testing.assert_allclose(d.probs, np.ones(3) / 3, atol=1e-15)

    def test_confidence_pair(self):
        # softmax of (0.95, 0.90) at unit temperature
        d = softmax(LogitVector(np.array([0.95, 0.90])))
        assert d.probs[0] == pytest.approx(0.5124973964842103, abs=1e-12)

    def test_shift_invariant_closed_form(self):
        for c in (-100.0, 0.0, 3.7, 250.0):
            d = softmax(LogitVector(np.array([c, c + np.log(3)])))
            np.testing.assert_allclose(d.probs, [0.25, 0.75], atol=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            LogitVector(np.array([0.0, np.nan]))
        with pytest.raises(ValueError):
            LogitVector(np.array([0.0, np.inf]))

    def test_rejects_underflowing_spread(self):
        with pytest.raises(ValueError, match="spread"):
            LogitVector(np.array([0.0, -800.0]))

    @given(logit_vectors())
    def test_sums_to_one_and_strictly_positive(self, z):
        d = softmax(LogitVector(z))
        assert abs(d.probs.sum() - 1.0) <= 1e-12
        assert np.all(d.probs > 0)

    @given(logit_vectors(), st.floats(min_value=-50, max_value=50, allow_nan=False))
    def test_shift_invariance(self, z, c):
        base = softmax(LogitVector(z)).probs
        shifted = softmax(LogitVector(z + c)).probs
        np.testing.assert_allclose(base, shifted, atol=1e-12)


class TestEntropy:
    def test_uniform_is_log_vocab(self):
        assert entropy(Distribution.uniform(4)) == pytest.approx(np.log(4), abs=1e-12)

    def test_point_mass_is_zero(self):
        assert entropy(Distribution.point_mass(2, 5)) == 0.0

    def test_two_point_example(self):
        assert entropy(Distribution(np.array([0.6, 0.4]))) == pytest.approx(
            0.673012, abs=1e-6
        )

    @given(probability_vectors())
    def test_bounded_by_log_vocab(self, probs):
        h = entropy(Distribution(probs))
        assert 0.0 <= h <= np.log(probs.size) + 1e-12

    def test_maximized_by_uniform(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = int(rng.integers(2, 12))
            p = Distribution(rng.dirichlet(np.ones(v)))
            assert entropy(p) <= entropy(Distribution.uniform(v)) + 1e-12


class TestSample:
    def test_point_mass_always_hits(self):
        rng = RngSeed(1).stream("s")
        p = Distribution.point_mass(3, 6)
        assert np.all(sample(p, rng, size=1000) == 3)

    def test_uniform_frequencies(self):
        rng = RngSeed(2).stream("s")
        draws = sample(Distribution.uniform(2), rng, size=100_000)
        assert abs((draws == 0).mean() - 0.5) <= 0.01

    def test_skewed_frequencies(self):
        rng = RngSeed(3).stream("s")
        draws = sample(Distribution(np.array([0.9, 0.1])), rng, size=100_000)
        assert abs((draws == 0).mean() - 0.9) <= 0.01

    def test_never_returns_zero_probability_id(self):
        rng = RngSeed(4).stream("s")
        p = Distribution(np.array([0.5, 0.0, 0.5]))
        assert not np.any(sample(p, rng, size=20_000) == 1)

    def test_deterministic_given_seed(self):
        p = Distribution(np.array([0.3, 0.3, 0.4]))
        a = sample(p, RngSeed(9).stream("x"), size=500)
        b = sample(p, RngSeed(9).stream("x"), size=500)
        np.testing.assert_array_equal(a, b)


class TestFloorAndRenormalize:
    def test_eps_zero_is_identity(self):
        p = Distribution(np.array([0.7, 0.3]))
        assert floor_and_renormalize(p, 0.0) is p

    def test_floors_a_zero_entry(self):
        eps = 1e-8
        out = floor_and_renormalize(Distribution(np.array([1.0, 0.0])), eps)
        expected = np.array([1.0, eps]) / (1.0 + eps)
        np.testing.assert_allclose(out.probs, expected, rtol=1e-12)
        # stays within the stated lower-bound form eps/(1 + V*eps)
        assert out.probs.min() >= eps / (1 + 2 * eps) - 1e-24

    def test_uniform_is_fixed_point(self):
        u = Distribution.uniform(5)
        out = floor_and_renormalize(u, 0.01)
        np.testing.assert_allclose(out.probs, u.probs, atol=1e-15)

    def test_rejects_eps_out_of_range(self):
        p = Distribution.uniform(4)
        with pytest.raises(ValueError):
            floor_and_renormalize(p, 0.25)
        with pytest.raises(ValueError):
            floor_and_renormalize(p, -1e-9)

    @given(probability_vectors(min_entry=0.0), st.floats(min_value=0, max_value=1e-3))
    def test_output_is_valid_and_floored(self, probs, eps):
        if eps >= 1.0 / probs.size:
            return
        out = floor_and_renormalize(Distribution(probs), eps)
        assert abs(out.probs.sum() - 1.0) <= 1e-12
        assert out.probs.min() >= eps / (1 + probs.size * eps) - 1e-18


class TestRngSeed:
    def test_same_label_same_stream(self):
        a = RngSeed(7).stream("rollout").random(20)
        b = RngSeed(7).stream("rollout").random(20)
        np.testing.assert_array_equal(a, b)

    def test_labels_are_independent(self):
        a = RngSeed(7).stream("rollout").random(20)
        b = RngSeed(7).stream("debate").random(20)
        assert not np.array_equal(a, b)

    def test_rejects_out_of_range_seed(self):
        with pytest.raises(ValueError):
            RngSeed(-1)
        with pytest.raises(ValueError):
            RngSeed(2**64)
