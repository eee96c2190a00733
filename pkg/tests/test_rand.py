import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mondrian.rand import (
    RngStream,
    expected_truncated_discount,
    sample_categorical_proportional,
    sample_exponential,
    sample_uniform_interval,
)


def test_same_seed_and_stream_reproduce_draws():
    a, b = RngStream(7, 3), RngStream(7, 3)
    assert [a.random() for _ in range(50)] == [b.random() for _ in range(50)]
    assert np.array_equal(a.standard_exponential_array(20), b.standard_exponential_array(20))


def test_distinct_streams_look_independent():
    a = RngStream(7, 0).random_array(20000)
    b = RngStream(7, 1).random_array(20000)
    assert not np.array_equal(a, b)
    r, p = stats.pearsonr(a, b)
    assert p > 0.001


def test_state_round_trip_resumes_stream():
    rng = RngStream(1, 2)
    rng.random_array(5)
    clone = RngStream.from_state(rng.get_state())
    assert np.array_equal(rng.random_array(10), clone.random_array(10))


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        RngStream(-1)


# -- exponential ----------------------------------------------------------

def test_zero_rate_is_infinite_and_consumes_nothing():
    rng, ref = RngStream(3), RngStream(3)
    assert sample_exponential(rng, 0.0) == math.inf
    assert rng.random() == ref.random()


@pytest.mark.parametrize("rate", [-1.0, math.inf, math.nan])
def test_bad_rate_rejected(rate):
    with pytest.raises(ValueError):
        sample_exponential(RngStream(), rate)


def test_exponential_mean_within_three_standard_errors():
    rng = RngStream(11)
    draws = np.array([sample_exponential(rng, 2.0) for _ in range(200_000)])
    # Exp(2) has mean and standard deviation 0.5
    assert abs(draws.mean() - 0.5) < 3 * 0.5 / math.sqrt(draws.size)


def test_exponential_ecdf_inside_dkw_band():
    rng = RngStream(12)
    rate, n = 1.7, 100_000
    draws = np.sort(rng.standard_exponential_array(n) / rate)
    eps = math.sqrt(math.log(2 / 0.001) / (2 * n))
    cdf = -np.expm1(-rate * draws)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    assert max(np.max(upper - cdf), np.max(cdf - lower)) < eps


def test_scaled_exponential_matches_scalar_draws():
    a, b = RngStream(4), RngStream(4)
    assert sample_exponential(a, 4.0) == b.standard_exponential() / 4.0


# -- categorical ----------------------------------------------------------

def test_degenerate_weights_always_pick_the_mass():
    rng = RngStream(5)
    assert {sample_categorical_proportional(rng, [1, 0, 0]) for _ in range(1000)} == {0}


def test_zero_weight_on_boundary_is_never_chosen():
    rng = RngStream(5)
    draws = {sample_categorical_proportional(rng, [0, 2, 0, 1]) for _ in range(2000)}
    assert draws == {1, 3}


@pytest.mark.parametrize("weights", [[0, 0], [1, -1], [], [1, math.inf]])
def test_bad_weights_rejected(weights):
    with pytest.raises(ValueError):
        sample_categorical_proportional(RngStream(), weights)


def test_even_weights_frequency_band():
    rng = RngStream(6)
    freq = np.mean([sample_categorical_proportional(rng, [1, 1]) == 0 for _ in range(100_000)])
    assert 0.49 <= freq <= 0.51


def test_three_to_one_weights_binomial_band():
    rng = RngStream(8)
    n = 100_000
    freq = np.mean([sample_categorical_proportional(rng, [3, 1]) == 0 for _ in range(n)])
    assert abs(freq - 0.75) < 3 * math.sqrt(0.75 * 0.25 / n)


def test_inverse_cdf_mapping_of_uniform_draw():
    class Fixed(RngStream):
        def __init__(self, u):
            super().__init__()
            self.u = u

        def random(self):
            return self.u

    # cumulative weights 0.2, 0.7, 1.0 on total 1.0
    w = [0.2, 0.5, 0.3]
    assert sample_categorical_proportional(Fixed(0.1), w) == 0
    assert sample_categorical_proportional(Fixed(0.2), w) == 1
    assert sample_categorical_proportional(Fixed(0.69), w) == 1
    assert sample_categorical_proportional(Fixed(0.95), w) == 2


# -- uniform interval -----------------------------------------------------

def test_degenerate_interval():
    assert sample_uniform_interval(RngStream(), 0.5, 0.5) == 0.5


def test_empty_interval_rejected():
    with pytest.raises(ValueError):
        sample_uniform_interval(RngStream(), 1.0, 0.0)


def test_uniform_mean_band():
    rng = RngStream(9)
    n = 100_000
    draws = np.array([sample_uniform_interval(rng, 0.0, 1.0) for _ in range(n)])
    assert abs(draws.mean() - 0.5) < 3 * math.sqrt(1 / 12 / n)


@given(st.floats(-1e6, 1e6), st.floats(0, 1e6), st.integers(0, 2**32))
def test_uniform_stays_inside_interval(lo, width, seed):
    hi = lo + width
    u = sample_uniform_interval(RngStream(seed), lo, hi)
    assert lo <= u <= hi


# -- expected truncated discount -----------------------------------------

def _quadrature(eta, gamma, delta):
    num, _ = integrate.quad(lambda t: math.exp(-gamma * t) * eta * math.exp(-eta * t), 0, delta,
                            epsabs=1e-14, epsrel=1e-13)
    mass = 1.0 if math.isinf(delta) else -math.expm1(-eta * delta)
    return num / mass


def test_discount_infinite_horizon_half():
    assert expected_truncated_discount(1.0, 1.0, math.inf) == 0.5
    assert _quadrature(1.0, 1.0, math.inf) == pytest.approx(0.5, abs=1e-10)


def test_discount_matches_quadrature_example():
    expected = _quadrature(2.0, 3.0, 0.7)
    assert expected_truncated_discount(2.0, 3.0, 0.7) == pytest.approx(expected, abs=1e-10)


@settings(max_examples=200)
@given(st.floats(1e-3, 50), st.floats(0, 100), st.one_of(st.floats(1e-3, 20), st.just(math.inf)))
def test_discount_matches_quadrature(eta, gamma, delta):
    assert expected_truncated_discount(eta, gamma, delta) == pytest.approx(
        _quadrature(eta, gamma, delta), abs=1e-9)


@given(st.floats(1e-3, 50), st.one_of(st.floats(1e-3, 20), st.just(math.inf)))
def test_zero_gamma_discount_is_one(eta, delta):
    assert expected_truncated_discount(eta, 0.0, delta) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(1e-2, 20), st.floats(0.01, 50), st.floats(0.01, 50), st.floats(1e-2, 10))
def test_discount_monotone_and_bounded(eta, g1, g2, delta):
    lo_g, hi_g = sorted((g1, g2))
    a = expected_truncated_discount(eta, lo_g, delta)
    b = expected_truncated_discount(eta, hi_g, delta)
    assert 0 < b <= a <= 1
    assert expected_truncated_discount(eta, lo_g, delta * 2) <= a + 1e-15


def test_tiny_horizon_is_numerically_stable():
    # exp(-gamma t) over a very short window is essentially 1
    v = expected_truncated_discount(1e-3, 1.0, 1e-9)
    assert v == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
def test_discount_argument_errors(args):
    with pytest.raises(ValueError):
        expected_truncated_discount(*args)
