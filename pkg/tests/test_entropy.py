import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitsgaps.entropy import (
    MixtureAtPoint,
    entropy_lower_bound,
    estimate,
    gaussian_entropy,
    information,
    mc_entropy,
    taylor_entropy,
)
from bitsgaps.errors import ConfigurationError, DomainError, InputError

H_UNIT = 0.5 * math.log(2 * math.pi * math.e)


def brute_taylor(mu, var, order):
    """Taylor estimator with log p derivatives by high-precision finite differences."""
    import mpmath as mp

    mp.mp.dps = 40
    S = len(mu)

    def logp(x):
        return mp.log(sum(mp.npdf(x, m, mp.sqrt(v)) for m, v in zip(mu, var)) / S)

    total = mp.mpf(0)
    for m, v in zip(mu, var):
        acc = logp(m) + mp.diff(logp, m, 2) / 2 * v
        if order == 4:
            acc += mp.diff(logp, m, 4) / 24 * 3 * v**2
        total += acc
    return float(-total / S)


class TestGaussianEntropy:
    def test_values(self):
        assert gaussian_entropy(1.0) == pytest.approx(H_UNIT, abs=1e-15)
        assert gaussian_entropy(math.e**2) == pytest.approx(H_UNIT + 1, abs=1e-14)
        assert gaussian_entropy(1 / (2 * math.pi * math.e)) == pytest.approx(0.0, abs=1e-15)

    def test_domain(self):
        with pytest.raises(DomainError):
            gaussian_entropy(0.0)


class TestTaylor:
    def test_single_component_exact(self):
        rng = np.random.default_rng(0)
        for v in rng.uniform(1e-3, 50, 100):
            assert taylor_entropy([rng.normal()], [v]) == pytest.approx(gaussian_entropy(v), abs=1e-12)

    def test_duplicates(self):
        assert taylor_entropy([0.4, 0.4], [2.0, 2.0]) == pytest.approx(gaussian_entropy(2.0), abs=1e-12)

    def test_far_separation(self):
        assert taylor_entropy([0.0, 100.0], [1.0, 1.0]) == pytest.approx(H_UNIT + math.log(2), abs=1e-10)
        assert taylor_entropy([0.0, 1e4], [1.0, 1.0], order=4) == pytest.approx(H_UNIT + math.log(2), abs=1e-10)

    @pytest.mark.parametrize("order", [2, 4])
    def test_against_high_precision_derivatives(self, order):
        mu, var = [0.0, 0.8, -1.3], [0.5, 1.2, 0.3]
        assert taylor_entropy(mu, var, order) == pytest.approx(brute_taylor(mu, var, order), rel=1e-9)

    def test_vectorized(self):
        mu = np.array([[0.0, 1.0], [2.0, 1.5]])
        var = np.array([[1.0, 0.3], [0.5, 0.3]])
        h = taylor_entropy(mu, var)
        assert h.shape == (2,)
        for j in range(2):
            assert h[j] == pytest.approx(taylor_entropy(mu[:, j], var[:, j]), abs=1e-14)

    def test_bad_order(self):
        with pytest.raises(ConfigurationError):
            taylor_entropy([0.0], [1.0], order=3)

    def test_information(self):
        assert information([0.0], [1 / (2 * math.pi * math.e)]) == pytest.approx(0.0, abs=1e-14)
        assert information([3.0], [1.0]) == pytest.approx(-H_UNIT)
        mix = MixtureAtPoint([0.0, 2.0, 5.0], [1.0, 0.4, 2.0])
        assert information(mix) == -taylor_entropy(mix)


class TestLowerBound:
    def test_single(self):
        assert entropy_lower_bound([1.0], [0.7]) == pytest.approx(0.5 * math.log(4 * math.pi * 0.7))

    def test_duplicates(self):
        assert entropy_lower_bound([1.0, 1.0], [0.7, 0.7]) == pytest.approx(entropy_lower_bound([1.0], [0.7]))

    def test_no_underflow_when_separated(self):
        h = entropy_lower_bound([0.0, 1e4], [1e-3, 1e-3])
        assert np.isfinite(h)
        assert h == pytest.approx(0.5 * math.log(4 * math.pi * 1e-3) + math.log(2))

    def test_below_monte_carlo(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            S = rng.integers(1, 11)
            mu, var = rng.uniform(-5, 5, S), rng.uniform(0.1, 4, S)
            est, se = mc_entropy(mu, var, n_draws=20_000, seed=int(rng.integers(1 << 30)))
            assert entropy_lower_bound(mu, var) <= est + 3 * se


class TestMonteCarlo:
    def test_single(self):
        est, se = mc_entropy([0.0], [2.0], n_draws=50_000, seed=0)
        assert abs(est - gaussian_entropy(2.0)) < 3 * se

    def test_identical_components(self):
        est, se = mc_entropy([0.0, 0.0], [1.0, 1.0], n_draws=50_000, seed=1)
        assert abs(est - H_UNIT) < 3 * se

    def test_far_separation(self):
        est, se = mc_entropy([0.0, 100.0], [1.0, 1.0], n_draws=200_000, seed=2)
        assert est == pytest.approx(2.1121, abs=max(3 * se, 1e-3))

    def test_chunking_is_invisible(self):
        a = mc_entropy([0.0, 1.0], [1.0, 0.5], n_draws=5000, seed=3)
        b = mc_entropy([0.0, 1.0], [1.0, 0.5], n_draws=5000, seed=3, chunk=5000)
        assert a == b

    def test_preconditions(self):
        with pytest.raises(InputError):
            mc_entropy([0.0], [1.0], n_draws=10)
        with pytest.raises(DomainError):
            MixtureAtPoint([0.0], [0.0])
        with pytest.raises(InputError):
            MixtureAtPoint([0.0, 1.0], [1.0])


def test_estimate_dispatch():
    mu, var = [0.0, 1.0], [1.0, 2.0]
    assert estimate(mu, var, "taylor2") == taylor_entropy(mu, var, 2)
    assert estimate(mu, var, "taylor4") == taylor_entropy(mu, var, 4)
    assert estimate(mu, var, "lower_bound") == entropy_lower_bound(mu, var)
    with pytest.raises(ConfigurationError):
        estimate(mu, var, "bogus")


mixtures = st.integers(1, 6).flatmap(lambda S: st.tuples(
    st.lists(st.floats(-5, 5), min_size=S, max_size=S),
    st.lists(st.floats(0.05, 4), min_size=S, max_size=S),
))


@settings(max_examples=80, deadline=None)
@given(mixtures, st.floats(-50, 50), st.floats(0.2, 5))
def test_translation_scale_and_permutation(mix, shift, a):
    mu, var = np.array(mix[0]), np.array(mix[1])
    for fn in (taylor_entropy, entropy_lower_bound):
        base = fn(mu, var)
        assert fn(mu + shift, var) == pytest.approx(base, abs=1e-9)
        assert fn(a * mu, a * a * var) == pytest.approx(base + math.log(a), abs=1e-9)
        assert fn(mu[::-1], var[::-1]) == pytest.approx(base, abs=1e-12)
