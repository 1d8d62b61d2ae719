import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from bitsgaps.errors import ConfigurationError, DomainError, InputError, NumericalError
from bitsgaps.kernels import (
    Family,
    KernelSpec,
    build_cov,
    eval_matern,
    eval_rq,
    eval_se,
    evaluate,
    profile,
)

finite = st.floats(-5, 5, allow_nan=False)


def matern_bessel(r, nu):
    """Reference Matern correlation straight from the Bessel form."""
    if r == 0:
        return 1.0
    s = math.sqrt(2 * nu) * r
    return 2 ** (1 - nu) / special.gamma(nu) * s**nu * special.kv(nu, s)


class TestPointValues:
    def test_se_diagonal_is_variance(self):
        spec = KernelSpec(precision=2.0)
        assert eval_se([0.3], [0.3], spec) == 0.5

    def test_se_unit(self):
        assert eval_se([0.0], [1.0], KernelSpec()) == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_se_uses_squared_length_scale(self):
        # L holds l^2, so d = 2 with L = 4 behaves like d = 1 with L = 1
        a = eval_se([0.0], [2.0], KernelSpec(length_scales=4.0))
        assert a == pytest.approx(math.exp(-0.5))

    def test_rq_unit(self):
        spec = KernelSpec(Family.RQ, alpha=1.0)
        assert eval_rq([0.0], [1.0], spec) == pytest.approx(2 / 3)
        assert eval_rq([1.2], [1.2], KernelSpec(Family.RQ, precision=4.0)) == 0.25

    def test_rq_converges_to_se(self):
        rq = KernelSpec(Family.RQ, alpha=1e6)
        se = KernelSpec()
        d = np.linspace(0, 3, 301)
        gap = max(abs(eval_rq([0.0], [v], rq) - eval_se([0.0], [v], se)) for v in d)
        assert gap < 1e-4

    @pytest.mark.parametrize("nu, expected", [
        (0.5, math.exp(-1)),
        (1.5, (1 + math.sqrt(3)) * math.exp(-math.sqrt(3))),
        (2.5, (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))),
    ])
    def test_matern_closed_forms(self, nu, expected):
        spec = KernelSpec(Family.MATERN, nu=nu)
        assert eval_matern([0.0], [1.0], spec) == pytest.approx(expected, rel=1e-12)
        assert eval_matern([0.0], [1.0], spec) == pytest.approx(matern_bessel(1.0, nu), rel=1e-10)

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5, 0.8, 3.7])
    def test_matern_diagonal_limit(self, nu):
        spec = KernelSpec(Family.MATERN, precision=0.25, nu=nu)
        assert eval_matern([0.1, 0.2], [0.1, 0.2], spec) == pytest.approx(4.0, rel=1e-14)

    @pytest.mark.parametrize("nu", [0.8, 3.7])
    def test_matern_general_nu_matches_bessel(self, nu):
        spec = KernelSpec(Family.MATERN, nu=nu)
        for r in (0.1, 0.7, 2.3):
            assert eval_matern([0.0], [r], spec) == pytest.approx(matern_bessel(r, nu), rel=1e-12)


class TestValidation:
    def test_nonpositive_parameters(self):
        with pytest.raises(DomainError):
            KernelSpec(precision=0.0)
        with pytest.raises(DomainError):
            KernelSpec(length_scales=(1.0, -1.0))
        with pytest.raises(DomainError):
            KernelSpec(Family.RQ, alpha=0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            eval_se([0.0, 1.0], [0.0], KernelSpec())
        with pytest.raises(InputError):
            eval_se([0.0, 1.0, 2.0], [0.0, 1.0, 2.0], KernelSpec(length_scales=(1.0, 1.0)))

    def test_family_mismatch(self):
        with pytest.raises(ConfigurationError):
            eval_rq([0.0], [1.0], KernelSpec())


class TestProfileDerivative:
    @pytest.mark.parametrize("family, kw", [
        (Family.SE, {}), (Family.RQ, {"alpha": 0.7}),
        (Family.MATERN, {"nu": 1.5}), (Family.MATERN, {"nu": 2.5}),
        (Family.MATERN, {"nu": 0.5}), (Family.MATERN, {"nu": 1.3}),
    ])
    def test_matches_finite_difference(self, family, kw):
        r2 = np.array([0.05, 0.4, 1.7, 4.0])
        h = 1e-6
        _, dg = profile(family, r2, **kw)
        fd = (profile(family, r2 + h, **kw)[0] - profile(family, r2 - h, **kw)[0]) / (2 * h)
        np.testing.assert_allclose(dg, fd, rtol=1e-6)


class TestBuildCov:
    def test_single_point(self):
        K = build_cov([[0.2, 0.4]], KernelSpec(precision=2.0, length_scales=(1.0, 2.0)), jitter=0.1)
        np.testing.assert_allclose(K, [[0.6]])

    def test_duplicated_point_is_singular(self):
        K = build_cov([[0.3], [0.3]], KernelSpec(), check=False)
        assert abs(np.linalg.det(K)) < 1e-12
        with pytest.raises(NumericalError, match="min eigenvalue"):
            build_cov([[0.3], [0.3]], KernelSpec(), jitter=0.0, check=True)

    def test_random_points_psd(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(5, 2))
        K = build_cov(X, KernelSpec(length_scales=(0.3, 0.5)))
        assert np.linalg.eigvalsh(K).min() >= -1e-12
        np.testing.assert_allclose(K, K.T, rtol=1e-12)

    @pytest.mark.parametrize("family", list(Family))
    def test_cholesky_on_random_sets(self, family):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = rng.integers(1, 9)
            X = rng.uniform(-1, 1, size=(n, 2))
            spec = KernelSpec(family, precision=rng.uniform(0.2, 5),
                              length_scales=tuple(rng.uniform(0.05, 3, 2)), alpha=0.9, nu=1.5)
            np.linalg.cholesky(build_cov(X, spec, jitter=1e-8 * spec.variance + 1e-8))

    def test_negative_jitter(self):
        with pytest.raises(DomainError):
            build_cov([[0.0]], KernelSpec(), jitter=-1.0)


kernel_specs = st.builds(
    lambda fam, tau, ls, a, nu: KernelSpec(fam, tau, ls, a, nu),
    st.sampled_from(list(Family)),
    st.floats(0.1, 10),
    st.tuples(st.floats(0.05, 5), st.floats(0.05, 5)),
    st.floats(0.2, 5),
    st.sampled_from([0.5, 1.5, 2.5, 1.2]),
)


@settings(max_examples=100, deadline=None)
@given(kernel_specs, st.tuples(finite, finite), st.tuples(finite, finite))
def test_symmetry_and_bounded_by_variance(spec, a, b):
    kab = evaluate(a, b, spec)
    assert kab == pytest.approx(evaluate(b, a, spec), rel=1e-12, abs=1e-300)
    assert 0.0 <= kab <= spec.variance * (1 + 1e-12)
    assert evaluate(a, a, spec) == pytest.approx(spec.variance, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(kernel_specs)
def test_monotone_decay_1d(spec):
    spec = spec.with_params(spec.variance, spec.length_scales[:1])
    d = np.linspace(0, 6, 200)
    k = np.array([evaluate([0.0], [v], spec) for v in d])
    assert np.all(np.diff(k) <= 1e-15)
