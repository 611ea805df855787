import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnhm.errors import ConvergenceError, DomainError, ProprietyError
from nnhm.numcore import (HalfLineDensity, Interval, find_root, integrate, minimize_scalar,
                          normal_cdf, normal_logcdf, normal_logpdf, normal_pdf, normal_quantile,
                          normal_sf, rng_stream)


def erf_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


class TestNormal:
    @pytest.mark.parametrize("x", [-8.0, -1.3, 0.0, 0.7, 5.0])
    def test_cdf_matches_erf(self, x):
        assert normal_cdf(x) == pytest.approx(erf_cdf(x), rel=1e-13, abs=1e-300)

    def test_pdf_closed_form(self):
        x = np.linspace(-4, 4, 9)
        ref = np.exp(-0.5 * ((x - 1.0) / 2.0) ** 2) / (2.0 * math.sqrt(2 * math.pi))
        np.testing.assert_allclose(normal_pdf(x, 1.0, 2.0), ref, rtol=1e-14)
        np.testing.assert_allclose(normal_logpdf(x, 1.0, 2.0), np.log(ref), rtol=1e-13)

    def test_quantile_known(self):
        assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-14)
        assert normal_quantile(0.5, 3.0, 2.0) == 3.0

    def test_far_tail_log_cdf(self):
        # log Phi(-40) from the Mills ratio expansion
        x = -40.0
        ref = -0.5 * x * x - math.log(-x) - 0.5 * math.log(2 * math.pi) + math.log1p(-1 / x ** 2 + 3 / x ** 4)
        assert normal_logcdf(x) == pytest.approx(ref, rel=1e-10)
        assert normal_sf(40.0) == pytest.approx(math.exp(ref), rel=1e-8)

    @given(st.floats(1e-12, 1 - 1e-12))
    def test_quantile_inverts_cdf(self, p):
        assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-9)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_quantile_domain(self, p):
        with pytest.raises(DomainError):
            normal_quantile(p)

    def test_bad_sd(self):
        with pytest.raises(DomainError):
            normal_pdf(0.0, 0.0, 0.0)


class TestIntegrate:
    def test_finite(self):
        res = integrate(math.sin, 0.0, math.pi)
        assert res.value == pytest.approx(2.0, abs=1e-12)
        assert res.evaluations > 0

    def test_gaussian_half_line(self):
        res = integrate(lambda x: math.exp(-x * x), 0.0)
        assert res.value == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-11)

    def test_heavy_tail(self):
        res = integrate(lambda x: 1.0 / (1.0 + x * x), 0.0, scale=1.0)
        assert res.value == pytest.approx(math.pi / 2, rel=1e-10)

    def test_endpoint_singularity(self):
        res = integrate(lambda x: 1.0 / math.sqrt(x) if x > 0 else 0.0, 0.0, 1.0)
        assert res.value == pytest.approx(2.0, rel=1e-9)

    def test_empty_range(self):
        assert integrate(math.exp, 1.0, 1.0).value == 0.0

    def test_reversed(self):
        with pytest.raises(DomainError):
            integrate(math.exp, 1.0, 0.0)

    def test_nonconvergence_reported(self):
        with pytest.raises(ConvergenceError) as info:
            integrate(lambda x: math.sin(1.0 / x) / x if x > 0 else 0.0, 0.0, 1.0,
                      rel_tol=1e-14, abs_tol=1e-15, limit=5)
        assert math.isfinite(info.value.estimate)

    def test_interval_type(self):
        assert Interval(0.0, math.inf).semi_infinite
        with pytest.raises(DomainError):
            Interval(1.0, 0.0)


class TestRootAndMin:
    def test_root_cubic(self):
        assert find_root(lambda x: x ** 3 - 2.0, 0.0, 2.0) == pytest.approx(2 ** (1 / 3), abs=1e-12)

    def test_root_no_sign_change(self):
        with pytest.raises(DomainError):
            find_root(lambda x: x * x + 1.0, -1.0, 1.0)

    def test_min_interior(self):
        x, fx = minimize_scalar(lambda x: (x - 0.3) ** 2 + 1.0, 0.0, 1.0)
        assert x == pytest.approx(0.3, abs=1e-8)
        assert fx == pytest.approx(1.0, abs=1e-14)

    def test_min_boundary_exact(self):
        x, _ = minimize_scalar(lambda x: x, 0.0, 1.0)
        assert x == 0.0


class TestRng:
    def test_reproducible(self):
        a = rng_stream(7, 3).standard_normal(5)
        b = rng_stream(7, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_substreams_differ(self):
        assert rng_stream(7, 1).random() != rng_stream(7, 2).random()


class TestHalfLineDensity:
    def test_half_normal(self):
        s = 0.7
        d = HalfLineDensity(lambda t: -0.5 * (np.asarray(t) / s) ** 2)
        t = np.array([0.1, 0.5, 1.4])
        ref = 2 * np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2 * math.pi))
        np.testing.assert_allclose(d.pdf(t), ref, rtol=1e-9)
        np.testing.assert_allclose(d.cdf(t), [math.erf(x / (s * math.sqrt(2))) for x in t], atol=1e-11)
        assert d.expect(lambda x: x) == pytest.approx(s * math.sqrt(2 / math.pi), rel=1e-9)
        assert d.quantile(0.5) == pytest.approx(s * 0.6744897501960817, rel=1e-10)
        assert d.mode() == 0.0

    def test_cauchy_tail(self):
        d = HalfLineDensity(lambda t: -np.log1p(np.asarray(t) ** 2))
        assert d.sf(10.0) == pytest.approx(1 - 2 / math.pi * math.atan(10.0), rel=1e-8)
        assert d.quantile(0.99) == pytest.approx(math.tan(0.99 * math.pi / 2), rel=1e-8)

    def test_improper_upper(self):
        with pytest.raises(ProprietyError):
            HalfLineDensity(lambda t: np.zeros_like(np.asarray(t, dtype=float)))

    def test_bounded_support(self):
        d = HalfLineDensity(lambda t: np.zeros_like(np.asarray(t, dtype=float)), lo=1.0, hi=3.0)
        assert d.cdf(2.0) == pytest.approx(0.5, abs=1e-12)
        assert d.quantile(0.25) == pytest.approx(1.5, abs=1e-10)

    def test_tilted(self):
        d = HalfLineDensity(lambda t: -np.asarray(t))
        e = d.tilted(lambda t: -np.asarray(t))
        assert e.expect(lambda x: x) == pytest.approx(0.5, rel=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.01, 50.0), st.floats(0.001, 0.999))
    def test_gamma_quantile_roundtrip(self, scale, p):
        d = HalfLineDensity(lambda t: np.log(np.asarray(t)) - np.asarray(t) / scale, scale=scale)
        q = d.quantile(p)
        assert d.cdf(q) == pytest.approx(p, abs=1e-10)
