import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sint

from nnhm import priors as P
from nnhm.errors import CapabilityError, DomainError, ParseError, ProprietyError

SIGMAS = np.array([0.6, 0.56, 0.88, 0.46, 0.64, 1.53])

PROPER = [
    P.half_normal(0.5), P.half_cauchy(0.5), P.half_student_t(0.5, 3.0), P.exponential(2.0),
    P.lognormal(-1.0, 0.8), P.lomax(1.0, 2.0), P.uniform_shrinkage(SIGMAS),
    P.dumouchel(SIGMAS), P.conventional(SIGMAS),
]


def _mass(prior):
    return sint.quad(lambda t: float(prior.pdf(t)), 0, np.inf, limit=500, epsabs=1e-12)[0]


@pytest.mark.parametrize("prior", PROPER, ids=lambda p: p.family)
def test_normalized(prior):
    assert _mass(prior) == pytest.approx(1.0, abs=2e-7)


@pytest.mark.parametrize("prior", PROPER, ids=lambda p: p.family)
def test_cdf_matches_integrated_density(prior):
    q = float(prior.quantile(0.3))
    mass = sint.quad(lambda t: float(prior.pdf(t)), 0, q, epsabs=1e-13)[0]
    assert mass == pytest.approx(0.3, abs=1e-7)


@pytest.mark.parametrize("prior", PROPER, ids=lambda p: p.family)
def test_quantile_roundtrip(prior):
    p = np.array([0.01, 0.25, 0.5, 0.9, 0.999])
    np.testing.assert_allclose(prior.cdf(prior.quantile(p)), p, atol=1e-9)


def test_half_normal_median():
    assert P.half_normal(0.5).quantile(0.5) == pytest.approx(0.5 * 0.6744897501960817, rel=1e-12)


def test_uniform_shrinkage_median_is_s0():
    p = P.uniform_shrinkage(SIGMAS)
    s0 = math.sqrt(SIGMAS.size / np.sum(SIGMAS ** -2.0))
    assert p.quantile(0.5) == pytest.approx(s0, rel=1e-12)


@settings(max_examples=30)
@given(st.floats(0.01, 100.0), st.floats(0.01, 0.99))
def test_half_normal_scale_invariance(scale, p):
    base = P.half_normal(1.0).quantile(p)
    assert P.half_normal(scale).quantile(p) == pytest.approx(scale * base, rel=1e-10)


@settings(max_examples=30)
@given(st.floats(0.01, 100.0), st.floats(0.01, 0.99))
def test_half_cauchy_scale_invariance(scale, p):
    base = P.half_cauchy(1.0).quantile(p)
    assert P.half_cauchy(scale).quantile(p) == pytest.approx(scale * base, rel=1e-10)


def test_negative_tau_has_zero_density():
    assert P.half_normal(1.0).pdf(-0.1) == 0.0


def test_sampling_matches_cdf():
    prior = P.half_cauchy(0.5)
    x = prior.sample(20000, np.random.default_rng(1))
    assert np.mean(x <= prior.quantile(0.8)) == pytest.approx(0.8, abs=0.01)


@pytest.mark.parametrize("factory,args", [(P.half_normal, (0.0,)), (P.exponential, (-1.0,)),
                                          (P.lomax, (1.0, 0.0)), (P.half_student_t, (1.0, -2.0))])
def test_invalid_parameters(factory, args):
    with pytest.raises(DomainError):
        factory(*args)


UNIFORM = P.EffectPrior.uniform()
NORMAL = P.EffectPrior.normal(0.0, 4.0)


@pytest.mark.parametrize("prior,k_flat,k_normal", [
    (P.power_prior(0.0), 3, 2),           # uniform
    (P.power_prior(-0.5), 2, 1),          # sqrt
    (P.power_prior(-1.0), None, None),    # log-uniform
    (P.jeffreys(SIGMAS), 2, 1),
    (P.berger_deely(SIGMAS), 2, 1),
    (P.half_normal(0.5), 1, 1),
    (P.half_cauchy(0.5), 1, 1),
    (P.dumouchel(SIGMAS), 1, 1),
])
def test_min_k(prior, k_flat, k_normal):
    assert prior.min_k(UNIFORM) == k_flat
    assert prior.min_k(NORMAL) == k_normal


def test_check_propriety_messages():
    with pytest.raises(ProprietyError, match="k >= 3"):
        P.power_prior(0.0).check_propriety(2, UNIFORM)
    with pytest.raises(ProprietyError, match="integrable"):
        P.power_prior(-1.0).check_propriety(10, NORMAL)
    P.power_prior(0.0).check_propriety(2, NORMAL)


def test_improper_has_no_cdf():
    with pytest.raises(CapabilityError):
        P.jeffreys(SIGMAS).cdf(1.0)


def test_effect_prior():
    assert UNIFORM.is_uniform and UNIFORM.kind == "uniform"
    assert NORMAL.logpdf(0.0) == pytest.approx(-math.log(4.0 * math.sqrt(2 * math.pi)))
    with pytest.raises(DomainError):
        P.EffectPrior.normal(0.0, 0.0)


def test_turner_lookup_is_case_insensitive():
    a = P.turner_prior("surgical", "pharmacological", "placebo / control")
    b = P.turner_prior(" Surgical ", "PHARMACOLOGICAL", "placebo  /  control")
    assert a.params == b.params


def test_turner_unknown():
    with pytest.raises(P.UnknownPriorError):
        P.turner_prior("mortality", "x", "y")


def test_turner_table_parse_error():
    with pytest.raises(ParseError) as info:
        P.parse_turner_table("a,b,c,1,2\na,b,c,1\n")
    assert info.value.line == 2


def test_turner_custom_table():
    tab = P.parse_turner_table("# comment\nx,y,z,-2,1\n")
    pr = P.turner_prior("x", "y", "z", table=tab)
    assert pr.quantile(0.5) == pytest.approx(math.exp(-2.0))


def test_half_normal_catalogue_values():
    hp = P.half_normal(0.5)
    assert hp.cdf(0.98) == pytest.approx(0.95, abs=1e-3)
    assert hp.pdf(0.0) == pytest.approx(1.5957691, abs=1e-7)


def test_exponential_mean():
    assert _mass_moment(P.exponential(2.0)) == pytest.approx(0.5, rel=1e-8)


def _mass_moment(prior):
    return sint.quad(lambda t: t * float(prior.pdf(t)), 0, np.inf, epsabs=1e-13)[0]


def test_dumouchel_values():
    p = P.dumouchel(SIGMAS)
    s0 = P.StandardErrorContext(SIGMAS).s0
    assert p.pdf(0.0) == pytest.approx(1 / s0)
    assert p.cdf(s0) == pytest.approx(0.5)


def test_jeffreys_mode_at_common_sigma():
    p = P.jeffreys([0.7] * 4)
    t = np.linspace(0.01, 3, 30001)
    assert t[np.argmax(p.pdf(t))] == pytest.approx(0.7, abs=1e-3)
    assert p.pdf(0.0) == 0.0


def test_berger_deely_proportional_to_jeffreys_for_equal_sigmas():
    a, b = P.jeffreys([0.7] * 4), P.berger_deely([0.7] * 4)
    t = np.array([0.05, 0.3, 1.0, 5.0])
    ratio = a.pdf(t) / b.pdf(t)
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_power_prior_values():
    assert P.power_prior(0.0).pdf(3.0) == 1.0
    assert P.power_prior(-0.5).pdf(4.0) == pytest.approx(0.5)
    assert P.power_prior(1.0).min_k(UNIFORM) == 4
