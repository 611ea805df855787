import math

import numpy as np
import pytest
from scipy import integrate as sint
from scipy import stats

from nnhm.errors import DomainError, ReplicationError
from nnhm.ppcheck import (Hypothesis, _Draws, _trunc_normal, cochran_q, draw_null_parameters,
                          ppp_value)


def test_cochran_q_by_hand():
    y, s = np.array([1.0, 2.0, 4.0]), np.array([1.0, 1.0, 2.0])
    w = 1 / s ** 2
    mu = np.sum(w * y) / np.sum(w)
    assert cochran_q(y, s) == pytest.approx(np.sum(w * (y - mu) ** 2))
    assert cochran_q(np.ones(4), np.ones(4)) == 0.0
    with pytest.raises(DomainError):
        cochran_q([1.0], [1.0])


@pytest.mark.parametrize("upper", [True, False])
def test_truncated_normal_draws(upper):
    u = (np.arange(20000) + 0.5) / 20000
    x = _trunc_normal(0.3, 1.2, 1.0, upper, u)
    a = (1.0 - 0.3) / 1.2
    if upper:
        ref = stats.truncnorm(a, np.inf, 0.3, 1.2).ppf(1 - u)
    else:
        ref = stats.truncnorm(-np.inf, a, 0.3, 1.2).ppf(u)
    np.testing.assert_allclose(x, ref, atol=1e-8)


def test_truncated_normal_far_tail_is_finite():
    u = np.array([0.01, 0.5, 0.99])
    x = _trunc_normal(-40.0, 1.0, 0.0, True, u)
    assert np.all(np.isfinite(x)) and np.all(x >= 0.0)
    # the excess over a far bound is roughly exponential with rate 40
    assert x[1] == pytest.approx(math.log(2) / 40, rel=0.01)
    y = _trunc_normal(40.0, 1.0, 0.0, False, u)
    np.testing.assert_allclose(y, -x, rtol=1e-12)


def test_hypothesis_validation():
    with pytest.raises(DomainError):
        Hypothesis("mu", 0.0, "two-sided")
    with pytest.raises(DomainError):
        Hypothesis("tau", -1.0)


def test_mu_null_draws_follow_restricted_posterior(randomized_result):
    r = randomized_result
    n = 4000
    tau, mu, theta = draw_null_parameters(r, Hypothesis("mu", 0.0, "less"), _Draws(3, n, r.data.k))
    assert np.all(mu >= 0.0)
    assert theta.shape == (n, r.data.k)
    # oracle: E[mu | mu >= 0, y] by quadrature of the joint density
    num = sint.dblquad(lambda m, t: m * r.density(m, t), 0, 4, 0, 8, epsrel=1e-9)[0]
    den = sint.dblquad(lambda m, t: r.density(m, t), 0, 4, 0, 8, epsrel=1e-9)[0]
    assert mu.mean() == pytest.approx(num / den, abs=4 * mu.std() / math.sqrt(n))


def test_tau_zero_null(randomized_result):
    r = randomized_result
    tau, mu, theta = draw_null_parameters(r, Hypothesis("tau", 0.0, "greater"), _Draws(1, 50, 2))
    assert np.all(tau == 0.0)
    np.testing.assert_array_equal(theta, np.repeat(mu[:, None], 2, axis=1))


def test_study_null_restricts_posterior_mass(randomized_result):
    r = randomized_result
    tau, mu, _ = draw_null_parameters(r, Hypothesis("Spada (2006)", 0.0, "less"), _Draws(2, 2000, 2))
    # the restriction theta_2 >= 0 pulls mu upwards relative to the posterior
    assert mu.mean() > r.effect_mixture.mean()


def test_q_ppp_bookkeeping(randomized_result):
    res = ppp_value(randomized_result, Hypothesis("tau", 0.0, "greater"), "q", n=200, seed=11)
    assert res.tail == "upper" and res.statistic == "q"
    assert res.observed_statistic == pytest.approx(cochran_q(randomized_result.data))
    rep = res.replicates
    assert rep["y"].shape == (2, 200) and rep["theta"].shape == (2, 200)
    assert res.p_value == pytest.approx(np.mean(rep["statistic"] >= res.observed_statistic))
    assert np.array_equal(rep["tail_flag"], rep["statistic"] >= res.observed_statistic)


def test_deterministic_and_worker_independent(randomized_result):
    h = Hypothesis("mu", 0.0, "less")
    a = ppp_value(randomized_result, h, "q", n=100, seed=5)
    b = ppp_value(randomized_result, h, "q", n=100, seed=5, workers=4)
    np.testing.assert_array_equal(a.replicates["statistic"], b.replicates["statistic"])
    assert a.p_value == b.p_value
    c = ppp_value(randomized_result, h, "q", n=100, seed=6)
    assert not np.array_equal(a.replicates["y"], c.replicates["y"])


def test_progress_callback(randomized_result):
    seen = []
    ppp_value(randomized_result, Hypothesis("mu"), "q", n=50, seed=1,
              progress=lambda d, n: seen.append((d, n)))
    assert seen[-1] == (50, 50)


def test_user_statistic_needs_tail(randomized_result):
    with pytest.raises(DomainError):
        ppp_value(randomized_result, Hypothesis("mu"), lambda y, s: float(y.sum()), n=10)
    res = ppp_value(randomized_result, Hypothesis("mu"), lambda y, s: float(y.sum()),
                    rejection_tail="lower", n=20, seed=1)
    assert res.tail == "lower"


def test_failures_counted_and_limited(randomized_result):
    calls = {"n": 0}

    def flaky(y, s):
        calls["n"] += 1
        if calls["n"] % 50 == 0:
            raise RuntimeError("boom")
        return float(y[0])

    # the observed statistic is call 1, replicates are calls 2..101
    res = ppp_value(randomized_result, Hypothesis("mu"), flaky, rejection_tail="upper", n=100, seed=1)
    assert res.failures == 2
    assert np.isnan(res.replicates["statistic"]).sum() == 2
    with pytest.raises(ReplicationError):
        ppp_value(randomized_result, Hypothesis("mu"), lambda y, s: math.nan,
                  rejection_tail="upper", n=20)


def test_cdf_statistic_auto_tail(randomized_result):
    res = ppp_value(randomized_result, Hypothesis("mu", 0.0, "greater"), "cdf", n=5, seed=1)
    assert res.tail == "lower"
    assert res.observed_statistic == pytest.approx(randomized_result.cdf("mu", 0.0))
