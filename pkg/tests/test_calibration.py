import numpy as np
import pytest

from nnhm.calibration import (CalibrationScenario, PitSample, ks_uniform, run_calibration,
                              simulate_replicate)
from nnhm.errors import DomainError
from nnhm.priors import EffectPrior, half_normal, jeffreys


def test_ks_single_point():
    d, crit = ks_uniform([0.5])
    assert d == 0.5 and crit == pytest.approx(1.358)


def test_ks_exact_grid():
    n = 200
    d, _ = ks_uniform((np.arange(1, n + 1) - 0.5) / n)
    assert d == pytest.approx(0.5 / n)


def test_ks_empty():
    with pytest.raises(DomainError):
        ks_uniform([])


def test_ks_matches_scipy():
    from scipy import stats
    x = np.random.default_rng(0).random(500)
    assert ks_uniform(x)[0] == pytest.approx(stats.kstest(x, "uniform").statistic, abs=1e-14)


def test_scenario_validation():
    with pytest.raises(DomainError):
        CalibrationScenario(effect_prior=EffectPrior.uniform())
    with pytest.raises(DomainError):
        CalibrationScenario(heterogeneity_prior=jeffreys([1.0]))
    with pytest.raises(DomainError):
        CalibrationScenario(sigma_range=(1.0, 0.5))


def test_replicate_deterministic():
    s = CalibrationScenario(seed=3)
    a, b = simulate_replicate(s, 7), simulate_replicate(s, 7)
    assert a[:2] == b[:2]
    np.testing.assert_array_equal(a[2].y, b[2].y)
    assert a[2].k in s.k_choices
    assert np.all((a[2].sigma >= 0.2) & (a[2].sigma <= 1.0))


def test_run_is_deterministic():
    s = CalibrationScenario(n_sim=20, seed=9)
    a, b = run_calibration(s), run_calibration(s)
    np.testing.assert_array_equal(a.pit_mu, b.pit_mu)
    assert a.pit_mu.size + a.failures == 20
    assert np.all((a.pit_tau >= 0) & (a.pit_tau <= 1))


def test_uninformative_data_gives_uniform_pit():
    # with huge standard errors the posterior is the prior, so PIT values are uniform
    s = CalibrationScenario(sigma_range=(1e3, 2e3), n_sim=300, seed=4)
    pit = run_calibration(s)
    d_mu, crit = ks_uniform(pit.pit_mu)
    d_tau, _ = ks_uniform(pit.pit_tau)
    assert d_mu < crit and d_tau < crit


def test_coverage_and_flag():
    p = PitSample(np.array([0.1, 0.5, 0.96, 0.99]), np.array([0.2, 0.3, 0.4, 0.5]), 1, 5)
    assert p.coverage(0.95) == 0.5
    assert p.coverage(0.45, "tau") == 0.75
    assert p.flagged
