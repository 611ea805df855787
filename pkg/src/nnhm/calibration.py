"""Calibration check through probability integral transform (PIT) values.

Parameters are drawn from the prior, data from the model, and the
posterior CDF is evaluated at the true parameter. With matching priors
the PIT values are uniform on ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .analysis import AnalysisConfig, IntervalKind, run_analysis
from .errors import DomainError
from .mixture import DirectConfig
from .model import Dataset
from .numcore import rng_stream
from .priors import EffectPrior, HeterogeneityPrior, half_normal

FAILURE_FLAG = 0.01


@dataclass(frozen=True)
class CalibrationScenario:
    effect_prior: EffectPrior = field(default_factory=lambda: EffectPrior.normal(0.0, 4.0))
    heterogeneity_prior: HeterogeneityPrior = field(default_factory=lambda: half_normal(0.5))
    k_choices: tuple = (2, 3, 5, 10, 20)
    sigma_range: tuple = (0.2, 1.0)
    n_sim: int = 1000
    seed: int = 0
    direct: DirectConfig = field(default_factory=DirectConfig)

    def __post_init__(self):
        if self.effect_prior.is_uniform or not self.heterogeneity_prior.proper:
            raise DomainError("calibration needs proper effect and heterogeneity priors")
        if not self.k_choices or min(self.k_choices) < 1:
            raise DomainError("k_choices must be nonempty positive counts")
        lo, hi = self.sigma_range
        if not 0 < lo <= hi:
            raise DomainError("sigma_range must satisfy 0 < lo <= hi")
        if self.n_sim < 1:
            raise DomainError("n_sim must be at least 1")


@dataclass
class PitSample:
    pit_mu: np.ndarray
    pit_tau: np.ndarray
    failures: int
    n_sim: int

    @property
    def flagged(self) -> bool:
        return self.failures > FAILURE_FLAG * self.n_sim

    def coverage(self, level: float, which: str = "mu") -> float:
        """Fraction of PIT values at or below ``level`` (one-sided coverage)."""
        pit = self.pit_mu if which == "mu" else self.pit_tau
        return float(np.mean(pit <= level))


def simulate_replicate(scenario: CalibrationScenario, index: int):
    """True ``(mu, tau)`` and simulated data for replicate ``index``."""
    g = rng_stream(scenario.seed, index)
    ep = scenario.effect_prior
    mu = ep.mean + ep.sd * g.standard_normal()
    tau = float(scenario.heterogeneity_prior.sample(1, g)[0])
    k = int(g.choice(np.asarray(scenario.k_choices)))
    lo, hi = scenario.sigma_range
    sigma = g.uniform(lo, hi, k)
    y = mu + np.sqrt(sigma ** 2 + tau ** 2) * g.standard_normal(k)
    return mu, tau, Dataset.from_arrays(y, sigma)


def run_calibration(scenario: CalibrationScenario,
                    progress: Optional[Callable] = None) -> PitSample:
    cfg = AnalysisConfig(scenario.heterogeneity_prior, scenario.effect_prior,
                         scenario.direct, IntervalKind.CENTRAL)
    pit_mu, pit_tau = [], []
    failures = 0
    n = scenario.n_sim
    step = max(1, n // 100)
    for i in range(n):
        mu, tau, data = simulate_replicate(scenario, i)
        try:
            res = run_analysis(data, cfg)
            pm, pt = float(res.cdf("mu", mu)), float(res.cdf("tau", tau))
            if not (math.isfinite(pm) and math.isfinite(pt)):
                raise ValueError("non-finite PIT value")
        except Exception:
            failures += 1
        else:
            pit_mu.append(pm)
            pit_tau.append(pt)
        if progress is not None and ((i + 1) % step == 0 or i + 1 == n):
            progress(i + 1, n)
    return PitSample(np.array(pit_mu), np.array(pit_tau), failures, n)


def ks_uniform(sample) -> tuple[float, float]:
    """Kolmogorov distance to Uniform(0, 1) and its 5% critical value."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise DomainError("sample is empty")
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - x)), float(np.max(x - (i - 1) / n)))
    return d, 1.358 / math.sqrt(n)
