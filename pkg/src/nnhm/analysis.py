"""Bayesian random-effects meta-analysis: the user-facing result object.

:func:`run_analysis` computes the marginal posterior of ``tau`` and a
shared DIRECT grid, from which the effect, predictive and shrinkage
posteriors follow as normal mixtures. Summaries, point estimates and
Bayes factors are computed on first access.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .errors import CapabilityError, DomainError
from .mixture import DirectConfig, DirectGrid, NormalMixture, build_grid
from .model import (Dataset, TauMarginal, conditional_moments, log_likelihood,
                    log_marginal_likelihood, tau_search_bound)
from .numcore import integrate, minimize_scalar, normal_logpdf, normal_pdf
from .priors import EffectPrior, HeterogeneityPrior


class IntervalKind(enum.Enum):
    SHORTEST = "shortest"
    CENTRAL = "central"

    @classmethod
    def parse(cls, value) -> "IntervalKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DomainError(f"unknown interval type {value!r}") from None


PriorSpec = Union[HeterogeneityPrior, Callable[[Dataset], HeterogeneityPrior]]


@dataclass(frozen=True)
class AnalysisConfig:
    """Priors and numerical settings of an analysis.

    ``heterogeneity_prior`` may be a factory taking the dataset, for
    priors that depend on the standard errors.
    """

    heterogeneity_prior: PriorSpec
    effect_prior: EffectPrior = field(default_factory=EffectPrior.uniform)
    direct: DirectConfig = field(default_factory=DirectConfig)
    interval_type: IntervalKind = IntervalKind.SHORTEST
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "interval_type", IntervalKind.parse(self.interval_type))
        if not 0 < self.level < 1:
            raise DomainError("credible level must lie in (0, 1)")

    def resolve_prior(self, data: Dataset) -> HeterogeneityPrior:
        hp = self.heterogeneity_prior
        return hp if isinstance(hp, HeterogeneityPrior) else hp(data)


@dataclass(frozen=True)
class CredibleInterval:
    lo: float
    hi: float
    level: float
    kind: IntervalKind

    def __iter__(self):
        yield self.lo
        yield self.hi

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class Estimate:
    tau: float
    mu: float


SUMMARY_ROWS = ("mode", "median", "mean", "sd", "lower", "upper")


@dataclass(frozen=True)
class Summary:
    """Posterior summaries; rows ``SUMMARY_ROWS``, one column per target."""

    columns: tuple
    values: np.ndarray

    def __getitem__(self, key):
        row, col = key
        return float(self.values[SUMMARY_ROWS.index(row), self.columns.index(col)])

    def column(self, col) -> dict:
        j = self.columns.index(col)
        return {r: float(self.values[i, j]) for i, r in enumerate(SUMMARY_ROWS)}

    def to_dict(self) -> dict:
        return {c: self.column(c) for c in self.columns}


def _shortest(quantile, level, lo_p, hi_p):
    """Shortest interval ``[q(a), q(a + level)]`` over ``a`` in ``[lo_p, hi_p]``."""
    a, _ = minimize_scalar(lambda a: quantile(a + level) - quantile(a), lo_p, hi_p, tol=1e-11)
    return quantile(a), quantile(a + level)


class AnalysisResult:
    """Posterior of a random-effects meta-analysis.

    Targets are addressed as ``"tau"``, ``"mu"``, ``"predictive"`` or by a
    study (1-based index or label) for its shrinkage posterior.
    """

    def __init__(self, data: Dataset, config: AnalysisConfig):
        self.data = data
        self.config = config
        self.effect_prior = config.effect_prior
        self.heterogeneity_prior = config.resolve_prior(data)
        self.tau_marginal = TauMarginal(data, self.effect_prior, self.heterogeneity_prior)
        self.grid: DirectGrid = build_grid(self.tau_marginal, self._tracked_family, config.direct)
        self.effect_mixture = self.grid.mixture(self._effect_family)
        self.predictive_mixture = self.grid.mixture(self._predictive_family)

    # -- conditional families ------------------------------------------
    def cond_moment(self, tau):
        """Conditional posterior mean and sd of ``mu`` given ``tau``."""
        cm = conditional_moments(self.data, self.effect_prior, tau)
        if np.ndim(tau) == 0:
            return float(cm.mean), float(cm.sd)
        return cm.mean, cm.sd

    def _effect_family(self, tau):
        cm = conditional_moments(self.data, self.effect_prior, tau)
        return cm.mean, cm.sd

    def _predictive_family(self, tau):
        cm = conditional_moments(self.data, self.effect_prior, tau)
        return cm.mean, np.sqrt(cm.sd ** 2 + np.asarray(tau, dtype=float) ** 2)

    def _all_shrinkage(self, tau):
        """Shrinkage means and sds for all studies (last axis)."""
        cm = conditional_moments(self.data, self.effect_prior, tau)
        s2 = self.data.sigma ** 2
        t2 = (np.asarray(tau, dtype=float) ** 2)[..., None]
        b = s2 / (s2 + t2)
        mean = (1.0 - b) * self.data.y + b * cm.mean[..., None]
        var = s2 * t2 / (s2 + t2) + (b * cm.sd[..., None]) ** 2
        return mean, np.sqrt(var)

    def _tracked_family(self, tau):
        cm = conditional_moments(self.data, self.effect_prior, tau)
        m, s = self._all_shrinkage(tau)
        return (np.concatenate([cm.mean[..., None], m], axis=-1),
                np.concatenate([cm.sd[..., None], s], axis=-1))

    def shrinkage_conditionals(self, study, tau):
        """Mean and sd of ``theta_i`` given ``tau`` (and the data)."""
        i = self.data.index(study)
        m, s = self._all_shrinkage(tau)
        if np.ndim(tau) == 0:
            return float(m[i]), float(s[i])
        return m[..., i], s[..., i]

    @cached_property
    def shrinkage_mixtures(self) -> tuple:
        m, s = self._all_shrinkage(self.grid.tau)
        return tuple(NormalMixture(self.grid.weights, m[:, i], s[:, i], self.grid.tau)
                     for i in range(self.data.k))

    # -- target access ---------------------------------------------------
    def target(self, name):
        if isinstance(name, str):
            key = name.strip().lower()
            if key == "tau":
                return self.tau_marginal
            if key == "mu":
                return self.effect_mixture
            if key in ("predictive", "theta_pred"):
                return self.predictive_mixture
        return self.shrinkage_mixtures[self.data.index(name)]

    def pdf(self, target, x):
        return self.target(target).pdf(x)

    def cdf(self, target, x):
        return self.target(target).cdf(x)

    def sf(self, target, x):
        return self.target(target).sf(x)

    def quantile(self, target, p):
        return self.target(target).quantile(p)

    def interval(self, target, level=None, kind=None) -> CredibleInterval:
        level = self.config.level if level is None else float(level)
        kind = self.config.interval_type if kind is None else IntervalKind.parse(kind)
        if not 0 < level < 1:
            raise DomainError("credible level must lie in (0, 1)")
        dist = self.target(target)
        alpha = 1.0 - level
        if kind is IntervalKind.CENTRAL:
            lo, hi = dist.quantile(alpha / 2), dist.quantile(1 - alpha / 2)
        elif dist is self.tau_marginal:
            lo, hi = _shortest(dist.quantile, level, 0.0, alpha)
        else:
            eps = 1e-9 * alpha
            lo, hi = _shortest(dist.quantile, level, eps, alpha - eps)
        return CredibleInterval(float(lo), float(hi), level, kind)

    def density(self, mu=None, tau=None):
        """Joint posterior density of ``(mu, tau)`` or either marginal."""
        if mu is None and tau is None:
            raise DomainError("specify mu, tau or both")
        if tau is None:
            return self.effect_mixture.pdf(mu)
        if mu is None:
            return self.tau_marginal.pdf(tau)
        m, s = self.cond_moment(tau)
        return normal_pdf(mu, m, s) * self.tau_marginal.pdf(tau)

    def sample(self, n: int, rng: np.random.Generator, target="mu"):
        """Posterior draws.

        ``target="joint"`` returns an ``(n, 2)`` array of ``(tau, mu)``;
        ``"mu"`` and ``"predictive"`` draw from their mixtures directly.
        """
        if n < 1:
            raise DomainError("n must be at least 1")
        if target == "joint":
            tau = self.tau_marginal.sample(n, rng)
            m, s = self._effect_family(tau)
            return np.column_stack([tau, m + s * rng.standard_normal(n)])
        if target == "tau":
            return self.tau_marginal.sample(n, rng)
        return self.target(target).sample(n, rng)

    # -- summaries -------------------------------------------------------
    def _column(self, name) -> list:
        dist = self.target(name)
        iv = self.interval(name)
        median = dist.quantile(0.5)
        return [dist.mode(), float(median), dist.mean(), dist.sd(), iv.lo, iv.hi]

    @cached_property
    def summary(self) -> Summary:
        cols = ("tau", "mu", "theta_pred") + self.data.labels
        targets = ("tau", "mu", "predictive") + tuple(range(1, self.data.k + 1))
        values = np.array([self._column(t) for t in targets]).T
        return Summary(cols, values)

    # -- point estimates ---------------------------------------------------
    def _profile_max(self, objective):
        x, _ = minimize_scalar(lambda t: -objective(t), 0.0, tau_search_bound(self.data), tol=1e-10)
        return x

    @cached_property
    def ml_joint(self) -> Estimate:
        flat = EffectPrior.uniform()

        def profile(t):
            m = float(conditional_moments(self.data, flat, t).mean)
            return float(log_likelihood(self.data, m, t))

        t = self._profile_max(profile)
        return Estimate(t, float(conditional_moments(self.data, flat, t).mean))

    @cached_property
    def ml_marginal(self) -> Estimate:
        """``tau`` maximizing ``p(y | tau)``; ``mu`` maximizing ``p(y | mu)``.

        ``p(y | mu)`` integrates the likelihood over the heterogeneity
        prior; it is undefined (nan) when that integral diverges.
        """
        t = self._profile_max(lambda t: float(log_marginal_likelihood(self.data, self.effect_prior, t)))
        hp, data = self.heterogeneity_prior, self.data
        shift = float(log_likelihood(data, self.ml_joint.mu, self.ml_joint.tau))
        scale = max(self.tau_marginal.quantile(0.5), 1e-8)

        def neg_log_lik_mu(mu):
            f = lambda x: math.exp(float(log_likelihood(data, mu, x) + hp.logpdf(x)) - shift)
            return -math.log(integrate(f, 0.0, math.inf, scale=scale, rel_tol=1e-10).value)

        try:
            cm = self.effect_mixture
            lo, hi = cm.quantile(1e-6), cm.quantile(1 - 1e-6)
            mu, _ = minimize_scalar(neg_log_lik_mu, float(lo), float(hi), tol=1e-10)
        except Exception:
            mu = math.nan
        return Estimate(t, mu)

    @cached_property
    def map_joint(self) -> Estimate:
        def profile(t):
            _, s = self.cond_moment(t)
            return self.tau_marginal.logpdf(t) - math.log(s)

        t = self._profile_max(profile)
        return Estimate(t, self.cond_moment(t)[0])

    @cached_property
    def map_marginal(self) -> Estimate:
        return Estimate(self.tau_marginal.mode(), self.effect_mixture.mode())

    # -- evidence and Bayes factors ------------------------------------------
    @property
    def priors_proper(self) -> bool:
        return (not self.effect_prior.is_uniform) and self.heterogeneity_prior.proper

    @property
    def evidence(self) -> float:
        """Log marginal likelihood ``log p(y)``; needs proper priors."""
        if not self.priors_proper:
            raise CapabilityError("evidence requires proper effect and heterogeneity priors")
        return self.tau_marginal.log_evidence

    def bayes_factor(self, hypothesis: str) -> float:
        """Bayes factor of a point null (``"tau=0"`` or ``"mu=0"``) against the model."""
        if not self.priors_proper:
            raise CapabilityError("Bayes factors require proper effect and heterogeneity priors")
        key = hypothesis.replace(" ", "").lower()
        if key == "tau=0":
            return math.exp(float(log_marginal_likelihood(self.data, self.effect_prior, 0.0))
                            - self.tau_marginal.log_evidence)
        if key == "mu=0":
            ep = self.effect_prior

            def post0(t):
                m, s = conditional_moments(self.data, ep, t)
                return normal_pdf(0.0, m, s)

            return self.tau_marginal.expect(post0) / math.exp(float(normal_logpdf(0.0, ep.mean, ep.sd)))
        raise DomainError(f"unknown hypothesis {hypothesis!r}; use 'tau=0' or 'mu=0'")

    @cached_property
    def bayes_factors(self) -> dict:
        if not self.priors_proper:
            return {}
        return {"tau=0": self.bayes_factor("tau=0"), "mu=0": self.bayes_factor("mu=0")}


def run_analysis(data: Dataset, config: AnalysisConfig) -> AnalysisResult:
    return AnalysisResult(data, config)


def reml_tau(data: Dataset) -> float:
    """Restricted maximum-likelihood heterogeneity estimate.

    Maximizes the marginal likelihood under a flat effect prior; ties
    with the boundary resolve to zero.
    """
    if data.k < 2:
        raise DomainError("REML needs at least two studies")
    flat = EffectPrior.uniform()
    x, f = minimize_scalar(lambda t: -float(log_marginal_likelihood(data, flat, t)),
                           0.0, tau_search_bound(data), tol=1e-12)
    f0 = -float(log_marginal_likelihood(data, flat, 0.0))
    return 0.0 if f0 <= f + 1e-12 else x
