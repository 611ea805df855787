"""Likelihood, marginal likelihood and the marginal posterior of ``tau``.

All functions broadcast over ``tau`` (and ``mu`` where applicable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .effects import ContingencyTable, EffectEstimate, EffectMeasure, escalc
from .errors import DomainError, ProprietyError
from .numcore import LOG_SQRT_2PI, HalfLineDensity
from .priors import EffectPrior, HeterogeneityPrior

LOG_2PI = 2.0 * LOG_SQRT_2PI


class Dataset:
    """Effect estimates ``y_i`` with standard errors ``sigma_i``."""

    def __init__(self, estimates: Sequence[EffectEstimate]):
        estimates = tuple(estimates)
        if not estimates:
            raise DomainError("dataset needs at least one study")
        self.estimates = estimates
        self.y = np.array([e.y for e in estimates], dtype=float)
        self.sigma = np.array([e.sigma for e in estimates], dtype=float)
        self.labels = tuple(e.label or f"study {i + 1}" for i, e in enumerate(estimates))
        self.y.flags.writeable = False
        self.sigma.flags.writeable = False

    @classmethod
    def from_arrays(cls, y, sigma, labels=None) -> "Dataset":
        y = np.atleast_1d(np.asarray(y, dtype=float))
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if y.shape != sigma.shape or y.ndim != 1:
            raise DomainError("y and sigma must be vectors of equal length")
        labels = labels if labels is not None else [""] * y.size
        return cls([EffectEstimate(float(a), float(b), str(l)) for a, b, l in zip(y, sigma, labels)])

    @classmethod
    def from_tables(cls, tables, measure=EffectMeasure.LOGOR, labels=None,
                    correction: float = 0.5) -> "Dataset":
        tables = list(tables)
        labels = labels if labels is not None else [""] * len(tables)
        return cls([escalc(t if isinstance(t, ContingencyTable) else ContingencyTable(*t),
                           measure, correction, lab) for t, lab in zip(tables, labels)])

    @property
    def k(self) -> int:
        return self.y.size

    def __len__(self):
        return self.k

    def index(self, key) -> int:
        """Zero-based study index from a 1-based integer or a label."""
        if isinstance(key, (int, np.integer)):
            if not 1 <= key <= self.k:
                raise DomainError(f"study index {key} outside 1..{self.k}")
            return int(key) - 1
        try:
            return self.labels.index(str(key))
        except ValueError:
            raise DomainError(f"unknown study label {key!r}") from None

    def subset(self, keys) -> "Dataset":
        return Dataset([self.estimates[self.index(k)] for k in keys])

    def shifted(self, c: float) -> "Dataset":
        return Dataset.from_arrays(self.y + c, self.sigma, self.labels)


@dataclass(frozen=True)
class ConditionalMoments:
    """Mean and sd of the normal posterior of ``mu`` given ``tau``."""

    mean: np.ndarray
    sd: np.ndarray

    def __iter__(self):
        yield self.mean
        yield self.sd


def _var(data: Dataset, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(np.isnan(tau)):
        raise DomainError("tau must be nonnegative")
    return data.sigma ** 2 + (tau ** 2)[..., None]


def log_likelihood(data: Dataset, mu, tau):
    v = _var(data, tau)
    mu = np.asarray(mu, dtype=float)[..., None]
    return -0.5 * (data.k * LOG_2PI + np.sum(np.log(v) + (data.y - mu) ** 2 / v, axis=-1))


def _moments(data, prior, v):
    w = 1.0 / v
    sw = np.sum(w, axis=-1)
    swy = np.sum(w * data.y, axis=-1)
    if not prior.is_uniform:
        wp = prior.sd ** -2.0
        sw = sw + wp
        swy = swy + wp * prior.mean
    return swy / sw, sw


def conditional_moments(data: Dataset, prior: EffectPrior, tau) -> ConditionalMoments:
    """Posterior mean and sd of ``mu`` given ``tau``.

    Under a normal effect prior the prior acts as one extra study.
    """
    mean, sw = _moments(data, prior, _var(data, tau))
    return ConditionalMoments(mean, 1.0 / np.sqrt(sw))


def log_marginal_likelihood(data: Dataset, prior: EffectPrior, tau):
    """``log p(y | tau)`` with ``mu`` integrated out under ``prior``.

    For the flat prior this is the limit (up to a constant) of the
    normal-prior case. Residuals are taken about the conditional mean.
    """
    v = _var(data, tau)
    mean, sw = _moments(data, prior, v)
    delta = np.sum((data.y - mean[..., None]) ** 2 / v, axis=-1)
    logdet = np.sum(np.log(v), axis=-1)
    if prior.is_uniform:
        return -0.5 * ((data.k - 1) * LOG_2PI + logdet + delta + np.log(sw))
    s2 = prior.sd ** 2
    return -0.5 * (data.k * LOG_2PI + math.log(s2) + logdet
                   + (prior.mean - mean) ** 2 / s2 + delta + np.log(sw))


def tau_log_posterior_unnorm(data: Dataset, eprior: EffectPrior,
                             hprior: HeterogeneityPrior, tau):
    return log_marginal_likelihood(data, eprior, tau) + hprior.logpdf(tau)


class TauMarginal:
    """Normalized marginal posterior of ``tau``.

    ``log_evidence`` is the log normalizing constant, i.e.
    ``log int p(y | tau) p(tau) dtau``; it is a proper marginal
    likelihood only when both priors are proper.
    """

    def __init__(self, data: Dataset, eprior: EffectPrior, hprior: HeterogeneityPrior):
        hprior.check_propriety(data.k, eprior)
        self.data, self.effect_prior, self.heterogeneity_prior = data, eprior, hprior
        scale = float(math.sqrt(data.k / np.sum(data.sigma ** -2.0)))

        def logpdf(t):
            return tau_log_posterior_unnorm(data, eprior, hprior, t)

        try:
            self._dens = HalfLineDensity(logpdf, scale=scale)
        except ProprietyError as exc:
            raise ProprietyError(f"posterior under the {hprior.family} prior is improper: {exc}") from exc
        self.log_evidence = self._dens.log_norm

    def logpdf(self, tau):
        out = self._dens.logpdf(tau)
        return out if np.ndim(tau) else float(out)

    def pdf(self, tau):
        out = self._dens.pdf(tau)
        return out if np.ndim(tau) else float(out)

    def cdf(self, tau):
        return self._dens.cdf(tau)

    def sf(self, tau):
        return self._dens.sf(tau)

    def quantile(self, p):
        return self._dens.quantile(p)

    def expect(self, g):
        return self._dens.expect(g)

    def mean(self) -> float:
        return self.expect(lambda t: t)

    def sd(self) -> float:
        m = self.mean()
        return math.sqrt(self.expect(lambda t: (t - m) ** 2))

    def median(self) -> float:
        return self.quantile(0.5)

    def mode(self) -> float:
        return self._dens.mode()

    def sample(self, n: int, rng: np.random.Generator):
        return self._dens.sample(n, rng)

    def tilted(self, log_weight, lo=None, hi=None) -> HalfLineDensity:
        return self._dens.tilted(log_weight, lo, hi)


def tau_marginal(data: Dataset, eprior: EffectPrior, hprior: HeterogeneityPrior) -> TauMarginal:
    return TauMarginal(data, eprior, hprior)


def tau_search_bound(data: Dataset) -> float:
    """Upper end of the bracket for optimizing over ``tau``."""
    spread = float(np.ptp(data.y)) if data.k > 1 else 0.0
    return 10.0 * max(float(np.max(data.sigma)), spread)
