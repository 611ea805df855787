"""Posterior predictive p-values.

Parameters are drawn from the posterior restricted to the null
hypothesis, new data are generated from them, and a test statistic on
the replicated data is compared with its observed value.

Sampling under the null is exact: ``tau`` is drawn from its marginal
posterior reweighted by the conditional null probability
``P(H0 | tau, y)`` (a normal tail probability), then the restricted
parameter from its truncated normal conditional. Replicated study
effects are then drawn from ``N(mu, tau^2)`` and data from
``N(theta, sigma^2)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import special

from .analysis import AnalysisResult, run_analysis
from .errors import DomainError, ReplicationError
from .model import Dataset
from .numcore import rng_stream

FAILURE_LIMIT = 0.05


def cochran_q(y, sigma=None) -> float:
    """Cochran's heterogeneity statistic ``sum w_i (y_i - mu_FE)^2``."""
    if isinstance(y, Dataset):
        y, sigma = y.y, y.sigma
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if y.size < 2 or y.shape != sigma.shape:
        raise DomainError("Cochran's Q needs at least two studies with matching sigmas")
    w = sigma ** -2.0
    mu = np.sum(w * y) / np.sum(w)
    return float(np.sum(w * (y - mu) ** 2))


@dataclass(frozen=True)
class Hypothesis:
    """Null hypothesis ``parameter >= value`` (alternative ``"less"``) or
    ``parameter <= value`` (alternative ``"greater"``).

    ``parameter`` is ``"mu"``, ``"tau"`` or a study (1-based index or label).
    """

    parameter: Union[str, int]
    value: float = 0.0
    alternative: str = "less"

    def __post_init__(self):
        if self.alternative not in ("less", "greater"):
            raise DomainError("alternative must be 'less' or 'greater'")
        if self.parameter == "tau" and self.value < 0:
            raise DomainError("tau null value must be nonnegative")


@dataclass
class PPResult:
    p_value: float
    observed_statistic: float
    hypothesis: Hypothesis
    statistic: str
    tail: str
    n: int
    seed: int
    failures: int
    replicates: dict = field(repr=False)


def _trunc_normal(mean, sd, bound, upper, u):
    """Draws by inversion from ``N(mean, sd^2)`` restricted to ``x >= bound``
    (``upper=True``) or ``x <= bound``.

    The upper case reflects the lower one, so draws decrease in ``u``.
    Tail masses are handled on the log scale.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (bound - mean) / sd
        log_u = np.log(u)
    if upper:
        z = -special.ndtri_exp(log_u + special.log_ndtr(-a))
        z = np.maximum(z, a)
    else:
        z = special.ndtri_exp(log_u + special.log_ndtr(a))
        z = np.minimum(z, a)
    return mean + sd * z


def _log_null_prob(mean, sd, bound, upper):
    z = (mean - bound) / sd
    return special.log_ndtr(z if upper else -z)


class _Draws:
    """Per-replicate random numbers from indexed substreams."""

    def __init__(self, seed, n, k):
        self.u_tau = np.empty(n)
        self.u_par = np.empty(n)
        self.z_mu = np.empty(n)
        self.z_theta = np.empty((n, k))
        self.z_y = np.empty((n, k))
        for i in range(n):
            g = rng_stream(seed, i)
            self.u_tau[i], self.u_par[i] = g.random(2)
            self.z_mu[i] = g.standard_normal()
            self.z_theta[i] = g.standard_normal(k)
            self.z_y[i] = g.standard_normal(k)


def draw_null_parameters(result: AnalysisResult, hyp: Hypothesis, draws: _Draws):
    """``(tau, mu, theta)`` from the posterior restricted to the null.

    For a study-level null, ``(tau, mu)`` are drawn jointly with the
    restricted ``theta_i``; the returned ``theta`` are fresh population
    draws for all studies.
    """
    data = result.data
    k = data.k
    n = draws.u_tau.size
    upper = hyp.alternative == "less"        # null region is >= value
    v = float(hyp.value)
    tm = result.tau_marginal
    s2 = data.sigma ** 2

    if hyp.parameter == "tau":
        if v == 0.0 and not upper:
            tau = np.zeros(n)
        else:
            dens = tm.tilted(lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                             lo=v if upper else 0.0, hi=math.inf if upper else v)
            tau = dens.quantile(draws.u_tau)
        m, s = result.cond_moment(tau)
        mu = m + s * draws.z_mu
    elif hyp.parameter == "mu":
        fam = result._effect_family
        dens = tm.tilted(lambda t: _log_null_prob(*fam(t), v, upper))
        tau = dens.quantile(draws.u_tau)
        m, s = fam(tau)
        mu = _trunc_normal(m, s, v, upper, draws.u_par)
    else:
        i = data.index(hyp.parameter)

        def fam(t):
            m, s = result.shrinkage_conditionals(i + 1, np.asarray(t, dtype=float))
            return m, s

        dens = tm.tilted(lambda t: _log_null_prob(*fam(t), v, upper))
        tau = dens.quantile(draws.u_tau)
        m_i, s_i = fam(tau)
        theta_i = _trunc_normal(m_i, s_i, v, upper, draws.u_par)
        # mu given theta_i, tau and the data (bivariate normal)
        mt, st = result.cond_moment(tau)
        b = s2[i] / (s2[i] + tau ** 2)
        cov = b * st ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(s_i > 0, cov / s_i ** 2, 0.0)
        cvar = np.maximum(st ** 2 - gain * cov, 0.0)
        mu = mt + gain * (theta_i - m_i) + np.sqrt(cvar) * draws.z_mu

    # study effects are redrawn from the population given (mu, tau); a
    # restricted theta_i only enters through the (tau, mu) draw
    theta = mu[:, None] + tau[:, None] * draws.z_theta
    return tau, mu, theta


def _builtin_statistic(name, result: AnalysisResult, hyp: Hypothesis):
    data, cfg = result.data, result.config
    if name == "q":
        return lambda y, sigma: cochran_q(y, sigma)
    if name == "cdf":
        target = hyp.parameter if hyp.parameter in ("mu", "tau") else data.index(hyp.parameter) + 1

        def stat(y, sigma):
            rep = run_analysis(Dataset.from_arrays(y, sigma, data.labels), cfg)
            return float(rep.cdf(target, hyp.value))

        return stat
    raise DomainError(f"unknown statistic {name!r}; use 'cdf', 'q' or a function")


def ppp_value(result: AnalysisResult, hypothesis: Hypothesis,
              statistic: Union[str, Callable] = "cdf", rejection_tail: str = "auto",
              n: int = 1000, seed: int = 0, progress: Optional[Callable] = None,
              workers: int = 1) -> PPResult:
    """Posterior predictive p-value of ``hypothesis``.

    Parameters
    ----------
    statistic : {"cdf", "q"} or callable
        ``"cdf"`` is the posterior CDF of the tested parameter at the null
        value after re-analysing the replicated data with the original
        configuration; ``"q"`` is Cochran's Q. A callable receives
        ``(y, sigma)``.
    rejection_tail : {"auto", "upper", "lower"}
        Which tail of the replicated statistic counts as extreme. ``auto``
        picks the upper tail for ``"q"`` and, for ``"cdf"``, the tail
        pointing towards the alternative; callables need an explicit tail.
    progress : callable, optional
        Called as ``progress(done, n)`` after each percent of replicates.

    Replicate ``i`` only uses random numbers of substream ``(seed, i)``,
    so results do not depend on ``workers``.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    data = result.data
    if callable(statistic):
        if rejection_tail == "auto":
            raise DomainError("rejection_tail must be given for a user-defined statistic")
        stat_fn, stat_name = statistic, getattr(statistic, "__name__", "user")
    else:
        stat_name = str(statistic).lower()
        stat_fn = _builtin_statistic(stat_name, result, hypothesis)
    if rejection_tail == "auto":
        if stat_name == "q":
            rejection_tail = "upper"
        else:
            rejection_tail = "upper" if hypothesis.alternative == "less" else "lower"
    if rejection_tail not in ("upper", "lower"):
        raise DomainError("rejection_tail must be 'upper', 'lower' or 'auto'")

    observed = float(stat_fn(data.y.copy(), data.sigma.copy()))
    draws = _Draws(seed, n, data.k)
    tau, mu, theta = draw_null_parameters(result, hypothesis, draws)
    y = theta + data.sigma * draws.z_y

    stats_out = np.full(n, np.nan)
    step = max(1, n // 100)

    def evaluate(i):
        try:
            val = float(stat_fn(y[i].copy(), data.sigma.copy()))
        except Exception:
            return math.nan
        return val if math.isfinite(val) else math.nan

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for i, val in enumerate(ex.map(evaluate, range(n))):
                stats_out[i] = val
                if progress is not None and ((i + 1) % step == 0 or i + 1 == n):
                    progress(i + 1, n)
    else:
        for i in range(n):
            stats_out[i] = evaluate(i)
            if progress is not None and ((i + 1) % step == 0 or i + 1 == n):
                progress(i + 1, n)

    failed = np.isnan(stats_out)
    n_fail = int(failed.sum())
    if n_fail > FAILURE_LIMIT * n:
        raise ReplicationError(f"{n_fail} of {n} replicates failed to produce a statistic")
    if rejection_tail == "upper":
        flags = stats_out >= observed
    else:
        flags = stats_out <= observed
    flags &= ~failed
    p = float(np.sum(flags) / (n - n_fail))
    reps = {"tau": tau, "mu": mu, "theta": theta.T, "y": y.T,
            "statistic": stats_out, "tail_flag": flags}
    return PPResult(p, observed, hypothesis, stat_name, rejection_tail, n, seed, n_fail, reps)
