"""Prior distributions for the effect ``mu`` and the heterogeneity ``tau``.

Every heterogeneity prior is a :class:`HeterogeneityPrior` bundle: a
vectorized log-density on ``tau >= 0`` plus, for proper families, CDF,
quantile function and sampler. Improper priors only carry an
(unnormalized) density together with the power-law exponents at the
origin and in the tail, from which posterior propriety is decided.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .errors import CapabilityError, DomainError, NNHMError, ParseError, ProprietyError
from .numcore import HalfLineDensity, normal_logpdf


class UnknownPriorError(NNHMError, LookupError):
    """A named prior or table cell does not exist."""


# --------------------------------------------------------------------------
# effect prior

@dataclass(frozen=True)
class EffectPrior:
    """Normal prior ``N(mean, sd^2)`` for ``mu``; ``sd = inf`` is the flat prior."""

    mean: float = 0.0
    sd: float = math.inf

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise DomainError("effect prior mean must be finite")
        if not self.sd > 0:
            raise DomainError("effect prior sd must be positive")

    @classmethod
    def uniform(cls) -> "EffectPrior":
        return cls(0.0, math.inf)

    @classmethod
    def normal(cls, mean: float, sd: float) -> "EffectPrior":
        if not math.isfinite(sd):
            raise DomainError("normal effect prior needs a finite sd")
        return cls(float(mean), float(sd))

    @property
    def is_uniform(self) -> bool:
        return math.isinf(self.sd)

    @property
    def kind(self) -> str:
        return "uniform" if self.is_uniform else "normal"

    def logpdf(self, mu):
        if self.is_uniform:
            return np.zeros_like(np.asarray(mu, dtype=float))
        return normal_logpdf(mu, self.mean, self.sd)

    def describe(self) -> str:
        return "uniform" if self.is_uniform else f"normal({self.mean:g}, {self.sd:g})"


# --------------------------------------------------------------------------
# heterogeneity priors

@dataclass(frozen=True)
class StandardErrorContext:
    """Standard errors of the studies, used by priors that scale with them."""

    sigmas: tuple

    def __init__(self, sigmas):
        s = tuple(float(v) for v in np.atleast_1d(np.asarray(sigmas, dtype=float)))
        if len(s) == 0:
            raise DomainError("need at least one standard error")
        if not all(math.isfinite(v) and v > 0 for v in s):
            raise DomainError("standard errors must be positive and finite")
        object.__setattr__(self, "sigmas", s)

    @property
    def k(self) -> int:
        return len(self.sigmas)

    @property
    def s0(self) -> float:
        """Root of the harmonic mean of the squared standard errors."""
        s = np.asarray(self.sigmas)
        return float(math.sqrt(s.size / np.sum(s ** -2.0)))


def _as_context(ctx) -> StandardErrorContext:
    if isinstance(ctx, StandardErrorContext):
        return ctx
    sig = getattr(ctx, "sigma", ctx)
    return StandardErrorContext(sig)


@dataclass(frozen=True, eq=False)
class HeterogeneityPrior:
    """Density bundle for ``tau >= 0``.

    ``origin_exponent`` ``a`` and ``tail_exponent`` ``b`` describe the
    density as ``tau^a`` near zero and ``tau^b`` for large ``tau``
    (``-inf`` for tails lighter than any power).
    """

    family: str
    params: dict
    logpdf_fn: Callable = field(repr=False)
    proper: bool
    origin_exponent: float = 0.0
    tail_exponent: float = -math.inf
    cdf_fn: Optional[Callable] = field(default=None, repr=False)
    quantile_fn: Optional[Callable] = field(default=None, repr=False)
    scale_hint: float = 1.0

    def logpdf(self, tau):
        t = np.asarray(tau, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.where(t < 0, -np.inf, self.logpdf_fn(np.maximum(t, 0.0)))
        return out if out.ndim else float(out)

    def pdf(self, tau):
        return np.exp(self.logpdf(tau))

    density = pdf

    def _need_proper(self, what):
        if not self.proper or self.cdf_fn is None:
            raise CapabilityError(f"{what} is not available for the improper {self.family} prior")

    def cdf(self, tau):
        self._need_proper("cdf")
        t = np.asarray(tau, dtype=float)
        out = np.where(t <= 0, 0.0, self.cdf_fn(np.maximum(t, 0.0)))
        return out if out.ndim else float(out)

    def quantile(self, p):
        self._need_proper("quantile")
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
            raise DomainError("probability must lie in [0, 1]")
        out = np.asarray(self.quantile_fn(p), dtype=float)
        return out if out.ndim else float(out)

    def sample(self, n: int, rng: np.random.Generator):
        self._need_proper("sampling")
        return np.asarray(self.quantile_fn(rng.random(n)), dtype=float)

    def min_k(self, effect_prior: EffectPrior) -> Optional[int]:
        """Smallest number of studies giving a proper joint posterior.

        ``None`` if no number of studies suffices. The marginal likelihood
        decays like ``tau^-(k-1)`` under a flat effect prior and
        ``tau^-k`` under a normal one, and is bounded near zero.
        """
        if self.origin_exponent <= -1:
            return None
        b = self.tail_exponent
        if math.isinf(b):
            return 1
        offset = 2.0 if effect_prior.is_uniform else 1.0
        return max(1, int(math.floor(b + offset)) + 1)

    def check_propriety(self, k: int, effect_prior: EffectPrior) -> None:
        need = self.min_k(effect_prior)
        if need is None:
            raise ProprietyError(f"{self.family} prior never yields a proper posterior "
                                 f"(density not integrable at zero)")
        if k < need:
            raise ProprietyError(
                f"{self.family} prior needs k >= {need} with a {effect_prior.kind} effect prior "
                f"(have k = {k})")

    def describe(self) -> str:
        args = ", ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in self.params.items())
        return f"{self.family}({args})"


def _positive(**kw):
    for name, v in kw.items():
        if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive and finite, got {v!r}")


def _from_scipy(family, params, dist, origin, tail, scale_hint):
    return HeterogeneityPrior(
        family, params, logpdf_fn=dist.logpdf, proper=True,
        origin_exponent=origin, tail_exponent=tail,
        cdf_fn=dist.cdf, quantile_fn=dist.ppf, scale_hint=scale_hint)


def half_normal(scale: float) -> HeterogeneityPrior:
    _positive(scale=scale)
    return _from_scipy("half-normal", {"scale": float(scale)},
                       stats.halfnorm(scale=scale), 0.0, -math.inf, scale)


def half_cauchy(scale: float) -> HeterogeneityPrior:
    _positive(scale=scale)
    return _from_scipy("half-cauchy", {"scale": float(scale)},
                       stats.halfcauchy(scale=scale), 0.0, -2.0, scale)


def half_student_t(scale: float, df: float) -> HeterogeneityPrior:
    """Student-t with ``df`` degrees of freedom folded at zero."""
    _positive(scale=scale, df=df)
    t = stats.t(df=df, scale=scale)
    return HeterogeneityPrior(
        "half-student-t", {"scale": float(scale), "df": float(df)},
        logpdf_fn=lambda x: math.log(2.0) + t.logpdf(x), proper=True,
        origin_exponent=0.0, tail_exponent=-(df + 1.0),
        cdf_fn=lambda x: 2.0 * t.cdf(x) - 1.0,
        quantile_fn=lambda p: t.ppf(0.5 * (1.0 + np.asarray(p))),
        scale_hint=scale)


def exponential(rate: float) -> HeterogeneityPrior:
    _positive(rate=rate)
    return _from_scipy("exponential", {"rate": float(rate)},
                       stats.expon(scale=1.0 / rate), 0.0, -math.inf, 1.0 / rate)


def lognormal(meanlog: float, sdlog: float) -> HeterogeneityPrior:
    if not math.isfinite(meanlog):
        raise DomainError("meanlog must be finite")
    _positive(sdlog=sdlog)
    return _from_scipy("log-normal", {"meanlog": float(meanlog), "sdlog": float(sdlog)},
                       stats.lognorm(s=sdlog, scale=math.exp(meanlog)),
                       math.inf, -math.inf, math.exp(meanlog))


def lomax(scale: float, shape: float) -> HeterogeneityPrior:
    """Lomax (Pareto type II): ``cdf = 1 - (1 + tau/scale)^-shape``."""
    _positive(scale=scale, shape=shape)
    ls, lsh = math.log(scale), math.log(shape)

    def logpdf(x):
        return lsh - ls - (shape + 1.0) * np.log1p(x / scale)

    return HeterogeneityPrior(
        "lomax", {"scale": float(scale), "shape": float(shape)}, logpdf_fn=logpdf,
        proper=True, origin_exponent=0.0, tail_exponent=-(shape + 1.0),
        cdf_fn=lambda x: -np.expm1(-shape * np.log1p(x / scale)),
        quantile_fn=lambda p: scale * np.expm1(-np.log1p(-np.asarray(p)) / shape),
        scale_hint=scale)


def uniform_shrinkage(ctx) -> HeterogeneityPrior:
    """Uniform prior on the shrinkage factor ``s0^2 / (s0^2 + tau^2)``."""
    s0 = _as_context(ctx).s0
    s2 = s0 * s0

    def logpdf(x):
        return math.log(2.0 * s2) + np.log(x) - 2.0 * np.log(s2 + x * x)

    def quantile(p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return s0 * np.sqrt(p / (1.0 - p))

    return HeterogeneityPrior(
        "uniform-shrinkage", {"s0": s0}, logpdf_fn=logpdf, proper=True,
        origin_exponent=1.0, tail_exponent=-3.0,
        cdf_fn=lambda x: x * x / (s2 + x * x), quantile_fn=quantile, scale_hint=s0)


def dumouchel(ctx) -> HeterogeneityPrior:
    """``p(tau) = s0 / (s0 + tau)^2``."""
    s0 = _as_context(ctx).s0

    def quantile(p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return s0 * p / (1.0 - p)

    return HeterogeneityPrior(
        "dumouchel", {"s0": s0},
        logpdf_fn=lambda x: math.log(s0) - 2.0 * np.log(s0 + x), proper=True,
        origin_exponent=0.0, tail_exponent=-2.0,
        cdf_fn=lambda x: x / (s0 + x), quantile_fn=quantile, scale_hint=s0)


def _sigma2(ctx):
    return np.asarray(_as_context(ctx).sigmas) ** 2


def conventional(ctx) -> HeterogeneityPrior:
    """Proper prior ``prod_i (tau / (sigma_i^2 + tau^2)^(3/2))^(1/k)``, normalized numerically."""
    c = _as_context(ctx)
    s2 = _sigma2(c)
    k = s2.size

    def raw(x):
        x = np.asarray(x, dtype=float)
        return np.log(x) - 1.5 / k * np.sum(np.log(np.add.outer(x * x, s2)), axis=-1)

    dens = HalfLineDensity(raw, scale=c.s0)
    return HeterogeneityPrior(
        "conventional", {"s0": c.s0}, logpdf_fn=dens.logpdf, proper=True,
        origin_exponent=1.0, tail_exponent=-2.0,
        cdf_fn=dens.cdf, quantile_fn=dens.quantile, scale_hint=c.s0)


def jeffreys(ctx) -> HeterogeneityPrior:
    """Improper ``sqrt(sum_i (tau / (sigma_i^2 + tau^2))^2)``."""
    c = _as_context(ctx)
    s2 = _sigma2(c)

    def logpdf(x):
        x = np.asarray(x, dtype=float)
        r = x[..., None] / np.add.outer(x * x, s2)
        return 0.5 * np.log(np.sum(r * r, axis=-1))

    return HeterogeneityPrior("jeffreys", {"s0": c.s0}, logpdf_fn=logpdf, proper=False,
                              origin_exponent=1.0, tail_exponent=-1.0, scale_hint=c.s0)


def berger_deely(ctx) -> HeterogeneityPrior:
    """Improper ``prod_i (tau / (sigma_i^2 + tau^2))^(1/k)``."""
    c = _as_context(ctx)
    s2 = _sigma2(c)
    k = s2.size

    def logpdf(x):
        x = np.asarray(x, dtype=float)
        return np.log(x) - np.sum(np.log(np.add.outer(x * x, s2)), axis=-1) / k

    return HeterogeneityPrior("berger-deely", {"s0": c.s0}, logpdf_fn=logpdf, proper=False,
                              origin_exponent=1.0, tail_exponent=-1.0, scale_hint=c.s0)


def power_prior(a: float) -> HeterogeneityPrior:
    """Improper ``tau^a``; ``a = 0`` is the uniform prior, ``a = -1`` log-uniform."""
    if not math.isfinite(a):
        raise DomainError("exponent must be finite")
    a = float(a)
    name = {0.0: "uniform", -0.5: "sqrt", -1.0: "log-uniform"}.get(a, "power")

    def logpdf(x):
        x = np.asarray(x, dtype=float)
        if a == 0.0:
            return np.zeros_like(x)
        with np.errstate(divide="ignore"):
            return a * np.log(x)

    return HeterogeneityPrior(name, {"a": a}, logpdf_fn=logpdf, proper=False,
                              origin_exponent=a, tail_exponent=a)


# --------------------------------------------------------------------------
# empirical log-normal priors

def _norm_key(s: str) -> str:
    return " ".join(s.strip().lower().split())


def parse_turner_table(text: str, source: str = "<table>") -> dict:
    """Parse ``outcome,comparator1,comparator2,meanlog,sdlog`` records."""
    table = {}
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) != 5:
            raise ParseError(f"{source}: expected 5 fields, got {len(row)}", lineno)
        try:
            meanlog, sdlog = float(row[3]), float(row[4])
        except ValueError:
            raise ParseError(f"{source}: meanlog/sdlog must be numbers", lineno) from None
        if not sdlog > 0:
            raise ParseError(f"{source}: sdlog must be positive", lineno)
        table[tuple(_norm_key(v) for v in row[:3])] = (meanlog, sdlog)
    return table


def load_turner_table(path=None) -> dict:
    if path is None:
        text = resources.files("nnhm").joinpath("data/turner.csv").read_text(encoding="utf-8")
        return parse_turner_table(text, "turner.csv")
    with open(path, encoding="utf-8") as fh:
        return parse_turner_table(fh.read(), str(path))


def turner_prior(outcome: str, comparator1: str, comparator2: str, table=None) -> HeterogeneityPrior:
    """Empirical log-normal prior for ``tau`` looked up by outcome and comparison."""
    if table is None or isinstance(table, str):
        table = load_turner_table(table)
    key = (_norm_key(outcome), _norm_key(comparator1), _norm_key(comparator2))
    if key not in table:
        avail = "; ".join(":".join(k) for k in sorted(table))
        raise UnknownPriorError(f"no empirical prior for {':'.join(key)}; available: {avail}")
    meanlog, sdlog = table[key]
    prior = lognormal(meanlog, sdlog)
    return HeterogeneityPrior(
        "turner", {"outcome": key[0], "comparator1": key[1], "comparator2": key[2],
                   "meanlog": meanlog, "sdlog": sdlog},
        logpdf_fn=prior.logpdf_fn, proper=True, origin_exponent=math.inf,
        tail_exponent=-math.inf, cdf_fn=prior.cdf_fn, quantile_fn=prior.quantile_fn,
        scale_hint=prior.scale_hint)
