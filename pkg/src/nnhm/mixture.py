"""Finite normal mixtures and the DIRECT grid that produces them.

A posterior of the form ``int N(x; m(tau), s(tau)^2) p(tau | y) dtau`` is
replaced by a weighted sum over a grid of ``tau`` values. Grid points
are spaced so that neighbouring conditionals differ by a fixed
symmetrized Kullback-Leibler divergence ``delta``; the mass beyond the
``1 - epsilon`` quantile of the mixing distribution is dropped.

Construction of the grid
------------------------
Reference points ``r_j`` (where the conditionals are evaluated) and cell
margins ``b_j`` alternate, each at divergence ``delta`` from its
predecessor::

    r_1 = lower, b_1, r_2, b_2, ..., r_n, b_n = upper

Component ``j`` gets the mixing mass of ``[b_{j-1}, b_j]`` (``b_0 = 0``),
so every conditional inside a cell lies within ``delta`` of the cell's
representative.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import AccuracyError, DomainError, ProprietyError
from .numcore import find_root, minimize_scalar, normal_cdf, normal_pdf, normal_sf

MAX_GRID = 100_000


@dataclass(frozen=True)
class DirectConfig:
    delta: float = 0.01
    epsilon: float = 1e-4

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")


def symmetrized_divergence(mA, sA, mB, sB):
    """Symmetrized Kullback-Leibler divergence between two normals."""
    mA, sA, mB, sB = (np.asarray(v, dtype=float) for v in (mA, sA, mB, sB))
    if np.any(sA <= 0) or np.any(sB <= 0):
        raise DomainError("standard deviations must be positive")
    vA, vB = sA * sA, sB * sB
    out = (mA - mB) ** 2 * 0.5 * (1.0 / vA + 1.0 / vB) + (vA - vB) ** 2 / (2.0 * vA * vB)
    return out if out.ndim else float(out)


class NormalMixture:
    """Weighted sum of normal densities.

    Parameters
    ----------
    weights, means, sds : array_like
        Component parameters; weights are normalized to sum to one.
    support_tau : array_like, optional
        The ``tau`` grid the components were derived from.
    """

    def __init__(self, weights, means, sds, support_tau=None):
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        m = np.atleast_1d(np.asarray(means, dtype=float))
        s = np.atleast_1d(np.asarray(sds, dtype=float))
        if not (w.shape == m.shape == s.shape) or w.ndim != 1 or w.size == 0:
            raise DomainError("weights, means and sds must be nonempty vectors of equal length")
        if np.any(w < 0) or not np.sum(w) > 0:
            raise DomainError("weights must be nonnegative with a positive sum")
        if np.any(s <= 0) or not np.all(np.isfinite(s)) or not np.all(np.isfinite(m)):
            raise DomainError("component sds must be positive and finite")
        keep = w > 0
        self.weights = w[keep] / np.sum(w[keep])
        self.means = m[keep]
        self.sds = s[keep]
        self.support_tau = None if support_tau is None else np.asarray(support_tau, dtype=float)[keep]
        for a in (self.weights, self.means, self.sds):
            a.flags.writeable = False

    def __len__(self):
        return self.weights.size

    @property
    def n_components(self) -> int:
        return self.weights.size

    def _apply(self, fn, x):
        x = np.asarray(x, dtype=float)
        out = np.sum(self.weights * fn(x[..., None], self.means, self.sds), axis=-1)
        return out if out.ndim else float(out)

    def pdf(self, x):
        return self._apply(normal_pdf, x)

    def cdf(self, x):
        return self._apply(normal_cdf, x)

    def sf(self, x):
        return self._apply(normal_sf, x)

    def mean(self) -> float:
        return float(np.sum(self.weights * self.means))

    def var(self) -> float:
        m = self.mean()
        return float(np.sum(self.weights * (self.sds ** 2 + (self.means - m) ** 2)))

    def sd(self) -> float:
        return math.sqrt(self.var())

    def moments(self) -> tuple[float, float]:
        return self.mean(), self.sd()

    def bounds(self) -> tuple[float, float]:
        return (float(np.min(self.means - 10 * self.sds)),
                float(np.max(self.means + 10 * self.sds)))

    def quantile(self, p):
        p_arr = np.asarray(p, dtype=float)
        if np.any((p_arr <= 0) | (p_arr >= 1)) or np.any(np.isnan(p_arr)):
            raise DomainError("probability must lie strictly between 0 and 1")
        lo, hi = self.bounds()

        def one(q):
            # widen the bracket for extreme probabilities
            a, b = lo, hi
            while self.cdf(a) > q:
                a -= hi - lo
            while self.cdf(b) < q:
                b += hi - lo
            if q > 0.5:
                return find_root(lambda x: (1.0 - q) - self.sf(x), a, b, tol=1e-13)
            return find_root(lambda x: self.cdf(x) - q, a, b, tol=1e-13)

        out = np.vectorize(one, otypes=[float])(p_arr)
        return out if out.ndim else float(out)

    def mode(self) -> float:
        lo, hi = self.bounds()
        grid = np.linspace(lo, hi, 2001)
        j = int(np.argmax(self.pdf(grid)))
        a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
        x, _ = minimize_scalar(lambda t: -self.pdf(t), a, b, tol=1e-10)
        return x

    def sample(self, n: int, rng: np.random.Generator):
        idx = rng.choice(self.weights.size, size=n, p=self.weights)
        return self.means[idx] + self.sds[idx] * rng.standard_normal(n)


# --------------------------------------------------------------------------
# grid construction

@dataclass(frozen=True)
class DirectGrid:
    """Shared ``tau`` grid: representatives, cell margins and weights."""

    tau: np.ndarray
    margins: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.tau.size

    def mixture(self, family: Callable) -> NormalMixture:
        """Mixture for a conditional family ``tau -> (mean, sd)``."""
        m, s = family(self.tau)
        return NormalMixture(self.weights, m, s, self.tau)


def _next_point(a, div_from, upper, delta, h0):
    """Smallest ``t > a`` with ``div_from(a, t) = delta``, or ``upper``."""
    if div_from(a, upper) <= delta:
        return upper
    h = h0
    lo = a
    hi = min(a + h, upper)
    while div_from(a, hi) < delta:
        lo = hi
        h *= 2.0
        hi = min(a + h, upper)
    return find_root(lambda t: div_from(a, t) - delta, lo, hi,
                     tol=1e-12 * max(1.0, hi))


def direct_grid(cdf, family, lower: float, upper: float, delta: float,
                max_points: int = MAX_GRID) -> DirectGrid:
    """Build a DIRECT grid between ``lower`` and ``upper``.

    ``cdf`` is the mixing CDF (vectorized); ``family(tau)`` returns arrays
    of conditional means and sds for every tracked target.
    """
    if not 0 <= lower <= upper:
        raise DomainError("invalid grid range")

    def div(a, b):
        ma, sa = family(np.array(a))
        mb, sb = family(np.array(b))
        return float(np.max(symmetrized_divergence(ma, sa, mb, sb)))

    refs = [lower]
    margins = []
    h0 = max(upper - lower, 1e-12) / 64.0
    point = lower
    while True:
        if len(refs) > max_points:
            raise AccuracyError(f"DIRECT grid exceeded {max_points} points; increase delta")
        nxt = _next_point(point, div, upper, delta, h0)
        h0 = max(nxt - point, 1e-12 * max(upper, 1.0))
        point = nxt
        margins.append(point)
        if point >= upper:
            break
        nxt = _next_point(point, div, upper, delta, h0)
        h0 = max(nxt - point, 1e-12 * max(upper, 1.0))
        point = nxt
        refs.append(point)
        if point >= upper:
            margins.append(upper)
            break

    tau = np.array(refs)
    margins = np.array(margins)
    edges = np.concatenate(([0.0], margins))
    mass = np.diff(np.asarray(cdf(edges), dtype=float))
    mass = np.maximum(mass, 0.0)
    total = float(np.sum(mass))
    if not total > 0:
        raise ProprietyError("mixing distribution puts no mass on the grid range")
    return DirectGrid(tau, margins, mass / total)


def build_grid(tau_marginal, tracked_family, cfg: DirectConfig = DirectConfig(),
               max_points: int = MAX_GRID) -> DirectGrid:
    """Shared grid over the posterior of ``tau``.

    ``tracked_family(tau)`` returns conditional means and sds for every
    distribution whose divergence is to be controlled (typically the
    effect and all shrinkage conditionals).
    """
    upper = float(tau_marginal.quantile(1.0 - cfg.epsilon))
    return direct_grid(tau_marginal.cdf, tracked_family, 0.0, upper, cfg.delta, max_points)


def normalmixture(mixing, mu: float = 0.0, cfg: DirectConfig = DirectConfig(),
                  max_points: int = MAX_GRID) -> NormalMixture:
    """Normal mixture ``int N(mu, tau^2) dP(tau)`` over a proper mixing distribution.

    The grid spans the central ``1 - epsilon`` range of the mixing
    distribution; the lower ``epsilon / 2`` tail is lumped into the first
    cell, avoiding the degenerate component at ``tau = 0``.
    """
    if not getattr(mixing, "proper", True):
        raise ProprietyError("mixing distribution must be proper")
    lo = float(mixing.quantile(cfg.epsilon / 2.0))
    hi = float(mixing.quantile(1.0 - cfg.epsilon / 2.0))
    if not (lo > 0 and math.isfinite(hi)):
        raise ProprietyError("mixing distribution must put its mass on (0, inf)")

    def family(t):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape + (1,), float(mu)), t[..., None]

    grid = direct_grid(mixing.cdf, family, lo, hi, cfg.delta, max_points)
    return NormalMixture(grid.weights, np.full(len(grid), float(mu)), grid.tau, grid.tau)


def dump_mixtures(mixtures: dict) -> str:
    """CSV text ``target,tau_j,w_j,mean_j,sd_j`` for named mixtures."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["target", "tau_j", "w_j", "mean_j", "sd_j"])
    for name, mix in mixtures.items():
        taus = mix.support_tau if mix.support_tau is not None else np.full(len(mix), np.nan)
        for t, wj, m, s in zip(taus, mix.weights, mix.means, mix.sds):
            w.writerow([name] + [format(float(v), ".10g") for v in (t, wj, m, s)])
    return buf.getvalue()
