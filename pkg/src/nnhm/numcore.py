"""Numerical substrate: normal distribution functions, quadrature, root
finding, scalar minimization, seeded random streams and a tabulated
density on the half line.

The heavy lifting is delegated to :mod:`scipy.special` (``ndtr``/``ndtri``),
QUADPACK (``scipy.integrate.quad``), Brent's methods in
:mod:`scipy.optimize` and numpy's PCG64 generator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize
from scipy import special

from .errors import ConvergenceError, DomainError, ProprietyError

SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def semi_infinite(self) -> bool:
        return math.isinf(self.hi) or math.isinf(self.lo)


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int


def _check_sd(sd):
    if np.any(np.asarray(sd) <= 0):
        raise DomainError("standard deviation must be positive")


def normal_pdf(x, mean=0.0, sd=1.0):
    _check_sd(sd)
    z = (np.asarray(x, dtype=float) - mean) / sd
    return np.exp(-0.5 * z * z) / (SQRT_2PI * sd)


def normal_logpdf(x, mean=0.0, sd=1.0):
    _check_sd(sd)
    z = (np.asarray(x, dtype=float) - mean) / sd
    return -0.5 * z * z - LOG_SQRT_2PI - np.log(sd)


def normal_cdf(x, mean=0.0, sd=1.0):
    _check_sd(sd)
    return special.ndtr((np.asarray(x, dtype=float) - mean) / sd)


def normal_sf(x, mean=0.0, sd=1.0):
    """Upper tail ``1 - normal_cdf``, accurate far into the right tail."""
    _check_sd(sd)
    return special.ndtr((mean - np.asarray(x, dtype=float)) / sd)


def normal_logcdf(x, mean=0.0, sd=1.0):
    _check_sd(sd)
    return special.log_ndtr((np.asarray(x, dtype=float) - mean) / sd)


def normal_quantile(p, mean=0.0, sd=1.0):
    _check_sd(sd)
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
        raise DomainError("probability must lie strictly between 0 and 1")
    return mean + sd * special.ndtri(p)


def integrate(f: Callable[[float], float], a: float, b: float = math.inf,
              rel_tol: float = 1e-10, abs_tol: float = 1e-13,
              scale: float = 1.0, points=None, limit: int = 200) -> QuadratureResult:
    """Adaptive Gauss-Kronrod quadrature of ``f`` over ``[a, b]``.

    A semi-infinite range ``[a, inf)`` is mapped onto ``[0, 1)`` through
    ``x = a + scale * t / (1 - t)``; ``scale`` should roughly match the
    width of the integrand. ``points`` are interior break points given
    on the original scale.

    Raises
    ------
    ConvergenceError
        If the subdivision budget is exhausted before the tolerance
        ``max(abs_tol, rel_tol * |value|)`` is met.
    """
    if rel_tol <= 0 or abs_tol <= 0:
        raise DomainError("tolerances must be positive")
    if math.isinf(a):
        raise DomainError("lower integration bound must be finite")
    if b < a:
        raise DomainError("integration bounds reversed")
    count = [0]

    if math.isinf(b):
        def g(t):
            count[0] += 1
            if t >= 1.0:
                return 0.0
            u = 1.0 - t
            val = f(a + scale * t / u)
            return val * scale / (u * u) if val != 0.0 else 0.0
        lo, hi = 0.0, 1.0
        if points is not None:
            points = [(p - a) / (scale + p - a) for p in points if p > a]
    else:
        def g(x):
            count[0] += 1
            return f(x)
        lo, hi = a, b
        if points is not None:
            points = [p for p in points if a < p < b]
    if lo == hi:
        return QuadratureResult(0.0, 0.0, 0)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", _integrate.IntegrationWarning)
        value, err = _integrate.quad(g, lo, hi, epsabs=abs_tol, epsrel=rel_tol,
                                     limit=limit, points=points or None)
    tol = max(abs_tol, rel_tol * abs(value))
    if caught and err > tol:
        raise ConvergenceError(
            f"quadrature did not converge (estimate {value!r}, error {err!r})",
            estimate=value, abs_error=err)
    return QuadratureResult(float(value), float(err), count[0])


def find_root(f: Callable[[float], float], lo: float, hi: float,
              tol: float = 1e-12) -> float:
    """Root of ``f`` inside the bracket ``[lo, hi]`` (Brent's method)."""
    if not lo <= hi:
        raise DomainError(f"invalid bracket [{lo}, {hi}]")
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise DomainError(f"bracket [{lo}, {hi}] does not enclose a sign change")
    return float(_optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                                  maxiter=500))


def minimize_scalar(f: Callable[[float], float], lo: float, hi: float,
                    tol: float = 1e-10) -> tuple[float, float]:
    """Minimum of ``f`` on ``[lo, hi]`` by golden-section/parabolic search.

    The bracket end points are compared against the interior optimum so
    that boundary minima (e.g. at zero heterogeneity) are returned exactly.
    """
    if not lo < hi:
        raise DomainError(f"invalid bracket [{lo}, {hi}]")
    res = _optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                    options={"xatol": tol, "maxiter": 1000})
    best_x, best_f = float(res.x), float(res.fun)
    for x in (lo, hi):
        fx = f(x)
        if fx <= best_f:
            best_x, best_f = float(x), float(fx)
    return best_x, best_f


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic random stream.

    ``rng_stream(seed, i)`` yields the ``i``-th independent substream of
    ``seed``; equal arguments always give bitwise identical draws.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# --------------------------------------------------------------------------
# tabulated densities on [lo, hi] subset of [0, inf)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_U = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class HalfLineDensity:
    """Normalized version of an unnormalized log-density on ``[lo, hi]``.

    The support is cut into geometrically growing cells around the point
    maximizing ``t * p(t)``; each cell is integrated with 16-point
    Gauss-Legendre, the innermost cell ``[lo, t_0]`` and any remaining
    upper tail adaptively. CDF values are cumulative cell masses plus a
    partial Gauss-Legendre sum, quantiles are found by safeguarded Newton
    iteration on the CDF.

    ``logpdf`` must accept numpy arrays.
    """

    def __init__(self, logpdf, lo=0.0, hi=math.inf, scale=1.0, ratio=1.05,
                 lower_decades=10.0, upper_decades=30.0):
        if not (0.0 <= lo < hi):
            raise DomainError(f"invalid support [{lo}, {hi}]")
        self._logpdf = logpdf
        self.lo, self.hi = float(lo), float(hi)
        self._build(float(scale), ratio, lower_decades, upper_decades)

    # -- construction --------------------------------------------------
    def _lp(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(self._logpdf(t), dtype=float)
        out = np.where(np.isnan(out), -np.inf, out)
        return np.where((t < self.lo) | (t > self.hi), -np.inf, out)

    def _build(self, scale, ratio, lower_decades, upper_decades):
        lo, hi = self.lo, self.hi
        # centre: maximizer of log(t p(t)) on a coarse logarithmic scan
        base = max(scale, lo, 1e-300)
        u = np.linspace(math.log(base) - 35.0, math.log(base) + 35.0, 701)
        t = np.exp(u)
        t = t[(t > lo) & (t < hi)]
        if not math.isinf(hi):
            t = np.append(t, hi)
        if t.size == 0:
            t = np.array([0.5 * (lo + hi)])
        g = self._lp(t) + np.log(t)
        if not np.any(np.isfinite(g)):
            raise ProprietyError("density vanishes on its whole support")
        j = int(np.argmax(g))
        if math.isinf(hi) and g[-1] >= g[j] - 1e-6:
            raise ProprietyError("density is not integrable at infinity")
        centre = float(t[j])

        step = math.log(ratio)
        n_down = int(math.ceil(lower_decades * math.log(10) / step))
        n_up = int(math.ceil(upper_decades * math.log(10) / step))
        nodes = centre * np.exp(step * np.arange(-n_down, n_up + 1))
        nodes = nodes[(nodes > lo) & (nodes < hi)]
        if lo > 0.0 or nodes.size == 0:
            nodes = np.concatenate(([lo], nodes))
        if not math.isinf(hi):
            nodes = np.append(nodes, hi)
        gn = self._lp(nodes) + np.log(np.maximum(nodes, 1e-300))
        gmax = float(np.max(gn[np.isfinite(gn)]))

        # cut the upper range once t p(t) is negligible
        self._tail_open = False
        above = np.arange(int(np.nanargmax(np.where(np.isfinite(gn), gn, -np.inf))), nodes.size)
        small = above[gn[above] < gmax - 41.5]          # t p(t) < 1e-18 max
        if small.size:
            nodes = nodes[: small[0] + 1]
        elif math.isinf(hi):
            self._tail_open = True

        # lower end: integrable towards lo?
        if lo == 0.0 and nodes[0] > 0.0:
            t_a, t_b = nodes[0], nodes[0] * 1e5
            ga, gb = (self._lp(np.array([t_a, t_b])) + np.log([t_a, t_b]))
            if np.isfinite(ga) and ga > gmax - 27.6 and ga >= gb - 0.7:
                raise ProprietyError("density is not integrable at zero")

        a, b = nodes[:-1], nodes[1:]
        pts = a[:, None] + (b - a)[:, None] * _GL_U[None, :]
        lp = self._lp(pts)
        finite = lp[np.isfinite(lp)]
        shift = float(np.max(finite)) if finite.size else float(self._lp(np.array([centre]))[0])
        self._shift = shift
        self._nodes = nodes
        self._pts = pts
        self._gw = (b - a)[:, None] * _GL_W[None, :]
        dens = np.exp(lp - shift)
        self._pw = self._gw * dens
        masses = self._pw.sum(axis=1)

        # innermost cell [lo, nodes[0]] and open upper tail, adaptively
        self._head = 0.0
        if nodes[0] > lo:
            self._head = self._quad_mass(lo, nodes[0])
        self._tail = 0.0
        if self._tail_open:
            try:
                self._tail = integrate(lambda x: math.exp(float(self._lp(x)) - shift),
                                       nodes[-1], math.inf, scale=nodes[-1],
                                       rel_tol=1e-8, abs_tol=1e-300).value
            except ConvergenceError as exc:
                raise ProprietyError("density is not integrable at infinity") from exc
        cum = np.concatenate(([0.0], np.cumsum(masses))) + self._head
        total = cum[-1] + self._tail
        if not (np.isfinite(total) and total > 0):
            raise ProprietyError("density could not be normalized")
        self._masses = masses
        self._cum = cum
        self._total = total
        self.log_norm = shift + math.log(total)

    def _quad_mass(self, a, b):
        shift = self._shift
        try:
            res = integrate(lambda x: math.exp(float(self._lp(x)) - shift), a, b,
                            rel_tol=1e-10, abs_tol=1e-300)
        except ConvergenceError as exc:
            if exc.estimate is None or not np.isfinite(exc.estimate):
                raise ProprietyError("density is not integrable") from exc
            return float(exc.estimate)
        return res.value

    # -- evaluation ----------------------------------------------------
    def logpdf(self, t):
        return self._lp(t) - self.log_norm

    def pdf(self, t):
        return np.exp(self.logpdf(t))

    def _partial(self, t):
        """Unnormalized mass of ``[lo, t]`` for an array ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        nodes = self._nodes
        lo_mask = t <= self.lo
        hi_mask = t >= nodes[-1]
        head_mask = (t < nodes[0]) & ~lo_mask
        mid = ~(lo_mask | hi_mask | head_mask)
        out[lo_mask] = 0.0
        if np.any(mid):
            tm = t[mid]
            i = np.clip(np.searchsorted(nodes, tm, side="right") - 1, 0, nodes.size - 2)
            a = nodes[i]
            x = a[:, None] + (tm - a)[:, None] * _GL_U[None, :]
            w = (tm - a)[:, None] * _GL_W[None, :]
            part = np.sum(w * np.exp(self._lp(x) - self._shift), axis=1)
            out[mid] = self._cum[i] + part
        for j in np.nonzero(head_mask)[0]:
            out[j] = self._quad_mass(self.lo, t[j])
        for j in np.nonzero(hi_mask)[0]:
            if t[j] >= self.hi or not self._tail_open:
                out[j] = self._total
            else:
                out[j] = self._cum[-1] + self._quad_mass(nodes[-1], t[j])
        return out

    def cdf(self, t):
        scalar = np.ndim(t) == 0
        out = np.clip(self._partial(t) / self._total, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def sf(self, t):
        scalar = np.ndim(t) == 0
        out = np.clip((self._total - self._partial(t)) / self._total, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def quantile(self, p):
        scalar = np.ndim(p) == 0
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if np.any((p < 0.0) | (p > 1.0)) or np.any(np.isnan(p)):
            raise DomainError("probability must lie in [0, 1]")
        target = p * self._total
        nodes, cum = self._nodes, self._cum
        out = np.empty_like(p)
        i = np.searchsorted(cum, target, side="right") - 1
        inner = (i >= 0) & (i < nodes.size - 1) & (p > 0.0) & (p < 1.0)
        # linear start inside the cell, then safeguarded Newton
        if np.any(inner):
            ii = i[inner]
            a, b = nodes[ii].copy(), nodes[ii + 1].copy()
            tt = target[inner]
            frac = (tt - cum[ii]) / np.maximum(self._masses[ii], 1e-300)
            x = a + np.clip(frac, 0.0, 1.0) * (b - a)
            for _ in range(60):
                F = self._partial(x)
                f = np.exp(self._lp(x) - self._shift)
                below = F < tt
                a = np.where(below, x, a)
                b = np.where(below, b, x)
                with np.errstate(divide="ignore", invalid="ignore"):
                    xn = x - (F - tt) / f
                bad = ~np.isfinite(xn) | (xn <= a) | (xn >= b)
                xn = np.where(bad, 0.5 * (a + b), xn)
                done = np.abs(xn - x) <= 1e-15 * np.maximum(np.abs(x), 1e-300) + 1e-300
                x = xn
                if np.all(done):
                    break
            out[inner] = x
        for j in np.nonzero(~inner)[0]:
            out[j] = self._quantile_scalar(p[j])
        return float(out[0]) if scalar else out

    def _quantile_scalar(self, p):
        if p <= 0.0:
            return self.lo
        if p >= 1.0:
            return self.hi
        lo_b, hi_b = self.lo, self._nodes[0]
        if p * self._total >= self._cum[-1]:
            lo_b, hi_b = self._nodes[-1], self._nodes[-1] * 2.0
            while self.cdf(hi_b) < p:
                hi_b *= 2.0
                if hi_b > 1e300:
                    return math.inf
        return find_root(lambda x: self.cdf(x) - p, lo_b, hi_b, tol=1e-15 * max(hi_b, 1e-300))

    def expect(self, g):
        """Expectation of a vectorized function ``g`` under the density.

        The (usually negligible) innermost cell and open tail are handled
        by adaptive quadrature.
        """
        val = np.sum(self._pw * g(self._pts))
        if self._head > 0.0:
            shift = self._shift
            val += integrate(lambda x: float(g(np.array(x))) * math.exp(float(self._lp(x)) - shift),
                             self.lo, self._nodes[0], rel_tol=1e-8, abs_tol=1e-300).value
        if self._tail_open and self._tail > 0.0:
            shift = self._shift
            val += integrate(lambda x: float(g(np.array(x))) * math.exp(float(self._lp(x)) - shift),
                             self._nodes[-1], math.inf, scale=self._nodes[-1],
                             rel_tol=1e-8, abs_tol=1e-300).value
        return float(val / self._total)

    def mode(self):
        """Location of the density maximum (the lower support end on ties)."""
        cand = np.concatenate(([self.lo], self._nodes, self._pts.ravel()))
        lp = self._lp(cand)
        j = int(np.argmax(lp))
        if j == 0 or np.isinf(lp[j]):
            return float(cand[j])
        x0 = cand[j]
        srt = np.sort(cand)
        k = np.searchsorted(srt, x0)
        a = srt[max(k - 1, 0)]
        b = srt[min(k + 1, srt.size - 1)]
        if a >= b:
            return float(x0)
        x, fx = minimize_scalar(lambda x: -float(self._lp(x)), a, b, tol=1e-12 * max(x0, 1e-300))
        return x if -fx >= lp[j] else float(x0)

    def sample(self, n, rng):
        return self.quantile(rng.random(n))

    def tilted(self, log_weight, lo=None, hi=None):
        """Density proportional to ``p(t) * exp(log_weight(t))``."""
        lp = self._logpdf
        return HalfLineDensity(lambda t: lp(t) + log_weight(t),
                               lo=self.lo if lo is None else lo,
                               hi=self.hi if hi is None else hi,
                               scale=float(self._nodes[np.argmax(self._masses)]) if self._masses.size else 1.0)
