"""Decreasing rearrangements of finite weighted samples and the rearrangement
invariant norms built from them, plus a curvature report for plane curves.

A weighted sample set ``{(|psi_i|, m_i)}`` is a function on a measure space
of total measure ``m = sum(m_i)``.  Its decreasing rearrangement ``psi*`` is
the step function that takes the sorted values on consecutive intervals of
lengths ``m_i``.  On each step ``(e_{k-1}, e_k]`` of height ``v_k``,

    psi**(s) = (1/s) int_0^s psi* = v_k + c_k / s,   c_k = A_{k-1} - v_k e_{k-1} >= 0,

with ``A_k`` the cumulative integral, so every norm below is a supremum or an
integral of an explicit elementary function on each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadConstant, EmptySamples

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True, eq=False)
class WeightedSamples:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.abs(np.asarray(self.values, dtype=float)).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if v.shape != w.shape:
            raise ValueError("values and weights must have the same length")
        if v.size == 0:
            raise EmptySamples("no samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("sample weights must be positive and finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, values, total_measure: float = 1.0) -> WeightedSamples:
        values = np.asarray(values, dtype=float)
        return cls(values, np.full(values.size, total_measure / max(values.size, 1)))

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class StepFunction:
    """``psi*``: height ``heights[k]`` on ``(ends[k-1], ends[k]]`` and 0 beyond ``ends[-1]``."""

    heights: np.ndarray
    ends: np.ndarray
    cumulative: np.ndarray = field(repr=False)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], self.ends[:-1]])

    @property
    def offsets(self) -> np.ndarray:
        """``c_k`` in ``psi** = v_k + c_k / s`` on step ``k``."""
        prev = np.concatenate([[0.0], self.cumulative[:-1]])
        return np.maximum(prev - self.heights * self.starts, 0.0)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.ends, s, side="left")
        out = np.where(k < self.heights.size, self.heights[np.minimum(k, self.heights.size - 1)], 0.0)
        return np.where(s < 0, np.nan, out)

    def integral(self, s):
        """``int_0^s psi*``."""
        s = np.asarray(s, dtype=float)
        k = np.minimum(np.searchsorted(self.ends, s, side="left"), self.heights.size - 1)
        prev = np.where(k > 0, self.cumulative[np.maximum(k - 1, 0)], 0.0)
        start = np.where(k > 0, self.ends[np.maximum(k - 1, 0)], 0.0)
        inside = prev + self.heights[k] * (np.minimum(s, self.ends[k]) - start)
        return np.where(s >= self.ends[-1], self.cumulative[-1], inside)


def rearrange(ws: WeightedSamples) -> StepFunction:
    # stable sort keeps equal values in input order, so ties do not depend on the sort
    order = np.argsort(-ws.values, kind="stable")
    v, w = ws.values[order], ws.weights[order]
    ends = np.cumsum(w)
    return StepFunction(v, ends, np.cumsum(v * w))


def double_star(step: StepFunction, s):
    """``psi**(s) = (1/s) int_0^s psi*``; the value at ``s = 0`` is the limit ``max psi``."""
    s = np.asarray(s, dtype=float)
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, step.integral(safe) / safe, step.heights[0])


def _critical_points(dF, lo, hi, iterations: int = 80):
    """Sign changes of ``dF`` on every interval ``[lo_k, hi_k]``, located by bisection."""
    a, b = lo.copy(), hi.copy()
    fa, fb = dF(a), dF(b)
    has = (fa * fb < 0) & (b > a)
    if not np.any(has):
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    idx = np.nonzero(has)[0]
    a, b, fa = a[idx], b[idx], fa[idx]
    for _ in range(iterations):
        mid = 0.5 * (a + b)
        fm = dF(mid, idx)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, mid, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, mid)
    return 0.5 * (a + b), idx


def _sup_on_steps(step: StepFunction, F, dF) -> float:
    """Supremum over ``s in (0, m]`` of ``F(s, v, c)``, a function of the step
    data; endpoints of every step plus interior critical points."""
    v, c = step.heights, step.offsets
    lo, hi = step.starts, step.ends
    best = float(np.max(F(hi, v, c)))
    # left end of the first step is a limit s -> 0+, handled by the caller
    if v.size > 1:
        best = max(best, float(np.max(F(lo[1:], v[1:], c[1:]))))

    def deriv(s, idx=None):
        if idx is None:
            return dF(s, v, c)
        return dF(s, v[idx], c[idx])

    crit_lo = np.where(lo > 0, lo, hi * 1e-12)
    s_star, idx = _critical_points(deriv, crit_lo, hi)
    if s_star.size:
        best = max(best, float(np.max(F(s_star, v[idx], c[idx]))))
    return best


def marcinkiewicz_norm(ws: WeightedSamples, q: float) -> float:
    """``sup_s s^(1/q) psi**(s)``; ``q = inf`` gives the essential supremum."""
    if not q >= 1:
        raise ValueError("q must be >= 1")
    step = rearrange(ws)
    if math.isinf(q):
        return float(step.heights[0])
    a = 1.0 / q

    def F(s, v, c):
        return s**a * (v + c / s)

    def dF(s, v, c):
        return a * v * s ** (a - 1) + (a - 1) * c * s ** (a - 2)

    return _sup_on_steps(step, F, dF)


def weak_log_norm(ws: WeightedSamples, C: float | None = None) -> float:
    """``sup_s s log(1 + C/s) psi**(s)`` with ``C > m`` (default ``2 m``)."""
    m = ws.total_measure
    if C is None:
        C = 2.0 * m
    if not C > m:
        raise BadConstant(f"C = {C} must exceed the total measure {m}")
    step = rearrange(ws)

    def F(s, v, c):
        return np.log1p(C / s) * (v * s + c)

    def dF(s, v, c):
        return v * np.log1p(C / s) - (v * s + c) * C / (s * (s + C))

    return _sup_on_steps(step, F, dF)


def lorentz_norm(ws: WeightedSamples, q: float, sigma: float) -> float:
    """``|| s^(1/q - 1/sigma) psi**(s) ||_{L^sigma(0, m)}``.

    The first step is integrated in closed form (``psi**`` is constant there);
    the others by 16-point Gauss-Legendre quadrature in ``log s``.
    """
    if not q >= 1 or not sigma >= 1:
        raise ValueError("q and sigma must be >= 1")
    if math.isinf(sigma):
        return marcinkiewicz_norm(ws, q)
    step = rearrange(ws)
    v, c = step.heights, step.offsets
    e = step.ends
    beta = sigma / q  # integrand is s^(beta - 1) psi**(s)^sigma
    total = v[0] ** sigma * e[0] ** beta / beta
    if v.size > 1:
        lo, hi = np.log(e[:-1]), np.log(e[1:])
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        t = mid[:, None] + half[:, None] * _GAUSS_X[None, :]
        s = np.exp(t)
        f = s**beta * (v[1:, None] + c[1:, None] / s) ** sigma
        total += float(np.sum(half * np.sum(_GAUSS_W[None, :] * f, axis=1)))
    return float(total ** (1.0 / sigma))


def lebesgue_norm(ws: WeightedSamples, q: float) -> float:
    return float(np.sum(ws.weights * ws.values**q) ** (1.0 / q))


# --------------------------------------------------------------------------
# boundary curves


@dataclass(frozen=True)
class CurveSamples:
    points: np.ndarray  # (N, 2)
    curvature: np.ndarray  # signed
    ds: np.ndarray
    arclength: np.ndarray

    @property
    def length(self) -> float:
        return float(self.ds.sum())


class BoundaryCurve:
    """A closed regular plane curve sampled at ``N`` parameter midpoints."""

    name = "curve"

    def sample(self, n: int) -> CurveSamples:
        raise NotImplementedError


class PolarCurve(BoundaryCurve):
    """``r = r(t)``, ``t in [0, 2 pi)``, given with its first two derivatives."""

    def __init__(self, r, dr, ddr, name: str = "polar"):
        self.r, self.dr, self.ddr, self.name = r, dr, ddr, name

    def sample(self, n: int) -> CurveSamples:
        dt = 2 * math.pi / n
        t = (np.arange(n) + 0.5) * dt
        r, r1, r2 = self.r(t), self.dr(t), self.ddr(t)
        speed = np.hypot(r, r1)
        if np.any(speed <= 0) or np.any(r <= 0):
            raise ValueError("curve is not regular")
        kappa = (r * r + 2 * r1 * r1 - r * r2) / speed**3
        ds = speed * dt
        pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
        return CurveSamples(pts, kappa, ds, np.cumsum(ds) - 0.5 * ds)


def circle(radius: float = 1.0) -> PolarCurve:
    return PolarCurve(lambda t: np.full_like(t, radius), np.zeros_like, np.zeros_like, name=f"circle:R={radius:g}")


def spike_curve(c: float = 0.25) -> PolarCurve:
    """``r(t) = 1 + c sin(t) log|2 sin(t/2)|``.

    Near ``t = 0`` the curvature behaves like ``1 / (c s log^2(1/s))`` in
    arclength ``s``, the borderline rate at which the weak-log norm on small
    arcs no longer vanishes.
    """

    def g(t):
        return np.log(np.abs(2 * np.sin(t / 2)))

    def g1(t):
        return 0.5 / np.tan(t / 2)

    def g2(t):
        return -0.25 / np.sin(t / 2) ** 2

    def r(t):
        return 1 + c * np.sin(t) * g(t)

    def dr(t):
        return c * (np.cos(t) * g(t) + np.sin(t) * g1(t))

    def ddr(t):
        return c * (-np.sin(t) * g(t) + 2 * np.cos(t) * g1(t) + np.sin(t) * g2(t))

    return PolarCurve(r, dr, ddr, name=f"spike:c={c:g}")


class Stadium(BoundaryCurve):
    """Two parallel segments of length ``L`` closed by half circles of radius ``R``."""

    def __init__(self, L: float = 1.0, R: float = 0.5):
        self.L, self.R = L, R
        self.name = f"stadium:L={L:g},R={R:g}"

    def sample(self, n: int) -> CurveSamples:
        L, R = self.L, self.R
        total = 2 * L + 2 * math.pi * R
        ds = total / n
        s = (np.arange(n) + 0.5) * ds
        pts = np.zeros((n, 2))
        kappa = np.zeros(n)
        # bottom segment, right cap, top segment, left cap
        seg1 = s < L
        cap1 = (s >= L) & (s < L + math.pi * R)
        seg2 = (s >= L + math.pi * R) & (s < 2 * L + math.pi * R)
        cap2 = s >= 2 * L + math.pi * R
        pts[seg1] = np.stack([s[seg1], np.full(seg1.sum(), -R)], axis=1)
        phi = (s[cap1] - L) / R - math.pi / 2
        pts[cap1] = np.stack([L + R * np.cos(phi), R * np.sin(phi)], axis=1)
        pts[seg2] = np.stack([L - (s[seg2] - L - math.pi * R), np.full(seg2.sum(), R)], axis=1)
        phi = (s[cap2] - 2 * L - math.pi * R) / R + math.pi / 2
        pts[cap2] = np.stack([R * np.cos(phi), R * np.sin(phi)], axis=1)
        kappa[cap1 | cap2] = 1.0 / R
        return CurveSamples(pts, kappa, np.full(n, ds), s)


def make_curve(spec: str) -> BoundaryCurve:
    """``circle:R=1``, ``stadium:L=1,R=0.5`` or ``spike:c=0.25``."""
    kind, _, rest = spec.partition(":")
    kw = {}
    for item in filter(None, rest.split(",")):
        key, _, value = item.partition("=")
        kw[key.strip()] = float(value)
    kind = kind.strip().lower()
    if kind == "circle":
        return circle(kw.get("R", 1.0))
    if kind == "stadium":
        return Stadium(kw.get("L", 1.0), kw.get("R", 0.5))
    if kind == "spike":
        return spike_curve(kw.get("c", 0.25))
    raise ValueError(f"unknown curve {spec!r}")


@dataclass
class AdmissibilityReport:
    curve: str
    radii: list[float]
    sup_norm: list[float]
    sup_point_arclength: list[float]
    C: float

    def rows(self):
        return [{"r": r, "sup_point_arclength": s, "weak_log_norm": v}
                for r, s, v in zip(self.radii, self.sup_point_arclength, self.sup_norm)]


def curvature_admissibility(curve: BoundaryCurve, radii, samples: int = 2**16, centers: int = 512,
                            C: float | None = None) -> AdmissibilityReport:
    """For each ``r``: the largest weak-log norm of ``|kappa|`` (arclength
    weights) over the arcs ``{y on curve : |y - x| <= r}``.

    Centers are ``centers`` equally spaced samples plus the point of largest
    curvature.  ``C`` defaults to twice the curve length, which exceeds the
    measure of every arc.
    """
    cs = curve.sample(samples)
    if C is None:
        C = 2.0 * cs.length
    stride = max(1, samples // centers)
    idx = np.unique(np.concatenate([np.arange(0, samples, stride), [int(np.argmax(np.abs(cs.curvature)))]]))
    absk = np.abs(cs.curvature)
    radii = [float(r) for r in radii]
    best = np.full(len(radii), -np.inf)
    best_s = np.full(len(radii), np.nan)
    for i in idx:
        d2 = np.sum((cs.points - cs.points[i]) ** 2, axis=1)
        for k, r in enumerate(radii):
            near = d2 <= r * r
            vals = absk[near]
            value = weak_log_norm(WeightedSamples(vals, cs.ds[near]), C) if np.any(vals > 0) else 0.0
            if value > best[k]:
                best[k], best_s[k] = value, cs.arclength[i]
    norms, where = best.tolist(), best_s.tolist()
    return AdmissibilityReport(getattr(curve, "name", "curve"), radii, norms, where, float(C))
