"""Nonlinearity ``a`` of the operator ``-div(a(|grad u|) grad u)`` and derived objects.

A :class:`StructureFunction` bundles ``a`` with its derivative and the
structure indices

    i_a = inf t a'(t)/a(t),    s_a = sup t a'(t)/a(t),

which must satisfy ``-1 < i_a <= s_a < inf``.  For ``a(t) = t**(p-2)``
(the p-Laplacian) both indices equal ``p - 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegeneratePair, IndexOutOfRange, InvalidStructure, QuadratureFailure

SCAN_T_MIN = 1e-6
SCAN_T_MAX = 1e6
SCAN_POINTS = 4096
INDEX_BOUND = 1e6

EXACT = "exact"
NUMERIC = "numeric-on-grid"

ArrayFn = Callable[[np.ndarray], np.ndarray]


def scan_grid() -> np.ndarray:
    return np.logspace(math.log10(SCAN_T_MIN), math.log10(SCAN_T_MAX), SCAN_POINTS)


@dataclass(frozen=True, eq=False)
class StructureFunction:
    """The nonlinearity ``a`` together with its derivative and indices.

    Instances are immutable; build them with :func:`power_law`,
    :func:`constant`, :func:`custom`, :func:`regularize` or
    :func:`make_structure`.
    """

    kind: str
    params: dict
    _a: ArrayFn = field(repr=False)
    _da: ArrayFn = field(repr=False)
    i_a: float
    s_a: float
    index_certainty: str
    base: StructureFunction | None = field(default=None, repr=False)

    def a(self, t):
        return self._a(np.asarray(t, dtype=float))

    def da(self, t):
        return self._da(np.asarray(t, dtype=float))

    def b(self, t):
        """``b(t) = a(t) t`` with ``b(0) = 0``."""
        return eval_b(self, t)

    def theta(self, t):
        """Pointwise index ``t a'(t) / a(t)``."""
        t = np.asarray(t, dtype=float)
        return t * self.da(t) / self.a(t)

    def a_times_t_derivative(self, t):
        """``a'(t) t``; finite at ``t = 0`` whenever ``b`` is C^1 there."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.da(t) * t
        return np.where(t > 0, out, 0.0)

    @property
    def epsilon(self) -> float | None:
        return self.params.get("epsilon")

    def describe(self) -> str:
        if self.kind == "powerlaw":
            return f"powerlaw:p={self.params['p']:g}"
        if self.kind == "constant":
            return f"constant:c={self.params['c']:g}"
        if self.kind == "regularized":
            return f"{self.base.describe()}|eps={self.params['epsilon']:g}"
        return self.kind


def _check_indices(i_a: float, s_a: float) -> None:
    if not (np.isfinite(i_a) and np.isfinite(s_a)):
        raise IndexOutOfRange(f"non-finite structure indices ({i_a}, {s_a})")
    if i_a <= -1.0:
        raise IndexOutOfRange(f"i_a = {i_a:g} <= -1")
    if s_a > INDEX_BOUND:
        raise IndexOutOfRange(f"s_a = {s_a:g} exceeds {INDEX_BOUND:g}")
    if i_a > s_a:
        raise IndexOutOfRange(f"i_a = {i_a:g} > s_a = {s_a:g}")


def numeric_indices(a: ArrayFn, da: ArrayFn) -> tuple[float, float]:
    """inf/sup of ``t a'(t)/a(t)`` on the log-spaced scan grid."""
    t = scan_grid()
    at = a(t)
    if np.any(~np.isfinite(at)) or np.any(at <= 0):
        raise InvalidStructure("a(t) must be finite and positive on the scan grid")
    ratio = t * da(t) / at
    if np.any(~np.isfinite(ratio)):
        raise IndexOutOfRange("t a'(t)/a(t) is not finite on the scan grid")
    return float(ratio.min()), float(ratio.max())


def _stencil_derivative(a: ArrayFn) -> ArrayFn:
    def da(t):
        t = np.asarray(t, dtype=float)
        d = 1e-3 * t
        return (-a(t + 2 * d) + 8 * a(t + d) - 8 * a(t - d) + a(t - 2 * d)) / (12 * d)

    return da


def power_law(p: float) -> StructureFunction:
    """``a(t) = t**(p - 2)``, the p-Laplacian."""
    if not p > 1:
        raise InvalidStructure(f"power law needs p > 1, got {p}")
    e = p - 2.0

    def a(t):
        with np.errstate(divide="ignore"):
            return np.power(t, e)

    def da(t):
        if e == 0:
            return np.zeros_like(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return e * np.power(t, e - 1)

    return StructureFunction("powerlaw", {"p": float(p)}, a, da, e, e, EXACT)


def constant(c: float = 1.0) -> StructureFunction:
    if not c > 0:
        raise InvalidStructure(f"constant structure needs c > 0, got {c}")
    return StructureFunction(
        "constant",
        {"c": float(c)},
        lambda t: np.full_like(t, c, dtype=float),
        lambda t: np.zeros_like(t, dtype=float),
        0.0,
        0.0,
        EXACT,
    )


def custom(a: ArrayFn, da: ArrayFn | None = None, name: str = "custom") -> StructureFunction:
    """Arbitrary ``a`` with indices estimated on the scan grid.

    Without ``da`` the derivative comes from a five-point central stencil.
    """
    if da is None:
        da = _stencil_derivative(a)
    i_a, s_a = numeric_indices(a, da)
    _check_indices(i_a, s_a)
    return StructureFunction(name, {}, a, da, i_a, s_a, NUMERIC)


# Smooth clamps act on log a.  The quadratic blend lies above max(y, lo)
# (resp. below min(y, hi)) and has slope in [0, 1], so the pointwise index
# t a'/a of the clamped function is the original one scaled into [0, 1].

def _smooth_max(y, lo, delta):
    z = np.where(y >= lo + delta, y, lo)
    band = np.abs(y - lo) < delta
    z = np.where(band, lo + (y - lo + delta) ** 2 / (4 * delta), z)
    dz = np.where(y >= lo + delta, 1.0, 0.0)
    dz = np.where(band, (y - lo + delta) / (2 * delta), dz)
    return z, dz


def _smooth_min(y, hi, delta):
    z, dz = _smooth_max(-y, -hi, delta)
    return -z, dz


def regularize(sf: StructureFunction, epsilon: float, band: float = 1e-2) -> StructureFunction:
    """Non-degenerate approximation ``a_eps`` of ``sf``.

    ``a_eps(t) = clamp(a(sqrt(t**2 + eps**2)); eps, 1/eps)`` with a C^1
    clamp blended over a relative band of width ``band`` around each level.
    It satisfies ``eps <= a_eps <= 1/eps``, keeps its indices inside
    ``[min(i_a, 0), max(s_a, 0)]``, is smooth at ``t = 0`` and agrees with
    ``a`` wherever ``a`` stays away from the clamp levels and ``t >> eps``.
    """
    if not 0 < epsilon < 1:
        raise InvalidStructure(f"epsilon must lie in (0, 1), got {epsilon}")
    lo, hi = math.log(epsilon), -math.log(epsilon)
    delta = min(band, (hi - lo) / 4)
    base_a, base_da = sf._a, sf._da

    def parts(t):
        s = np.sqrt(t * t + epsilon * epsilon)
        a_s = base_a(s)
        y = np.log(a_s)
        z, dz1 = _smooth_max(y, lo, delta)
        w, dz2 = _smooth_min(z, hi, delta)
        return s, a_s, np.clip(np.exp(w), epsilon, 1.0 / epsilon), dz1 * dz2

    def a(t):
        return parts(t)[2]

    def da(t):
        s, a_s, a_eps, slope = parts(t)
        return a_eps * slope * base_da(s) / a_s * t / s

    i_a, s_a = numeric_indices(a, da)
    _check_indices(i_a, s_a)
    return StructureFunction(
        "regularized", {"epsilon": float(epsilon), "band": band}, a, da, i_a, s_a, NUMERIC, base=sf
    )


def make_structure(spec) -> StructureFunction:
    """Build a structure function from a spec string or pass one through.

    >>> make_structure("powerlaw:p=3").i_a
    1.0
    """
    if isinstance(spec, StructureFunction):
        return spec
    kind, _, rest = str(spec).strip().partition(":")
    kind = kind.strip().lower()
    kw = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise InvalidStructure(f"malformed structure parameter {item!r}")
            kw[key.strip()] = float(value)
    if kind in ("powerlaw", "power", "plaplace"):
        if set(kw) != {"p"}:
            raise InvalidStructure("powerlaw needs exactly one parameter p")
        return power_law(kw["p"])
    if kind == "constant":
        if set(kw) - {"c"}:
            raise InvalidStructure("constant accepts only parameter c")
        return constant(kw.get("c", 1.0))
    raise InvalidStructure(f"unknown structure kind {kind!r}")


def eval_b(sf: StructureFunction, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("b is defined for t >= 0")
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, sf.a(safe) * safe, 0.0)


def check_monotonicity(sf: StructureFunction, xi, eta):
    """``[a(|xi|) xi - a(|eta|) eta] . (xi - eta)``; broadcasts over leading axes."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    diff = xi - eta
    if np.any(np.all(diff == 0, axis=-1)):
        raise DegeneratePair("xi and eta coincide")

    def flux(v):
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        return eval_b(sf, r) * np.divide(v, r, out=np.zeros_like(v), where=r > 0)

    return np.sum((flux(xi) - flux(eta)) * diff, axis=-1)


@dataclass(frozen=True)
class EnergyDensity:
    """``B(t) = int_0^t b``, the convex energy density attached to ``owner``."""

    owner: StructureFunction
    rtol: float = 1e-10
    max_subdivisions: int = 200_000


def _adaptive_simpson(f, lo, hi, rtol, max_subdivisions):
    m = 0.5 * (lo + hi)
    flo, fm, fhi = f(lo), f(m), f(hi)
    whole = (hi - lo) / 6 * (flo + 4 * fm + fhi)
    tol = rtol * max(abs(whole), 1e-300)
    total = 0.0
    stack = [(lo, hi, flo, fm, fhi, whole, tol, 0)]
    splits = 0
    while stack:
        a, b, fa, fm, fb, s, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        err = left + right - s
        if abs(err) <= 15 * eps or depth >= 60:
            if depth >= 60 and abs(err) > 15 * eps:
                raise QuadratureFailure("adaptive Simpson hit the depth limit")
            total += left + right + err / 15
            continue
        splits += 1
        if splits > max_subdivisions:
            raise QuadratureFailure(f"more than {max_subdivisions} subdivisions")
        stack.append((a, m, fa, flm, fm, left, eps / 2, depth + 1))
        stack.append((m, b, fm, frm, fb, right, eps / 2, depth + 1))
    return total


def eval_B(ed: EnergyDensity | StructureFunction, t: float) -> float:
    if isinstance(ed, StructureFunction):
        ed = EnergyDensity(ed)
    t = float(t)
    if t < 0:
        raise ValueError("B is defined for t >= 0")
    sf = ed.owner
    if t == 0:
        return 0.0
    if sf.kind == "powerlaw":
        p = sf.params["p"]
        return t**p / p
    if sf.kind == "constant":
        return 0.5 * sf.params["c"] * t * t

    def b(s):
        return float(eval_b(sf, s))

    return _adaptive_simpson(b, 0.0, t, ed.rtol, ed.max_subdivisions)

