"""Flux fields and the two-sided L^2 / W^{1,2} estimate reports.

All ratios with a vanishing denominator are reported as :data:`UNDEFINED`
so that CSV output never contains infinities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BallNotInterior, ParameterOutOfRange, ResidualTooLarge, SingularFluxWarning
from .grid import (
    GridDomain,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    gradient_norm_l2,
    jacobian,
    norm_l2,
)
from .structure import StructureFunction, power_law

UNDEFINED = -1.0


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else UNDEFINED


def flux(sf: StructureFunction, u: ScalarField, quiet: bool = False) -> VectorField:
    """``V = a(|grad u|) grad u`` at every in-domain node.

    Where ``grad u`` vanishes the flux is 0.  If ``a`` is singular at the
    origin (``i_a < 0``) this uses the regularized limit and emits a
    :class:`SingularFluxWarning` unless ``quiet``.
    """
    g = gradient(u).values
    t = np.hypot(g[0], g[1])
    inside = u.domain.inside
    zero = inside & (t == 0)
    if sf.i_a < 0 and np.any(zero) and not quiet:
        warnings.warn(f"|grad u| = 0 at {int(zero.sum())} nodes with a singular at 0; flux set to 0 there",
                      SingularFluxWarning, stacklevel=2)
    pos = inside & (t > 0)
    V = np.zeros_like(g)
    a = sf.a(t[pos])
    V[0][pos] = a * g[0][pos]
    V[1][pos] = a * g[1][pos]
    return VectorField(u.domain, V)


@dataclass
class EstimateReport:
    norm_f_l2: float
    norm_V_l2: float
    norm_gradV_l2: float
    norm_V_w12: float
    ratio_lower: float
    ratio_upper: float
    h: float
    descriptor: str
    convex: bool
    residual: float
    norm_f_l2_interior: float
    structural_bound_holds: bool

    def to_dict(self) -> dict:
        return asdict(self)


def global_estimate(sf: StructureFunction, u: ScalarField, f: ScalarField, solve_report=None) -> EstimateReport:
    """Norms of ``f`` and of the flux of ``u`` plus the two ratios.

    If the :class:`~fluxreg.solver.SolveReport` of ``u`` is passed, a final
    energy gradient above ten times the solver tolerance raises
    :class:`ResidualTooLarge`.
    """
    if solve_report is not None and solve_report.gradient_norm > 10 * solve_report.tolerance:
        raise ResidualTooLarge(f"solver gradient {solve_report.gradient_norm:.3e} exceeds "
                               f"10 x tolerance {solve_report.tolerance:.1e}")
    d = u.domain
    V = flux(sf, u, quiet=True)
    nf = norm_l2(f)
    nv = norm_l2(V)
    ngv = gradient_norm_l2(V)
    w12 = math.hypot(nv, ngv)
    residual = norm_l2(ScalarField(d, divergence(V).values + f.values), region=d.interior)
    nf_int = norm_l2(f, region=d.interior)
    # f = -div V nodewise and |div V| <= sqrt(2)|DV|
    holds = nf_int <= math.sqrt(2.0) * ngv + 10.0 * residual + 1e-12 * (1.0 + nf_int)
    return EstimateReport(nf, nv, ngv, w12, _ratio(nf, w12), _ratio(w12, nf), d.h, sf.describe(), d.convex,
                          residual, nf_int, bool(holds))


@dataclass
class LocalEstimate:
    lhs: float
    rhs: float
    ratio: float

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ratio))


def local_estimate(sf: StructureFunction, u: ScalarField, f: ScalarField, center, R: float) -> LocalEstimate:
    """``||V||_{W^{1,2}(B_R)}`` against ``||f||_{L^2(B_2R)} + R^{-1} ||V||_{L^1(B_2R)}``.

    Ball integrals use nodal quadrature with weight ``h^2``.  The ball
    ``B_{2R + h}`` must consist of interior nodes.
    """
    d = u.domain
    cx, cy = float(center[0]), float(center[1])
    h = d.h
    margin = 2 * R + h
    if (cx - margin < d.x[0] - 1e-12 or cx + margin > d.x[-1] + 1e-12
            or cy - margin < d.y[0] - 1e-12 or cy + margin > d.y[-1] + 1e-12):
        raise BallNotInterior(f"B_(2R+h) around ({cx}, {cy}) leaves the grid")
    X, Y = d.mesh()
    r = np.hypot(X - cx, Y - cy)
    if not np.all(d.interior[r <= margin + 1e-12]):
        raise BallNotInterior(f"B_(2R+h) around ({cx}, {cy}) is not interior to the domain")
    V = flux(sf, u, quiet=True)
    J = jacobian(V)
    small = r <= R + 1e-12
    big = r <= 2 * R + 1e-12
    w = h * h
    lhs = math.sqrt(w * (np.sum(V.values[:, small] ** 2) + np.sum(J[:, :, small] ** 2)))
    f_part = math.sqrt(w * np.sum(f.values[big] ** 2))
    v_part = w * np.sum(np.hypot(V.values[0][big], V.values[1][big])) / R
    rhs = f_part + v_part
    return LocalEstimate(float(lhs), float(rhs), float(_ratio(lhs, rhs)))


@dataclass
class GalleryReport:
    beta: float
    p: float
    h: list[float]
    norm_V_w12: list[float]
    norm_hess_u_l2: list[float]
    norm_f_l2: list[float]
    expected_exponent: float
    growth_exponent: float
    naive_exponent: float
    flux_variation: float
    hess_increase: float
    rows: list[dict] = field(repr=False, default_factory=list)


def _gallery_level(beta, p, domain):
    sf = power_law(p)
    e = (beta - 1) * (p - 1)
    u = ScalarField.from_function(domain, lambda x, y: np.abs(x) ** beta)
    f = ScalarField.from_function(domain, lambda x, y: -(beta ** (p - 1)) * e * np.abs(x) ** (e - 1))
    V = flux(sf, u, quiet=True)
    hess = jacobian(gradient(u))
    hess_l2 = math.sqrt(np.sum(hess[:, :, domain.interior] ** 2) * domain.h**2)
    return math.hypot(norm_l2(V), gradient_norm_l2(V)), hess_l2, norm_l2(f)


def gallery_counterexample(beta: float, p: float, domain: GridDomain | None = None,
                           refine: int = 4) -> GalleryReport:
    """``u = |x_1|^beta`` with its exact right-hand side for the ``p``-Laplacian.

    The flux ``beta^(p-1) |x_1|^((beta-1)(p-1)) sign(x_1)`` stays in
    ``W^{1,2}`` whereas the discrete Hessian of ``u`` grows like
    ``h^(beta - 3/2)`` for ``beta < 3/2``.  ``domain`` is the coarsest grid
    (default: the square ``[-1, 1]^2`` with ``h = 1/16``); each further level
    halves ``h``.

    The growth exponent is estimated from successive differences of the
    squared Hessian norms, which removes the bounded part of the norm; the
    plain log-log slope between the coarsest and finest level is returned as
    ``naive_exponent``.
    """
    if beta <= 1 or (beta - 1) * (p - 1) < 1:
        raise ParameterOutOfRange(f"need beta > 1 and (beta-1)(p-1) >= 1, got beta={beta}, p={p}")
    if refine < 1:
        raise ValueError("refine must be at least 1")
    if domain is None:
        domain = GridDomain.rectangle(2.0, 2.0, 1.0 / 16, origin=(-1.0, -1.0))
    hs, w12, hess, nf, rows = [], [], [], [], []
    for k in range(refine):
        dk = domain.with_spacing(domain.h / 2**k)
        a, b, c = _gallery_level(beta, p, dk)
        hs.append(dk.h)
        w12.append(a)
        hess.append(b)
        nf.append(c)
        rows.append({"h": dk.h, "norm_V_w12": a, "norm_hess_u_l2": b, "norm_f_l2": c})
    sq = np.asarray(hess) ** 2
    diffs = np.diff(sq)
    if diffs.size >= 2 and np.all(diffs[:2] > 0) and np.all(diffs > 0):
        growth = float(np.mean(-np.log2(diffs[1:] / diffs[:-1]) / 2.0))
    else:
        growth = float("nan")
    naive = float(np.log(hess[-1] / hess[0]) / np.log(hs[-1] / hs[0]))
    variation = float(max(w12) / min(w12) - 1.0)
    return GalleryReport(beta, p, hs, w12, hess, nf, beta - 1.5, growth, naive, variation,
                         float(hess[-1] / hess[0] - 1.0), rows)
