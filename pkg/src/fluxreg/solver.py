"""Dirichlet and Neumann problems for ``-div(a(|grad u|) grad u) = f`` on a grid.

The discrete solution minimizes the convex energy

    J(u) = sum_T w_T B(|grad_T u|) - sum_i m_i f_i u_i

over continuous piecewise linear functions on a triangulation built from
the grid.  Cells inside the domain carry their four corner right triangles
at weight ``h^2 / 4`` (for ``a = 1`` this is the five-point Laplacian);
cells cut by the analytic boundary are triangulated exactly up to the
boundary crossings.  ``m`` are lumped masses.  Minimization is a damped
Newton method with Jacobi-preconditioned conjugate gradients, continued
along a decreasing sequence of regularization parameters ``eps``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.ndimage import gaussian_filter
from scipy.sparse.linalg import LinearOperator, cg

from .errors import IncompatibleData, LinearSolveFailure, NewtonStall
from .estimates import flux
from .grid import GridDomain, ScalarField, VectorField, divergence, norm_l1, norm_l2, quadrature_weights
from .grid import neighbour_mask as _neighbour_mask
from .structure import StructureFunction, eval_b, regularize

log = logging.getLogger(__name__)

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(8)


@dataclass
class NewtonOptions:
    max_iter: int = 200
    tol: float = 1e-9
    backtrack: float = 0.5
    min_step: float = 1e-12
    armijo: float = 1e-4
    # intermediate eps stages only need a rough minimizer
    stage_tol_factor: float = 1e3


@dataclass
class LinearOptions:
    rtol: float = 1e-10
    max_iter: int = 10_000


@dataclass
class SolveOptions:
    epsilon_schedule: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)
    newton: NewtonOptions = field(default_factory=NewtonOptions)
    linear: LinearOptions = field(default_factory=LinearOptions)

    def __post_init__(self):
        sched = tuple(float(e) for e in self.epsilon_schedule)
        if any(e <= 0 or e >= 1 for e in sched):
            raise ValueError("epsilon values must lie in (0, 1)")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("epsilon schedule must be strictly decreasing")
        self.epsilon_schedule = sched

    @classmethod
    def down_to(cls, epsilon: float, **kw) -> SolveOptions:
        """Decades ``1e-1, 1e-2, ...`` down to ``epsilon``; ``0`` disables regularization."""
        if epsilon == 0:
            return cls(epsilon_schedule=(), **kw)
        sched = []
        e = 0.1
        while e > epsilon * (1 + 1e-9):
            sched.append(e)
            e /= 10
        sched.append(epsilon)
        return cls(epsilon_schedule=tuple(sched), **kw)


@dataclass
class StageReport:
    epsilon: float | None
    iterations: int
    gradient_norm: float
    energy: float
    energies: list[float] = field(repr=False, default_factory=list)


@dataclass
class SolveReport:
    bc: str
    stages: list[StageReport]
    residual_l2: float
    tolerance: float

    @property
    def gradient_norm(self) -> float:
        return self.stages[-1].gradient_norm

    @property
    def energy(self) -> float:
        return self.stages[-1].energy

    @property
    def iterations(self) -> list[int]:
        return [s.iterations for s in self.stages]

    def to_dict(self) -> dict:
        return {
            "bc": self.bc,
            "energy": self.energy,
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "residual_l2": self.residual_l2,
            "stages": [
                {"epsilon": s.epsilon, "iterations": s.iterations, "gradient_norm": s.gradient_norm,
                 "energy": s.energy}
                for s in self.stages
            ],
        }


class EnergyTable:
    """Vectorized ``B(t)``: closed forms for power laws, otherwise cubic
    Hermite interpolation (with the exact derivative ``b``) of a
    Gauss-Legendre cumulative table on a log-spaced grid."""

    def __init__(self, sf: StructureFunction, tmax: float = 1.0, points: int = 4000):
        self.sf = sf
        self._closed = sf.kind in ("powerlaw", "constant")
        if not self._closed:
            self._build(max(tmax, 1.0), points)

    def _build(self, tmax, points):
        self.tmin = 1e-12
        self.tmax = 2.0 * tmax
        t = np.concatenate([[0.0], np.logspace(math.log10(self.tmin), math.log10(self.tmax), points)])
        lo, hi = t[:-1], t[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes = mid[:, None] + half[:, None] * _GAUSS_X[None, :]
        panel = half * np.sum(_GAUSS_W[None, :] * eval_b(self.sf, nodes), axis=1)
        self.t = t
        self.B = np.concatenate([[0.0], np.cumsum(panel)])
        self.b = eval_b(self.sf, t)
        self.points = points

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self._closed:
            if self.sf.kind == "constant":
                return 0.5 * self.sf.params["c"] * t * t
            p = self.sf.params["p"]
            return t**p / p
        if t.size and t.max() > self.tmax:
            self._build(float(t.max()), self.points)
        k = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        t0, t1 = self.t[k], self.t[k + 1]
        dt = t1 - t0
        s = (t - t0) / dt
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * self.B[k] + h10 * dt * self.b[k] + h01 * self.B[k + 1] + h11 * dt * self.b[k + 1]


def _p1_gradients(coords):
    """Gradients of the three barycentric hat functions and the areas of
    triangles ``coords`` of shape ``(T, 3, 2)``."""
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # rows of inv([[e1], [e2]]) give grad phi_1 and grad phi_2
    g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    return np.stack([-(g1 + g2), g1, g2], axis=1), 0.5 * np.abs(det)


def _max_angle(pts):
    worst = 0.0
    for k in range(3):
        a, b, c = pts[k], pts[(k + 1) % 3], pts[(k + 2) % 3]
        u, v = b - a, c - a
        cosang = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
        worst = max(worst, math.acos(max(-1.0, min(1.0, cosang))))
    return worst


def _fan(polygon):
    """Fan triangulation of a convex polygon from the apex minimizing the largest angle."""
    m = len(polygon)
    best, best_tris = None, None
    for apex in range(m):
        order = polygon[apex:] + polygon[:apex]
        tris = [(order[0], order[k], order[k + 1]) for k in range(1, m - 1)]
        worst = max(_max_angle(np.array([p[-1] for p in t])) for t in tris)
        if best is None or worst < best - 1e-12:
            best, best_tris = worst, tris
    return best_tris


class Discretization:
    """P1 gradient operators on a grid-aligned triangulation, restricted to free nodes.

    Cells with four in-domain corners carry all four corner triangles at half
    weight, which for ``a = 1`` reproduces the five-point Laplacian.  For
    Dirichlet problems, cells cut by the boundary are replaced by a
    triangulation of the polygon formed by their in-domain corners and the
    points where the analytic boundary crosses the cell edges; ``u = 0`` at
    those points.  Nodes within ``PIN_FRACTION h`` of the boundary are pinned
    to 0.  For Neumann problems the crossing values are linear
    extrapolations along the cut edge, so the energy lives on the same
    polygonal domain and the natural boundary condition follows from it.  Loads use lumped
    masses, a third of the weighted area of every triangle per vertex.
    """

    PIN_FRACTION = 1e-3

    def __init__(self, domain: GridDomain, bc: str):
        if bc not in ("dirichlet", "neumann"):
            raise ValueError("bc must be 'dirichlet' or 'neumann'")
        self.domain, self.bc = domain, bc
        h = domain.h
        inside = domain.inside
        nn = int(inside.sum())
        number = np.full(domain.grid_shape, -1, dtype=np.int64)
        number[inside] = np.arange(nn)
        self.number = number
        dirichlet = bc == "dirichlet"
        X, Y = domain.mesh()

        pinned = np.zeros(domain.grid_shape, bool)
        walls = {}
        for axis in (0, 1):
            for sign in (1, -1):
                walls[axis, sign] = domain.wall_fraction(axis, sign)
                if dirichlet:
                    missing = inside & ~_neighbour_mask(inside, axis, sign)
                    pinned |= missing & (walls[axis, sign] < self.PIN_FRACTION)

        # corners of the cell with lower-left node (j, i), counter-clockwise
        offsets = [(0, 0), (0, 1), (1, 1), (1, 0)]
        ny, nx = domain.grid_shape
        cin = np.stack([inside[dj:ny - 1 + dj, di:nx - 1 + di] for dj, di in offsets])
        count = cin.sum(axis=0)

        rows, cols, gx_vals, gy_vals, mass_cols, mass_vals, weights = [], [], [], [], [], [], []
        nt = 0

        # full cells: corner triangle at corner c uses its two cell neighbours
        Jf, If = np.nonzero(count == 4)
        for c in range(4):
            tri = [offsets[c], offsets[(c + 1) % 4], offsets[(c - 1) % 4]]
            verts = np.stack([number[Jf + dj, If + di] for dj, di in tri], axis=1)
            pts = np.stack([np.stack([X[Jf + dj, If + di], Y[Jf + dj, If + di]], axis=1) for dj, di in tri], axis=1)
            grads, _ = _p1_gradients(pts)
            r = nt + np.arange(Jf.size)
            nt += Jf.size
            w = np.full(Jf.size, h * h / 4.0)
            weights.append(w)
            rows.append(np.repeat(r, 3))
            cols.append(verts.ravel())
            gx_vals.append(grads[:, :, 0].ravel())
            gy_vals.append(grads[:, :, 1].ravel())
            mass_cols.append(verts.ravel())
            mass_vals.append(np.repeat(w / 3.0, 3))

        # cut cells: polygon of in-domain corners and boundary crossings.  A
        # crossing carries u = 0 (Dirichlet) or the linear extrapolation of
        # the two nodes behind it along the cut axis (Neumann).
        for j, i in zip(*np.nonzero((count > 0) & (count < 4))):
            polygon = []
            for c in range(4):
                (ja, ia), (jb, ib) = [(j + dj, i + di) for dj, di in (offsets[c], offsets[(c + 1) % 4])]
                a_in, b_in = inside[ja, ia], inside[jb, ib]
                if a_in:
                    polygon.append(({number[ja, ia]: 1.0}, number[ja, ia], np.array([X[ja, ia], Y[ja, ia]])))
                if a_in == b_in:
                    continue
                (js, is_), (jt, it) = ((ja, ia), (jb, ib)) if a_in else ((jb, ib), (ja, ia))
                axis = 1 if js == jt else 0
                sign = int(np.sign((it - is_) if axis == 1 else (jt - js)))
                theta = walls[axis, sign][js, is_]
                if theta < self.PIN_FRACTION:
                    continue
                start = np.array([X[js, is_], Y[js, is_]])
                step = np.array([sign * h, 0.0]) if axis == 1 else np.array([0.0, sign * h])
                if dirichlet:
                    coeffs, owner = {}, -1
                else:
                    k = number[js, is_]
                    jb2, ib2 = (js, is_ - sign) if axis == 1 else (js - sign, is_)
                    if 0 <= jb2 < ny and 0 <= ib2 < nx and inside[jb2, ib2]:
                        coeffs = {k: 1.0 + theta, number[jb2, ib2]: -theta}
                    else:
                        coeffs = {k: 1.0}
                    owner = k
                polygon.append((coeffs, owner, start + theta * step))
            if len(polygon) < 3:
                continue
            for tri in _fan(polygon):
                pts = np.array([p[2] for p in tri])[None]
                grads, area = _p1_gradients(pts)
                if area[0] < 1e-14 * h * h:
                    continue
                for (coeffs, owner, _), g in zip(tri, grads[0]):
                    for k, c in coeffs.items():
                        rows.append(np.array([nt]))
                        cols.append(np.array([k]))
                        gx_vals.append(np.array([c * g[0]]))
                        gy_vals.append(np.array([c * g[1]]))
                    if owner >= 0:
                        mass_cols.append(np.array([owner]))
                        mass_vals.append(np.array([area[0] / 3.0]))
                weights.append(area)
                nt += 1

        cat = (lambda parts, dt=float: np.concatenate(parts) if parts else np.zeros(0, dt))
        rows, cols = cat(rows, np.int64), cat(cols, np.int64)
        self.w = cat(weights)
        Dx = sps.csr_matrix((cat(gx_vals), (rows, cols)), shape=(nt, nn))
        Dy = sps.csr_matrix((cat(gy_vals), (rows, cols)), shape=(nt, nn))
        mass = np.zeros(nn)
        np.add.at(mass, cat(mass_cols, np.int64), cat(mass_vals))

        # in-domain nodes that touch no triangle carry no unknown; they are
        # filled from their neighbours when the solution is reported
        self.dangling = (mass == 0) & ~pinned[inside]
        free = (mass > 0) & ~pinned[inside]
        self.free = free
        self.Dx = Dx[:, free].tocsr()
        self.Dy = Dy[:, free].tocsr()
        self.DxT = self.Dx.T.tocsr()
        self.DyT = self.Dy.T.tocsr()
        self.mass_all = mass
        self.mass = mass[free]
        self.n_free = int(free.sum())
        self.n_tri = nt

    def to_field(self, u_free: np.ndarray) -> ScalarField:
        vals = np.zeros(self.domain.grid_shape)
        nodal = np.zeros(self.free.size)
        nodal[self.free] = u_free
        vals[self.domain.inside] = nodal
        if np.any(self.dangling):
            known = np.zeros(self.domain.grid_shape, bool)
            known[self.domain.inside] = ~self.dangling
            total = np.zeros(self.domain.grid_shape)
            count = np.zeros(self.domain.grid_shape)
            for axis in (0, 1):
                for sign in (1, -1):
                    m = _neighbour_mask(known, axis, sign)
                    total += np.where(m, np.roll(np.where(known, vals, 0.0), -sign, axis=axis), 0.0)
                    count += m
            fill = np.zeros(self.domain.grid_shape, bool)
            fill[self.domain.inside] = self.dangling
            vals[fill] = np.where(count[fill] > 0, total[fill] / np.maximum(count[fill], 1), 0.0)
        return ScalarField(self.domain, vals)

    def restrict(self, f: ScalarField) -> np.ndarray:
        return f.nodal()[self.free]

    def tri_gradients(self, u):
        return self.Dx @ u, self.Dy @ u

    def gradient(self, sf, u, load):
        gx, gy = self.tri_gradients(u)
        t = np.hypot(gx, gy)
        a = sf.a(t)
        wa = self.w * a
        return self.DxT @ (wa * gx) + self.DyT @ (wa * gy) - load

    def hessian(self, sf, u):
        gx, gy = self.tri_gradients(u)
        t = np.hypot(gx, gy)
        a = sf.a(t)
        c = sf.a_times_t_derivative(t)
        safe = np.where(t > 0, t, 1.0)
        ex, ey = np.where(t > 0, gx / safe, 0.0), np.where(t > 0, gy / safe, 0.0)
        w = self.w
        kxx = sps.diags(w * (a + c * ex * ex))
        kxy = sps.diags(w * c * ex * ey)
        kyy = sps.diags(w * (a + c * ey * ey))
        H = self.DxT @ kxx @ self.Dx + self.DyT @ kyy @ self.Dy
        cross = self.DxT @ kxy @ self.Dy
        return (H + cross + cross.T).tocsr()

    def energy(self, table, u, load):
        gx, gy = self.tri_gradients(u)
        return float(np.sum(self.w * table(np.hypot(gx, gy))) - load @ u)


def _pcg(H, rhs, opts: LinearOptions):
    diag = H.diagonal()
    diag = np.where(diag > 0, diag, 1.0)
    M = LinearOperator(H.shape, matvec=lambda r: r / diag)
    x, info = cg(H, rhs, rtol=opts.rtol, atol=0.0, maxiter=opts.max_iter, M=M)
    if info != 0:
        raise LinearSolveFailure(f"conjugate gradients did not converge (info={info})")
    return x


def _as_field(domain: GridDomain, f) -> ScalarField:
    if isinstance(f, ScalarField):
        return f
    if callable(f):
        return ScalarField.from_function(domain, f)
    return ScalarField(domain, np.asarray(f, dtype=float))


def _newton(disc: Discretization, sf: StructureFunction, u: np.ndarray, load: np.ndarray, tol: float,
            opts: SolveOptions, epsilon, neumann_weights=None) -> tuple[np.ndarray, StageReport]:
    no = opts.newton
    table = EnergyTable(sf)
    g = disc.gradient(sf, u, load)
    energy = disc.energy(table, u, load)
    energies = [energy]
    it = 0
    while np.max(np.abs(g)) > tol:
        if it >= no.max_iter:
            raise NewtonStall(f"no convergence in {no.max_iter} Newton iterations "
                              f"(|grad J| = {np.max(np.abs(g)):.3e}, eps={epsilon})")
        H = disc.hessian(sf, u)
        d = _pcg(H, -g, opts.linear)
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -float(g @ g)
        alpha = 1.0
        gnorm = np.linalg.norm(g)
        while True:
            trial = u + alpha * d
            if neumann_weights is not None:
                trial -= (neumann_weights @ trial) / neumann_weights.sum()
            e_trial = disc.energy(table, trial, load)
            decrease = e_trial - energy
            roundoff = 1e-13 * (1.0 + abs(energy))
            if decrease <= no.armijo * alpha * slope:
                break
            if abs(alpha * slope) < roundoff and decrease <= roundoff:
                g_trial = disc.gradient(sf, trial, load)
                if np.linalg.norm(g_trial) < gnorm:
                    break
            alpha *= no.backtrack
            if alpha < no.min_step:
                raise NewtonStall(f"line search reached step {alpha:.1e} with |grad J| = "
                                  f"{np.max(np.abs(g)):.3e} (eps={epsilon})")
        u = trial
        energy = e_trial
        energies.append(energy)
        g = disc.gradient(sf, u, load)
        it += 1
        log.debug("eps=%s it=%d alpha=%.3g |g|=%.3e J=%.12g", epsilon, it, alpha, np.max(np.abs(g)), energy)
    return u, StageReport(epsilon, it, float(np.max(np.abs(g))), energy, energies)


def _solve(sf: StructureFunction, domain: GridDomain, f, opts: SolveOptions | None, bc: str):
    opts = opts or SolveOptions()
    f = _as_field(domain, f)
    disc = Discretization(domain, bc)
    load = disc.mass * disc.restrict(f)
    weights = None
    if bc == "neumann":
        q = quadrature_weights(domain)[domain.inside]
        fn = f.nodal()
        total = float(np.sum(q * fn))
        scale = float(np.sum(q * np.abs(fn)))
        if abs(total) > 1e-8 * max(scale, 1e-300):
            raise IncompatibleData(f"sum f h^2 = {total:.3e} violates the zero-mean condition")
        # remove the O(h^2) mismatch between grid quadrature and solver masses
        total = float(np.sum(load))
        load = load - disc.mass * total / disc.mass.sum()
        weights = disc.mass

    # Poisson start with a frozen at a(1)
    base = sf.base if sf.base is not None else sf
    a1 = float(base.a(1.0))
    if not np.isfinite(a1) or a1 <= 0:
        a1 = 1.0
    W = sps.diags(a1 * disc.w)
    K = disc.DxT @ W @ disc.Dx + disc.DyT @ W @ disc.Dy
    u = _pcg(K.tocsr(), load, opts.linear) if np.any(load) else np.zeros(disc.n_free)
    if weights is not None:
        u -= (weights @ u) / weights.sum()

    stages = []
    schedule = list(opts.epsilon_schedule) or [None]
    for k, eps in enumerate(schedule):
        sf_k = sf if eps is None else regularize(sf, eps)
        last = k == len(schedule) - 1
        tol = opts.newton.tol * (1.0 if last else opts.newton.stage_tol_factor)
        u, rep = _newton(disc, sf_k, u, load, tol, opts, eps, weights)
        if weights is not None:
            u -= (weights @ u) / weights.sum()
        stages.append(rep)

    u_field = disc.to_field(u)
    V = flux(sf, u_field, quiet=True)
    res = ScalarField(domain, divergence(V).values + f.values)
    residual = norm_l2(res, region=domain.interior)
    return u_field, SolveReport(bc, stages, residual, opts.newton.tol)


def solve_dirichlet(sf: StructureFunction, domain: GridDomain, f, opts: SolveOptions | None = None):
    """Minimize the discrete energy with ``u = 0`` on boundary nodes.

    Returns ``(u, report)``; ``report.gradient_norm`` is the final
    infinity norm of the energy gradient, i.e. the largest violation of the
    discrete weak form over nodal hat test functions.
    """
    return _solve(sf, domain, f, opts, "dirichlet")


def solve_neumann(sf: StructureFunction, domain: GridDomain, f, opts: SolveOptions | None = None):
    """Natural (zero-flux) boundary conditions; the solution is normalized to zero mean."""
    return _solve(sf, domain, f, opts, "neumann")


def mollify(f: ScalarField, sigma: float) -> ScalarField:
    """Gaussian blur restricted to the domain (normalized convolution).

    Widths below the grid spacing leave ``f`` unchanged.
    """
    d = f.domain
    if sigma < d.h:
        return ScalarField(d, f.values)
    inside = d.inside.astype(float)
    s = sigma / d.h
    num = gaussian_filter(np.where(d.inside, f.values, 0.0), s, mode="constant", truncate=4.0)
    den = gaussian_filter(inside, s, mode="constant", truncate=4.0)
    out = np.where(d.inside, num / np.where(den > 0, den, 1.0), 0.0)
    return ScalarField(d, out)


@dataclass
class ApproximationSequence:
    sigmas: list[float]
    rhs: list[ScalarField] = field(repr=False)
    solutions: list[ScalarField] = field(repr=False)
    fluxes: list[VectorField] = field(repr=False)
    reports: list[SolveReport] = field(repr=False)
    u_gaps: list[float]
    flux_gaps: list[float]
    l1_ratios: list[float]


def approximation_sequence(sf: StructureFunction, domain: GridDomain, f, k_max: int, bc: str = "dirichlet",
                           opts: SolveOptions | None = None) -> ApproximationSequence:
    """Solve for mollified data ``f_k`` (width ``2^-k`` times the diameter), ``k = 0..k_max``."""
    f = _as_field(domain, f)
    solve = solve_dirichlet if bc == "dirichlet" else solve_neumann
    diam = domain.diameter
    sigmas, rhs, sols, fluxes, reports = [], [], [], [], []
    weights = None
    if bc == "neumann":
        weights = quadrature_weights(domain)[domain.inside]
    for k in range(k_max + 1):
        sigma = diam * 2.0**-k
        fk = mollify(f, sigma)
        if weights is not None:
            vals = fk.values.copy()
            nod = vals[domain.inside]
            vals[domain.inside] = nod - (weights @ nod) / weights.sum()
            fk = ScalarField(domain, vals)
        u, rep = solve(sf, domain, fk, opts)
        sigmas.append(sigma)
        rhs.append(fk)
        sols.append(u)
        fluxes.append(flux(sf, u, quiet=True))
        reports.append(rep)
    inside = domain.inside
    u_gaps = [float(np.max(np.abs(u.values[inside] - sols[-1].values[inside]))) for u in sols]
    flux_gaps = [float(np.max(np.abs(V.values[:, inside] - fluxes[-1].values[:, inside]))) for V in fluxes]
    ratios = []
    for fk, V in zip(rhs, fluxes):
        nf = norm_l1(fk)
        ratios.append(norm_l1(V) / nf if nf > 0 else float("nan"))
    return ApproximationSequence(sigmas, rhs, sols, fluxes, reports, u_gaps, flux_gaps, ratios)
