"""Pointwise lower bound for ``(div(a(|grad u|) grad u))**2``.

With ``omega = grad u / |grad u|``, ``theta = t a'(t)/a(t)`` and
``H = hess u``, the bound reduces to positivity of

    psi(theta, omega, H) = theta^2 (H omega . omega)^2 / tr(H^2)
                           + 2 theta |H omega|^2 / tr(H^2) + 1

for ``theta > -1``.  In the eigenbasis of ``H`` (eigenvalues ``lam``,
weights ``eta_i = omega_i^2``) this depends only on ``(lam, eta)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp

from .errors import BudgetTooSmall, VanishingGradient, ZeroMatrix
from .structure import StructureFunction

UNIT_TOL = 1e-12
GRADIENT_TUBE = 1e-6


@dataclass(frozen=True)
class MatrixProbe:
    theta: float
    omega: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        H = np.asarray(self.H, dtype=float)
        if abs(np.linalg.norm(omega) - 1.0) > UNIT_TOL:
            raise ValueError("omega must be a unit vector")
        if H.shape != (omega.size, omega.size):
            raise ValueError("H must be n x n with n = len(omega)")
        # symmetric by construction: only the upper triangle is kept
        H = np.triu(H) + np.triu(H, 1).T
        if not np.any(H):
            raise ZeroMatrix("H must be nonzero")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "H", H)


@dataclass(frozen=True)
class ReducedProbe:
    lam: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if np.any(eta < 0) or abs(eta.sum() - 1.0) > UNIT_TOL:
            raise ValueError("eta must be a probability vector")
        if not np.any(lam):
            raise ZeroMatrix("lambda must be nonzero")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "eta", eta)


def psi_batch(theta, omega, H):
    """Vectorized ``psi``; ``omega`` has shape ``(..., n)``, ``H`` ``(..., n, n)``."""
    Hw = np.einsum("...ij,...j->...i", H, omega)
    trH2 = np.einsum("...ij,...ij->...", H, H)
    if np.any(trH2 == 0):
        raise ZeroMatrix("tr(H^2) = 0")
    q = np.einsum("...i,...i->...", Hw, omega)
    r = np.einsum("...i,...i->...", Hw, Hw)
    return theta**2 * q**2 / trH2 + 2 * theta * r / trH2 + 1.0


def psi(probe: MatrixProbe) -> float:
    return float(psi_batch(probe.theta, probe.omega, probe.H))


def psi_reduced_batch(theta, lam, eta):
    lam2 = lam * lam
    tr = lam2.sum(axis=-1)
    return (theta**2 * np.sum(lam * eta, axis=-1) ** 2 + 2 * theta * np.sum(lam2 * eta, axis=-1)) / tr + 1.0


def psi_reduced(rp: ReducedProbe, theta: float) -> float:
    return float(psi_reduced_batch(theta, rp.lam, rp.eta))


def reduce_probe(probe: MatrixProbe) -> ReducedProbe:
    lam, q = np.linalg.eigh(probe.H)
    eta = (q.T @ probe.omega) ** 2
    return ReducedProbe(lam, eta / eta.sum())


def envelope(theta: float) -> float:
    """``min(1, (1 + theta)^2)``: psi at the probes ``H omega = 0`` and ``H = omega omega^T``."""
    return min(1.0, (1.0 + theta) ** 2)


def witness_probes(theta: float, n: int) -> dict[str, MatrixProbe]:
    e = np.eye(n)
    return {
        "rank_one_aligned": MatrixProbe(theta, e[0], np.outer(e[0], e[0])),
        "kernel": MatrixProbe(theta, e[0], np.outer(e[1], e[1])),
    }


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean projection onto ``{x >= 0, sum x = 1}`` (sort based)."""
    n = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - tau, 0.0)


def _random_reduced(rng, m, n):
    lam = rng.standard_normal((m, n))
    lam /= np.linalg.norm(lam, axis=1, keepdims=True)
    eta = rng.dirichlet(np.ones(n), size=m)
    return lam, eta


@dataclass
class MinConstantResult:
    theta: float
    n: int
    estimate: float
    upper_bound: float
    evaluations: int
    valid: bool
    argmin: tuple[np.ndarray, np.ndarray] = field(repr=False)
    witness: MatrixProbe | None = field(default=None, repr=False)
    wall_time: float = 0.0
    search_estimate: float = float("nan")  # minimum from descent and sampling alone

    @property
    def gap(self) -> float:
        return self.estimate - self.upper_bound


def min_constant(theta: float, n: int, starts: int = 200, iterations: int = 10_000,
                 samples: int = 1_000_000, step: float = 1e-2,
                 rng: np.random.Generator | int | None = None) -> MinConstantResult:
    """Numerical minimum of ``psi(theta, ., .)`` over ``|omega| = 1``, ``|H|_F = 1``.

    Multistart projected gradient descent on (unit sphere for ``lam``) x
    (probability simplex for ``eta``), followed by plain random sampling.
    At ``theta = -1`` the minimum is ``0``; it is returned together with the
    rank-one witness and ``valid=False`` because it does not give a positive
    constant.
    """
    if theta < -1:
        raise ValueError("theta must be >= -1")
    if n < 2:
        raise ValueError("n must be >= 2")
    if starts * iterations + samples < 1000:
        raise BudgetTooSmall("fewer than 1000 evaluations requested")
    t0 = time.perf_counter()
    rng = np.random.default_rng(rng)

    lam, eta = _random_reduced(rng, starts, n)
    done = 0
    for it in range(iterations):
        le = np.sum(lam * eta, axis=1, keepdims=True)
        g_lam = 2 * theta**2 * le * eta + 4 * theta * lam * eta
        g_eta = 2 * theta**2 * le * lam + 2 * theta * lam * lam
        # Riemannian gradient on the sphere
        g_lam -= np.sum(g_lam * lam, axis=1, keepdims=True) * lam
        new_lam = lam - step * g_lam
        new_lam /= np.linalg.norm(new_lam, axis=1, keepdims=True)
        new_eta = project_simplex(eta - step * g_eta)
        moved = max(np.abs(new_lam - lam).max(), np.abs(new_eta - eta).max())
        lam, eta = new_lam, new_eta
        done = it + 1
        if moved < 1e-15:
            break
    vals = psi_reduced_batch(theta, lam, eta)
    i = int(np.argmin(vals))
    best, arg = float(vals[i]), (lam[i].copy(), eta[i].copy())

    remaining = samples
    while remaining > 0:
        m = min(remaining, 200_000)
        remaining -= m
        lam_s, eta_s = _random_reduced(rng, m, n)
        vals = psi_reduced_batch(theta, lam_s, eta_s)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, arg = float(vals[i]), (lam_s[i].copy(), eta_s[i].copy())

    searched = best
    # the explicit witnesses certify the upper bound min(1, (1 + theta)^2)
    for probe in witness_probes(theta, n).values():
        value = psi(probe)
        if value < best:
            rp = reduce_probe(probe)
            best, arg = value, (rp.lam, rp.eta)
    valid = theta > -1
    witness = None if valid else witness_probes(theta, n)["rank_one_aligned"]
    return MinConstantResult(theta, n, best, envelope(theta), starts * done + samples, valid, arg, witness,
                             time.perf_counter() - t0, searched)


@lru_cache(maxsize=64)
def lemma_constant(theta: float, n: int) -> float:
    """Cached moderate-budget estimate used by the field-level checks."""
    return min_constant(theta, n, starts=64, iterations=3000, samples=100_000, rng=0).estimate


class SmoothField:
    """Closed-form ``u(x, y)`` with exact derivatives up to third order."""

    def __init__(self, expression: str):
        x, y = sp.symbols("x y")
        expr = sp.sympify(expression, locals={"x": x, "y": y})
        v = (x, y)
        self.expression = expression
        grad = [sp.diff(expr, a) for a in v]
        hess = [[sp.diff(g, b) for b in v] for g in grad]
        third = [[[sp.diff(hij, c) for c in v] for hij in row] for row in hess]

        def lam(e):
            f = sp.lambdify(v, e, "numpy")
            return lambda X, Y: np.broadcast_to(np.asarray(f(X, Y), dtype=float), np.broadcast(X, Y).shape)

        self._u = lam(expr)
        self._grad = [lam(g) for g in grad]
        self._hess = [[lam(h) for h in row] for row in hess]
        self._third = [[[lam(t) for t in r2] for r2 in r1] for r1 in third]

    def value(self, X, Y):
        return self._u(X, Y)

    def grad(self, X, Y):
        return np.stack([g(X, Y) for g in self._grad], axis=-1)

    def hess(self, X, Y):
        return np.stack([np.stack([h(X, Y) for h in row], axis=-1) for row in self._hess], axis=-2)

    def third(self, X, Y):
        return np.stack([np.stack([np.stack([t(X, Y) for t in r2], axis=-1) for r2 in r1], axis=-2)
                         for r1 in self._third], axis=-3)


def _pointwise_terms(field: SmoothField, sf: StructureFunction, X, Y):
    g = field.grad(X, Y)
    H = field.hess(X, Y)
    t = np.linalg.norm(g, axis=-1)
    if np.any(t < GRADIENT_TUBE):
        raise VanishingGradient("probe point inside the |grad u| < 1e-6 tube")
    a = sf.a(t)
    da = sf.da(t)
    Hg = np.einsum("...ij,...j->...i", H, g)
    grad_t = Hg / t[..., None]
    lap = np.trace(H, axis1=-2, axis2=-1)
    gt_dot_g = np.sum(grad_t * g, axis=-1)
    hess2 = np.sum(H * H, axis=(-2, -1))
    return dict(g=g, H=H, t=t, a=a, da=da, Hg=Hg, grad_t=grad_t, lap=lap, gt_dot_g=gt_dot_g, hess2=hess2)


def _divergence_terms_exact(field, sf, X, Y, p):
    T = field.third(X, Y)
    grad_lap = np.einsum("...kkj->...j", T)
    d1 = 2 * p["a"] * p["da"] * p["lap"] * p["gt_dot_g"] + p["a"] ** 2 * (
        p["lap"] ** 2 + np.sum(p["g"] * grad_lap, axis=-1))
    d2 = 2 * p["a"] * p["da"] * np.sum(p["grad_t"] * p["Hg"], axis=-1) + p["a"] ** 2 * (
        p["hess2"] + np.einsum("...j,...iij->...", p["g"], T))
    return d1, d2


def _divergence_terms_fd(field, sf, X, Y, h):
    def vector_fields(Xs, Ys):
        q = _pointwise_terms(field, sf, Xs, Ys)
        a2 = q["a"] ** 2
        return a2[..., None] * q["g"] * q["lap"][..., None], a2[..., None] * q["Hg"]

    d1 = np.zeros(np.shape(X))
    d2 = np.zeros(np.shape(X))
    for axis, (dx, dy) in enumerate(((h, 0.0), (0.0, h))):
        p1, q1 = vector_fields(X + dx, Y + dy)
        p0, q0 = vector_fields(X - dx, Y - dy)
        d1 += (p1[..., axis] - p0[..., axis]) / (2 * h)
        d2 += (q1[..., axis] - q0[..., axis]) / (2 * h)
    return d1, d2


def _lhs(p):
    return (p["a"] * p["lap"] + p["da"] * p["gt_dot_g"]) ** 2


def check_pointwise_identity(field: SmoothField, sf: StructureFunction, h: float, X, Y) -> float:
    """Max discrepancy in the expansion of ``(div(a grad u))^2`` over the probes.

    The two outer divergences are taken with centered differences of step
    ``h``; every other term uses exact derivatives, so the residual is
    ``O(h^2)``.
    """
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    p = _pointwise_terms(field, sf, X, Y)
    d1, d2 = _divergence_terms_fd(field, sf, X, Y, h)
    rhs = (d1 - d2 + 2 * p["a"] * p["da"] * np.sum(p["grad_t"] * p["Hg"], axis=-1)
           + p["a"] ** 2 * p["hess2"] + p["da"] ** 2 * p["gt_dot_g"] ** 2)
    return float(np.max(np.abs(_lhs(p) - rhs)))


@dataclass
class LowerBoundResult:
    margin: float
    scale: float
    constant: float


def check_lower_bound(field: SmoothField, sf: StructureFunction, X, Y, constant: float | None = None,
                      h: float | None = None) -> LowerBoundResult:
    """Smallest slack of the pointwise lower bound over the probes.

    ``constant`` defaults to the numerically minimized lemma constant at
    ``theta = i_a``.  Divergences are exact (third derivatives) unless a
    finite-difference step ``h`` is given.
    """
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    if constant is None:
        constant = lemma_constant(float(sf.i_a), 2)
    p = _pointwise_terms(field, sf, X, Y)
    if h is None:
        d1, d2 = _divergence_terms_exact(field, sf, X, Y, p)
    else:
        d1, d2 = _divergence_terms_fd(field, sf, X, Y, h)
    lhs = _lhs(p)
    slack = lhs - d1 + d2 - constant * p["a"] ** 2 * p["hess2"]
    scale = float(np.max(np.abs(lhs) + np.abs(d1) + np.abs(d2) + p["a"] ** 2 * p["hess2"]))
    return LowerBoundResult(float(np.min(slack)), max(scale, 1e-300), constant)
