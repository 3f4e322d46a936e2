"""Nonnegativity of the quadratic form with matrix ``M_ii = (eta_i - 1)^2``,
``M_ij = eta_i eta_j`` on the simplex ``A = {eta >= 0, sum(eta) <= 1}``.

The determinant of ``M`` has three equivalent expressions (the LU value, a
product expansion and an expansion in elementary symmetric functions); all
functions accept a single point of shape ``(n,)`` or a batch ``(m, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class SimplexPoint:
    eta: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim != 1 or eta.size < 2:
            raise ValueError("a simplex point needs n >= 2 components")
        if np.any(eta < 0) or eta.sum() > 1 + SIMPLEX_TOL:
            raise ValueError(f"{eta} is not in the simplex")
        object.__setattr__(self, "eta", eta)


def _as_eta(eta) -> np.ndarray:
    if isinstance(eta, SimplexPoint):
        return eta.eta
    arr = np.asarray(eta)
    # object arrays (e.g. Fraction entries) keep exact arithmetic
    return arr if arr.dtype == object else arr.astype(float)


def form_matrix(eta) -> np.ndarray:
    eta = _as_eta(eta)
    m = eta[..., :, None] * eta[..., None, :]
    idx = np.arange(eta.shape[-1])
    m[..., idx, idx] = (eta - 1.0) ** 2
    return m


def elementary_symmetric_all(eta) -> np.ndarray:
    """``[S_0, S_1, ..., S_n]`` from the coefficients of ``prod(1 + eta_i x)``."""
    eta = _as_eta(eta)
    n = eta.shape[-1]
    s = np.zeros(eta.shape[:-1] + (n + 1,), dtype=eta.dtype)
    s[..., 0] = 1
    for i in range(n):
        s[..., 1 : i + 2] = s[..., 1 : i + 2] + eta[..., i : i + 1] * s[..., 0 : i + 1]
    return s


def elementary_symmetric(eta, k: int):
    eta = _as_eta(eta)
    if not 1 <= k <= eta.shape[-1]:
        raise ValueError(f"k must lie in [1, {eta.shape[-1]}]")
    return elementary_symmetric_all(eta)[..., k]


def elementary_symmetric_bruteforce(eta, k: int) -> float:
    """Subset enumeration; exponential in ``n``, used as an independent check."""
    eta = list(_as_eta(eta))
    total = 0
    for subset in combinations(eta, k):
        prod = 1
        for x in subset:
            prod *= x
        total += prod
    return total


def phi_product(eta):
    eta = _as_eta(eta)
    factors = 1.0 - 2.0 * eta
    n = eta.shape[-1]
    total = np.prod(factors, axis=-1)
    for i in range(n):
        others = np.delete(factors, i, axis=-1)
        total = total + eta[..., i] ** 2 * np.prod(others, axis=-1)
    return total


def phi_determinant(eta):
    """``det(form_matrix(eta))`` through LAPACK's partially pivoted LU."""
    eta = _as_eta(eta)
    if eta.shape[-1] > 12:
        raise ValueError("determinant route is limited to n <= 12")
    return np.linalg.det(form_matrix(eta))


def phi_symmetric(eta):
    eta = _as_eta(eta)
    n = eta.shape[-1]
    s = elementary_symmetric_all(eta)
    k = np.arange(1, n + 1)
    bracket = 1.0 + np.sum((-1.0) ** k * 2.0 ** (k - 1) * s[..., 1:], axis=-1)
    tail = np.zeros(eta.shape[:-1])
    for kk in range(3, n + 1):
        tail = tail + (-1.0) ** (kk - 1) * (kk - 2) * 2.0 ** (kk - 2) * s[..., kk]
    return (1.0 - s[..., 1]) * bracket + tail


def newton_chain_check(eta, k: int):
    """Return ``(S_{k+1}, c S_k S_1, c S_k)`` with ``c = (n-k) / (n(k+1))``.

    On the simplex these satisfy ``lhs <= rhs1 <= rhs2``.
    """
    eta = _as_eta(eta)
    n = eta.shape[-1]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}]")
    s = elementary_symmetric_all(eta)
    c = (n - k) / (n * (k + 1))
    return s[..., k + 1], c * s[..., k] * s[..., 1], c * s[..., k]


def sign_pair_terms(eta):
    """The grouped differences used to show both sums in ``phi_symmetric`` are >= 0.

    Returns two arrays over ``h``: ``2^(2h-1) S_2h - 2^(2h) S_(2h+1)`` for
    ``1 <= h <= (n-1)/2`` and ``(2h-1) 2^(2h-1) S_(2h+1) - 2h 2^(2h) S_(2h+2)``
    for ``1 <= h <= (n-2)/2``.
    """
    eta = _as_eta(eta)
    n = eta.shape[-1]
    s = elementary_symmetric_all(eta)
    first = [2.0 ** (2 * h - 1) * s[..., 2 * h] - 2.0 ** (2 * h) * s[..., 2 * h + 1]
             for h in range(1, (n - 1) // 2 + 1)]
    second = [(2 * h - 1) * 2.0 ** (2 * h - 1) * s[..., 2 * h + 1] - 2 * h * 2.0 ** (2 * h) * s[..., 2 * h + 2]
              for h in range(1, (n - 2) // 2 + 1)]
    shape = eta.shape[:-1] + (0,)
    first = np.stack(first, axis=-1) if first else np.zeros(shape)
    second = np.stack(second, axis=-1) if second else np.zeros(shape)
    return first, second


def simplex_landmarks(n: int) -> np.ndarray:
    """Origin, vertices, edge midpoints and barycenter of ``A``."""
    pts = [np.zeros(n)]
    eye = np.eye(n)
    pts.extend(eye)
    for i, j in combinations(range(n), 2):
        pts.append(0.5 * (eye[i] + eye[j]))
        pts.append(0.5 * eye[i])
    pts.append(np.full(n, 1.0 / n))
    return np.array(pts)


def sample_simplex(n: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from ``A`` (flat Dirichlet on ``n + 1`` coordinates, slack dropped)."""
    return rng.dirichlet(np.ones(n + 1), size=samples)[:, :n]


@dataclass
class SweepResult:
    n: int
    samples: int
    min_phi: float
    argmin_eta: np.ndarray
    max_identity_gap: float


def nonnegativity_sweep(n: int, samples: int, rng: np.random.Generator | int | None = None,
                        chunk: int = 200_000) -> SweepResult:
    """Minimum of ``phi_product`` over random and landmark points of ``A``.

    Also tracks the largest relative disagreement between the three
    expressions of ``phi`` (determinant only for ``n <= 12``).
    """
    if not 2 <= n <= 12:
        raise ValueError("n must lie in [2, 12]")
    rng = np.random.default_rng(rng)
    best, arg, gap = np.inf, None, 0.0
    batches = [simplex_landmarks(n)]
    remaining = samples
    while remaining > 0 or batches:
        if batches:
            eta = batches.pop()
        else:
            m = min(chunk, remaining)
            remaining -= m
            eta = sample_simplex(n, m, rng)
        prod = phi_product(eta)
        sym = phi_symmetric(eta)
        det = phi_determinant(eta)
        scale = 1.0 + np.abs(prod)
        gap = max(gap, float(np.max(np.abs(sym - prod) / scale)), float(np.max(np.abs(det - prod) / scale)))
        i = int(np.argmin(prod))
        if prod[i] < best:
            best, arg = float(prod[i]), eta[i].copy()
    return SweepResult(n, samples, best, arg, gap)


def sylvester_minors_check(eta, tol: float = SIMPLEX_TOL) -> bool:
    eta = _as_eta(eta)
    if eta.shape[-1] > 10:
        raise ValueError("minor check is limited to n <= 10")
    m = form_matrix(eta)
    return all(np.linalg.det(m[: k, : k]) >= -tol for k in range(1, eta.shape[-1] + 1))


def leading_minors(eta) -> np.ndarray:
    m = form_matrix(_as_eta(eta))
    return np.array([np.linalg.det(m[:k, :k]) for k in range(1, m.shape[-1] + 1)])
