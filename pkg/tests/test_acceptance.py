"""The twelve acceptance criteria at their stated tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line; the lines are also
collected in the terminal summary.
"""

import itertools
import math
import time

import numpy as np
import pytest

from fluxreg import experiments
from fluxreg.estimates import flux, gallery_counterexample, global_estimate, local_estimate
from fluxreg.grid import GridDomain, ScalarField
from fluxreg.matrix_lemma import SmoothField, check_pointwise_identity, envelope, min_constant, psi_batch
from fluxreg.rearrangement import (
    WeightedSamples,
    circle,
    curvature_admissibility,
    marcinkiewicz_norm,
    spike_curve,
)
from fluxreg.simplex_forms import (
    newton_chain_check,
    nonnegativity_sweep,
    phi_determinant,
    phi_product,
    phi_symmetric,
)
from fluxreg.solver import approximation_sequence, solve_dirichlet
from fluxreg.structure import constant, power_law, regularize, scan_grid

PI = math.pi


def slope(hs, errs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@pytest.fixture(scope="module")
def sweep_rows():
    t0 = time.perf_counter()
    rows = experiments.coercivity_sweep(local=True)
    return rows, time.perf_counter() - t0


def test_c01_matrix_lemma_constant(verdict):
    t0 = time.perf_counter()
    worst_gap, worst_search, positive, degenerate = 0.0, 0.0, True, True
    seeds = np.random.SeedSequence(2024).spawn(18)
    for (theta, n), seed in zip(itertools.product((-0.9, -0.5, 0.0, 1.0, 3.0, -1.0), (2, 3, 4)), seeds):
        res = min_constant(theta, n, rng=np.random.default_rng(seed))
        if theta > -1:
            positive &= res.estimate > 0
            worst_gap = max(worst_gap, abs(res.estimate - envelope(theta)))
            worst_search = max(worst_search, abs(res.search_estimate - envelope(theta)))
        else:
            degenerate &= abs(res.estimate) <= 1e-6 and res.witness is not None and not res.valid
    elapsed = time.perf_counter() - t0
    ok = positive and worst_gap <= 1e-3 and worst_search <= 1e-3 and degenerate and elapsed <= 120
    verdict(1, ok, f"max|C-env|={worst_gap:.2e} search-only={worst_search:.2e} theta=-1 ok={degenerate} "
                   f"{elapsed:.1f}s")


def test_c02_theta_minus_one_nonnegative(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    worst = math.inf
    for n in range(2, 7):
        for _ in range(5):
            omega = rng.normal(size=(200_000, n))
            omega /= np.linalg.norm(omega, axis=1, keepdims=True)
            A = rng.normal(size=(200_000, n, n))
            worst = min(worst, float(psi_batch(-1.0, omega, A + np.swapaxes(A, 1, 2)).min()))
    elapsed = time.perf_counter() - t0
    verdict(2, worst >= -1e-12 and elapsed <= 60, f"min psi={worst:.3e} over 5x10^6 probes {elapsed:.1f}s")


def test_c03_simplex_lemma(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    agree, min_phi, vertices, chain, bary = 0.0, math.inf, 0.0, 0.0, 0.0
    for n in range(2, 9):
        eta = rng.dirichlet(np.ones(n + 1), size=10_000)[:, :n]
        p = phi_product(eta)
        scale = 1.0 + np.abs(p)
        agree = max(agree, float(np.max(np.abs(phi_determinant(eta) - p) / scale)),
                    float(np.max(np.abs(phi_symmetric(eta) - p) / scale)))
        min_phi = min(min_phi, nonnegativity_sweep(n, 10_000, rng).min_phi)
        vertices = max(vertices, float(np.max(np.abs(phi_product(np.eye(n))))))
        pts = rng.dirichlet(np.ones(n + 1), size=100_000)[:, :n]
        c = np.full(n, 1.0 / n)
        for k in range(1, n):
            lhs, r1, r2 = newton_chain_check(pts, k)
            chain = max(chain, float(np.max(lhs - r1)), float(np.max(r1 - r2)))
            b = newton_chain_check(c, k)
            bary = max(bary, abs(b[0] - b[1]) / b[1], abs(b[1] - b[2]) / b[2])
    elapsed = time.perf_counter() - t0
    ok = agree <= 1e-10 and min_phi >= -1e-12 and vertices == 0.0 and chain <= 1e-12 and bary <= 1e-12
    verdict(3, ok and elapsed <= 60, f"agreement={agree:.1e} min phi={min_phi:.1e} vertices={vertices} "
                                     f"chain violation={chain:.1e} barycenter={bary:.1e} {elapsed:.1f}s")


def test_c04_pointwise_identity(verdict):
    t0 = time.perf_counter()
    f = SmoothField("sin(x)*cosh(y)")
    X, Y = np.meshgrid(np.linspace(0.2, 1.2, 11), np.linspace(0.1, 1.0, 11))
    hs = np.array([1e-2, 5e-3, 2.5e-3])
    r = [check_pointwise_identity(f, power_law(3), h, X, Y) for h in hs]
    s = slope(hs, r)
    elapsed = time.perf_counter() - t0
    verdict(4, s >= 1.8 and elapsed <= 30, f"slope={s:.3f} residuals={r[0]:.1e}..{r[-1]:.1e} {elapsed:.1f}s")


def test_c05_disk_flux(verdict):
    t0 = time.perf_counter()
    d = GridDomain.disk(1.0, 1 / 64)
    X, Y = d.mesh()
    fields, worst = [], 0.0
    for p in (1.5, 2.0, 3.0, 4.5):
        u, _ = solve_dirichlet(power_law(p), d, lambda x, y: 1 + 0 * x)
        V = flux(power_law(p), u, quiet=True).values[:, d.inside]
        worst = max(worst, float(np.max(np.hypot(V[0] + X[d.inside] / 2, V[1] + Y[d.inside] / 2))))
        fields.append(V)
    pair = max(float(np.max(np.hypot(*(a - b)))) for a, b in itertools.combinations(fields, 2))
    elapsed = time.perf_counter() - t0
    verdict(5, worst <= 0.05 and pair <= 0.1 and elapsed <= 300,
            f"max|V+x/2|={worst:.4f} pairwise={pair:.4f} {elapsed:.1f}s")


def test_c06_manufactured_laplace(verdict):
    rhs = lambda x, y: 2 * PI**2 * np.sin(PI * x) * np.sin(PI * y)  # noqa: E731
    hs = np.array([1 / 16, 1 / 32, 1 / 64])
    errs = []
    for h in hs:
        d = GridDomain.rectangle(1.0, 1.0, h)
        u, _ = solve_dirichlet(constant(1.0), d, rhs)
        X, Y = d.mesh()
        errs.append(float(np.max(np.abs(u.values - np.sin(PI * X) * np.sin(PI * Y)))))
    s = slope(hs, errs)
    d = GridDomain.rectangle(1.0, 1.0, 1 / 128)
    f = ScalarField.from_function(d, rhs)
    u, rep = solve_dirichlet(constant(1.0), d, f)
    est = global_estimate(constant(1.0), u, f, rep)
    # ||f|| = pi^2, ||grad u|| = pi/sqrt(2), ||D^2 u|| = pi^2
    targets = {"norm_f_l2": PI**2, "norm_V_l2": PI / math.sqrt(2), "norm_gradV_l2": PI**2,
               "norm_V_w12": math.sqrt(PI**2 / 2 + PI**4)}
    rel = {k: abs(getattr(est, k) / v - 1) for k, v in targets.items()}
    verdict(6, s >= 1.8 and max(rel.values()) <= 0.03,
            f"slope={s:.3f} " + " ".join(f"{k}={v:.2%}" for k, v in rel.items()))


def test_c07_coercivity_band(verdict, sweep_rows):
    rows, elapsed = sweep_rows
    ratios = [r.ratio_upper for r in rows]
    stab = experiments.stability(rows)
    structural = all(r.structural_bound_holds for r in rows)
    worst = max(stab, key=stab.get)
    ok = min(ratios) >= 0.05 and max(ratios) <= 20 and max(stab.values()) <= 0.1 and structural
    verdict(7, ok, f"{len(rows)} solves ratio in [{min(ratios):.3f}, {max(ratios):.3f}] "
                   f"max change={stab[worst]:.3f} at {worst} structural={structural} {elapsed:.0f}s")


def test_c08_local_estimate(verdict, sweep_rows):
    rows, _ = sweep_rows
    worst = max(r.local_ratio_max for r in rows)
    d = GridDomain.disk(1.0, 1 / 64)
    f = ScalarField.from_function(d, lambda x, y: 1 + 0 * x)
    u, _ = solve_dirichlet(power_law(3), d, f)
    R = 0.25
    target = math.sqrt(PI * R**4 / 8 + PI * R**2 / 2) / (2 * R * math.sqrt(PI) + 8 * PI * R**2 / 3)
    ratio = local_estimate(power_law(3), u, f, (0.0, 0.0), R).ratio
    rel = abs(ratio / target - 1)
    verdict(8, worst <= 20 and rel <= 0.05, f"max local ratio={worst:.3f} disk R=1/4 {ratio:.4f} "
                                            f"vs {target:.4f} ({rel:.2%})")


def test_c09_gallery(verdict):
    rep = gallery_counterexample(1.4, 6.0, refine=4)
    err = abs(rep.growth_exponent - (1.4 - 1.5))
    ok = rep.flux_variation <= 0.05 and rep.hess_increase >= 0.2 and err <= 0.05
    verdict(9, ok, f"flux variation={rep.flux_variation:.3f} hessian increase={rep.hess_increase:.3f} "
                   f"exponent={rep.growth_exponent:.4f} (target -0.1)")


def test_c10_rearrangement(verdict):
    t0 = time.perf_counter()
    e = np.concatenate([[0.0], np.logspace(-15, 0, 10**5)])
    mid = np.sqrt(e[:-1] * e[1:])
    mid[0] = e[1] / 2
    errs = {}
    for q in (1.5, 2.0, 3.0):
        ws = WeightedSamples(mid ** (-1 / q), np.diff(e))
        errs[q] = abs(marcinkiewicz_norm(ws, q) / (q / (q - 1)) - 1)
    radii = [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625]
    circ = curvature_admissibility(circle(1.0), radii, samples=2**14, centers=128).sup_norm
    spike = curvature_admissibility(spike_curve(0.25), radii, samples=2**16, centers=256).sup_norm
    mono = all(b < a for a, b in zip(circ, circ[1:])) and circ[-1] < 0.1 * circ[0]
    away = min(spike) >= 0.5 * max(spike)
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) <= 0.01 and mono and away and elapsed <= 30
    verdict(10, ok, "marcinkiewicz err " + " ".join(f"q={q}:{v:.1e}" for q, v in errs.items())
            + f" circle {circ[0]:.3f}->{circ[-1]:.4f} spike min={min(spike):.2f} {elapsed:.1f}s")


def test_c11_regularization(verdict):
    t = np.r_[0.0, scan_grid()]
    xi = np.linspace(0.0, 10.0, 100_001)
    bounds, window, decreasing = True, 0.0, True
    for p in (1.5, 3.0):
        sf = power_law(p)
        gaps = []
        for eps in (1e-1, 1e-2, 1e-3):
            r = regularize(sf, eps)
            a = r.a(t)
            bounds &= bool(a.min() >= eps and a.max() <= 1 / eps)
            window = max(window, min(sf.i_a, 0.0) - r.i_a, r.s_a - max(sf.s_a, 0.0))
            gaps.append(float(np.max(np.abs(r.b(xi) - sf.b(xi)))))
        decreasing &= gaps[0] > gaps[1] > gaps[2]
    verdict(11, bounds and window <= 1e-3 and decreasing,
            f"clamp bounds={bounds} index excess={max(window, 0.0):.1e} gaps decreasing={decreasing}")


def test_c12_l1_flux_bound(verdict):
    details, ok = [], True
    d = GridDomain.rectangle(1.0, 1.0, 1 / 32)
    for p, f in ((3.0, lambda x, y: (x < 0.5).astype(float)),
                 (1.5, lambda x, y: ((x - 0.5) ** 2 + (y - 0.5) ** 2 < 0.04).astype(float))):
        seq = approximation_sequence(power_law(p), d, f, k_max=5)
        spread = max(seq.l1_ratios) / min(seq.l1_ratios)
        ok &= spread <= 3
        details.append(f"p={p}: max/min={spread:.3f}")
    verdict(12, ok, " ".join(details))
