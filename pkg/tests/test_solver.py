import math

import numpy as np
import pytest

from fluxreg.errors import IncompatibleData
from fluxreg.estimates import flux
from fluxreg.grid import GridDomain, ScalarField, norm_l1
from fluxreg.solver import (
    SolveOptions,
    approximation_sequence,
    mollify,
    solve_dirichlet,
    solve_neumann,
)
from fluxreg.structure import constant, custom, power_law

PI = math.pi


def square(h):
    return GridDomain.rectangle(1.0, 1.0, h)


def slope(hs, errs):
    return np.polyfit(np.log(hs), np.log(errs), 1)[0]


def sqrt_structure():
    # a(t) = sqrt(1 + t^2): non-degenerate, i_a = 0, s_a = 1
    return custom(lambda t: np.sqrt(1 + np.asarray(t) ** 2), lambda t: np.asarray(t) / np.sqrt(1 + np.asarray(t) ** 2),
                  name="sqrt1pt2")


class TestLaplace:
    def test_manufactured_second_order(self):
        hs = np.array([1 / 16, 1 / 32, 1 / 64])
        errs = []
        for h in hs:
            d = square(h)
            u, rep = solve_dirichlet(constant(1.0), d, lambda x, y: 2 * PI**2 * np.sin(PI * x) * np.sin(PI * y))
            X, Y = d.mesh()
            errs.append(np.max(np.abs(u.values - np.sin(PI * X) * np.sin(PI * Y))[d.inside]))
            assert rep.gradient_norm <= rep.tolerance
        assert slope(hs, errs) >= 1.8

    def test_five_point_stencil(self):
        # for a = 1 on the square the scheme is the 5-point Laplacian with lumped mass h^2
        h = 1 / 16
        d = square(h)
        f = lambda x, y: 1 + x * y  # noqa: E731
        u, _ = solve_dirichlet(constant(1.0), d, f, SolveOptions.down_to(0))
        U = u.values
        lap = (4 * U[1:-1, 1:-1] - U[2:, 1:-1] - U[:-2, 1:-1] - U[1:-1, 2:] - U[1:-1, :-2]) / h**2
        X, Y = d.mesh()
        assert np.allclose(lap, f(X, Y)[1:-1, 1:-1], atol=1e-7)

    @pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
    def test_zero_data_zero_solution(self, bc):
        solve = solve_dirichlet if bc == "dirichlet" else solve_neumann
        d = GridDomain.disk(1.0, 1 / 16)
        u, rep = solve(power_law(3), d, np.zeros(d.grid_shape))
        assert np.all(u.values[d.inside] == 0.0)
        assert all(s.iterations == 0 for s in rep.stages)


class TestDirichlet:
    @pytest.mark.parametrize("p", [1.5, 3.0])
    def test_disk_flux_is_p_independent(self, p):
        d = GridDomain.disk(1.0, 1 / 32)
        u, _ = solve_dirichlet(power_law(p), d, np.ones(d.grid_shape))
        V = flux(power_law(p), u, quiet=True)
        X, Y = d.mesh()
        err = np.hypot(V.values[0] + X / 2, V.values[1] + Y / 2)[d.inside]
        assert err.max() <= 0.05

    def test_nonnegative_for_nonnegative_data(self):
        d = GridDomain.disk(1.0, 1 / 16)
        for sf in (power_law(1.5), power_law(4.5)):
            u, _ = solve_dirichlet(sf, d, lambda x, y: 1 + x * y)
            assert u.values[d.inside].min() >= -1e-8

    def test_energy_non_increasing(self):
        d = square(1 / 16)
        _, rep = solve_dirichlet(power_law(3), d, lambda x, y: np.sin(3 * x) + 1)
        for st in rep.stages:
            e = np.array(st.energies)
            assert np.all(np.diff(e) <= 1e-12 * (1 + np.abs(e[:-1])))

    @pytest.mark.parametrize("sf,f", [
        (constant(1.0), lambda x, y: 2 * PI**2 * np.sin(PI * x) * np.sin(PI * y)),
        (sqrt_structure(), lambda x, y: 2 * PI**2 * np.sin(PI * x) * np.sin(PI * y)),
        (sqrt_structure(), lambda x, y: 1 + x * y),
    ])
    def test_residual_decays_under_refinement(self, sf, f):
        res = []
        for h in (1 / 16, 1 / 32, 1 / 64):
            _, rep = solve_dirichlet(sf, square(h), f)
            res.append(rep.residual_l2)
        for a, b in zip(res, res[1:]):
            assert b / a <= 0.6

    def test_degenerate_disk_residual_decreases(self):
        # degenerate operators on curved domains converge more slowly; only monotone decay is checked
        res = []
        for h in (1 / 16, 1 / 32, 1 / 64):
            _, rep = solve_dirichlet(power_law(3), GridDomain.disk(1.0, h), lambda x, y: 1 + 0 * x)
            res.append(rep.residual_l2)
        assert res[2] < res[1] < res[0]


class TestNeumann:
    def test_cosine_second_order(self):
        hs = np.array([1 / 16, 1 / 32, 1 / 64])
        errs = []
        for h in hs:
            d = square(h)
            u, _ = solve_neumann(constant(1.0), d, lambda x, y: PI**2 * np.cos(PI * x))
            X, _ = d.mesh()
            errs.append(np.max(np.abs(u.values - np.cos(PI * X))))
        assert slope(hs, errs) >= 1.8

    def test_incompatible_data(self):
        with pytest.raises(IncompatibleData):
            solve_neumann(constant(1.0), square(1 / 8), lambda x, y: 1 + 0 * x)

    def test_zero_mean(self):
        d = square(1 / 16)
        u, _ = solve_neumann(power_law(3), d, lambda x, y: np.cos(PI * x) * np.cos(PI * y))
        assert abs(np.mean(u.values)) <= 1e-3

    def test_p3_residual_decays(self):
        res = []
        for h in (1 / 16, 1 / 32, 1 / 64):
            _, rep = solve_neumann(power_law(3), square(h), lambda x, y: np.cos(PI * x) * np.cos(PI * y))
            res.append(rep.residual_l2)
        for a, b in zip(res, res[1:]):
            assert b / a <= 0.6

    def test_disk_residual_decreases(self):
        res = []
        for h in (1 / 16, 1 / 32, 1 / 64):
            _, rep = solve_neumann(power_law(3), GridDomain.disk(1.0, h), lambda x, y: x * (1 + x**2 + y**2))
            res.append(rep.residual_l2)
        assert res[2] < res[1] < res[0]


class TestOptions:
    def test_down_to(self):
        assert SolveOptions.down_to(1e-4).epsilon_schedule == (1e-1, 1e-2, 1e-3, 1e-4)
        assert SolveOptions.down_to(0.05).epsilon_schedule == (0.1, 0.05)
        assert SolveOptions.down_to(0).epsilon_schedule == ()

    @pytest.mark.parametrize("sched", [(0.1, 0.2), (1.5,), (0.0,), (0.1, 0.1)])
    def test_validation(self, sched):
        with pytest.raises(ValueError):
            SolveOptions(epsilon_schedule=sched)

    def test_report_dict(self):
        _, rep = solve_dirichlet(constant(1.0), square(1 / 8), lambda x, y: 1 + 0 * x)
        d = rep.to_dict()
        assert d["bc"] == "dirichlet" and len(d["stages"]) == 4
        assert d["gradient_norm"] == rep.gradient_norm


class TestApproximation:
    def test_mollify_identity_below_h(self):
        d = square(1 / 16)
        f = ScalarField.from_function(d, lambda x, y: np.sign(x - 0.5))
        assert np.array_equal(mollify(f, d.h / 2).values, f.values)

    def test_mollify_preserves_constants(self):
        d = GridDomain.disk(1.0, 1 / 16)
        f = ScalarField.from_function(d, lambda x, y: 2.0 + 0 * x)
        assert np.allclose(mollify(f, 0.3).values[d.inside], 2.0)

    def test_smooth_data_stabilizes(self):
        d = square(1 / 16)
        seq = approximation_sequence(constant(1.0), d, lambda x, y: 1 + 0 * x, k_max=6)
        # once the width drops below h the data and solutions no longer change
        fine = [k for k, s in enumerate(seq.sigmas) if s < d.h]
        assert fine and all(seq.u_gaps[k] == 0.0 for k in fine)

    def test_rough_data(self):
        d = square(1 / 32)
        f = lambda x, y: (x < 0.5).astype(float)  # noqa: E731
        seq = approximation_sequence(power_law(3), d, f, k_max=5)
        gaps = seq.flux_gaps[:-1]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert max(seq.l1_ratios) / min(seq.l1_ratios) <= 3
        for fk, V, r in zip(seq.rhs, seq.fluxes, seq.l1_ratios):
            assert r == pytest.approx(norm_l1(V) / norm_l1(fk))
