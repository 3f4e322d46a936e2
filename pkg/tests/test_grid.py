import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fluxreg.errors import DomainError
from fluxreg.grid import (
    BOUNDARY,
    INTERIOR,
    GridDomain,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    gradient_norm_l2,
    norm_l1,
    norm_l2,
    norm_w12,
    parse_domain,
    quadrature_weights,
    read_field_csv,
    truncate,
    write_field_csv,
)


def square(h):
    return GridDomain.rectangle(1.0, 1.0, h)


def slope(hs, errs):
    return np.polyfit(np.log(hs), np.log(errs), 1)[0]


class TestDomain:
    def test_interior_nodes_have_four_neighbours(self):
        d = GridDomain.disk(1.0, 1 / 16)
        j, i = np.nonzero(d.interior)
        for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            assert np.all(d.inside[j + dj, i + di])

    def test_boundary_nodes_near_analytic_boundary(self):
        h = 1 / 32
        d = GridDomain.disk(1.0, h)
        X, Y = d.mesh()
        r = np.hypot(X[d.boundary], Y[d.boundary])
        assert np.all(1 - r <= h + 1e-12)

    def test_convexity_flags(self):
        assert GridDomain.disk(1.0, 0.1).convex
        assert square(0.1).convex
        assert not GridDomain.annulus(0.5, 1.0, 0.1).convex
        assert GridDomain.annulus(0.5, 1.0, 0.1, convex=True).convex

    def test_square_classification(self):
        d = square(0.25)
        assert d.kind[2, 2] == INTERIOR and d.kind[0, 2] == BOUNDARY
        assert d.inside.all()

    def test_disk_normals_are_radial(self):
        d = GridDomain.disk(1.0, 1 / 16)
        X, Y = d.mesh()
        b = d.boundary
        nx, ny = d.normals[0][b], d.normals[1][b]
        r = np.hypot(X[b], Y[b])
        assert np.allclose(nx, X[b] / r) and np.allclose(ny, Y[b] / r)

    def test_wall_fraction(self):
        d = square(0.25)
        assert np.all(d.wall_fraction(1, 1)[d.inside] >= 0)
        disk = GridDomain.disk(1.0, 0.25)
        # node (0.75, 0): the circle is 0.25 away along +x, a full cell
        i = int(np.argmin(np.abs(disk.x - 0.75)))
        j = int(np.argmin(np.abs(disk.y)))
        assert disk.wall_fraction(1, 1)[j, i] == pytest.approx(1.0)
        # node (0.75, 0.5): the circle is at x = sqrt(0.75)
        j = int(np.argmin(np.abs(disk.y - 0.5)))
        assert disk.wall_fraction(1, 1)[j, i] == pytest.approx((math.sqrt(0.75) - 0.75) / 0.25)

    @pytest.mark.parametrize("spec,shape", [("disk:r=1.0,h=0.015625", "disk"), ("square:side=1,h=0.125", "rectangle"),
                                            ("rectangle:w=2,height=1,h=0.25,x0=-1", "rectangle"),
                                            ("annulus:r0=0.5,r1=1,h=0.1", "annulus")])
    def test_parse(self, spec, shape):
        assert parse_domain(spec).shape == shape

    @pytest.mark.parametrize("spec", ["disk:h=0.1", "hexagon:h=0.1", "disk:r=1,h=0.1,z=3", "square:side=1,h=0.3",
                                      "disk:r=1,h=-0.1", "annulus:r0=1,r1=0.5,h=0.1"])
    def test_parse_errors(self, spec):
        with pytest.raises(DomainError):
            parse_domain(spec)

    def test_mask_file(self, tmp_path):
        p = tmp_path / "m.csv"
        np.savetxt(p, np.ones((4, 5)), delimiter=",", fmt="%d")
        d = parse_domain(f"mask:file={p},h=0.5")
        assert d.grid_shape == (4, 5) and d.interior.sum() == 6

    def test_with_spacing(self):
        d = GridDomain.disk(1.0, 0.25).refined()
        assert d.h == 0.125 and d.shape == "disk"


class TestCalculus:
    def test_gradient_linear(self):
        d = GridDomain.disk(1.0, 1 / 8)
        g = gradient(ScalarField.from_function(d, lambda x, y: x))
        assert np.allclose(g.values[0][d.inside], 1.0)
        assert np.allclose(g.values[1][d.inside], 0.0)

    def test_gradient_quadratic_exact(self):
        d = square(1 / 8)
        g = gradient(ScalarField.from_function(d, lambda x, y: x**2 + y**2))
        X, Y = d.mesh()
        assert np.allclose(g.values[0], 2 * X, atol=1e-12)
        assert np.allclose(g.values[1], 2 * Y, atol=1e-12)

    def test_gradient_second_order(self):
        hs = np.array([1 / 16, 1 / 32, 1 / 64])
        errs = []
        for h in hs:
            d = square(h)
            g = gradient(ScalarField.from_function(d, lambda x, y: np.sin(math.pi * x)))
            X, _ = d.mesh()
            errs.append(np.max(np.abs(g.values[0] - math.pi * np.cos(math.pi * X))))
        assert slope(hs, errs) >= 1.8

    def test_constants(self):
        d = GridDomain.disk(1.0, 1 / 8)
        g = gradient(ScalarField.from_function(d, lambda x, y: 3.0 + 0 * x))
        assert np.all(g.values[:, d.inside] == 0.0)
        V = VectorField.from_function(d, lambda x, y: (2.0 + 0 * x, -1.0 + 0 * x))
        assert np.all(divergence(V).values[d.inside] == 0.0)

    def test_divergence_examples(self):
        d = GridDomain.disk(1.0, 1 / 8)
        assert np.allclose(divergence(VectorField.from_function(d, lambda x, y: (x, y))).nodal(), 2.0)
        assert np.allclose(divergence(VectorField.from_function(d, lambda x, y: (-x / 2, -y / 2))).nodal(), -1.0)

    def test_summation_by_parts(self):
        gaps = []
        hs = np.array([1 / 16, 1 / 32, 1 / 64])
        for h in hs:
            d = square(h)
            u = ScalarField.from_function(d, lambda x, y: np.sin(math.pi * x) * np.sin(math.pi * y))
            V = VectorField.from_function(d, lambda x, y: (x**2, x * y))
            w = quadrature_weights(d)
            lhs = np.sum(w * u.values * divergence(V).values)
            rhs = -np.sum(w * np.sum(gradient(u).values * V.values, axis=0))
            gaps.append(abs(lhs - rhs))
        assert slope(hs, gaps) >= 1.0


class TestTruncate:
    def test_large_level_is_identity(self):
        d = square(0.25)
        u = ScalarField.from_function(d, lambda x, y: x - y)
        assert np.array_equal(truncate(u, 5.0).values, u.values)

    def test_ramp(self):
        d = GridDomain.rectangle(2.0, 0.5, 0.25, origin=(-1.0, 0.0))
        u = ScalarField.from_function(d, lambda x, y: x)
        X, _ = d.mesh()
        assert np.array_equal(truncate(u, 0.5).values, np.clip(X, -0.5, 0.5))

    def test_rejects_level(self):
        with pytest.raises(ValueError):
            truncate(ScalarField.zeros(square(0.5)), 0.0)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)), st.floats(0.01, 5), st.floats(0.01, 5))
    def test_composition_and_lipschitz(self, vals, s, t):
        d = GridDomain.rectangle(1.0, 1.0, 0.25)
        u = ScalarField(d, vals)
        both = truncate(truncate(u, t), s)
        assert np.array_equal(both.values, truncate(u, min(s, t)).values)
        assert np.array_equal(truncate(both, s).values, both.values)
        v = ScalarField(d, vals[::-1])
        assert np.all(np.abs(truncate(u, t).values - truncate(v, t).values) <= np.abs(vals - vals[::-1]) + 1e-15)


class TestNorms:
    def test_unit_square_area(self):
        h = 1 / 16
        one = ScalarField.from_function(square(h), lambda x, y: 1.0 + 0 * x)
        assert abs(norm_l1(one) - 1.0) <= 2 * h

    def test_disk_l2_of_radius(self):
        target = math.sqrt(math.pi / 2)
        gaps = []
        for h in (1 / 16, 1 / 32, 1 / 64, 1 / 128):
            d = GridDomain.disk(1.0, h)
            f = ScalarField.from_function(d, lambda x, y: np.hypot(x, y))
            gaps.append(abs(norm_l2(f) - target))
        assert gaps[-1] < 0.03
        assert gaps[-1] < gaps[0]

    def test_w12_disk_flux(self):
        target = math.sqrt(math.pi / 8 + math.pi / 2)
        errs = []
        for h in (1 / 16, 1 / 32, 1 / 64):
            d = GridDomain.disk(1.0, h)
            errs.append(abs(norm_w12(VectorField.from_function(d, lambda x, y: (-x / 2, -y / 2))) - target))
        assert errs[-1] < 0.03 * target
        assert errs[2] < errs[1] < errs[0]

    def test_w12_of_constant_is_l2(self):
        d = GridDomain.disk(1.0, 1 / 16)
        V = VectorField.from_function(d, lambda x, y: (1.0 + 0 * x, 2.0 + 0 * x))
        assert gradient_norm_l2(V) == 0.0
        assert norm_w12(V) == pytest.approx(norm_l2(V))

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (2, 6, 6), elements=st.floats(-5, 5)), st.floats(-4, 4))
    def test_homogeneity_and_ordering(self, vals, s):
        d = GridDomain.rectangle(1.0, 1.0, 0.2)
        V = VectorField(d, vals)
        W = VectorField(d, s * vals)
        assert norm_w12(W) == pytest.approx(abs(s) * norm_w12(V), rel=1e-9, abs=1e-12)
        assert norm_w12(V) >= norm_l2(V)


class TestCsv:
    def test_roundtrip_scalar_and_vector(self, tmp_path):
        d = GridDomain.disk(1.0, 0.25)
        u = ScalarField.from_function(d, lambda x, y: np.exp(x) * y)
        V = VectorField.from_function(d, lambda x, y: (x, -y))
        write_field_csv(tmp_path / "u.csv", u, footer="# seed=1 version=x\n")
        write_field_csv(tmp_path / "v.csv", V)
        assert (tmp_path / "u.csv").read_text().splitlines()[-1] == "# seed=1 version=x"
        assert np.array_equal(read_field_csv(tmp_path / "u.csv", d).nodal(), u.nodal())
        assert np.array_equal(read_field_csv(tmp_path / "v.csv", d).values[:, d.inside], V.values[:, d.inside])

    def test_incomplete_file(self, tmp_path):
        d = square(0.5)
        (tmp_path / "f.csv").write_text("x,y,value\n0.0,0.0,1.0\n")
        with pytest.raises(DomainError):
            read_field_csv(tmp_path / "f.csv", d)


def test_field_validation():
    d = square(0.5)
    with pytest.raises(DomainError):
        ScalarField(d, np.zeros((2, 2)))
    with pytest.raises(DomainError):
        ScalarField(d, np.full(d.grid_shape, np.inf))
