"""Two-dimensional Cartesian grids, nodal fields and discrete calculus.

Nodes are stored as 2D arrays indexed ``[j, i]`` with ``x = x[i]`` and
``y = y[j]``.  A node is *in* the domain if its position lies inside the
analytic shape; in-domain nodes with all four axis neighbours in the domain
are ``INTERIOR``, the others ``BOUNDARY``.  Exterior values are stored as
NaN and never read by the stencils.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

EXTERIOR, BOUNDARY, INTERIOR = 0, 1, 2


@dataclass(frozen=True, eq=False)
class GridDomain:
    shape: str
    params: dict
    h: float
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    kind: np.ndarray = field(repr=False)
    convex: bool
    normals: np.ndarray = field(repr=False)

    @property
    def inside(self) -> np.ndarray:
        return self.kind != EXTERIOR

    @property
    def interior(self) -> np.ndarray:
        return self.kind == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.kind == BOUNDARY

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.kind.shape

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y)

    @property
    def diameter(self) -> float:
        X, Y = self.mesh()
        xs, ys = X[self.inside], Y[self.inside]
        return float(math.hypot(xs.max() - xs.min(), ys.max() - ys.min()))

    def describe(self) -> str:
        params = ",".join(f"{k}={v:g}" for k, v in self.params.items() if not isinstance(v, np.ndarray))
        return f"{self.shape}:{params}" if params else self.shape

    def wall_fraction(self, axis: int, sign: int) -> np.ndarray:
        """Distance (in units of ``h``) from each node to the analytic boundary
        along direction ``sign * e_axis`` (axis 1 = x, 0 = y).

        The value is 1 where the neighbour in that direction is in the domain
        and lies in ``[0, 1]`` where it is not.  Mask domains have no analytic
        boundary and report 1 everywhere (the exterior neighbour itself is the
        wall).
        """
        inside = self.inside
        nbr = _shift(inside, sign, axis, False)
        frac = np.ones(self.grid_shape)
        missing = inside & ~nbr
        if not np.any(missing):
            return frac
        X, Y = self.mesh()
        xs, ys = X[missing], Y[missing]
        p = self.params
        if self.shape == "rectangle":
            if axis == 1:
                wall = p["x0"] + p["w"] if sign > 0 else p["x0"]
                dist = np.abs(wall - xs)
            else:
                wall = p["y0"] + p["height"] if sign > 0 else p["y0"]
                dist = np.abs(wall - ys)
        elif self.shape in ("disk", "annulus"):
            # first crossing of the ray with any circle of the shape
            radii = [p["r"]] if self.shape == "disk" else [p["r0"], p["r1"]]
            along = (xs - p["cx"]) if axis == 1 else (ys - p["cy"])
            across = (ys - p["cy"]) if axis == 1 else (xs - p["cx"])
            along = sign * along
            dist = np.full(xs.shape, self.h)
            for r in radii:
                disc = r * r - across * across
                root = np.sqrt(np.maximum(disc, 0.0))
                for s in (-root - along, root - along):
                    ok = (disc >= 0) & (s >= -1e-12 * self.h)
                    dist = np.where(ok, np.minimum(dist, np.maximum(s, 0.0)), dist)
        else:
            dist = np.full(xs.shape, self.h)
        frac[missing] = np.clip(dist / self.h, 0.0, 1.0)
        return frac

    def refined(self, factor: int = 2) -> GridDomain:
        """Same analytic shape with spacing ``h / factor``."""
        return self.with_spacing(self.h / factor)

    def with_spacing(self, h: float) -> GridDomain:
        p = dict(self.params)
        if self.shape == "rectangle":
            return GridDomain.rectangle(p["w"], p["height"], h, origin=(p["x0"], p["y0"]))
        if self.shape == "disk":
            return GridDomain.disk(p["r"], h, center=(p["cx"], p["cy"]))
        if self.shape == "annulus":
            return GridDomain.annulus(p["r0"], p["r1"], h, center=(p["cx"], p["cy"]))
        raise DomainError("mask domains cannot be refined")

    @classmethod
    def _build(cls, shape, params, h, x, y, inside, convex, normal_fn=None):
        if h <= 0:
            raise DomainError("spacing must be positive")
        inside = np.asarray(inside, dtype=bool)
        padded = np.pad(inside, 1, constant_values=False)
        all_nbrs = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
        kind = np.full(inside.shape, EXTERIOR, dtype=np.int8)
        kind[inside] = BOUNDARY
        kind[inside & all_nbrs] = INTERIOR
        normals = np.full((2,) + inside.shape, np.nan)
        bnd = kind == BOUNDARY
        if normal_fn is not None:
            X, Y = np.meshgrid(x, y)
            nx, ny = normal_fn(X[bnd], Y[bnd])
        else:
            # outward direction = sum of directions towards missing neighbours
            nx = (~padded[1:-1, 2:]).astype(float) - (~padded[1:-1, :-2])
            ny = (~padded[2:, 1:-1]).astype(float) - (~padded[:-2, 1:-1])
            nx, ny = nx[bnd], ny[bnd]
        norm = np.hypot(nx, ny)
        norm[norm == 0] = 1.0
        normals[0][bnd] = nx / norm
        normals[1][bnd] = ny / norm
        return cls(shape, params, float(h), np.asarray(x, float), np.asarray(y, float), kind, convex, normals)

    @classmethod
    def rectangle(cls, w: float, height: float, h: float, origin=(0.0, 0.0)) -> GridDomain:
        nx, ny = w / h, height / h
        if abs(nx - round(nx)) > 1e-9 * max(1, nx) or abs(ny - round(ny)) > 1e-9 * max(1, ny):
            raise DomainError("rectangle sides must be integer multiples of h")
        x = origin[0] + h * np.arange(round(nx) + 1)
        y = origin[1] + h * np.arange(round(ny) + 1)
        params = {"w": w, "height": height, "x0": origin[0], "y0": origin[1]}
        return cls._build("rectangle", params, h, x, y, np.ones((y.size, x.size), bool), True)

    @classmethod
    def disk(cls, r: float, h: float, center=(0.0, 0.0)) -> GridDomain:
        m = int(math.floor(r / h + 1e-9))
        x = center[0] + h * np.arange(-m, m + 1)
        y = center[1] + h * np.arange(-m, m + 1)
        X, Y = np.meshgrid(x, y)
        d2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
        inside = d2 <= r * r * (1 + 1e-12)

        def normal(xs, ys):
            return xs - center[0], ys - center[1]

        params = {"r": r, "cx": center[0], "cy": center[1]}
        return cls._build("disk", params, h, x, y, inside, True, normal)

    @classmethod
    def annulus(cls, r0: float, r1: float, h: float, center=(0.0, 0.0), convex: bool = False) -> GridDomain:
        if not 0 < r0 < r1:
            raise DomainError("annulus needs 0 < r0 < r1")
        m = int(math.floor(r1 / h + 1e-9))
        x = center[0] + h * np.arange(-m, m + 1)
        y = center[1] + h * np.arange(-m, m + 1)
        X, Y = np.meshgrid(x, y)
        d2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
        inside = (d2 <= r1 * r1 * (1 + 1e-12)) & (d2 >= r0 * r0 * (1 - 1e-12))
        mid = 0.25 * (r0 + r1) ** 2

        def normal(xs, ys):
            dx, dy = xs - center[0], ys - center[1]
            sign = np.where(dx * dx + dy * dy >= mid, 1.0, -1.0)
            return sign * dx, sign * dy

        params = {"r0": r0, "r1": r1, "cx": center[0], "cy": center[1]}
        return cls._build("annulus", params, h, x, y, inside, convex, normal)

    @classmethod
    def mask(cls, bitmap, h: float, origin=(0.0, 0.0), convex: bool = False) -> GridDomain:
        bitmap = np.asarray(bitmap, dtype=bool)
        x = origin[0] + h * np.arange(bitmap.shape[1])
        y = origin[1] + h * np.arange(bitmap.shape[0])
        return cls._build("mask", {"x0": origin[0], "y0": origin[1]}, h, x, y, bitmap, convex)


def parse_domain(spec: str) -> GridDomain:
    """``disk:r=1.0,h=0.015625``, ``rectangle:w=1,height=1,h=...[,x0=..,y0=..]``,
    ``square:side=1,h=...``, ``annulus:r0=..,r1=..,h=...`` or ``mask:file=...,h=...``."""
    kind, _, rest = spec.strip().partition(":")
    kw: dict[str, str] = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise DomainError(f"malformed domain parameter {item!r}")
        kw[key.strip()] = value.strip()

    def num(key, default=None):
        if key not in kw:
            if default is None:
                raise DomainError(f"domain {kind!r} needs parameter {key!r}")
            return default
        return float(kw.pop(key))

    kind = kind.strip().lower()
    if kind == "disk":
        d = GridDomain.disk(num("r"), num("h"), center=(num("cx", 0.0), num("cy", 0.0)))
    elif kind == "square":
        side = num("side", 1.0)
        d = GridDomain.rectangle(side, side, num("h"), origin=(num("x0", 0.0), num("y0", 0.0)))
    elif kind == "rectangle":
        d = GridDomain.rectangle(num("w"), num("height"), num("h"), origin=(num("x0", 0.0), num("y0", 0.0)))
    elif kind == "annulus":
        d = GridDomain.annulus(num("r0"), num("r1"), num("h"))
    elif kind == "mask":
        path = kw.pop("file", None)
        if path is None:
            raise DomainError("mask domain needs file=<csv of 0/1 rows>")
        bitmap = np.loadtxt(path, delimiter=",", ndmin=2)
        d = GridDomain.mask(bitmap, num("h"), origin=(num("x0", 0.0), num("y0", 0.0)))
    else:
        raise DomainError(f"unknown domain kind {kind!r}")
    if kw:
        raise DomainError(f"unknown domain parameters {sorted(kw)}")
    return d


@dataclass(eq=False)
class ScalarField:
    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.domain.grid_shape:
            raise DomainError(f"field shape {v.shape} does not match grid {self.domain.grid_shape}")
        v[~self.domain.inside] = np.nan
        if not np.all(np.isfinite(v[self.domain.inside])):
            raise DomainError("field values must be finite on the domain")
        self.values = v

    @classmethod
    def from_function(cls, domain: GridDomain, fn) -> ScalarField:
        X, Y = domain.mesh()
        vals = np.zeros(domain.grid_shape)
        inside = domain.inside
        vals[inside] = np.broadcast_to(fn(X[inside], Y[inside]), X[inside].shape)
        return cls(domain, vals)

    @classmethod
    def zeros(cls, domain: GridDomain) -> ScalarField:
        return cls(domain, np.zeros(domain.grid_shape))

    def nodal(self) -> np.ndarray:
        """Values at in-domain nodes, in row-major order."""
        return self.values[self.domain.inside]


@dataclass(eq=False)
class VectorField:
    domain: GridDomain
    values: np.ndarray  # (2, ny, nx)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (2,) + self.domain.grid_shape:
            raise DomainError("vector field must have shape (2, ny, nx)")
        v[:, ~self.domain.inside] = np.nan
        if not np.all(np.isfinite(v[:, self.domain.inside])):
            raise DomainError("field values must be finite on the domain")
        self.values = v

    @classmethod
    def from_function(cls, domain: GridDomain, fn) -> VectorField:
        X, Y = domain.mesh()
        inside = domain.inside
        vals = np.zeros((2,) + domain.grid_shape)
        fx, fy = fn(X[inside], Y[inside])
        vals[0][inside] = np.broadcast_to(fx, X[inside].shape)
        vals[1][inside] = np.broadcast_to(fy, X[inside].shape)
        return cls(domain, vals)

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.domain, self.values[k])

    def magnitude(self) -> ScalarField:
        return ScalarField(self.domain, np.hypot(self.values[0], self.values[1]))


def _shift(a, d, axis, fill):
    """``out[k] = a[k + d]`` along ``axis``; out-of-range entries get ``fill``."""
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if d > 0:
        src[axis], dst[axis] = slice(d, None), slice(None, -d)
    else:
        src[axis], dst[axis] = slice(None, d), slice(-d, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _derivative(values, inside, h, axis):
    """Partial derivative along ``axis`` (1 = x, 0 = y) of nodal values.

    Centered where both neighbours exist, otherwise second-order one-sided,
    otherwise first-order one-sided.  Nodes with no neighbour along ``axis``
    (tips of curved domains) copy the value of an adjacent node across the
    other axis, and get zero only if none exists.
    """
    v = np.where(inside, values, 0.0)
    m = {d: _shift(inside, d, axis, False) for d in (-2, -1, 1, 2)}
    s = {d: _shift(v, d, axis, 0.0) for d in (-2, -1, 1, 2)}
    out = np.zeros_like(v)
    done = ~inside
    rules = [
        (m[1] & m[-1], (s[1] - s[-1]) / (2 * h)),
        (m[1] & m[2], (-3 * v + 4 * s[1] - s[2]) / (2 * h)),
        (m[-1] & m[-2], (3 * v - 4 * s[-1] + s[-2]) / (2 * h)),
        (m[1], (s[1] - v) / h),
        (m[-1], (v - s[-1]) / h),
    ]
    for cond, val in rules:
        sel = cond & ~done
        out[sel] = val[sel]
        done |= sel
    known = done & inside
    other = 1 - axis
    for d in (1, -1):
        src = _shift(known, d, other, False)
        sel = inside & ~known & src
        out[sel] = _shift(out, d, other, 0.0)[sel]
        known = known | sel
    return out


def gradient(u: ScalarField) -> VectorField:
    d = u.domain
    inside = d.inside
    gx = _derivative(u.values, inside, d.h, axis=1)
    gy = _derivative(u.values, inside, d.h, axis=0)
    return VectorField(d, np.stack([gx, gy]))


def divergence(V: VectorField) -> ScalarField:
    d = V.domain
    inside = d.inside
    div = _derivative(V.values[0], inside, d.h, axis=1) + _derivative(V.values[1], inside, d.h, axis=0)
    return ScalarField(d, div)


def jacobian(V: VectorField) -> np.ndarray:
    """``J[k, l] = d V_k / d x_l`` as an array of shape ``(2, 2, ny, nx)``."""
    d = V.domain
    out = np.zeros((2, 2) + d.grid_shape)
    for k in range(2):
        out[k, 0] = _derivative(V.values[k], d.inside, d.h, axis=1)
        out[k, 1] = _derivative(V.values[k], d.inside, d.h, axis=0)
    return out


def truncate(u: ScalarField, t: float) -> ScalarField:
    if not t > 0:
        raise ValueError("truncation level must be positive")
    return ScalarField(u.domain, np.clip(u.values, -t, t))


def quadrature_weights(domain: GridDomain) -> np.ndarray:
    """``h^2`` on interior nodes, ``h^2 / 2`` on boundary nodes, 0 outside."""
    w = np.zeros(domain.grid_shape)
    w[domain.interior] = domain.h**2
    w[domain.boundary] = 0.5 * domain.h**2
    return w


def _values(field_or_array):
    if isinstance(field_or_array, (ScalarField, VectorField)):
        return field_or_array.domain, field_or_array.values
    raise TypeError("expected a ScalarField or VectorField")


def _pointwise_magnitude(values):
    if values.ndim == 3:
        return np.sqrt(np.sum(values * values, axis=0))
    return np.abs(values)


def norm_lq(fld, q: float, region: np.ndarray | None = None) -> float:
    domain, values = _values(fld)
    w = quadrature_weights(domain)
    if region is not None:
        w = np.where(region, w, 0.0)
    mag = np.where(domain.inside, _pointwise_magnitude(np.nan_to_num(values)), 0.0)
    return float(np.sum(w * mag**q) ** (1.0 / q))


def norm_l2(fld, region: np.ndarray | None = None) -> float:
    return norm_lq(fld, 2.0, region)


def norm_l1(fld, region: np.ndarray | None = None) -> float:
    return norm_lq(fld, 1.0, region)


def gradient_norm_l2(V: VectorField, region: np.ndarray | None = None) -> float:
    """``(sum_k |grad V_k|^2)^(1/2)`` in L^2 over interior nodes (weight ``h^2``)."""
    d = V.domain
    J = jacobian(V)
    mask = d.interior if region is None else d.interior & region
    return float(math.sqrt(np.sum(J[:, :, mask] ** 2) * d.h**2))


def norm_w12(V: VectorField, region: np.ndarray | None = None) -> float:
    return math.hypot(norm_l2(V, region), gradient_norm_l2(V, region))


def write_field_csv(path, fld, footer: str = "") -> None:
    """Write in-domain nodes as ``x, y, value[, value2]`` rows, then ``footer`` verbatim."""
    domain, values = _values(fld)
    X, Y = domain.mesh()
    inside = domain.inside
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if values.ndim == 3:
            w.writerow(["x", "y", "value", "value2"])
            rows = zip(X[inside], Y[inside], values[0][inside], values[1][inside])
        else:
            w.writerow(["x", "y", "value"])
            rows = zip(X[inside], Y[inside], values[inside])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
        fh.write(footer)


def read_field_csv(path, domain: GridDomain):
    """Read a CSV written by :func:`write_field_csv` onto ``domain``'s nodes."""
    data = np.genfromtxt(path, delimiter=",", names=True, comments="#")
    names = data.dtype.names
    i = np.rint((data["x"] - domain.x[0]) / domain.h).astype(int)
    j = np.rint((data["y"] - domain.y[0]) / domain.h).astype(int)
    ny, nx = domain.grid_shape
    if np.any((i < 0) | (i >= nx) | (j < 0) | (j >= ny)):
        raise DomainError("CSV nodes fall outside the grid")
    if not np.all(domain.inside[j, i]):
        raise DomainError("CSV contains exterior nodes")
    seen = np.zeros(domain.grid_shape, bool)
    seen[j, i] = True
    if not np.array_equal(seen, domain.inside):
        raise DomainError("CSV does not cover every in-domain node")
    if "value2" in names:
        vals = np.zeros((2,) + domain.grid_shape)
        vals[0][j, i] = data["value"]
        vals[1][j, i] = data["value2"]
        return VectorField(domain, vals)
    vals = np.zeros(domain.grid_shape)
    vals[j, i] = data["value"]
    return ScalarField(domain, vals)


def neighbour_mask(inside: np.ndarray, axis: int, sign: int) -> np.ndarray:
    """True where the neighbour at ``sign`` along ``axis`` (1 = x, 0 = y) is in the domain."""
    return _shift(inside, sign, axis, False)
