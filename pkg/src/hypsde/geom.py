"""Closed-form geometry of H^2 and H^3 in the hyperboloid model.

Points live on the upper sheet of <x,x> = -1 in Minkowski space R^{1,m}
with signature (-,+,...,+).  All maps (exp, log, transport, Busemann,
Gromov products) are branch-free closed forms, which keeps them stable
far from the origin.  Array-level helpers are vectorized over leading
axes; the thin typed wrappers below carry single points.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateInputError, DomainError

#: renormalization tolerance for the sheet / null-cone constraints
RENORM_TOL = 1e-9


# ---------------------------------------------------------------------------
# array-level core (vectorized; used by the simulation kernels)
# ---------------------------------------------------------------------------

def mdot(u, v):
    """Minkowski inner product, signature (-,+,...,+), over the last axis."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.sum(u[..., 1:] * v[..., 1:], axis=-1) - u[..., 0] * v[..., 0]


def normalize_point(x):
    """Project onto the upper sheet <x,x> = -1."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(-mdot(x, x))
    return x / s[..., None]


def normalize_ray(p):
    """Scale a future-pointing null vector so the time component is 1."""
    p = np.asarray(p, dtype=float)
    return p / p[..., 0:1]


def project_tangent(x, w):
    """Tangential part of ambient w at the point x (uses <x,x> = -1)."""
    return w + mdot(w, x)[..., None] * x


def dist(x, y):
    """Hyperbolic distance; the arccosh argument is clamped to absorb roundoff."""
    c = -mdot(x, y)
    return np.arccosh(np.maximum(c, 1.0))


def exp(x, v, t):
    """Geodesic flow from x with unit tangent v for time t."""
    t = np.asarray(t, dtype=float)[..., None]
    return np.cosh(t) * x + np.sinh(t) * v


def log(x, y):
    """Unit tangent at x pointing to y; undefined at coincident points."""
    d = dist(x, y)
    sh = np.sinh(d)
    u = (y - np.cosh(d)[..., None] * x) / sh[..., None]
    return u, d


def transport(v, x, u, r):
    """Parallel transport of tangent v along the geodesic exp(x, u, .) by r.

    u must be the unit tangent of the transport geodesic at x.
    """
    a = mdot(v, u)[..., None]
    r = np.asarray(r, dtype=float)[..., None]
    return v + a * (np.sinh(r) * x + (np.cosh(r) - 1.0) * u)


def spray(x, p):
    """Unit tangent at x pointing at the boundary ray p (any scale of p)."""
    s = -mdot(x, p)
    return p / s[..., None] - x


def ray_of(x, v):
    """Null direction of the geodesic from x with unit tangent v."""
    return normalize_ray(x + v)


def busemann_raw(x, p, z):
    """Busemann value b_{(x,p)}(z); p is rescaled internally so b(x) = 0."""
    s = -mdot(x, p)
    return np.log(-mdot(z, p) / s)


# ---------------------------------------------------------------------------
# typed wrappers
# ---------------------------------------------------------------------------

class Point:
    """Point on the upper hyperboloid sheet."""

    __slots__ = ("x",)

    def __init__(self, coords, renormalize: bool = True):
        x = np.asarray(coords, dtype=float)
        if x.ndim != 1:
            raise ValueError("Point holds a single (m+1)-vector")
        q = mdot(x, x)
        # the constraint is only testable down to the cancellation floor of
        # <x,x>, which grows like e^{2r} eps at radius r (times the
        # conditioning of whatever op produced the coordinates)
        floor = 1e-10 * (1.0 + x[0] * x[0])
        if renormalize:
            if abs(q + 1.0) > max(1e-6, floor):
                raise ValueError(f"not near the sheet: <x,x> = {q}")
            if abs(q + 1.0) <= 0.01:
                x = x / math.sqrt(-q)
        elif abs(q + 1.0) > max(RENORM_TOL, floor):
            raise ValueError(f"sheet constraint violated: <x,x> = {q}")
        if x[0] <= 0:
            raise ValueError("lower-sheet point")
        self.x = x

    @property
    def dim(self) -> int:
        return self.x.shape[0] - 1

    def __repr__(self):
        return f"Point({self.x.tolist()})"


class Tangent:
    """Tangent vector at a base point; <base, vec> = 0."""

    __slots__ = ("base", "v")

    def __init__(self, base: Point, vec, project: bool = True):
        v = np.asarray(vec, dtype=float)
        if project:
            v = project_tangent(base.x, v)
        elif abs(mdot(base.x, v)) > RENORM_TOL:
            raise ValueError("vector not tangent at base")
        self.base = base
        self.v = v

    def norm(self) -> float:
        return float(np.sqrt(max(mdot(self.v, self.v), 0.0)))

    def unit(self) -> "Tangent":
        return Tangent(self.base, self.v / self.norm(), project=False)

    def __repr__(self):
        return f"Tangent(base={self.base.x.tolist()}, v={self.v.tolist()})"


class Boundary:
    """Boundary point, stored as a future null ray with time component 1."""

    __slots__ = ("p",)

    def __init__(self, ray):
        p = np.asarray(ray, dtype=float)
        if p[0] <= 0:
            raise ValueError("ray must be future-pointing")
        p = normalize_ray(p)
        q = mdot(p, p)
        if abs(q) > 1e-6:
            raise ValueError(f"not a null direction: <p,p> = {q}")
        # re-project onto the cone: rescale the spatial part
        sp = np.linalg.norm(p[1:])
        p = p.copy()
        p[1:] /= sp
        self.p = p

    def __repr__(self):
        return f"Boundary({self.p.tolist()})"


class LeafState:
    """State v = (x, xi): a point together with a boundary point."""

    __slots__ = ("point", "xi")

    def __init__(self, point: Point, xi: Boundary):
        self.point = point
        self.xi = xi

    def direction(self) -> Tangent:
        return direction_to(self.point, self.xi)

    def __repr__(self):
        return f"LeafState({self.point!r}, {self.xi!r})"


def origin(m: int) -> Point:
    e = np.zeros(m + 1)
    e[0] = 1.0
    return Point(e, renormalize=False)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def exp_map(x: Point, v: Tangent, t: float) -> Point:
    """Point at arclength t along the geodesic from x with unit tangent v."""
    if v.base is not x and not np.array_equal(v.base.x, x.x):
        raise ValueError("tangent vector based at a different point")
    if abs(v.norm() - 1.0) > 1e-8:
        raise ValueError("exp_map expects a unit tangent")
    return Point(exp(x.x, v.v, float(t)))


def distance(x: Point, y: Point) -> float:
    return float(dist(x.x, y.x))


def log_map(x: Point, y: Point) -> Tangent:
    """Unit tangent u at x with exp_map(x, u, distance(x, y)) = y."""
    if dist(x.x, y.x) < 1e-12:
        raise DegenerateInputError("log_map at coincident points")
    u, _ = log(x.x, y.x)
    return Tangent(x, u, project=False)


def parallel_transport(v: Tangent, y: Point) -> Tangent:
    """Levi-Civita transport of v along the geodesic from its base to y."""
    x = v.base
    d = dist(x.x, y.x)
    if d < 1e-12:
        return Tangent(y, v.v, project=False)
    u, r = log(x.x, y.x)
    return Tangent(y, transport(v.v, x.x, u, r), project=True)


def direction_to(x: Point, xi: Boundary) -> Tangent:
    return Tangent(x, spray(x.x, xi.p), project=False)


def boundary_of(x: Point, v: Tangent) -> Boundary:
    return Boundary(ray_of(x.x, v.v))


def busemann(v: LeafState, z: Point) -> float:
    """b_v(z) for v = (x, xi), normalized so b_v(x) = 0.

    Along the geodesic toward xi the value decreases at unit rate; it is
    1-Lipschitz and satisfies the cocycle identity in the base point.
    """
    return float(busemann_raw(v.point.x, v.xi.p, z.x))


def gromov_product(x: Point, a, b) -> float:
    """Gromov product (a|b)_x; a, b may each be a Point or a Boundary.

    Interior points use (a|b)_x = (d(x,a)+d(x,b)-d(a,b))/2; boundary
    arguments use the closed-form limit.  Two equal boundary points give
    +inf.
    """
    a_bdry = isinstance(a, Boundary)
    b_bdry = isinstance(b, Boundary)
    if a_bdry and b_bdry:
        # normalize both rays at x, then (xi|eta)_x = -log(-<p,q>/2)/2
        p = a.p / (-mdot(x.x, a.p))
        q = b.p / (-mdot(x.x, b.p))
        c = -mdot(p, q)
        if c < 1e-300:
            return math.inf
        return -0.5 * math.log(c / 2.0)
    if a_bdry or b_bdry:
        xi, y = (a, b) if a_bdry else (b, a)
        q = xi.p / (-mdot(x.x, xi.p))
        return 0.5 * (dist(x.x, y.x) - math.log(-mdot(y.x, q)))
    return 0.5 * float(dist(x.x, a.x) + dist(x.x, b.x) - dist(a.x, b.x))


def green_function(m: int, r) -> float:
    """Rotationally symmetric Green function of the Laplacian on H^m.

    Normalized so -(Delta G) is a unit point mass: the flux of -grad G
    through every sphere is 1.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("green_function requires r > 0")
    if m == 2:
        out = np.log(1.0 / np.tanh(r / 2.0)) / (2.0 * np.pi)
    elif m == 3:
        out = (1.0 / np.tanh(r) - 1.0) / (4.0 * np.pi)
    else:
        raise DomainError(f"unsupported dimension m={m}")
    return out if out.ndim else float(out)


def heat_kernel_h3(t: float, r) -> float:
    """Heat kernel of du/dt = Delta u on H^3 (full Laplacian convention)."""
    if t <= 0:
        raise DomainError("heat_kernel_h3 requires t > 0")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("heat_kernel_h3 requires r >= 0")
    # r/sinh(r) -> 1 as r -> 0
    ratio = np.where(r < 1e-8, 1.0 - r * r / 6.0, r / np.sinh(np.maximum(r, 1e-8)))
    out = (4.0 * np.pi * t) ** -1.5 * ratio * np.exp(-t - r * r / (4.0 * t))
    return out if out.ndim else float(out)


def log_heat_kernel_h3(t: float, r) -> float:
    """log of heat_kernel_h3, stable for large r (no underflow)."""
    if t <= 0:
        raise DomainError("heat_kernel_h3 requires t > 0")
    r = np.asarray(r, dtype=float)
    log_ratio = np.where(
        r < 1e-8,
        np.log1p(-r * r / 6.0),
        np.log(np.maximum(r, 1e-300)) - _log_sinh(r),
    )
    out = -1.5 * np.log(4.0 * np.pi * t) + log_ratio - t - r * r / (4.0 * t)
    return out if out.ndim else float(out)


def _log_sinh(r):
    r = np.asarray(r, dtype=float)
    return r + np.log1p(-np.exp(-2.0 * np.minimum(r, 350.0))) - np.log(2.0)


def log_green_function(m: int, r):
    """log of green_function, stable for large r."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("green_function requires r > 0")
    if m == 2:
        # log coth(r/2) = log((1+e^-r)/(1-e^-r))
        e = np.exp(-r)
        out = np.log(np.log1p(e) - np.log1p(-e)) - np.log(2.0 * np.pi)
    elif m == 3:
        # coth r - 1 = 2 e^{-2r} / (1 - e^{-2r})
        out = np.log(2.0) - 2.0 * r - np.log1p(-np.exp(-2.0 * r)) - np.log(4.0 * np.pi)
    else:
        raise DomainError(f"unsupported dimension m={m}")
    return out if out.ndim else float(out)


#: fixed constant of the Green metric (the structure, not the value, matters)
GREEN_METRIC_C2 = 0.1


def green_metric(m: int, x: Point, z: Point) -> float:
    """-log(c2 G(d(x,z))) for separated points, else -log(c2)."""
    d = dist(x.x, z.x)
    if d > 1.0:
        return float(-math.log(GREEN_METRIC_C2) - log_green_function(m, d))
    return float(-math.log(GREEN_METRIC_C2))
