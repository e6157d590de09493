"""Conformal metric families g^lam = e^{2 lam phi} g and their geodesics.

Only the first-order data of the family at lam = 0 enters any downstream
formula, so a family is (base surface, phi); the optional second-order term
defaults to zero.  The geodesic integrator works for any conformal factor
field and doubles as the finite-difference oracle for the spray-derivative
machinery.
"""

from __future__ import annotations

import math

import numpy as np

from . import geom
from .errors import IntegrationError, UnsupportedConfigurationError
from .fields import ConstantField, RadialBump, ScaledField, SumField
from .quotient import InvariantField
from .surfaces import ConstantCurvature, QuotientSurface


class ConformalFamily:
    """One-parameter conformal deformation of a base surface.

    phi is d(phi^lam)/d lam at 0; the base passes through lam = 0
    unchanged.  lambda_max is half the largest grid-certified parameter
    keeping the curvature strictly negative.
    """

    def __init__(self, base, phi, second_order=None):
        self.base = base
        self.phi = phi
        self.second_order = second_order  # kept for interface completeness
        self._lambda_max = None

    @property
    def m(self) -> int:
        return self.base.m

    def factor_field(self, lam: float):
        """Total conformal exponent of g^lam relative to the hyperbolic metric."""
        parts = []
        if getattr(self.base, "psi", None) is not None:
            parts.append(self.base.psi)
        if lam != 0.0:
            parts.append(ScaledField(self.phi, lam))
        if not parts:
            return ConstantField(0.0)
        if len(parts) == 1:
            return parts[0]
        return SumField(parts)

    @property
    def lambda_max(self) -> float:
        if self._lambda_max is None:
            self._lambda_max = 0.5 * self._scan_negative_curvature()
        return self._lambda_max

    def _scan_points(self, n=600, seed=0):
        rng = np.random.default_rng(seed)
        if isinstance(self.base, QuotientSurface):
            return self.base.group.sample_domain(rng, n)
        # sample a ball covering the bump support(s)
        centers, radius = _support_of(self.phi)
        m = self.m
        pts = []
        for c in centers:
            for _ in range(max(1, n // max(len(centers), 1))):
                w = rng.standard_normal(m)
                w /= np.linalg.norm(w)
                v = np.zeros(m + 1)
                v[1:] = w
                v = geom.project_tangent(c, v)
                v /= math.sqrt(geom.mdot(v, v))
                r = radius * rng.random() ** (1.0 / m)
                pts.append(geom.exp(c, v, r))
        return np.asarray(pts)

    def _min_curvature(self, lam: float, pts, rng) -> float:
        f = self.factor_field(lam)
        if self.m == 2:
            val = f.value_many(pts)
            lap = f.laplacian_many(pts)
            return float(np.min(np.exp(-2 * val) * (-1.0 - lap)))
        # m = 3: scan sectional curvatures over random planes
        worst = math.inf
        for x in pts:
            val = f.value(x)
            grad = f.gradient(x)
            hess = f.hessian(x)
            g2 = geom.mdot(grad, grad)
            for _ in range(4):
                u = _random_unit_tangent(rng, x)
                w = _random_unit_tangent(rng, x)
                w = w - geom.mdot(w, u) * u
                nw = math.sqrt(max(geom.mdot(w, w), 1e-12))
                w = w / nw
                huu = float(np.dot(_eta(u), hess @ u))
                hww = float(np.dot(_eta(w), hess @ w))
                du = geom.mdot(grad, u)
                dw = geom.mdot(grad, w)
                k = math.exp(-2 * val) * (-1.0 - huu - hww + du**2 + dw**2 - g2)
                worst = min(worst, k)
        return worst

    def _scan_negative_curvature(self) -> float:
        rng = np.random.default_rng(1)
        pts = self._scan_points()
        lo, hi = 0.0, 1.0
        if self._min_curvature(hi, pts, rng) < 0:
            return hi
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if self._min_curvature(mid, pts, rng) < 0:
                lo = mid
            else:
                hi = mid
        return lo


def _support_of(phi):
    if isinstance(phi, RadialBump):
        return [phi.center], phi.radius
    if isinstance(phi, InvariantField):
        return list(phi.centers), phi.bump_radius
    if isinstance(phi, ScaledField):
        return _support_of(phi.base)
    if isinstance(phi, SumField):
        cs, r = [], 0.0
        for p in phi.parts:
            c2, r2 = _support_of(p)
            cs.extend(c2)
            r = max(r, r2)
        return cs, r
    return [geom.origin(2).x], 3.0


def _random_unit_tangent(rng, x):
    v = geom.project_tangent(x, rng.standard_normal(x.shape[0]))
    return v / math.sqrt(geom.mdot(v, v))


def _eta(v):
    w = v.copy()
    w[0] = -w[0]
    return w


# ---------------------------------------------------------------------------
# pointwise first-order objects
# ---------------------------------------------------------------------------

def upsilon(family: ConformalFamily, x, gamma_dot):
    """Normal projection -grad phi + <grad phi, gdot> gdot at the footpoint."""
    g = family.phi.gradient(x)
    return -g + geom.mdot(g, gamma_dot) * gamma_dot


def christoffel_correction(family: ConformalFamily, X: geom.Tangent, Y: geom.Tangent):
    """First-order connection difference of the family applied to (X, Y)."""
    if X.base is not Y.base and not np.array_equal(X.base.x, Y.base.x):
        raise ValueError("christoffel_correction needs a shared base point")
    x = X.base.x
    g = family.phi.gradient(x)
    out = (
        geom.mdot(g, X.v) * Y.v
        + geom.mdot(g, Y.v) * X.v
        - geom.mdot(X.v, Y.v) * g
    )
    return geom.Tangent(X.base, out, project=False)


def curvature_along(surface, x):
    """Curvature operator R(., gdot) gdot in the parallel normal frame.

    Isotropic for every supported surface: -Id on H^m, the 1x1 operator
    e^{-2 psi}(-1 - Lap psi) on a conformal quotient surface.
    """
    if isinstance(surface, ConstantCurvature):
        return -np.eye(surface.m - 1)
    if isinstance(surface, QuotientSurface):
        k = float(surface.curvature_scalar_many(np.atleast_2d(np.asarray(x))))
        return np.array([[k]])
    raise UnsupportedConfigurationError(f"unknown surface {surface!r}")


# ---------------------------------------------------------------------------
# conformal geodesic integrator
# ---------------------------------------------------------------------------

class BoostGauge:
    """Recenters rows that stray: keeps all arithmetic at bounded radius.

    Raw hyperboloid coordinates lose about e^{2r} eps of tangent-vector
    precision at radius r; the gauge applies an exact boost to the origin
    whenever a row passes cosh(6) and the same isometry to every carried
    observer, so long-range integrations stay conditioned.
    """

    threshold = math.cosh(6.0)

    def apply(self, x, v, carried):
        rows = np.where(x[:, 0] > self.threshold)[0]
        if len(rows) == 0:
            return x, v, carried, False
        ch = x[rows, 0]
        sh = np.sqrt(ch * ch - 1.0)
        u = np.zeros_like(x[rows])
        u[:, 1:] = x[rows, 1:] / sh[:, None]

        def boost(y, sign):
            a = y[:, 0]
            c = np.sum(y[:, 1:] * u[:, 1:], axis=1)
            out = y.copy()
            out[:, 0] += a * (ch - 1.0) + c * (sign * sh)
            out[:, 1:] += (a * (sign * sh) + c * (ch - 1.0))[:, None] * u[:, 1:]
            return out

        x = x.copy()
        v = v.copy()
        x[rows] = boost(x[rows], -1.0)
        x[rows] /= np.sqrt(-geom.mdot(x[rows], x[rows]))[:, None]
        v[rows] = boost(v[rows], -1.0)
        out_carried = []
        for arr in carried:
            arr = arr.copy()
            arr[rows] = boost(arr[rows], -1.0)
            out_carried.append(arr)
        return x, v, out_carried, True


class GroupGauge:
    """Reduces rows to the fundamental-domain neighborhood of a quotient."""

    def __init__(self, group):
        self.group = group
        self.threshold = math.cosh(4.5)

    def apply(self, x, v, carried):
        if not np.any(x[:, 0] > self.threshold):
            return x, v, carried, False
        ys, net = self.group.reduce_many(x)
        v = np.einsum("nij,nj->ni", net, v)
        carried = [np.einsum("nij,nj->ni", net, a) for a in carried]
        return ys, v, carried, True


def integrate_conformal_geodesic(
    factor,
    x0,
    v0,
    T: float,
    dt: float,
    record_every: int = 1,
    check_every: float = 1.0,
    check_tol: float = 1e-8,
    gauge=None,
    carried=(),
):
    """Fixed-step RK4 for geodesics of e^{2 factor} g_hyp, batched.

    x0, v0: (B, m+1) or (m+1,).  Returns (times, xs, vs) with xs of shape
    (R, B, m+1); with carried observers, returns (times, xs, vs, carrieds)
    where each carried array is recorded alongside in the same gauge as
    the state.  Periodic step-halving comparisons reject the run if the
    local error estimate exceeds check_tol.
    """
    single = np.asarray(x0).ndim == 1
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    v = np.atleast_2d(np.asarray(v0, dtype=float)).copy()
    car = [np.atleast_2d(np.asarray(a, dtype=float)).copy() for a in carried]
    n_steps = int(round(T / dt))
    check_stride = max(1, int(round(check_every / dt)))

    def deriv(xa, va):
        grad = factor.gradient_many(xa)
        grad = geom.project_tangent(xa, grad)
        vv = geom.mdot(va, va)[..., None]
        dvdt = (
            vv * xa
            - 2.0 * geom.mdot(grad, va)[..., None] * va
            + vv * grad
        )
        return va, dvdt

    def rk4(xa, va, h):
        k1x, k1v = deriv(xa, va)
        k2x, k2v = deriv(xa + 0.5 * h * k1x, va + 0.5 * h * k1v)
        k3x, k3v = deriv(xa + 0.5 * h * k2x, va + 0.5 * h * k2v)
        k4x, k4v = deriv(xa + h * k3x, va + h * k3v)
        xn = xa + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        vn = va + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xn = xn / np.sqrt(-geom.mdot(xn, xn))[..., None]
        vn = geom.project_tangent(xn, vn)
        return xn, vn

    def free_step(xa, va, h):
        # away from the support the force vanishes: exact hyperbolic
        # geodesic at constant coordinate speed
        sp = np.sqrt(np.maximum(geom.mdot(va, va), 1e-300))[..., None]
        ch, sh = np.cosh(h * sp), np.sinh(h * sp)
        xn = ch * xa + sh * va / sp
        vn = sp * (sh * xa + ch * va / sp)
        return xn, vn

    # support-distance budget: the distance to the support shrinks at most
    # by the arclength traveled, so field lookups are needed only when the
    # previous margin is exhausted
    budget = {"left": -1.0}

    def advance(xa, va, h):
        sp2 = np.maximum(geom.mdot(va, va), 1e-300)
        sp = np.sqrt(sp2)
        travel = float(np.max(sp)) * h
        if budget["left"] > 1.5 * travel:
            budget["left"] -= travel
            return free_step(xa, va, h)
        dists = factor.support_distance_many(xa)
        far = dists > 1.5 * travel
        if far.all():
            budget["left"] = float(np.min(dists)) - travel
            return free_step(xa, va, h)
        budget["left"] = -1.0
        xn, vn = rk4(xa, va, h)
        if far.any():
            xe, ve = free_step(xa[far], va[far], h)
            xn[far], vn[far] = xe, ve
        return xn, vn

    n_rec = n_steps // record_every + 1
    xs = np.empty((n_rec, x.shape[0], x.shape[1]))
    vs = np.empty_like(xs)
    cars = [np.empty_like(xs) for _ in car]
    xs[0], vs[0] = x, v
    for j, a in enumerate(car):
        cars[j][0] = a
    rec = 1
    block_len = record_every * dt

    # Without a gauge: while the whole batch stays force-free, every record
    # is a single closed-form evaluation from one anchor state (chaining
    # many exact steps would still accumulate exponentially amplified
    # roundoff).  With a gauge the anchor is dropped; the gauge keeps the
    # arithmetic conditioned instead.
    use_anchor = gauge is None
    anchored = use_anchor
    ax, av, s_anchor = x.copy(), v.copy(), 0.0

    for blk in range(n_steps // record_every):
        if anchored:
            sp = np.sqrt(np.maximum(geom.mdot(v, v), 1e-300))
            if np.all(factor.support_distance_many(x) > sp * block_len + 0.1):
                s_anchor += block_len
                x, v = free_step(ax, av, s_anchor)
                xs[rec], vs[rec] = x, v
                for j, a in enumerate(car):
                    cars[j][rec] = a
                rec += 1
                continue
            anchored = False
        for i in range(record_every):
            step_idx = blk * record_every + i
            if step_idx > 0 and (step_idx % check_stride) == 0:
                xf, vf = advance(x, v, dt)
                xh, vh = advance(*advance(x, v, dt / 2.0), dt / 2.0)
                scale = max(1.0, float(np.max(np.abs(xh))))
                err = float(np.max(np.abs(xf - xh))) / scale
                if err > check_tol:
                    raise IntegrationError(
                        f"step rejected at t={step_idx*dt:.3f}: err={err:.2e}"
                    )
                x, v = xh, vh
            else:
                x, v = advance(x, v, dt)
        if gauge is not None:
            x, v, car, changed = gauge.apply(x, v, car)
            if changed:
                budget["left"] = -1.0
        elif use_anchor:
            sp = np.sqrt(np.maximum(geom.mdot(v, v), 1e-300))
            if np.all(factor.support_distance_many(x) > sp * block_len + 0.1):
                anchored = True
                ax, av, s_anchor = x.copy(), v.copy(), 0.0
        xs[rec], vs[rec] = x, v
        for j, a in enumerate(car):
            cars[j][rec] = a
        rec += 1
    times = np.arange(n_rec) * (record_every * dt)
    if single:
        if car:
            return times, xs[:, 0], vs[:, 0], [c[:, 0] for c in cars]
        return times, xs[:, 0], vs[:, 0]
    if car:
        return times, xs, vs, cars
    return times, xs, vs


def geodesic_lambda(
    family: ConformalFamily,
    x0,
    v0,
    lam: float,
    T: float,
    dt: float = 1e-3,
    record_every: int = 10,
):
    """g^lam-geodesic from (x0, v0); v0 is normalized to unit g^lam-speed.

    Returns (times, xs, vs) and certifies conservation of the g^lam-speed
    along the output to 1e-6 T.
    """
    if abs(lam) > family.lambda_max:
        raise IntegrationError(
            f"|lambda|={abs(lam)} exceeds lambda_max={family.lambda_max:.4g}"
        )
    if dt > 1e-3 + 1e-12:
        raise ValueError("geodesic integrator contract requires dt <= 1e-3")
    f = family.factor_field(lam)
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    single = x0.ndim == 1
    x0 = np.atleast_2d(x0)
    v0 = np.atleast_2d(v0)
    speed2 = np.exp(2.0 * f.value_many(x0)) * geom.mdot(v0, v0)
    v0 = v0 / np.sqrt(speed2)[..., None]
    times, xs, vs = integrate_conformal_geodesic(f, x0, v0, T, dt, record_every)
    if float(np.max(speed_defect(f, xs, vs))) > 1e-6 * max(T, 1.0):
        raise IntegrationError(f"g^lam speed conservation failed over T={T}")
    if single:
        return times, xs[:, 0], vs[:, 0]
    return times, xs, vs


def speed_defect(factor, xs, vs):
    """|e^{2f} <v,v> - 1| above the float verification floor.

    The cancellation floor of <v,v> grows like eps e^{2r}; below it the
    conserved speed cannot be measured from ambient coordinates, so the
    defect is clipped there.
    """
    e = np.exp(2.0 * factor.value_many(xs)) * geom.mdot(vs, vs)
    floor = 256.0 * np.finfo(float).eps * (1.0 + xs[..., 0] ** 2)
    return np.maximum(np.abs(e - 1.0) - floor, 0.0)
