"""Geodesic boundary-value problems for conformal metrics on H^2.

Negative curvature makes the exponential map a diffeomorphism, so the
initial angle of the geodesic hitting a target is found by secant
iterations on a signed miss functional.  Two regimes:

- compactly supported factors (analytic bumps on H^2): integrate only
  through the support; beyond it the geodesic is exactly hyperbolic and
  the miss is the signed angle between the exit velocity and the exit->
  target direction, measured at small radius where the arithmetic is
  fully conditioned.  Far targets cost nothing extra.

- quotient-invariant factors: the support recurs forever, so integrate the
  whole horizon under the group gauge with the target carried along; the
  miss is the lateral offset at the closest recorded approach, which the
  gauge keeps near the origin.

Everything is batched: one secant sweep integrates all problems together.
"""

from __future__ import annotations

import math

import numpy as np

from . import geom
from .conformal import GroupGauge, integrate_conformal_geodesic, _support_of
from .errors import ConvergenceError
from .fields import ConstantField
from .quotient import InvariantField


def _rot90(x, u):
    n = np.cross(x, u)
    n[..., 0] = -n[..., 0]
    return n / np.sqrt(geom.mdot(n, n))[..., None]


def _basis_at(x, toward):
    u, _ = geom.log(x, toward)
    return u, _rot90(x, u)


def _is_quotient_factor(factor):
    if isinstance(factor, InvariantField):
        return factor.group
    for attr in ("base", "parts"):
        inner = getattr(factor, attr, None)
        if inner is None:
            continue
        for f in inner if isinstance(inner, list) else [inner]:
            g = _is_quotient_factor(f)
            if g is not None:
                return g
    return None


def solve_direction(
    factor,
    x0,
    targets,
    dt: float = 1e-3,
    tol: float = 1e-9,
    max_iter: int = 40,
):
    """Initial directions (hyperbolic-unit) of e^{2f}-geodesics hitting targets.

    x0: (3,) start shared by the batch; targets: (B, 3).  Returns
    (directions (B, 3), lengths (B,)) where lengths are the conformal-
    metric distances to the targets.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    group = _is_quotient_factor(factor)
    if group is not None:
        return _solve_gauged(factor, group, x0, targets, dt, tol, max_iter)
    return _solve_exit(factor, x0, targets, dt, tol, max_iter)


def _secant_loop(residual, B, d_hyp, tol, max_iter):
    theta = np.zeros(B)
    theta_prev = None
    miss_prev = None
    for _ in range(max_iter):
        miss, payload = residual(theta)
        if np.max(np.abs(miss)) < tol:
            return theta, payload
        if theta_prev is None:
            theta_prev, miss_prev = theta, miss
            theta = theta + np.clip(-miss, -0.2, 0.2)
        else:
            denom = miss - miss_prev
            step = np.where(np.abs(denom) > 1e-300,
                            miss * (theta - theta_prev) / denom, 0.0)
            theta_prev, miss_prev = theta, miss
            theta = theta - np.clip(step, -0.3, 0.3)
    raise ConvergenceError(
        f"shooting failed after {max_iter} iterations: worst miss "
        f"{np.max(np.abs(miss)):.2e}"
    )


def _solve_exit(factor, x0, targets, dt, tol, max_iter):
    if isinstance(factor, ConstantField):
        # no force anywhere: the hyperbolic solution is exact
        u, _ = geom.log(np.broadcast_to(x0, targets.shape), targets)
        return u, math.exp(factor.value(x0)) * geom.dist(x0, targets)
    centers, radius = _support_of(factor)
    t_near = max(geom.dist(x0, np.asarray(c)) + radius for c in centers) + 2.0
    e1, e2 = _basis_at(np.broadcast_to(x0, targets.shape), targets)
    B = targets.shape[0]

    def residual(theta):
        v = np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2
        ts, xs, vs = integrate_conformal_geodesic(
            factor, np.broadcast_to(x0, v.shape).copy(), v, t_near, dt,
            record_every=int(round(t_near / dt)),
        )
        xe, ve = xs[-1], vs[-1]
        ut, _ = geom.log(xe, targets)
        # signed sine of the angle between the exit velocity and the
        # direction to the target; all at bounded radius
        veu = ve / np.sqrt(geom.mdot(ve, ve))[:, None]
        miss = geom.mdot(veu, _rot90(xe, ut))
        length = t_near + geom.dist(xe, targets)
        return miss, (v, length)

    _, (v, length) = _secant_loop(residual, B, geom.dist(x0, targets), tol, max_iter)
    return v, length


def _solve_gauged(factor, group, x0, targets, dt, tol, max_iter):
    gauge = GroupGauge(group)
    d_hyp = geom.dist(x0, targets)
    horizon = float(np.max(d_hyp)) * 1.35 + 2.0
    e1, e2 = _basis_at(np.broadcast_to(x0, targets.shape), targets)
    B = targets.shape[0]
    record = max(1, int(round(0.01 / dt)))

    def residual(theta):
        v = np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2
        ts, xs, vs, (tg,) = integrate_conformal_geodesic(
            factor, np.broadcast_to(x0, v.shape).copy(), v, horizon, dt,
            record_every=record, gauge=gauge, carried=[targets],
        )
        d = np.arccosh(np.maximum(-_pair_mdot(xs, tg), 1.0))
        i_star = np.argmin(d, axis=0)
        rows = np.arange(B)
        p, pv, py = xs[i_star, rows], vs[i_star, rows], tg[i_star, rows]
        off, _ = geom.log(p, py)
        pvu = pv / np.sqrt(geom.mdot(pv, pv))[:, None]
        gap = geom.dist(p, py)
        miss = geom.mdot(off, _rot90(p, pvu)) * gap
        longi = geom.mdot(off, pvu) * gap
        length = ts[i_star] + np.exp(factor.value_many(p)) * longi
        return miss, (v, length)

    _, (v, length) = _secant_loop(residual, B, d_hyp, tol, max_iter)
    return v, length


def _pair_mdot(a, b):
    return np.sum(a[..., 1:] * b[..., 1:], axis=-1) - a[..., 0] * b[..., 0]


def conformal_distance(factor, x0, targets, dt: float = 1e-3):
    """d_{e^{2f} g}(x0, target) for each target, via the solved geodesics."""
    _, lengths = solve_direction(factor, x0, targets, dt=dt)
    return lengths
