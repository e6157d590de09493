"""Scalar fields on H^m with exact derivatives.

The conformal machinery needs C^3 data: every field exposes value,
ambient-tangent gradient, Hessian operator and Laplacian, pointwise and
vectorized.  The radial bump (1 - (r/rho)^2)^4 is polynomial in r^2, hence
smooth everywhere including the center; it is C^3 (not C^4) at the support
boundary.
"""

from __future__ import annotations

import numpy as np

from . import geom


class ConstantField:
    """phi == c; gradient-free everywhere."""

    def __init__(self, c: float):
        self.c = float(c)

    def value(self, x):
        return self.c

    def value_many(self, xs):
        return np.full(xs.shape[:-1], self.c)

    def gradient(self, x):
        return np.zeros_like(x)

    def gradient_many(self, xs):
        return np.zeros_like(xs)

    def hessian(self, x):
        n = x.shape[0]
        return np.zeros((n, n))

    def laplacian(self, x):
        return 0.0

    def laplacian_many(self, xs):
        return np.zeros(xs.shape[:-1])

    def support_distance_many(self, xs):
        # gradient-free everywhere
        return np.full(xs.shape[:-1], np.inf)


class RadialBump:
    """amplitude * (1 - (d(x, center)/radius)^2)^4 on its support, else 0.

    An optional additive offset makes mean-zero normalization cheap.
    """

    def __init__(self, center, radius: float, amplitude: float, offset: float = 0.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.amplitude = float(amplitude)
        self.offset = float(offset)

    # -- radial profile and derivatives (in the geodesic distance r) --

    def _profile(self, r):
        q2 = (r / self.radius) ** 2
        inside = q2 < 1.0
        return np.where(inside, self.amplitude * (1.0 - q2) ** 4, 0.0)

    def _dprofile_over_r(self, r):
        # beta'(r) / r, finite at r = 0
        q2 = (r / self.radius) ** 2
        inside = q2 < 1.0
        return np.where(
            inside, -8.0 * self.amplitude / self.radius**2 * (1.0 - q2) ** 3, 0.0
        )

    # -- field interface --

    def value(self, x):
        return float(self._profile(geom.dist(x, self.center))) + self.offset

    def value_many(self, xs):
        return self._profile(geom.dist(xs, self.center)) + self.offset

    def gradient(self, x):
        return self.gradient_many(x[None, :])[0]

    def gradient_many(self, xs):
        # grad beta(d) = beta'(d) P_x(-c)/sinh d; written as
        # (beta'/d)(d/sinh d) P_x(-c), finite through the center
        r = geom.dist(xs, self.center)
        w = geom.project_tangent(xs, np.broadcast_to(-self.center, xs.shape))
        fac = self._dprofile_over_r(r) * _r_over_sinh(r)
        return fac[..., None] * w

    def hessian(self, x):
        """Hessian operator on ambient vectors (tangential on tangents)."""
        r = float(geom.dist(x, self.center))
        n = x.shape[0]
        P = np.eye(n) + np.outer(x, _eta(x))
        if r >= self.radius:
            return np.zeros((n, n))
        if r < 1e-12:
            return float(self._d2(0.0)) * P
        u = self.gradient(x)
        b1_over_r = float(self._dprofile_over_r(np.array(r)))
        ur = geom.project_tangent(x, -self.center)
        ur = ur / np.sqrt(geom.mdot(ur, ur))
        b2 = float(self._d2(r))
        # coth(r) beta'(r) = (r coth r) * (beta'(r)/r)
        bc = r / np.tanh(r) * b1_over_r
        U = np.outer(ur, _eta(ur))
        return b2 * U + bc * (P - U)

    def _d2(self, r):
        # beta'' via the polynomial in q2
        q2 = (r / self.radius) ** 2
        if q2 >= 1.0:
            return 0.0
        a = self.amplitude
        return (-8.0 * a / self.radius**2) * (1.0 - q2) ** 2 * (1.0 - 7.0 * q2)

    def laplacian(self, x):
        return float(self.laplacian_many(x[None, :])[0])

    def support_distance_many(self, xs):
        return geom.dist(xs, self.center) - self.radius

    def laplacian_many(self, xs):
        # radial Laplacian on H^m: beta'' + (m-1) coth(r) beta'
        m = xs.shape[-1] - 1
        r = geom.dist(xs, self.center)
        q2 = (r / self.radius) ** 2
        inside = q2 < 1.0
        a = self.amplitude
        b2 = np.where(inside, (-8.0 * a / self.radius**2) * (1.0 - q2) ** 2 * (1.0 - 7.0 * q2), 0.0)
        b1_over_r = self._dprofile_over_r(r)
        rcoth = np.where(r < 1e-8, 1.0 + r * r / 3.0, r / np.tanh(np.maximum(r, 1e-300)))
        return b2 + (m - 1) * rcoth * b1_over_r


def _eta(v):
    w = v.copy()
    w[0] = -w[0]
    return w


def _r_over_sinh(r):
    return np.where(r < 1e-8, 1.0 - r * r / 6.0, r / np.sinh(np.maximum(r, 1e-300)))


class ScaledField:
    """s * phi for a fixed scalar s."""

    def __init__(self, base, s: float):
        self.base = base
        self.s = float(s)

    def value(self, x):
        return self.s * self.base.value(x)

    def value_many(self, xs):
        return self.s * self.base.value_many(xs)

    def gradient(self, x):
        return self.s * self.base.gradient(x)

    def gradient_many(self, xs):
        return self.s * self.base.gradient_many(xs)

    def hessian(self, x):
        return self.s * self.base.hessian(x)

    def laplacian(self, x):
        return self.s * self.base.laplacian(x)

    def laplacian_many(self, xs):
        return self.s * self.base.laplacian_many(xs)

    def support_distance_many(self, xs):
        return self.base.support_distance_many(xs)


class SumField:
    """Pointwise sum of fields (used for multi-bump conformal factors)."""

    def __init__(self, parts):
        self.parts = list(parts)

    def value(self, x):
        return sum(p.value(x) for p in self.parts)

    def value_many(self, xs):
        return sum(p.value_many(xs) for p in self.parts)

    def gradient(self, x):
        return sum(p.gradient(x) for p in self.parts)

    def gradient_many(self, xs):
        return sum(p.gradient_many(xs) for p in self.parts)

    def hessian(self, x):
        return sum(p.hessian(x) for p in self.parts)

    def laplacian(self, x):
        return sum(p.laplacian(x) for p in self.parts)

    def laplacian_many(self, xs):
        return sum(p.laplacian_many(xs) for p in self.parts)

    def support_distance_many(self, xs):
        out = np.full(xs.shape[:-1], np.inf)
        for p in self.parts:
            out = np.minimum(out, p.support_distance_many(xs))
        return out
