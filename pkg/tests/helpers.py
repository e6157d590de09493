"""Shared sampling helpers for the test suite."""

import numpy as np

from hypsde import geom


def rng(seed=0):
    return np.random.default_rng(seed)


def random_point(r, m=2, radius=3.0):
    """Point at a uniform-in-radius distance from the origin (test sampling)."""
    u = random_unit(r, m)
    t = radius * r.random()
    x = geom.origin(m)
    return geom.exp_map(x, geom.Tangent(x, u, project=False), t)


def random_unit(r, m=2):
    """Unit tangent direction at the origin as an ambient vector."""
    v = np.zeros(m + 1)
    g = r.standard_normal(m)
    v[1:] = g / np.linalg.norm(g)
    return v


def random_tangent_at(r, x: geom.Point, unit=True):
    """Random tangent vector at x (unit by default)."""
    w = r.standard_normal(x.dim + 1)
    t = geom.Tangent(x, w)
    return t.unit() if unit else t


def random_boundary(r, m=2):
    p = np.ones(m + 1)
    g = r.standard_normal(m)
    p[1:] = g / np.linalg.norm(g)
    return geom.Boundary(p)
