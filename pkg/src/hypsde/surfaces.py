"""Base-surface descriptors shared by the geodesic and estimator machinery."""

from __future__ import annotations

import numpy as np

from . import geom
from .quotient import FuchsianGroup, InvariantField


class ConstantCurvature:
    """H^m with curvature -1 (the universal cover itself)."""

    def __init__(self, m: int):
        if m not in (2, 3):
            raise ValueError("supported dimensions: 2, 3")
        self.m = m
        self.psi = None

    @property
    def is_constant_curvature(self) -> bool:
        return True

    def curvature_scalar_many(self, xs):
        return np.full(xs.shape[:-1], -1.0)

    def pinching(self):
        return 1.0, 1.0

    def __repr__(self):
        return f"H{self.m}"


class QuotientSurface:
    """Genus-2 quotient, optionally with a conformal exponent psi.

    The surface metric is e^{2 psi} g_hyp; psi == None means the constant
    curvature hyperbolic structure.
    """

    m = 2

    def __init__(self, group: FuchsianGroup, psi: InvariantField | None = None):
        self.group = group
        self.psi = psi
        self._pinching = None

    @property
    def is_constant_curvature(self) -> bool:
        return self.psi is None

    def curvature_scalar_many(self, xs):
        """Gauss curvature of e^{2 psi} g_hyp at the given points."""
        if self.psi is None:
            return np.full(xs.shape[:-1], -1.0)
        flat = np.atleast_2d(xs)
        if hasattr(self.psi, "value_many_reduced"):
            ys, _ = self.group.reduce_many(flat)
            val = self.psi.value_many_reduced(ys)
            lap = self.psi.laplacian_many_reduced(ys)
        else:
            val = self.psi.value_many(flat)
            lap = self.psi.laplacian_many(flat)
        out = np.exp(-2.0 * val) * (-1.0 - lap)
        return out.reshape(xs.shape[:-1])

    def pinching(self, grid_n: int = 4000, seed: int = 0):
        """(a, b) with curvature in [-b^2, -a^2], measured on a domain grid."""
        if self.psi is None:
            return 1.0, 1.0
        if self._pinching is None:
            rng = np.random.default_rng(seed)
            pts = self.group.sample_domain(rng, grid_n)
            K = self.curvature_scalar_many(pts)
            if K.max() >= 0:
                raise ValueError("psi too large: curvature not negative")
            self._pinching = (float(np.sqrt(-K.max())), float(np.sqrt(-K.min())))
        return self._pinching

    def __repr__(self):
        tag = "psi" if self.psi is not None else "hyperbolic"
        return f"QuotientSurface({tag})"


H2 = ConstantCurvature(2)
H3 = ConstantCurvature(3)
