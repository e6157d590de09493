"""Genus-2 hyperbolic surface as a Fuchsian quotient of H^2.

The group is the side-pairing group of the regular octagon with vertex
angle pi/4 (all eight vertices identified, total angle 2 pi).  Generators
are fitted as frame maps in SL(2, R) acting on the upper half-plane, where
the matrix action is exact; a conjugated SO(1, 2) form acts directly on
hyperboloid coordinates.  The labeling is chosen so that the surface-group
relation takes the standard form [g1, g2][g3, g4] = id.

G-invariant scalar fields are truncated Poincare series of a C^3 radial
bump: points are reduced to the Dirichlet domain of the origin and the bump
is summed over every translate of its center that can reach the domain, so
the truncation is exact there (omitted translates vanish identically).
"""

from __future__ import annotations

import math

import numpy as np

from . import geom
from .errors import ReductionOverflowError
from .fields import RadialBump

#: side-pairing translation length parameters of the regular octagon
OCTAGON_CIRCUMRADIUS = math.acosh(1.0 / math.tan(math.pi / 8.0) ** 2)
OCTAGON_INRADIUS = math.acosh(math.cos(math.pi / 8.0) / math.sin(math.pi / 8.0))


# ---------------------------------------------------------------------------
# half-plane <-> hyperboloid
# ---------------------------------------------------------------------------

def to_halfplane(x) -> complex:
    """Hyperboloid point to upper half-plane coordinate."""
    x = np.asarray(x, dtype=float)
    den = x[0] - x[2]
    return complex(x[1] / den, 1.0 / den)


def from_halfplane(z: complex):
    u, v = z.real, z.imag
    if v <= 0:
        raise ValueError("not in the upper half-plane")
    return np.array([(u * u + v * v + 1.0) / (2 * v), u / v, (u * u + v * v - 1.0) / (2 * v)])


def _push_tangent(x, w):
    """Differential of the chart: ambient tangent to (du, dv) at to_halfplane(x)."""
    den = x[0] - x[2]
    du = (w[1] * den - x[1] * (w[0] - w[2])) / den**2
    dv = -(w[0] - w[2]) / den**2
    return du, dv


class MoebiusIsometry:
    """Orientation-preserving isometry of H^2 as a unit-determinant real matrix.

    Acts on the upper half-plane by fractional linear transformations; the
    conjugated SO(1,2) matrix acts linearly on hyperboloid coordinates.
    """

    __slots__ = ("mat", "_so12")

    def __init__(self, mat):
        m = np.asarray(mat, dtype=float)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det <= 0:
            raise ValueError("orientation-reversing or singular matrix")
        m = m / math.sqrt(det)
        if abs(det - 1.0) > 1e-10:
            raise ValueError(f"determinant too far from one: {det}")
        self.mat = m
        self._so12 = None

    @property
    def so12(self):
        if self._so12 is None:
            self._so12 = _sl2_to_so12(self.mat)
        return self._so12

    def apply(self, x):
        """Act on hyperboloid coordinates (vectorized over leading axes)."""
        return np.asarray(x) @ self.so12.T

    def apply_z(self, z: complex) -> complex:
        a, b, c, d = self.mat.ravel()
        return (a * z + b) / (c * z + d)

    def inverse(self) -> "MoebiusIsometry":
        a, b, c, d = self.mat.ravel()
        return MoebiusIsometry(np.array([[d, -b], [-c, a]]))

    def compose(self, other: "MoebiusIsometry") -> "MoebiusIsometry":
        return MoebiusIsometry(self.mat @ other.mat)

    def __matmul__(self, other):
        return self.compose(other)


def _sl2_to_so12(A):
    # action X -> A X A^T on X = [[x0+x2, x1], [x1, x0-x2]], column by column
    cols = []
    for bas in np.eye(3):
        X = np.array([[bas[0] + bas[2], bas[1]], [bas[1], bas[0] - bas[2]]])
        Y = A @ X @ A.T
        cols.append([(Y[0, 0] + Y[1, 1]) / 2, Y[0, 1], (Y[0, 0] - Y[1, 1]) / 2])
    return np.array(cols).T


def _frame_map_sl2(p, w):
    """SL(2,R) element sending (i, rightward) to (p, w) (hyperboloid data)."""
    z = to_halfplane(p)
    du, dv = _push_tangent(p, w)
    theta = math.atan2(dv, du)
    u, v = z.real, z.imag
    sv = math.sqrt(v)
    T = np.array([[sv, u / sv], [0.0, 1.0 / sv]])
    R = np.array(
        [[math.cos(theta / 2), math.sin(theta / 2)], [-math.sin(theta / 2), math.cos(theta / 2)]]
    )
    return T @ R


class FuchsianGroup:
    """Octagon side-pairing group with Dirichlet reduction machinery."""

    def __init__(self, generators, base_point, word_length_cap: int = 20):
        self.gens = list(generators)  # 4 MoebiusIsometry
        self.base_point = base_point
        self.word_length_cap = word_length_cap
        # element table: indices 0..3 generators, 4..7 their inverses
        self.elements = self.gens + [g.inverse() for g in self.gens]
        self._stack = np.stack([e.so12 for e in self.elements])
        self._neighbors = self._stack @ base_point.x

    @staticmethod
    def inverse_index(i: int) -> int:
        return (i + 4) % 8

    def element(self, i: int) -> MoebiusIsometry:
        return self.elements[i]

    def apply_word(self, word, x):
        """Apply the product elements[word[0]] ... elements[word[-1]] to x."""
        y = np.asarray(x, dtype=float)
        for i in reversed(word):
            y = self.elements[i].apply(y)
        return y

    def reduce(self, x):
        """Greedy descent to the Dirichlet domain of the base point.

        Returns (y, word) with apply_word(word, y) == x to reduction
        accuracy.  Raises if the descent exceeds the word cap, which
        signals a caller stepping much too far in one call.
        """
        y = np.asarray(x, dtype=float).copy()
        word: list[int] = []
        base = self.base_point.x
        for _ in range(self.word_length_cap + 1):
            d0 = -geom.mdot(y, base)
            cands = self._stack @ y
            dc = -(cands[:, 1:] @ base[1:] - cands[:, 0] * base[0])
            k = int(np.argmin(dc))
            if dc[k] >= d0 - 1e-13:
                return y, word
            y = cands[k]
            word.append(self.inverse_index(k))
        raise ReductionOverflowError(
            f"no descent to the fundamental domain within {self.word_length_cap} moves"
        )

    def reduce_many(self, xs, max_rounds: int = 64):
        """Vectorized greedy reduction; returns (ys, net) with ys = net @ xs.

        net is the per-row SO(1,2) matrix actually applied, for carrying
        along rays or tangent vectors.
        """
        ys = np.array(xs, dtype=float)
        n = ys.shape[0]
        net = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
        base = self.base_point.x
        for _ in range(max_rounds):
            d0 = ys @ _eta_vec(base)
            cands = np.einsum("gij,nj->ngi", self._stack, ys)
            dc = cands @ _eta_vec(base)
            k = np.argmin(dc, axis=1)
            rows = np.arange(n)
            improving = dc[rows, k] < d0 - 1e-13
            if not improving.any():
                return ys, net
            idx = np.where(improving)[0]
            ys[idx] = cands[idx, k[idx]]
            net[idx] = np.einsum("nij,njk->nik", self._stack[k[idx]], net[idx])
        raise ReductionOverflowError("vectorized reduction did not settle")

    def in_domain(self, x, tol: float = 1e-12) -> bool:
        d0 = -geom.mdot(x, self.base_point.x)
        dc = (self._stack @ x) @ _eta_vec(self.base_point.x)
        return bool(d0 <= np.min(dc) + tol)

    def words_upto(self, length: int):
        """Distinct group elements of word length <= length, as SO(1,2) stack."""
        seen = {_key(np.eye(3)): np.eye(3)}
        frontier = [np.eye(3)]
        for _ in range(length):
            nxt = []
            for w in frontier:
                for g in self._stack:
                    m = g @ w
                    k = _key(m)
                    if k not in seen:
                        seen[k] = m
                        nxt.append(m)
            frontier = nxt
        return np.stack(list(seen.values()))

    def surface_relation_defect(self) -> float:
        g1, g2, g3, g4 = (g.so12 for g in self.gens)
        inv = np.linalg.inv
        com = g1 @ g2 @ inv(g1) @ inv(g2) @ g3 @ g4 @ inv(g3) @ inv(g4)
        return float(np.max(np.abs(com - np.eye(3))))

    def sample_domain(self, rng, n: int):
        """Uniform (hyperbolic-area) samples of the fundamental domain."""
        out = np.empty((n, 3))
        base = self.base_point.x
        got = 0
        chR = math.cosh(OCTAGON_CIRCUMRADIUS)
        while got < n:
            k = 2 * (n - got) + 16
            r = np.arccosh(1.0 + rng.random(k) * (chR - 1.0))
            th = rng.random(k) * 2 * np.pi
            pts = np.stack(
                [np.cosh(r), np.sinh(r) * np.cos(th), np.sinh(r) * np.sin(th)], axis=1
            )
            d0 = pts @ _eta_vec(base)
            dc = np.einsum("gij,nj->ngi", self._stack, pts) @ _eta_vec(base)
            keep = d0 <= dc.min(axis=1)
            take = pts[keep][: n - got]
            out[got : got + len(take)] = take
            got += len(take)
        return out


def _eta_vec(v):
    # x @ _eta_vec(b) = -<x, b> = cosh d(x, b)
    w = np.asarray(v, dtype=float).copy()
    w[1:] = -w[1:]
    return w


def _key(m):
    return tuple(np.round(m, 6).ravel())


def _dedup_points(pts):
    seen = {}
    for p in pts:
        seen.setdefault(tuple(np.round(p, 8)), p)
    return np.stack(list(seen.values())) if seen else pts


def build_genus2_group(word_length_cap: int = 20) -> FuchsianGroup:
    """Regular-octagon side-pairing group with relation [g1,g2][g3,g4] = id."""
    R = OCTAGON_CIRCUMRADIUS
    o = geom.origin(2)
    verts = []
    for k in range(8):
        ang = math.pi / 8 + k * math.pi / 4
        v = np.array([0.0, math.cos(ang), math.sin(ang)])
        verts.append(geom.exp(o.x, v, R))
    verts.append(verts[0])

    def seg_dir(a, b):
        return geom.log(a, b)[0]

    def pair(i, j):
        # isometry sending ordered side (v_i, v_i+1) onto (v_j+1, v_j)
        F1 = _frame_map_sl2(verts[i], seg_dir(verts[i], verts[i + 1]))
        F2 = _frame_map_sl2(verts[j + 1], seg_dir(verts[j + 1], verts[j]))
        return MoebiusIsometry(F2 @ np.linalg.inv(F1))

    g1 = pair(0, 2).inverse()
    g2 = pair(1, 3)
    g3 = pair(4, 6).inverse()
    g4 = pair(5, 7)
    group = FuchsianGroup([g1, g2, g3, g4], o, word_length_cap)
    defect = group.surface_relation_defect()
    if defect > 1e-6:
        raise RuntimeError(f"octagon construction broken: relation defect {defect}")
    return group


# ---------------------------------------------------------------------------
# invariant fields
# ---------------------------------------------------------------------------

class InvariantField:
    """Truncated Poincare series of a radial bump, exactly G-invariant.

    Evaluation reduces the point to the Dirichlet domain and sums the bump
    over every translate of its center kept at construction; translates
    whose support cannot reach the domain neighborhood are dropped, which
    is exact rather than approximate there.
    """

    def __init__(
        self,
        group: FuchsianGroup,
        bump_center,
        bump_radius: float,
        amplitude: float,
        truncation_word_length: int = 3,
        offset: float = 0.0,
    ):
        if bump_radius >= OCTAGON_INRADIUS:
            raise ValueError("bump support must fit inside the fundamental domain")
        self.group = group
        self.bump_center = np.asarray(bump_center, dtype=float)
        self.bump_radius = float(bump_radius)
        self.amplitude = float(amplitude)
        self.truncation_word_length = int(truncation_word_length)
        self.offset = float(offset)

        words = group.words_upto(truncation_word_length)
        centers = words @ self.bump_center
        # evaluation happens at reduced points, so only translates whose
        # support reaches the Dirichlet domain (plus a tie margin) matter
        reach = OCTAGON_CIRCUMRADIUS + bump_radius + 0.25
        keep = geom.dist(centers, group.base_point.x) <= reach
        self.centers = _dedup_points(centers[keep])
        # truncation sufficiency: one more word length must add nothing in reach
        more = group.words_upto(truncation_word_length + 1) @ self.bump_center
        more = _dedup_points(more[geom.dist(more, group.base_point.x) <= reach])
        if len(more) != len(self.centers):
            raise ValueError(
                "truncation_word_length too small for this bump placement"
            )
        self._bumps = [
            RadialBump(c, self.bump_radius, self.amplitude) for c in self.centers
        ]
        self.normalization_report = None

    # -- stacked-center kernels (hot path: one numpy pass over all bumps) --

    def _dists(self, ys):
        # (N, K) distances to every kept translate center
        prod = ys[:, 1:] @ self.centers[:, 1:].T - np.outer(ys[:, 0], self.centers[:, 0])
        return np.arccosh(np.maximum(-prod, 1.0))

    def _profile_sum(self, ys):
        q2 = (self._dists(ys) / self.bump_radius) ** 2
        inside = q2 < 1.0
        return self.amplitude * np.sum(
            np.where(inside, (1.0 - q2) ** 4, 0.0), axis=1
        )

    def with_offset(self, offset: float) -> "InvariantField":
        f = object.__new__(InvariantField)
        f.group = self.group
        f.bump_center = self.bump_center
        f.bump_radius = self.bump_radius
        f.amplitude = self.amplitude
        f.truncation_word_length = self.truncation_word_length
        f.offset = offset
        f.centers = self.centers
        f._bumps = self._bumps
        f.normalization_report = self.normalization_report
        return f

    def _reduced(self, x):
        y, word = self.group.reduce(np.asarray(x, dtype=float))
        return y, word

    def value(self, x) -> float:
        y, _ = self._reduced(x)
        return float(sum(b._profile(geom.dist(y, b.center)) for b in self._bumps)) + self.offset

    def eval(self, x):
        """(value, gradient, hessian) at x, derivatives exact."""
        y, word = self._reduced(x)
        val = self.offset
        grad = np.zeros(3)
        hess = np.zeros((3, 3))
        for b in self._bumps:
            val += float(b._profile(geom.dist(y, b.center)))
            grad = grad + b.gradient(y)
            hess = hess + b.hessian(y)
        if word:
            M = np.eye(3)
            for i in reversed(word):
                M = self.group.elements[i].so12 @ M
            grad = M @ grad
            hess = M @ hess @ np.linalg.inv(M)
        return val, grad, hess

    def gradient(self, x):
        return self.eval(x)[1]

    def hessian(self, x):
        return self.eval(x)[2]

    def laplacian(self, x) -> float:
        y, _ = self._reduced(x)
        return float(sum(b.laplacian(y) for b in self._bumps))

    # vectorized forms used by the simulation backends

    def value_many(self, xs):
        ys, _ = self.group.reduce_many(xs)
        out = np.full(ys.shape[0], self.offset)
        for b in self._bumps:
            out += b._profile(geom.dist(ys, b.center))
        return out

    def laplacian_many(self, xs):
        ys, _ = self.group.reduce_many(xs)
        out = np.zeros(ys.shape[0])
        for b in self._bumps:
            out += b.laplacian_many(ys)
        return out

    def support_distance_many(self, xs):
        ys, _ = self.group.reduce_many(np.atleast_2d(xs))
        out = self._dists(ys).min(axis=1) - self.bump_radius
        return out.reshape(xs.shape[:-1])

    def value_many_reduced(self, ys):
        """Values at already-reduced points (skips reduction)."""
        return self._profile_sum(ys) + self.offset

    def gradient_many_reduced(self, ys):
        r = self._dists(ys)
        q2 = (r / self.bump_radius) ** 2
        inside = q2 < 1.0
        dpr = np.where(
            inside, -8.0 * self.amplitude / self.bump_radius**2 * (1.0 - q2) ** 3, 0.0
        )
        rsh = np.where(r < 1e-8, 1.0 - r * r / 6.0, r / np.sinh(np.maximum(r, 1e-300)))
        fac = dpr * rsh  # (N, K)
        # P_y(-c_k) = -c_k - <c_k, y> y, assembled without a K loop
        cy = geom.mdot(ys[:, None, :], self.centers[None, :, :])
        out = -(fac @ self.centers) - np.einsum("nk,ni->ni", fac * cy, ys)
        return out

    def gradient_many(self, xs):
        # pull reduced-point gradients back through the net isometries:
        # y = R x => grad_x = R^{-1} grad_y with R^{-1} = eta R^T eta
        ys, net = self.group.reduce_many(np.atleast_2d(xs))
        gy = self.gradient_many_reduced(ys)
        eta = np.diag([-1.0, 1.0, 1.0])
        inv = eta @ np.swapaxes(net, 1, 2) @ eta
        return np.einsum("nij,nj->ni", inv, gy).reshape(xs.shape)

    def laplacian_many_reduced(self, ys):
        r = self._dists(ys)
        q2 = (r / self.bump_radius) ** 2
        inside = q2 < 1.0
        a, rho2 = self.amplitude, self.bump_radius**2
        b2 = np.where(inside, (-8.0 * a / rho2) * (1.0 - q2) ** 2 * (1.0 - 7.0 * q2), 0.0)
        b1_over_r = np.where(inside, -8.0 * a / rho2 * (1.0 - q2) ** 3, 0.0)
        rcoth = np.where(r < 1e-8, 1.0 + r * r / 3.0, r / np.tanh(np.maximum(r, 1e-300)))
        return np.sum(b2 + rcoth * b1_over_r, axis=1)


def normalize_mean_zero(
    field: InvariantField, group: FuchsianGroup, samples: int, seed: int = 0
) -> InvariantField:
    """Subtract the Monte Carlo mean of the field over the fundamental domain."""
    if samples < 10**4:
        raise ValueError("normalization needs at least 1e4 samples")
    rng = np.random.default_rng(seed)
    pts = group.sample_domain(rng, samples)
    vals = field.value_many_reduced(pts)  # domain samples are already reduced
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(samples))
    out = field.with_offset(field.offset - mean)
    resid = vals - mean
    out.normalization_report = {
        "subtracted_mean": mean,
        "residual_mean": float(resid.mean()),
        "stderr": stderr,
        "n": samples,
    }
    return out
