"""Frame-bundle simulation of Brownian motion and drifted diffusions on leaves.

The walk lives on H^m in the hyperboloid model: at each step the m
orthonormal frame vectors turn Gaussian increments (variance 2 dt per
direction, the full-Laplacian convention) into a tangent vector, the point
moves along the geodesic, and the frame is parallel-transported.  For every
registered vector field V the Ito integral A(t) = int <V, w dB> and the
quadratic term Q(t) = int ||V||^2 ds accumulate alongside, which is all the
Girsanov machinery downstream needs.

The hot loop is the compiled extension `hypsde._step`; a pure-Python twin is
selected automatically when the extension is missing or when
HYPSDE_PURE_PYTHON=1 is set.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import geom
from . import _step_py

if os.environ.get("HYPSDE_PURE_PYTHON"):
    _kernel = _step_py
    USING_COMPILED_KERNEL = False
else:
    try:
        from . import _step as _kernel

        USING_COMPILED_KERNEL = True
    except ImportError:  # pragma: no cover - build-dependent
        _kernel = _step_py
        USING_COMPILED_KERNEL = False


DEFAULT_DT = 1e-3
DEFAULT_STRIDE = 100
REORTH_EVERY = 100


@dataclass(frozen=True)
class SprayField:
    """c * Xbar(x, xi): a multiple of the spray toward the path's own leaf."""

    coef: float = 1.0

    def __call__(self, x, ray):
        return self.coef * geom.spray(x, ray)


@dataclass(frozen=True)
class CustomField:
    """Arbitrary drift evaluator fn(x, ray) -> ambient tangent vector.

    Only the pure-Python kernel accepts these; the compiled kernel covers
    the closed-form fields that dominate the workloads.
    """

    fn: object

    def __call__(self, x, ray):
        return self.fn(x, ray)


class FramedState:
    """Point, orthonormal frame and the (fixed) leaf boundary point."""

    __slots__ = ("point", "frame", "ray")

    def __init__(self, point, frame, ray):
        self.point = np.asarray(point, dtype=float)
        self.frame = np.asarray(frame, dtype=float)
        self.ray = np.asarray(ray, dtype=float)

    @property
    def m(self):
        return self.frame.shape[0]

    def gram_defect(self) -> float:
        g = np.array(
            [[geom.mdot(a, b) for b in self.frame] for a in self.frame]
        )
        return float(np.max(np.abs(g - np.eye(self.m))))


def standard_frame(x, m):
    """Orthonormal tangent frame at x, transported from the origin."""
    e = np.zeros((m, m + 1))
    for k in range(m):
        e[k, k + 1] = 1.0
    o = geom.origin(m).x
    d = geom.dist(o, x)
    if d < 1e-14:
        return e
    u, r = geom.log(o, x)
    return np.stack([geom.transport(e[k], o, u, r) for k in range(m)])


def initial_state(start: geom.LeafState) -> FramedState:
    x = start.point.x
    return FramedState(x, standard_frame(x, start.point.dim), start.xi.p)


class DiffusionPath:
    """Thinned record of one path plus its Girsanov accumulators."""

    def __init__(self, times, points, A, Q, seed, path_id, dt, final_state, fields):
        self.times = times
        self.points = points
        self.A = A  # (n_fields, n_rec)
        self.Q = Q
        self.seed = seed
        self.path_id = path_id
        self.dt = dt
        self.final_state = final_state
        self.fields = fields

    def _rec_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 + 1e-9 * abs(t):
            raise KeyError(f"time {t} not on the recording grid")
        return i

    def girsanov_weight(self, field_index: int, t: float) -> float:
        """exp(A(t)/2 - Q(t)/4) for the registered field."""
        if not 0 <= field_index < len(self.fields):
            raise LookupError(f"no registered field with index {field_index}")
        i = self._rec_index(t)
        return float(np.exp(0.5 * self.A[field_index, i] - 0.25 * self.Q[field_index, i]))

    def point_at(self, t: float):
        return self.points[self._rec_index(t)]


def path_rng(seed: int, path_id: int) -> np.random.Generator:
    """Counter-based per-path stream: order-independent and resumable."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(path_id,))
    return np.random.Generator(np.random.Philox(seq))


def _field_coefs(fields):
    coefs = []
    for f in fields:
        if isinstance(f, SprayField):
            coefs.append(f.coef)
        else:
            raise TypeError("compiled kernel accepts SprayField accumulators only")
    return np.asarray(coefs, dtype=float)


def _drift_spec(drift):
    if drift is None:
        return 0, 0.0, None
    if isinstance(drift, SprayField):
        return 1, drift.coef, None
    if isinstance(drift, CustomField):
        return 2, 0.0, drift
    raise TypeError(f"unsupported drift spec: {drift!r}")


def simulate(
    start: geom.LeafState,
    drift=None,
    girsanov_fields=(),
    T: float = 10.0,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    stride: int = DEFAULT_STRIDE,
    path_id: int = 0,
    reorth_every: int = REORTH_EVERY,
) -> DiffusionPath:
    """Simulate one path of the leafwise diffusion Delta + drift.

    Registered fields accumulate their Ito integral with pre-step
    evaluation against the same Gaussian increments that drive the walk.
    """
    n_steps = int(round(T / dt))
    if n_steps * dt > 1e8 * dt * dt:  # T/dt cap from the module contract
        if n_steps > 10**8:
            raise ValueError("T/dt exceeds 1e8")
    if n_steps % stride != 0:
        raise ValueError("T/dt must be a multiple of the recording stride")
    state = initial_state(start)
    m = state.m

    kind, coef, custom = _drift_spec(drift)
    gcoefs = _field_coefs(girsanov_fields)
    if (kind == 2 or any(isinstance(f, CustomField) for f in girsanov_fields)) and (
        _kernel is not _step_py
    ):
        impl = _step_py  # custom evaluators take the pure-Python route
    else:
        impl = _kernel

    rng = path_rng(seed, path_id)
    noise = rng.standard_normal((n_steps, m))

    n_rec = n_steps // stride + 1
    out_points = np.empty((n_rec, m + 1))
    out_A = np.zeros((max(len(gcoefs), 1), n_rec))
    out_Q = np.zeros((max(len(gcoefs), 1), n_rec))
    out_frame = np.empty((m, m + 1))

    kwargs = {}
    if impl is _step_py and kind == 2:
        kwargs["drift_fn"] = lambda x: custom(x, state.ray)
    impl.run_leaf_path(
        state.point,
        state.frame,
        state.ray,
        dt,
        n_steps,
        kind,
        coef,
        gcoefs,
        noise,
        stride,
        reorth_every,
        out_points,
        out_A,
        out_Q,
        out_frame,
        **kwargs,
    )

    times = np.arange(n_rec) * (stride * dt)
    final = FramedState(out_points[-1], out_frame, state.ray)
    return DiffusionPath(
        times,
        out_points,
        out_A[: len(gcoefs)],
        out_Q[: len(gcoefs)],
        seed,
        path_id,
        dt,
        final,
        tuple(girsanov_fields),
    )


def step(state: FramedState, drift, dt: float, noise) -> FramedState:
    """One step of the walk (public, pure-Python; used by tests/diagnostics)."""
    dv = drift(state.point, state.ray) if drift is not None else None
    x, frame = _step_py.step(state.point, state.frame, dt, np.asarray(noise, float), dv)
    return FramedState(x, frame, state.ray)


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchConfig:
    """Everything a worker needs to reproduce a batch slice."""

    m: int = 2
    T: float = 50.0
    dt: float = DEFAULT_DT
    seed: int = 0
    drift: object = None
    fields: tuple = ()
    checkpoints: tuple = ()   # defaults to (T/2, T)
    record_dt: float = 0.0    # defaults to T/40
    xi: tuple = ()            # leaf ray; default (1, 1, 0, ...)
    reorth_every: int = REORTH_EVERY

    def resolved(self) -> "BatchConfig":
        cp = self.checkpoints or (self.T / 2.0, self.T)
        rd = self.record_dt or self.T / 40.0
        xi = self.xi or tuple([1.0, 1.0] + [0.0] * (self.m - 1))
        return replace(self, checkpoints=tuple(cp), record_dt=rd, xi=xi)


class PathBatch:
    """Per-path features of a batch, associatively mergeable.

    Holds, for every checkpoint time: the distance and Busemann value from
    the start state, and the (A, Q) accumulators of every registered field.
    Full trails are kept only when requested.
    """

    def __init__(self, config, path_ids, times, dist, buse, A, Q, end_points, trail=None):
        self.config = config
        self.path_ids = path_ids
        self.times = times          # (K,) checkpoint times
        self.dist = dist            # (N, K)
        self.buse = buse            # (N, K)
        self.A = A                  # (N, K, F)
        self.Q = Q                  # (N, K, F)
        self.end_points = end_points
        self.trail = trail          # optional (N, R, m+1)

    @property
    def n(self):
        return len(self.path_ids)

    def checkpoint_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 + 1e-9 * abs(t):
            raise KeyError(f"no checkpoint at t={t}")
        return i

    def weight(self, field_index: int, t: float):
        """Girsanov weights exp(A/2 - Q/4) for all paths at checkpoint t."""
        k = self.checkpoint_index(t)
        return np.exp(0.5 * self.A[:, k, field_index] - 0.25 * self.Q[:, k, field_index])

    def merge(self, other: "PathBatch") -> "PathBatch":
        if self.config != other.config:
            raise ValueError("cannot merge batches with different configs")
        order = np.argsort(np.concatenate([self.path_ids, other.path_ids]))

        def cat(a, b):
            if a is None or b is None:
                return None
            return np.concatenate([a, b])[order]

        return PathBatch(
            self.config,
            np.concatenate([self.path_ids, other.path_ids])[order],
            self.times,
            cat(self.dist, other.dist),
            cat(self.buse, other.buse),
            cat(self.A, other.A),
            cat(self.Q, other.Q),
            cat(self.end_points, other.end_points),
            cat(self.trail, other.trail),
        )


def _run_slice(config: BatchConfig, path_ids, keep_trail=False):
    cfg = config.resolved()
    m = cfg.m
    n_steps = int(round(cfg.T / cfg.dt))
    n_rec_target = max(1, int(round(cfg.T / cfg.record_dt)))
    stride = max(1, int(round(n_steps / n_rec_target)))
    while n_steps % stride != 0:
        stride -= 1
    x0 = geom.origin(m)
    xi = geom.Boundary(np.asarray(cfg.xi, dtype=float))
    start = geom.LeafState(x0, xi)
    leaf = geom.LeafState(x0, xi)

    K = len(cfg.checkpoints)
    F = len(cfg.fields)
    N = len(path_ids)
    dist = np.empty((N, K))
    buse = np.empty((N, K))
    A = np.zeros((N, K, F))
    Q = np.zeros((N, K, F))
    end_points = np.empty((N, m + 1))
    trail = np.empty((N, n_steps // stride + 1, m + 1)) if keep_trail else None

    for i, pid in enumerate(path_ids):
        path = simulate(
            start,
            drift=cfg.drift,
            girsanov_fields=cfg.fields,
            T=cfg.T,
            dt=cfg.dt,
            seed=cfg.seed,
            stride=stride,
            path_id=int(pid),
            reorth_every=cfg.reorth_every,
        )
        for k, t in enumerate(cfg.checkpoints):
            j = path._rec_index(t)
            p = path.points[j]
            dist[i, k] = geom.dist(x0.x, p)
            buse[i, k] = geom.busemann_raw(x0.x, xi.p, p)
            if F:
                A[i, k] = path.A[:, j]
                Q[i, k] = path.Q[:, j]
        end_points[i] = path.points[-1]
        if keep_trail:
            trail[i] = path.points

    return PathBatch(
        config, np.asarray(path_ids), np.asarray(cfg.checkpoints, dtype=float),
        dist, buse, A, Q, end_points, trail,
    )


def batch(
    config: BatchConfig,
    n: int,
    workers: int = 1,
    keep_trail: bool = False,
    first_path_id: int = 0,
) -> PathBatch:
    """Run n independent paths; results do not depend on the schedule."""
    if n < 1:
        raise ValueError("batch needs n >= 1")
    ids = np.arange(first_path_id, first_path_id + n)
    if workers <= 1 or n < 4 * workers:
        return _run_slice(config, ids, keep_trail)
    chunks = np.array_split(ids, workers)
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_run_slice, [config] * len(chunks), chunks, [keep_trail] * len(chunks)))
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out
