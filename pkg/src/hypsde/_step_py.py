"""Pure-Python twin of the compiled step kernel.

Selected at import time when the extension is unavailable (or forced via
HYPSDE_PURE_PYTHON=1).  Same contract and the same arithmetic, step for
step, so the two backends agree to floating-point noise; this one also
accepts arbitrary Python drift evaluators, which the compiled kernel
deliberately does not.
"""

import numpy as np

from . import geom

#: recenter once the local time coordinate passes cosh(2.5)
RESET_CH = 6.132289479663686


def run_leaf_path(
    x0,
    frame0,
    ray,
    dt,
    n_steps,
    drift_kind,
    drift_coef,
    gcoefs,
    noise,
    record_every,
    reorth_every,
    out_points,
    out_A,
    out_Q,
    out_frame,
    drift_fn=None,
):
    """Advance one path; see the compiled kernel for the contract.

    drift_fn, when given (requires drift_kind == 2), is called as
    drift_fn(x_local, ray_local) -> ambient tangent vector, every step, in
    the current gauge.
    """
    n = x0.shape[0]
    m = n - 1
    nf = len(gcoefs)
    if n_steps % record_every != 0:
        raise ValueError("n_steps must be a multiple of record_every")

    x = x0.copy()
    p = ray.copy()
    e = frame0.copy()
    ginv = np.eye(n)
    A = np.zeros(nf)
    Q = np.zeros(nf)
    scale = np.sqrt(2.0 * dt)
    need_spray = drift_kind == 1 or nf > 0

    out_points[0] = x
    if nf:
        out_A[:, 0] = 0.0
        out_Q[:, 0] = 0.0
    rec = 1

    for i in range(n_steps):
        if need_spray:
            s_vec = p * (-1.0 / geom.mdot(x, p)) - x

        u = (scale * noise[i]) @ e
        if drift_kind == 1:
            u = u + drift_coef * dt * s_vec
        elif drift_kind == 2:
            u = u + dt * drift_fn(x, p)

        if nf:
            dA = float(np.dot(e @ _flip(s_vec), scale * noise[i]))
            A += gcoefs * dA
            Q += gcoefs**2 * geom.mdot(s_vec, s_vec) * dt

        r2 = geom.mdot(u, u)
        if r2 > 1e-280:
            r = np.sqrt(r2)
            er = np.exp(r)
            c = 1.0 / er
            ch = 0.5 * (er + c)
            sh = 0.5 * (er - c)
            v = u * (1.0 / r)
            alpha = e @ _flip(v)
            e = e + alpha[:, None] * (sh * x + (ch - 1.0) * v)[None, :]
            x = ch * x + sh * v
            x = x * (1.0 / np.sqrt(-geom.mdot(x, x)))

        if (i + 1) % reorth_every == 0:
            e = _reorthonormalize(e, x)

        if x[0] > RESET_CH:
            ch = x[0]
            sh = np.sqrt(ch * ch - 1.0)
            v = np.zeros(n)
            v[1:] = x[1:] / sh
            x = _boost(v, ch, -sh, x)
            e = np.stack([_boost(v, ch, -sh, ek) for ek in e])
            p = _boost(v, ch, -sh, p)
            ginv = ginv @ _boost_matrix(v, ch, sh)
            x = x / np.sqrt(-geom.mdot(x, x))

        if (i + 1) % record_every == 0:
            out_points[rec] = ginv @ x
            if nf:
                out_A[:, rec] = A
                out_Q[:, rec] = Q
            rec += 1

    out_frame[:] = e


def _flip(v):
    # Minkowski metric applied to a vector: dot(u, _flip(v)) = <u, v>
    w = v.copy()
    w[0] = -w[0]
    return w


def _boost(u, ch, sh, y):
    # o -> ch o + sh u, u -> sh o + ch u, identity on the complement
    a = y[0]
    c = geom.mdot(y, u)
    out = y.copy()
    out[0] += a * (ch - 1.0) + c * sh
    out[1:] += (a * sh + c * (ch - 1.0)) * u[1:]
    return out


def _boost_matrix(u, ch, sh):
    n = u.shape[0]
    cols = [_boost(u, ch, sh, col) for col in np.eye(n)]
    return np.stack(cols, axis=1)


def _reorthonormalize(e, x):
    e = e + (e @ _flip(x))[:, None] * x[None, :]
    for k in range(e.shape[0]):
        for f in range(k):
            e[k] -= geom.mdot(e[k], e[f]) * e[f]
        e[k] /= np.sqrt(geom.mdot(e[k], e[k]))
    return e


def step(x, frame, dt, noise, drift_vec=None):
    """Single step of the walk; returns (new point, transported frame).

    noise holds m standard normals; drift_vec is an ambient tangent vector
    evaluated at x (pre-step).
    """
    u = (np.sqrt(2.0 * dt) * noise) @ frame
    if drift_vec is not None:
        u = u + dt * drift_vec
    r2 = geom.mdot(u, u)
    if r2 <= 1e-280:
        return x.copy(), frame.copy()
    r = np.sqrt(r2)
    v = u / r
    alpha = frame @ _flip(v)
    new_frame = frame + alpha[:, None] * (np.sinh(r) * x + (np.cosh(r) - 1.0) * v)[None, :]
    new_x = np.cosh(r) * x + (np.sinh(r) / r) * u
    new_x = new_x / np.sqrt(-geom.mdot(new_x, new_x))
    return new_x, new_frame
