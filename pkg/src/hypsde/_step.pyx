# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loop of the frame-bundle geodesic random walk on H^m.

One call advances a single path for n_steps of size dt, parallel-transporting
the orthonormal frame, accumulating the Ito integrals of the registered
vector fields, and recording thinned states.  Drift and accumulator fields
are multiples of the geodesic spray toward the path's own boundary point;
anything fancier goes through the pure-Python twin.

The walk is computed in a moving gauge: whenever the current point leaves a
small ball around the origin, an exact boost recenters it and is applied to
the carried images of the start point and the leaf ray.  Frame arithmetic
therefore never sees the e^{2r} cancellation of raw hyperboloid coordinates;
recorded points are mapped back through the accumulated isometry.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport acosh
from libc.math cimport exp as c_exp
from libc.math cimport log, sqrt

cnp.import_array()

DEF MAXDIM = 4  # ambient dimension m+1 with m <= 3

# recenter once the local radius passes this (cosh of the gauge radius)
DEF RESET_CH = 6.132289479663686  # cosh(2.5)


cdef inline double mdot(const double* u, const double* v, int n) nogil:
    cdef double s = -u[0] * v[0]
    cdef int j
    for j in range(1, n):
        s += u[j] * v[j]
    return s


cdef inline void boost_apply(const double* u, double ch, double sh,
                             double* y, int n) nogil:
    # boost along the spatial unit direction u (u[0] == 0) at the origin:
    # o -> ch o + sh u, u -> sh o + ch u, identity on the complement
    cdef double a = y[0]              # coefficient on o = (1, 0, ..., 0)
    cdef double c = mdot(y, u, n)     # coefficient on u
    cdef double co = a * (ch - 1.0) + c * sh
    cdef double cu = a * sh + c * (ch - 1.0)
    cdef int j
    y[0] += co
    for j in range(1, n):
        y[j] += cu * u[j]


def run_leaf_path(
    double[::1] x0,
    double[:, ::1] frame0,
    double[::1] ray,
    double dt,
    Py_ssize_t n_steps,
    int drift_kind,          # 0: none, 1: coef * spray
    double drift_coef,
    double[::1] gcoefs,      # per-field coefficient of the spray
    double[:, ::1] noise,    # (n_steps, m) standard normals
    Py_ssize_t record_every,
    Py_ssize_t reorth_every,
    double[:, ::1] out_points,   # (n_rec, m+1) global coordinates
    double[:, ::1] out_A,        # (n_fields, n_rec)
    double[:, ::1] out_Q,        # (n_fields, n_rec)
    double[:, ::1] out_frame,    # (m, m+1) final frame, local gauge
):
    cdef int n = x0.shape[0]          # ambient dimension m+1
    cdef int m = n - 1
    cdef int nf = gcoefs.shape[0]
    cdef double x[MAXDIM]
    cdef double p[MAXDIM]
    cdef double e[3][MAXDIM]
    cdef double u[MAXDIM]
    cdef double s_vec[MAXDIM]
    cdef double v[MAXDIM]
    cdef double w[MAXDIM]
    cdef double gcol[MAXDIM]
    cdef double ginv[MAXDIM][MAXDIM]  # global-from-local isometry
    cdef double gtmp[MAXDIM][MAXDIM]
    cdef double A[8]
    cdef double Q[8]
    cdef double scale = sqrt(2.0 * dt)
    cdef double sx, r, er, ch, sh, shr, alpha, nrm, dA, snorm2, c, d
    cdef Py_ssize_t i, rec
    cdef int j, k, f, l
    cdef bint need_spray = drift_kind == 1 or nf > 0

    if n > MAXDIM or nf > 8:
        raise ValueError("kernel supports m <= 3 and at most 8 fields")
    if n_steps % record_every != 0:
        raise ValueError("n_steps must be a multiple of record_every")

    for j in range(n):
        x[j] = x0[j]
        p[j] = ray[j]
    for k in range(m):
        for j in range(n):
            e[k][j] = frame0[k, j]
    for j in range(n):
        for l in range(n):
            ginv[j][l] = 1.0 if j == l else 0.0
    for f in range(nf):
        A[f] = 0.0
        Q[f] = 0.0

    for j in range(n):
        out_points[0, j] = x[j]
    for f in range(nf):
        out_A[f, 0] = 0.0
        out_Q[f, 0] = 0.0
    rec = 1

    with nogil:
        for i in range(n_steps):
            # spray toward the leaf boundary point: p / -<x,p> - x
            if need_spray:
                sx = -1.0 / mdot(x, p, n)
                for j in range(n):
                    s_vec[j] = p[j] * sx - x[j]

            # tangent increment u = sum_k e_k sqrt(2 dt) n_k (+ drift dt)
            for j in range(n):
                u[j] = 0.0
            for k in range(m):
                c = scale * noise[i, k]
                for j in range(n):
                    u[j] += c * e[k][j]
            if drift_kind == 1:
                for j in range(n):
                    u[j] += drift_coef * dt * s_vec[j]

            # Ito accumulators, pre-step evaluation with the same increments
            if nf > 0:
                dA = 0.0
                for k in range(m):
                    dA += mdot(s_vec, e[k], n) * scale * noise[i, k]
                snorm2 = mdot(s_vec, s_vec, n)
                for f in range(nf):
                    A[f] += gcoefs[f] * dA
                    Q[f] += gcoefs[f] * gcoefs[f] * snorm2 * dt

            # geodesic step and frame transport
            r = mdot(u, u, n)
            if r > 1e-280:
                r = sqrt(r)
                er = c_exp(r)
                c = 1.0 / er
                ch = 0.5 * (er + c)
                sh = 0.5 * (er - c)
                shr = 1.0 / r
                for j in range(n):
                    v[j] = u[j] * shr
                for k in range(m):
                    alpha = mdot(e[k], v, n)
                    for j in range(n):
                        e[k][j] += alpha * (sh * x[j] + (ch - 1.0) * v[j])
                for j in range(n):
                    x[j] = ch * x[j] + sh * v[j]
                # renormalize onto the sheet after every update
                nrm = 1.0 / sqrt(-mdot(x, x, n))
                for j in range(n):
                    x[j] *= nrm

            if (i + 1) % reorth_every == 0:
                # project frame to the tangent space, then Gram-Schmidt
                for k in range(m):
                    alpha = mdot(e[k], x, n)
                    for j in range(n):
                        e[k][j] += alpha * x[j]
                    for f in range(k):
                        alpha = mdot(e[k], e[f], n)
                        for j in range(n):
                            e[k][j] -= alpha * e[f][j]
                    nrm = sqrt(mdot(e[k], e[k], n))
                    for j in range(n):
                        e[k][j] /= nrm

            # gauge reset: boost the current point back to the origin
            if x[0] > RESET_CH:
                d = acosh(x[0])
                ch = x[0]
                sh = sqrt(ch * ch - 1.0)
                # unit direction origin -> x at the origin
                v[0] = 0.0
                for j in range(1, n):
                    v[j] = x[j] / sh
                # inverse boost (by -d) on carried local objects
                boost_apply(v, ch, -sh, x, n)
                for k in range(m):
                    boost_apply(v, ch, -sh, e[k], n)
                boost_apply(v, ch, -sh, p, n)
                # accumulate the forward boost into the global map:
                # ginv <- ginv @ B(+d), via a temporary (old ginv is read
                # for every column)
                for l in range(n):
                    for j in range(n):
                        gcol[j] = 1.0 if j == l else 0.0
                    boost_apply(v, ch, sh, gcol, n)
                    for j in range(n):
                        gtmp[j][l] = 0.0
                        for f in range(n):
                            gtmp[j][l] += ginv[j][f] * gcol[f]
                for l in range(n):
                    for j in range(n):
                        ginv[j][l] = gtmp[j][l]
                # snap the recentered point onto the sheet
                nrm = sqrt(-mdot(x, x, n))
                for j in range(n):
                    x[j] /= nrm

            if (i + 1) % record_every == 0:
                for j in range(n):
                    c = 0.0
                    for l in range(n):
                        c += ginv[j][l] * x[l]
                    out_points[rec, j] = c
                for f in range(nf):
                    out_A[f, rec] = A[f]
                    out_Q[f, rec] = Q[f]
                rec += 1

    for k in range(m):
        for j in range(n):
            out_frame[k, j] = e[k][j]
