# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the discrete-velocity BGK steppers.

Arrays are (nv, nx), C-contiguous float64, periodic in x.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def upwind_transport(double[:, ::1] f, double[::1] v, double lam):
    """``f - lam v D f`` with first-order upwind differences."""
    cdef Py_ssize_t nv = f.shape[0], nx = f.shape[1], j, i, im, ip
    out = np.empty((nv, nx))
    cdef double[:, ::1] o = out
    cdef double c
    for j in range(nv):
        c = lam * v[j]
        if c >= 0:
            for i in range(nx):
                im = i - 1 if i > 0 else nx - 1
                o[j, i] = f[j, i] - c * (f[j, i] - f[j, im])
        else:
            for i in range(nx):
                ip = i + 1 if i < nx - 1 else 0
                o[j, i] = f[j, i] - c * (f[j, ip] - f[j, i])
    return out


def relax(double[:, ::1] fstar, double[:, ::1] m, double a):
    """Backward-Euler BGK update ``(f* + a M) / (1 + a)`` with ``a = dt/eps``."""
    cdef Py_ssize_t nv = fstar.shape[0], nx = fstar.shape[1], j, i
    out = np.empty((nv, nx))
    cdef double[:, ::1] o = out
    cdef double s = 1.0 / (1.0 + a), t = a / (1.0 + a)
    for j in range(nv):
        for i in range(nx):
            o[j, i] = s * fstar[j, i] + t * m[j, i]
    return out


def gt_run(double[:, ::1] f0, double lam, double a, long nsteps, int limit, double mu=0.0):
    """Two-velocity IMEX steps in place of a Python loop.

    Row 0 moves with ``+1``, row 1 with ``-1``. ``limit`` replaces the
    relaxation by the projection ``f -> rho/2`` and adds the explicit
    diffusion ``mu (rho[i+1] - 2 rho[i] + rho[i-1])`` of the incoming
    density, ``mu = dt nu / dx^2``. Returns the final state
    and the per-step absolute mass change and running max of ``f``.
    """
    cdef Py_ssize_t nx = f0.shape[1], i, im, ip
    cdef long n
    cur = np.array(f0, copy=True)
    nxt = np.empty_like(cur)
    drift = np.zeros(nsteps)
    cdef double[:, ::1] c = cur
    cdef double[:, ::1] w = nxt
    cdef double[::1] dr = drift
    cdef double s = 1.0 / (1.0 + a), t = a / (1.0 + a)
    cdef double p, q, rho, m0, m1, fmax = 0.0
    m0 = 0.0
    for i in range(nx):
        m0 += c[0, i] + c[1, i]
        fmax = max(fmax, max(c[0, i], c[1, i]))
    for n in range(nsteps):
        m1 = 0.0
        for i in range(nx):
            im = i - 1 if i > 0 else nx - 1
            ip = i + 1 if i < nx - 1 else 0
            p = c[0, i] - lam * (c[0, i] - c[0, im])
            q = c[1, i] + lam * (c[1, ip] - c[1, i])
            rho = 0.5 * (p + q)
            if limit:
                rho += 0.5 * mu * (c[0, ip] + c[1, ip] - 2.0 * (c[0, i] + c[1, i])
                                   + c[0, im] + c[1, im])
                w[0, i] = rho
                w[1, i] = rho
            else:
                w[0, i] = s * p + t * rho
                w[1, i] = s * q + t * rho
            m1 += w[0, i] + w[1, i]
            fmax = max(fmax, max(w[0, i], w[1, i]))
        dr[n] = abs(m1 - m0)
        m0 = m1
        c, w = w, c
    return np.asarray(c).copy(), drift, fmax


def relax_substeps(double[:, ::1] fstar, double[:, ::1] m, double b, long n):
    """``n`` backward-Euler relaxation substeps ``f <- (f + b M) / (1 + b)``.

    ``M`` is fixed across substeps because relaxation conserves the moments
    that determine it.
    """
    cdef Py_ssize_t nv = fstar.shape[0], nx = fstar.shape[1], j, i
    cdef long k
    out = np.array(fstar, copy=True)
    cdef double[:, ::1] o = out
    cdef double s = 1.0 / (1.0 + b), t = b / (1.0 + b)
    for k in range(n):
        for j in range(nv):
            for i in range(nx):
                o[j, i] = s * o[j, i] + t * m[j, i]
    return out
