"""numpy fallback with the same interface as the compiled kernels."""
import numpy as np


def upwind_transport(f, v, lam):
    f = np.ascontiguousarray(f, float)
    c = (lam * np.asarray(v, float))[:, None]
    back = f - np.roll(f, 1, axis=1)
    fwd = np.roll(f, -1, axis=1) - f
    return f - np.where(c >= 0, c * back, c * fwd)


def relax(fstar, m, a):
    return fstar / (1.0 + a) + (a / (1.0 + a)) * m


def gt_run(f0, lam, a, nsteps, limit, mu=0.0):
    cur = np.array(f0, float, copy=True)
    drift = np.zeros(nsteps)
    s, t = 1.0 / (1.0 + a), a / (1.0 + a)
    m0 = cur.sum()
    fmax = cur.max()
    for n in range(nsteps):
        p = cur[0] - lam * (cur[0] - np.roll(cur[0], 1))
        q = cur[1] + lam * (np.roll(cur[1], -1) - cur[1])
        rho = 0.5 * (p + q)
        if limit:
            r = cur[0] + cur[1]
            rho = rho + 0.5 * mu * (np.roll(r, -1) - 2.0 * r + np.roll(r, 1))
            cur = np.stack([rho, rho])
        else:
            cur = np.stack([s * p + t * rho, s * q + t * rho])
        m1 = cur.sum()
        drift[n] = abs(m1 - m0)
        m0 = m1
        fmax = max(fmax, cur.max())
    return cur, drift, fmax


def relax_substeps(fstar, m, b, n):
    out = np.array(fstar, float, copy=True)
    s, t = 1.0 / (1.0 + b), b / (1.0 + b)
    for _ in range(n):
        out = s * out + t * m
    return out
