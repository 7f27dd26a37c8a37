"""Discrete-velocity BGK model in hyperbolic scaling.

    d_t f + v d_x f = (M[f] - f) / eps

on a periodic unit interval. Two velocity sets are provided: the
two-velocity (Goldstein-Taylor) model ``v = +-1`` whose equilibrium is
``rho/2`` in each direction (only mass is a collision invariant), and an
8-point Gauss-Hermite set whose discrete Maxwellian matches mass, momentum
and energy.

The IMEX step transports explicitly with first-order upwinding and relaxes
implicitly. Because the relaxation conserves the moments that fix ``M``,
the implicit solve is closed form: ``f = (f* + a M[f*]) / (1 + a)`` with
``a = dt/eps``. Its ``eps -> 0`` limit is the fluid stepper
``f -> M[T(M[f])]``.

Hot loops live in a compiled extension; a numpy fallback with the same
interface is used when the extension is missing or when
``APSIM_PURE_PYTHON=1``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import logging
import math
import os

import numpy as np

from . import _kinetic_py
from .fitting import loglog_slope
from .report import SweepReport

log = logging.getLogger(__name__)

try:
    if os.environ.get("APSIM_PURE_PYTHON") == "1":
        raise ImportError("compiled kernels disabled by environment")
    from . import _kinetic_core as _core
    BACKEND = "compiled"
except ImportError:
    _core = _kinetic_py
    BACKEND = "python"

__all__ = ["BACKEND", "VelocitySet", "two_velocity", "gauss_hermite",
           "KineticState", "CFLError", "NegativeDensityError", "maxwellian",
           "bgk_collision", "imex_step", "explicit_step", "fluid_step",
           "layered_step", "run", "initial_state", "l2_distance",
           "density_l2_distance", "ap_diagram_check", "kinetic_ap_sweep",
           "KINETIC_COLUMNS", "kernels"]

KINETIC_COLUMNS = ["eps", "dt", "l2_error_vs_ref", "l2_error_vs_fluid",
                   "mass_drift", "max_f"]

DUST = 1e-12


def kernels(name=None):
    """Kernel module by name (``compiled`` or ``python``); default is the active one."""
    if name is None:
        return _core
    if name == "python":
        return _kinetic_py
    if name == "compiled":
        from . import _kinetic_core
        return _kinetic_core
    raise ValueError(f"unknown backend {name!r}")


class CFLError(ValueError):
    pass


class NegativeDensityError(ValueError):
    pass


@dataclass(frozen=True)
class VelocitySet:
    """Nodes ``v_j`` and weights ``w_j``; moments are ``sum_j w_j phi(v_j) f_j``."""
    name: str
    v: np.ndarray
    w: np.ndarray
    n_moments: int

    @property
    def vmax(self):
        return float(np.abs(self.v).max())


def two_velocity():
    return VelocitySet("two", np.array([1.0, -1.0]), np.array([1.0, 1.0]), 1)


def gauss_hermite(n=8):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return VelocitySet(f"gh{n}", x, w / w.sum(), 3)


def _velocity_set(name):
    if name in ("two", "two-velocity"):
        return two_velocity()
    if name.startswith("gh"):
        return gauss_hermite(int(name[2:] or 8))
    raise ValueError(f"unknown velocity set {name!r}")


@dataclass(frozen=True)
class KineticState:
    """Distribution ``f[j, i]`` at velocity ``j`` and cell ``i``."""
    f: np.ndarray
    velocities: VelocitySet
    dx: float
    epsilon: float

    def __post_init__(self):
        f = np.ascontiguousarray(self.f, float)
        if f.ndim != 2 or f.shape[0] != len(self.velocities.v):
            raise ValueError("f must have shape (n_velocities, nx)")
        if not np.all(np.isfinite(f)):
            raise ValueError("f has non-finite entries")
        lo = f.min()
        if lo < 0:
            if lo < -DUST:
                raise NegativeDensityError(f"negative distribution value {lo:.3e}")
            log.debug("clipping numerical dust down to %.3e", lo)
            f = np.clip(f, 0.0, None)
        if not (self.dx > 0 and self.epsilon > 0):
            raise ValueError("dx and epsilon must be positive")
        object.__setattr__(self, "f", f)

    @property
    def nx(self):
        return self.f.shape[1]

    def moments(self):
        """Rows ``sum_j w_j v_j^k f_j`` for ``k = 0..2``."""
        vs = self.velocities
        return np.array([(vs.w * vs.v ** k) @ self.f for k in range(3)])

    def density(self):
        return self.velocities.w @ self.f

    def mass(self):
        return float(self.density().sum() * self.dx)

    def with_f(self, f):
        return replace(self, f=f)


def _entropic_maxwellian(vs, mom, tol=1e-14, max_iter=60):
    """``exp(a + b v + c v^2)`` matching mass, momentum and energy per cell."""
    rho, mu, en = mom
    if np.any(rho <= 0):
        raise NegativeDensityError("non-positive density")
    u = mu / rho
    temp = en / rho - u * u
    if np.any(temp <= 0):
        raise NegativeDensityError("non-positive temperature")
    lam = np.array([np.log(rho) - 0.5 * np.log(temp) - u * u / (2 * temp),
                    u / temp, 0.5 - 0.5 / temp])
    phi = np.array([np.ones_like(vs.v), vs.v, vs.v ** 2])
    target = np.array(mom)
    for _ in range(max_iter):
        m = np.exp(lam.T @ phi).T                       # (nv, nx)
        wm = vs.w[:, None] * m
        res = phi @ wm - target
        if np.all(np.abs(res) <= tol * np.abs(target).max(axis=0)):
            return np.ascontiguousarray(m)
        jac = np.einsum("kj,lj,ji->ikl", phi, phi, wm)
        lam = lam - np.linalg.solve(jac, res.T[..., None])[..., 0].T
    raise RuntimeError("discrete Maxwellian fit did not converge")


def maxwellian(state):
    """Discrete equilibrium sharing the collision invariants of ``state``."""
    vs = state.velocities
    if vs.n_moments == 1:
        rho = state.density()
        return np.tile(rho / vs.w.sum(), (len(vs.v), 1))
    return _entropic_maxwellian(vs, state.moments())


def bgk_collision(state):
    """``Q(f) = M[f] - f`` as an array."""
    if np.any(state.density() <= 0):
        raise NegativeDensityError("non-positive density")
    return maxwellian(state) - state.f


def _check_cfl(state, dt):
    lim = 0.9 * state.dx / state.velocities.vmax
    if not 0 < dt <= lim * (1 + 1e-12):
        raise CFLError(f"dt={dt:g} violates dt <= 0.9 dx / max|v| = {lim:g}")


def _transport(state, dt):
    return _core.upwind_transport(state.f, state.velocities.v, dt / state.dx)


def imex_step(state, dt):
    """Explicit upwind transport, then closed-form implicit BGK relaxation."""
    _check_cfl(state, dt)
    fs = state.with_f(_transport(state, dt))
    return state.with_f(_core.relax(fs.f, maxwellian(fs), dt / state.epsilon))


def explicit_step(state, dt):
    """Forward Euler in both terms; needs ``dt <= eps`` as well as CFL."""
    _check_cfl(state, dt)
    if dt > state.epsilon:
        raise CFLError("explicit collision needs dt <= eps")
    q = bgk_collision(state)
    return state.with_f(_transport(state, dt) + (dt / state.epsilon) * q)


def fluid_step(state, dt, nu=0.0):
    """Limit stepper ``M[T(M[f])]`` plus explicit viscosity ``nu`` on the density."""
    _check_cfl(state, dt)
    mu = dt * nu / state.dx ** 2
    if mu > 0.5:
        raise CFLError("viscous term needs dt nu / dx^2 <= 1/2")
    eq = state.with_f(maxwellian(state))
    out = state.with_f(_transport(eq, dt))
    m = maxwellian(out)
    if nu:
        r = eq.density()
        lap = np.roll(r, -1) - 2 * r + np.roll(r, 1)
        rho = out.density()
        m = m * ((rho + mu * lap) / rho)[None, :]
    return state.with_f(m)


def layered_step(state, dt, n_max=10 ** 6):
    """Transport over ``dt``, then ``N = ceil(dt/eps)`` relaxation substeps of ``dt/N``."""
    _check_cfl(state, dt)
    n = max(1, math.ceil(dt / state.epsilon - 1e-12))
    if n > n_max:
        raise ValueError(f"layered step needs {n} substeps > n_max={n_max}")
    fs = state.with_f(_transport(state, dt))
    out = _core.relax_substeps(fs.f, maxwellian(fs), dt / n / state.epsilon, n)
    return state.with_f(out)


SCHEMES = {"imex": imex_step, "explicit": explicit_step, "fluid": fluid_step,
           "layered": layered_step}


def run(state, dt, t_final, scheme="imex", nu=0.0):
    """Advance to ``t_final`` with ``n = ceil(t_final/dt)`` equal steps.

    Returns the final state and ``{"steps", "dt", "mass_drift", "max_f"}``
    where ``mass_drift`` is the largest per-step mass change relative to
    the initial mass.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    n = max(1, math.ceil(t_final / dt - 1e-9))
    h = t_final / n
    _check_cfl(state, h)
    m0 = state.mass()
    vs = state.velocities
    if vs.name == "two" and scheme in ("imex", "fluid"):
        f = state.f if scheme == "imex" else maxwellian(state)
        mu = h * nu / state.dx ** 2 if scheme == "fluid" else 0.0
        if mu > 0.5:
            raise CFLError("viscous term needs dt nu / dx^2 <= 1/2")
        f, drift, fmax = _core.gt_run(np.ascontiguousarray(f), h / state.dx,
                                      h / state.epsilon, n, int(scheme == "fluid"), mu)
        out = state.with_f(f)
        drift = float(np.max(drift)) * state.dx / m0
        fmax = max(float(fmax), float(state.f.max()))
    else:
        step = SCHEMES[scheme]
        cur, drift, fmax = state, 0.0, float(state.f.max())
        m_prev = m0
        for _ in range(n):
            cur = step(cur, h, nu) if scheme == "fluid" else step(cur, h)
            m = cur.mass()
            drift = max(drift, abs(m - m_prev) / m0)
            m_prev = m
            fmax = max(fmax, float(cur.f.max()))
        out = cur
    return out, {"steps": n, "dt": h, "mass_drift": drift, "max_f": fmax}


def initial_state(nx=200, epsilon=1.0, velocities="two", kind="equilibrium",
                  amplitude=0.5, flux=0.2):
    """Smooth periodic data on ``[0, 1)``.

    ``equilibrium`` puts ``f`` on the Maxwellian of ``rho = 1 + A sin(2 pi x)``
    (with ``u = 0``, ``T = 1`` for the Gauss-Hermite set); ``perturbed`` adds
    a flux ``flux * cos(2 pi x)`` that the collision has to remove.
    """
    vs = _velocity_set(velocities) if isinstance(velocities, str) else velocities
    dx = 1.0 / nx
    x = (np.arange(nx) + 0.5) * dx
    rho = 1.0 + amplitude * np.sin(2 * np.pi * x)
    if vs.n_moments == 1:
        f = np.tile(rho / vs.w.sum(), (len(vs.v), 1))
    else:
        f = rho[None, :] * np.ones((len(vs.v), 1))
    if kind == "perturbed":
        f = f * (1 + flux * np.outer(vs.v / vs.vmax, np.cos(2 * np.pi * x)))
    elif kind != "equilibrium":
        raise ValueError(f"unknown initial data kind {kind!r}")
    return KineticState(f, vs, dx, epsilon)


def l2_distance(a, b):
    """Discrete ``L^2(x, v)`` distance ``sqrt(dx sum_j w_j |f_a - f_b|^2)``."""
    d = a.f - b.f
    return float(np.sqrt(a.dx * (a.velocities.w @ (d * d)).sum()))


def density_l2_distance(a, b):
    d = a.density() - b.density()
    return float(np.sqrt(a.dx * (d @ d)))


def ap_diagram_check(state, dt, eps_grid=(1e-3, 3e-4, 1e-4, 3e-5)):
    """Distance between the kinetic step and the fluid step on projected data.

    Returns the distances ``||S_eps(P f) - F(P f)||``, the exact-commutation
    residual ``||P S_eps(P f) - F(P f)||`` and the fitted ``eps`` slope.
    """
    pf = state.with_f(maxwellian(state))
    ref = fluid_step(pf, dt)
    dist, comm = [], []
    for eps in eps_grid:
        s = imex_step(replace(pf, epsilon=eps), dt)
        dist.append(l2_distance(s, ref))
        comm.append(l2_distance(s.with_f(maxwellian(s)), ref))
    return {"eps": list(eps_grid), "distance": dist, "projected_residual": comm,
            "slope": loglog_slope(eps_grid, dist)}


def kinetic_ap_sweep(nx=200, eps_grid=(1.0, 1e-2, 1e-4, 1e-6, 1e-8), dt_grid=None,
                     t_final=0.1, velocities="two", kind="equilibrium", nu0=0.0,
                     ref_refine=16, threads=1, asymptotic_ratio=0.1):
    """IMEX sweep over ``(eps, dt)`` against a fine-step and a fluid reference.

    ``l2_error_vs_ref`` compares with the same scheme at ``min(dt)/ref_refine``;
    ``l2_error_vs_fluid`` compares densities with the fluid stepper at the
    same ``dt`` and viscosity ``eps * nu0``. The ``eps`` slope is fitted over
    the cells with ``eps <= asymptotic_ratio * dt`` at the largest ``dt``;
    the ``dt`` slope at the smallest ``eps``.
    """
    base = initial_state(nx, 1.0, velocities, kind)
    lim = 0.9 * base.dx / base.velocities.vmax
    if dt_grid is None:
        dt_grid = [lim / 2 ** k for k in range(4)]
    dt_grid = [float(x) for x in dt_grid]
    eps_grid = [float(x) for x in eps_grid]
    if len(dt_grid) < 4 or len(eps_grid) < 4:
        raise ValueError("sweep grids need at least 4 points per axis")
    dt_ref = min(dt_grid) / ref_refine
    f0_max = float(base.f.max())

    def reference(eps):
        out, _ = run(replace(base, epsilon=eps), dt_ref, t_final, "imex")
        return out

    def cell(job):
        eps, dt, ref = job
        st = replace(base, epsilon=eps)
        out, info = run(st, dt, t_final, "imex")
        fl, _ = run(st, dt, t_final, "fluid", nu=eps * nu0)
        return {"eps": eps, "dt": dt, "l2_error_vs_ref": l2_distance(out, ref),
                "l2_error_vs_fluid": density_l2_distance(out, fl),
                "mass_drift": info["mass_drift"], "max_f": info["max_f"]}

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        mapper = pool.map if pool else map
        refs = dict(zip(eps_grid, mapper(reference, eps_grid)))
        jobs = [(e, d, refs[e]) for e in eps_grid for d in dt_grid]
        rows = list(mapper(cell, jobs))
    finally:
        if pool:
            pool.shutdown()
    grid = {(r["eps"], r["dt"]): r for r in rows}
    dt_fix = max(dt_grid)
    asym = [e for e in eps_grid if e <= asymptotic_ratio * dt_fix]
    eps_min = min(eps_grid)
    eps_slope = loglog_slope(asym, [grid[e, dt_fix]["l2_error_vs_fluid"] for e in asym])
    dt_slope = loglog_slope(dt_grid, [grid[eps_min, d]["l2_error_vs_ref"] for d in dt_grid])
    bound = f0_max * (1 + 1e-2)
    summary = {
        "nx": nx, "velocities": base.velocities.name, "t_final": t_final,
        "initial_data": kind, "nu0": nu0, "dt_ref": dt_ref, "backend": BACKEND,
        "eps_grid": eps_grid, "dt_grid": dt_grid,
        "eps_fit_points": asym, "eps_fit_dt": dt_fix,
        "eps_slope_vs_fluid": eps_slope, "dt_slope_at_min_eps": dt_slope,
        "eps_slope_ok": bool(abs(eps_slope - 1) <= 0.2),
        "dt_slope_ok": bool(abs(dt_slope - 1) <= 0.2),
        "initial_max_f": f0_max, "max_f": max(r["max_f"] for r in rows),
        "stable": bool(all(r["max_f"] <= bound for r in rows)),
        "max_mass_drift_per_step": max(r["mass_drift"] for r in rows),
        "mass_ok": bool(all(r["mass_drift"] <= 1e-12 for r in rows)),
    }
    return SweepReport(rows, summary, list(KINETIC_COLUMNS))
