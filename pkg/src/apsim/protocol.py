"""Time steppers, error harness and resource model for stiff generators.

Modes
-----
standard-trotter
    ``exp(dt Lf/eps) exp(dt Ls)`` (order 1) or the symmetric splitting.
layered-analog
    Fast layer applied exactly in one shot, then the slow layer.
layered-digital
    Fast layer as ``N = ceil(dt / (eps tau))`` truncated-Taylor substeps.
effective-only
    ``exp(dt eff) P``, no reference to ``eps`` beyond the effective generator.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
import math
import warnings

import numpy as np
from scipy.integrate import quad_vec

from .linalg import expm, induced_trace_norm, hermitian_part, ptrace_out
from .lindblad import Channel, choi, super_from_choi
from .elimination import effective_generator, CenteringWarning
from .metrics import diamond_norm
from .fitting import loglog_slope
from .report import SweepReport

__all__ = ["MODES", "ProtocolConfig", "ErrorReport", "ResourceEstimate",
           "CPViolation", "trotter_step", "trotter_error_certificate",
           "layered_step", "evolve", "duhamel_oracle", "interaction_term",
           "ap_verify", "step_count", "stiffness_scan", "resource_model",
           "resource_from_stiff"]

MODES = ("standard-trotter", "layered-analog", "layered-digital", "effective-only")


class CPViolation(RuntimeError):
    pass


@dataclass
class ProtocolConfig:
    """Stepper configuration.

    ``slow_order`` 1 composes ``slow o fast``; 2 uses ``slow/2 o fast o slow/2``.
    ``fast_substep`` is the fast-time substep ``tau`` of the digital layer.
    """
    stiff: object
    mode: str = "layered-analog"
    dt: float = 0.1
    total_time: float = None
    fast_substep: float = 0.1
    fast_order: int = 4
    slow_order: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"invalid mode {self.mode!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.total_time is None:
            self.total_time = self.dt
        if self.total_time < self.dt:
            raise ValueError("total_time must be at least dt")
        if self.mode == "layered-digital" and not self.fast_substep > 0:
            raise ValueError("fast_substep must be positive")
        if self.slow_order not in (1, 2):
            raise ValueError("slow_order must be 1 or 2")

    @property
    def n_fast(self):
        """``N = ceil(dt / (eps tau))``."""
        return max(1, math.ceil(self.dt / (self.stiff.epsilon * self.fast_substep) - 1e-12))


@dataclass(frozen=True)
class ErrorReport:
    consistency_err: float
    asymptotic_err: float
    slow_err: float
    fast_err: float
    interaction_err: float
    norm_used: str = "induced"

    def triangle_ok(self, slack=1e-8):
        return self.consistency_err <= self.slow_err + self.fast_err + self.interaction_err + slack


@dataclass(frozen=True)
class ResourceEstimate:
    """Unit-constant gate-count model. Exact rationals where possible."""
    model: dict
    g_std: float
    g_ap_digital: float
    g_ap_analog: float
    g_ap_elim: float
    t_precomp: float
    savings_ratio: Fraction

    def to_json(self):
        r = self.savings_ratio
        return {"model": self.model, "g_std": self.g_std,
                "g_ap_digital": self.g_ap_digital, "g_ap_analog": self.g_ap_analog,
                "g_ap_elim": self.g_ap_elim, "t_precomp": self.t_precomp,
                "savings_ratio": float(r),
                "savings_ratio_exact": f"{r.numerator}/{r.denominator}"}


# ---------------------------------------------------------------------------
# steppers

def trotter_step(sg, dt, order=1):
    """Product-formula step; each factor is an exact exponential."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    lf = sg.fast.superop / sg.epsilon
    ls = sg.slow.superop
    if order == 1:
        s = expm(lf, dt) @ expm(ls, dt)
    elif order == 2:
        half = expm(ls, dt / 2)
        s = half @ expm(lf, dt) @ half
    else:
        raise ValueError("order must be 1 or 2")
    return Channel(sg.dim, s)


def trotter_error_certificate(sg, dt, measure=True, **diamond_kw):
    """Leading-order bound ``dt^2/2 ||[Lf/eps, Ls]||_diamond``.

    With ``measure`` the actual diamond error of the order-1 step is also
    computed and the ratio reported.
    """
    a = sg.fast.superop / sg.epsilon
    b = sg.slow.superop
    comm = a @ b - b @ a
    cn = diamond_norm(comm, **diamond_kw)
    cert = 0.5 * dt * dt * cn.value
    out = {"certificate": cert, "commutator_diamond": cn.value,
           "commutator_gap": cn.duality_gap, "dt": dt, "epsilon": sg.epsilon,
           "dt_times_norm": dt * np.linalg.norm(sg.full(), 2)}
    if measure:
        err = diamond_norm(trotter_step(sg, dt).superop - expm(sg.full(), dt), **diamond_kw)
        out["measured"] = err.value
        out["measured_gap"] = err.duality_gap
        out["ratio"] = err.value / cert if cert > 0 else (0.0 if err.value == 0 else np.inf)
    return out


def _taylor_step(l, h, order):
    n = l.shape[0]
    out = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, order + 1):
        term = term @ (h * l) / k
        out = out + term
    return out


def _cp_repair(s):
    """Clip the Choi matrix to the PSD cone and restore trace preservation."""
    j = hermitian_part(choi(s))
    d = int(round(np.sqrt(j.shape[0])))
    lam, v = np.linalg.eigh(j)
    viol = float(max(0.0, -lam.min()))
    if viol <= 1e-10 * max(np.abs(lam).max(), 1.0):
        return s, 0.0
    jp = (v * np.clip(lam, 0, None)) @ v.conj().T
    t = hermitian_part(ptrace_out(jp, d, d))
    w, u = np.linalg.eigh(t)
    tinv = (u / np.sqrt(w)) @ u.conj().T
    k = np.kron(np.eye(d), tinv.T)
    return super_from_choi(k @ jp @ k), viol


def _fast_layer(cfg):
    sg = cfg.stiff
    lf = sg.fast.superop / sg.epsilon
    if cfg.mode == "layered-analog":
        return expm(lf, cfg.dt), {"n_fast": 1, "cp_violation": 0.0}
    n = cfg.n_fast
    sub = _taylor_step(lf, cfg.dt / n, cfg.fast_order)
    sub, viol = _cp_repair(sub)
    return np.linalg.matrix_power(sub, n), {"n_fast": n, "cp_violation": viol}


def layered_step(cfg, return_info=False):
    """One step ``slow o fast^N`` (or the symmetric variant) of the configured mode."""
    sg = cfg.stiff
    if cfg.mode == "standard-trotter":
        ch = trotter_step(sg, cfg.dt, cfg.slow_order)
        return (ch, {"n_fast": 1}) if return_info else ch
    if cfg.mode == "effective-only":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CenteringWarning)
            eff = effective_generator(sg)
        s = expm(eff.superop, cfg.dt) @ eff.projection
        ch = Channel(sg.dim, s)
        return (ch, {"n_fast": 0}) if return_info else ch
    fast, info = _fast_layer(cfg)
    ls = sg.slow.superop
    if cfg.slow_order == 1:
        s = expm(ls, cfg.dt) @ fast
    else:
        half = expm(ls, cfg.dt / 2)
        s = half @ fast @ half
    ch = Channel(sg.dim, s)
    return (ch, info) if return_info else ch


def evolve(cfg, cp_abort=1e-4):
    """``ceil(T/dt)`` steps of the configured stepper, CP-checked at the end."""
    step = layered_step(cfg).superop
    k = max(1, math.ceil(cfg.total_time / cfg.dt - 1e-12))
    s = np.linalg.matrix_power(step, k)
    lam = np.linalg.eigvalsh(hermitian_part(choi(s)))
    viol = max(0.0, -lam.min())
    if viol > cp_abort:
        raise CPViolation(f"evolved map leaves the CP cone by {viol:.3e}")
    if viol > 1e-8:
        warnings.warn(f"evolved map has CP violation {viol:.3e}", RuntimeWarning, stacklevel=2)
    return Channel(cfg.stiff.dim, s)


# ---------------------------------------------------------------------------
# Duhamel oracle

def _breakpoints(t, scale):
    pts = [t - k * scale for k in (1, 3, 10, 30) if t - k * scale > 0]
    return sorted(pts)


def duhamel_oracle(sg, t, terms=1, epsabs=1e-12, epsrel=1e-10):
    """Integral representation of ``exp(t L_eps)`` with ``L0 = Lf/eps``, ``L1 = Ls``.

    ``terms=1``: ``e^{tL0} + int_0^t e^{(t-s)L0} L1 e^{sL} ds``.
    ``terms=2``: one more level of iteration, still exact, with the full
    propagator innermost.
    """
    l0 = sg.fast.superop / sg.epsilon
    l1 = sg.slow.superop
    lfull = l0 + l1
    scale = sg.epsilon / (sg.spectral_fast.gap or 1.0)
    pts = _breakpoints(t, scale)
    base = expm(l0, t)
    if terms == 1:
        val, _ = quad_vec(lambda s: expm(l0, t - s) @ l1 @ expm(lfull, s), 0.0, t,
                          epsabs=epsabs, epsrel=epsrel, points=pts or None, limit=2000)
        return base + val
    if terms == 2:
        first, _ = quad_vec(lambda s: expm(l0, t - s) @ l1 @ expm(l0, s), 0.0, t,
                            epsabs=epsabs, epsrel=epsrel, points=pts or None, limit=2000)

        def outer(s):
            if s <= 0:
                return np.zeros_like(base)
            inner, _ = quad_vec(lambda u: l1 @ expm(l0, s - u) @ l1 @ expm(lfull, u),
                                0.0, s, epsabs=epsabs, epsrel=epsrel,
                                points=_breakpoints(s, scale) or None, limit=2000)
            return expm(l0, t - s) @ inner
        second, _ = quad_vec(outer, 0.0, t, epsabs=epsabs, epsrel=epsrel,
                             points=pts or None, limit=2000)
        return base + first + second
    raise ValueError("terms must be 1 or 2")


def interaction_term(sg, t, epsabs=1e-13, epsrel=1e-10):
    """``int_0^t e^{(t-s)L0} (I-P) L1 e^{sL} ds``, the part routed through ``ran(I-P)``."""
    l0 = sg.fast.superop / sg.epsilon
    l1 = sg.slow.superop
    q = sg.spectral_fast.complement
    lfull = l0 + l1
    scale = sg.epsilon / (sg.spectral_fast.gap or 1.0)
    val, _ = quad_vec(lambda s: expm(l0, t - s) @ q @ l1 @ expm(lfull, s), 0.0, t,
                      epsabs=epsabs, epsrel=epsrel,
                      points=_breakpoints(t, scale) or None, limit=2000)
    return val


# ---------------------------------------------------------------------------
# AP verification sweep

SPOT_DIAMOND = {"max_iter": 1500, "rtol": 1e-4}


def _norm(m, norm, seed, diamond_kw=None):
    if norm == "induced":
        return induced_trace_norm(m, seed=seed)
    if norm == "diamond":
        return diamond_norm(m, **(diamond_kw or SPOT_DIAMOND)).value
    raise ValueError(f"unknown norm {norm!r}")


def _cell(sg, eff, eps, dt, mode, norms, seed, slow_order=1, fast_substep=0.1,
          fast_order=4, diamond_kw=None):
    e = sg.with_epsilon(eps)
    cfg = ProtocolConfig(e, mode=mode, dt=dt, fast_substep=fast_substep,
                         fast_order=fast_order, slow_order=slow_order)
    psi = layered_step(cfg).superop
    exact = expm(e.full(), dt)
    limit = expm(eff.superop, dt) @ eff.projection
    lf = e.fast.superop / eps
    ls = e.slow.superop
    f_ex = expm(lf, dt)
    s_ex = expm(ls, dt)
    if mode in ("layered-analog", "layered-digital"):
        fast, _ = (_fast_layer(cfg) if mode == "layered-digital" else (f_ex, None))
        if slow_order == 1:
            with_exact_slow = s_ex @ fast
            exact_factors = s_ex @ f_ex
        else:
            h = expm(ls, dt / 2)
            with_exact_slow = h @ fast @ h
            exact_factors = h @ f_ex @ h
    else:
        with_exact_slow = psi
        exact_factors = psi
    # the diagram's eps -> 0 limit of the same protocol: fast layer replaced by P
    p = e.spectral_fast.projection
    psi0 = s_ex @ p if slow_order == 1 else expm(ls, dt / 2) @ p @ expm(ls, dt / 2)
    rows = []
    for k, norm in enumerate(norms):
        if k == 0:
            rows.append({
                "eps": eps, "dt": dt, "norm": norm,
                "consistency_err": _norm(psi - exact, norm, seed),
                "asymptotic_err": _norm(psi - limit, norm, seed),
                "slow_err": _norm(psi - with_exact_slow, norm, seed),
                "fast_err": _norm(with_exact_slow - exact_factors, norm, seed),
                "interaction_err": _norm(exact_factors - exact, norm, seed),
                "diagram_err": _norm(psi - psi0, norm, seed),
                "asymptotic_err_kernel": _norm((psi - limit) @ p, norm, seed),
            })
        else:
            # spot-check rows: only the AP error, the other columns stay nan
            nan = float("nan")
            rows.append({
                "eps": eps, "dt": dt, "norm": norm,
                "consistency_err": nan,
                "asymptotic_err": _norm(psi - limit, norm, seed, diamond_kw),
                "slow_err": nan, "fast_err": nan, "interaction_err": nan,
                "diagram_err": nan, "asymptotic_err_kernel": nan,
            })
    return rows


def ap_verify(sg, dt_grid, eps_grid, norm="induced", mode="layered-analog",
              diamond_cells=(), threads=1, seed=0, slow_order=1,
              fast_substep=0.1, fast_order=4, eps_slope_target=1.0,
              dt_slope_target=2.0, diamond_kw=None):
    """Sweep ``(eps, dt)`` and fit the AP error orders.

    Parameters
    ----------
    diamond_cells : iterable of (i_eps, i_dt)
        Cells that additionally get a diamond-norm row carrying only the AP
        error (``asymptotic_err``); other error columns of that row are nan.
    diamond_kw : dict
        Solver options for those rows, default ``SPOT_DIAMOND``.
    threads : int
        Worker threads; rows are assembled in grid order regardless.

    Returns
    -------
    SweepReport
    """
    dt_grid = [float(x) for x in dt_grid]
    eps_grid = [float(x) for x in eps_grid]
    if len(dt_grid) < 4 or len(eps_grid) < 4:
        raise ValueError("sweep grids need at least 4 points per axis")
    effs = {}
    for eps in eps_grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CenteringWarning)
            effs[eps] = effective_generator(sg.with_epsilon(eps))
    diamond_cells = {tuple(c) for c in diamond_cells}
    jobs = []
    for i, eps in enumerate(eps_grid):
        for k, dt in enumerate(dt_grid):
            norms = [norm] + (["diamond"] if (i, k) in diamond_cells and norm != "diamond" else [])
            jobs.append((eps, dt, norms))

    def run(job):
        eps, dt, norms = job
        return _cell(sg, effs[eps], eps, dt, mode, norms, seed, slow_order,
                     fast_substep, fast_order, diamond_kw)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    rows = [r for res in results for r in res]
    main = [r for r in rows if r["norm"] == norm]
    grid = {(r["eps"], r["dt"]): r for r in main}
    dt_min, eps_min = min(dt_grid), min(eps_grid)

    def col(key, eps=None, dt=None):
        if eps is not None:
            return [grid[eps, d][key] for d in dt_grid]
        return [grid[e, dt][key] for e in eps_grid]

    eps_slopes = {repr(dt): loglog_slope(eps_grid, col("asymptotic_err", dt=dt)) for dt in dt_grid}
    dt_slopes = {repr(eps): loglog_slope(dt_grid, col("asymptotic_err", eps=eps)) for eps in eps_grid}
    p_fit = {repr(eps): loglog_slope(dt_grid, col("consistency_err", eps=eps)) for eps in eps_grid}
    kern_eps = {repr(dt): loglog_slope(eps_grid, col("asymptotic_err_kernel", dt=dt)) for dt in dt_grid}
    kern_dt = {repr(eps): loglog_slope(dt_grid, col("asymptotic_err_kernel", eps=eps)) for eps in eps_grid}
    # C1(eps): consistency constant against the local order dt^2, reported per eps
    c1 = {repr(eps): max(grid[eps, d]["consistency_err"] / d ** 2 for d in dt_grid) for eps in eps_grid}
    eps_slope = eps_slopes[repr(dt_min)]
    dt_slope = dt_slopes[repr(eps_min)]
    for r in rows:
        r["in_eps_fit"] = int(r["norm"] == norm and r["dt"] == dt_min)
        r["in_dt_fit"] = int(r["norm"] == norm and r["eps"] == eps_min)
        if r["norm"] == norm:
            r["triangle_ok"] = int(r["consistency_err"] <= r["slow_err"] + r["fast_err"]
                                   + r["interaction_err"] + 1e-8)
        else:
            r["triangle_ok"] = ""
    diagram = [max(grid[e, d]["diagram_err"] for d in dt_grid) for e in sorted(eps_grid, reverse=True)]
    monotone = all(b <= a + 1e-9 for a, b in zip(diagram, diagram[1:]))
    spots = []
    for r in rows:
        if r["norm"] == "diamond":
            base = grid[r["eps"], r["dt"]]
            ratio = (r["asymptotic_err"] / base["asymptotic_err"]
                     if base["asymptotic_err"] > 0 else float("nan"))
            spots.append({"eps": r["eps"], "dt": r["dt"], "diamond": r["asymptotic_err"],
                          "induced": base["asymptotic_err"], "ratio": ratio,
                          "within_2x": bool(1 - 1e-6 <= ratio <= 2.0)})
    summary = {
        "mode": mode, "norm": norm, "eps_grid": eps_grid, "dt_grid": dt_grid,
        "eps_slope_at_min_dt": eps_slope, "dt_slope_at_min_eps": dt_slope,
        "eps_slopes_by_dt": eps_slopes, "dt_slopes_by_eps": dt_slopes,
        "p_by_eps": p_fit, "q_estimate": eps_slope,
        "eps_slope_ok": bool(abs(eps_slope - eps_slope_target) <= 0.15),
        "dt_slope_ok": bool(abs(dt_slope - dt_slope_target) <= 0.2),
        "diagram_max_by_eps_desc": diagram, "diagram_monotone": bool(monotone),
        "kernel_restricted_eps_slopes_by_dt": kern_eps,
        "kernel_restricted_dt_slopes_by_eps": kern_dt,
        "c1_by_eps": c1,
        "diamond_spot_checks": spots,
        "diamond_spot_checks_ok": bool(len(spots) >= 4 and all(x["within_2x"] for x in spots)),
        "triangle_all": bool(all(r["triangle_ok"] for r in main)),
        "centered": bool(all(effs[e].centered for e in eps_grid)),
        "centering_residual": effs[eps_grid[0]].centering_residual,
    }
    return SweepReport(rows, summary)


# ---------------------------------------------------------------------------
# stiffness penalty

def step_count(sg, delta=1e-3, t_final=1.0, accounting="certified", order=1,
               n_max=10 ** 7, seed=0):
    """Smallest step count ``N`` of the standard splitting reaching error ``delta``.

    ``accounting='certified'`` budgets ``N * ||step(T/N) - exp(T/N L)||``,
    the triangle-inequality sum of local errors. ``'global'`` measures
    ``||step(T/N)^N - exp(T L)||`` directly.
    """
    lfull = sg.full()

    def err(n):
        h = t_final / n
        step = trotter_step(sg, h, order).superop
        if accounting == "certified":
            return n * induced_trace_norm(step - expm(lfull, h), seed=seed)
        if accounting == "global":
            return induced_trace_norm(np.linalg.matrix_power(step, n) - expm(lfull, t_final), seed=seed)
        raise ValueError(f"unknown accounting {accounting!r}")

    lo, hi = 0, 1
    while err(hi) > delta:
        lo, hi = hi, hi * 2
        if hi > n_max:
            raise RuntimeError("step count exceeds n_max")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if err(mid) > delta:
            lo = mid
        else:
            hi = mid
    return hi


def stiffness_scan(sg, eps_grid=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3), delta=1e-3,
                   t_final=1.0, accounting="certified", order=1, seed=0):
    counts = [step_count(sg.with_epsilon(e), delta, t_final, accounting, order, seed=seed)
              for e in eps_grid]
    return {"eps": list(eps_grid), "steps": counts, "accounting": accounting,
            "slope": loglog_slope(eps_grid, counts)}


# ---------------------------------------------------------------------------
# resource model

def _q(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def resource_model(kappa, d_fast, d_slow, c=1, t_final=1, delta=Fraction(1, 1000),
                   poly_delta_exponent=1, epsilon=1, constants=None):
    """Evaluate the four gate-count formulas under unit constants.

    ``tau_n = kappa * epsilon``. The savings ratio is kept as an exact
    rational: ``g_std / g_ap_analog = kappa * d_fast^c``.
    """
    if d_fast is None or d_slow is None:
        raise ValueError("resource model needs a declared tensor split")
    k = dict(std=1, digital=1, analog=1, elim=1)
    k.update(constants or {})
    kappa, eps, t = _q(kappa), _q(epsilon), _q(t_final)
    d_tot = d_fast * d_slow
    tau_n = kappa * eps
    if float(poly_delta_exponent).is_integer():
        poly = (1 / _q(delta)) ** int(poly_delta_exponent)
    else:
        poly = float(1 / _q(delta)) ** float(poly_delta_exponent)
    std_core = _q(k["std"]) * t / eps * d_tot ** c
    dig_core = _q(k["digital"]) * t / eps * d_tot ** c
    ana_core = _q(k["analog"]) * t / tau_n * d_slow ** c
    precomp = Fraction(d_tot) ** 3
    elim_core = _q(k["elim"]) * (t / tau_n + precomp) * d_slow ** c
    model = {"c": c, "kappa": float(kappa), "d_fast": d_fast, "d_slow": d_slow,
             "d_tot": d_tot, "poly_delta_exponent": poly_delta_exponent,
             "delta": float(delta), "T": float(t), "epsilon": float(eps),
             "tau_n": float(tau_n)}
    return ResourceEstimate(model, float(std_core * poly), float(dig_core * poly),
                            float(ana_core * poly), float(elim_core * poly),
                            float(precomp), std_core / ana_core)


def resource_from_stiff(sg, c=1, t_final=1.0, delta=1e-3, poly_delta_exponent=1,
                        tau_n=None):
    """Resource model with ``kappa = tau_n / (eps / gap_fast)``.

    ``tau_n`` defaults to ``1/||L_slow||``.
    """
    if sg.split is None:
        raise ValueError("resource model needs a declared tensor split")
    tau_n = 1.0 / sg.slow_norm if tau_n is None else tau_n
    tau_1 = sg.epsilon / sg.spectral_fast.gap
    return resource_model(tau_n / tau_1, sg.split.d_fast, sg.split.d_slow, c,
                          t_final, delta, poly_delta_exponent, tau_1)
