"""Adiabatic elimination of a fast dissipative part.

For ``L_eps = L_fast/eps + L_slow`` with ``P`` the spectral projection of
``L_fast`` and ``Q = I - P``, the effective generator on ``ran P`` is

    eff = P Ls P - eps * P Ls Lf^+ Q Ls P

with ``Lf^+`` the Drazin inverse of the unscaled fast part. The exact
Schur complement of ``L_eps`` on ``ran P`` is available as an oracle.
"""
from dataclasses import dataclass, field
from functools import cached_property
import warnings

import numpy as np

from .linalg import expm, induced_trace_norm, ptrace_out, vec, unvec, hermitian_part
from .lindblad import LindbladGenerator, choi
from .spectral import analyze
from .fitting import loglog_slope

__all__ = ["TensorSplit", "StiffGenerator", "EffectiveGenerator",
           "CenteringWarning", "centering_check", "hamiltonian_centering",
           "effective_generator", "compress", "cptp_second_order_check",
           "schur_complement", "schur_kernel_check", "expansion_order",
           "dynamics_error", "dynamics_order"]


class CenteringWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TensorSplit:
    """Declared factorization ``H = H_fast (x) H_slow`` and the fast steady state."""
    d_fast: int
    d_slow: int
    fast_state: np.ndarray

    @property
    def d_tot(self):
        return self.d_fast * self.d_slow

    def embed(self, x_slow):
        return np.kron(self.fast_state, x_slow)

    def trace_fast(self, x):
        return ptrace_out(x, self.d_fast, self.d_slow)

    def embedding(self):
        """Superoperator ``vec(X_s) -> vec(rho_f (x) X_s)``."""
        ds = self.d_slow
        cols = []
        for k in range(ds * ds):
            e = np.zeros(ds * ds, complex)
            e[k] = 1
            cols.append(vec(self.embed(unvec(e))))
        return np.array(cols).T

    def reduction(self):
        """Superoperator ``vec(X) -> vec(tr_fast X)``."""
        n = self.d_tot
        cols = []
        for k in range(n * n):
            e = np.zeros(n * n, complex)
            e[k] = 1
            cols.append(vec(self.trace_fast(unvec(e))))
        return np.array(cols).T


@dataclass
class StiffGenerator:
    """``L_eps = fast/eps + slow`` with lazily computed fast spectral data."""
    fast: LindbladGenerator
    slow: LindbladGenerator
    epsilon: float
    split: TensorSplit = None
    _sd: object = field(default=None, repr=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.fast.dim != self.slow.dim:
            raise ValueError("fast and slow parts act on different spaces")

    @property
    def dim(self):
        return self.fast.dim

    @property
    def spectral_fast(self):
        if self._sd is None:
            self._sd = analyze(self.fast)
        return self._sd

    def full(self):
        return self.fast.superop / self.epsilon + self.slow.superop

    def with_epsilon(self, eps):
        return StiffGenerator(self.fast, self.slow, eps, self.split, self._sd)

    @cached_property
    def slow_norm(self):
        return induced_trace_norm(self.slow.superop)


@dataclass(frozen=True)
class EffectiveGenerator:
    """Effective generator on ``ran P`` and, with a split, on the slow factor.

    ``second_order`` already includes the factor ``eps``, so
    ``superop == first_order + second_order``.
    """
    superop: np.ndarray
    first_order: np.ndarray
    second_order: np.ndarray
    projection: np.ndarray
    epsilon: float
    centered: bool
    centering_residual: float
    reduced: np.ndarray = None
    split: TensorSplit = None


def centering_check(sg, rel_tol=1e-10):
    """Residual ``||P Ls (I-P)||`` and whether it is below ``rel_tol ||Ls||``."""
    sd = sg.spectral_fast
    ls = sg.slow.superop
    if not np.any(ls):
        return True, 0.0
    res = induced_trace_norm(sd.projection @ ls @ sd.complement)
    return bool(res <= rel_tol * sg.slow_norm), float(res)


def hamiltonian_centering(split, h):
    """``||tr_fast[(rho_f (x) I) H]||``, the Hamiltonian-level centering residual."""
    d = split.d_tot
    h = np.asarray(h, complex)
    m = split.trace_fast(np.kron(split.fast_state, np.eye(split.d_slow)) @ h)
    return float(np.linalg.norm(m, 2)) if d else 0.0


def compress(split, s):
    """Slow-factor matrix of ``X_s -> tr_fast[S(rho_f (x) X_s)]``."""
    return split.reduction() @ s @ split.embedding()


def effective_generator(sg, split=None):
    """Second-order effective generator.

    Warns with :class:`CenteringWarning` and still returns a result when
    ``P Ls Q`` does not vanish.
    """
    sd = sg.spectral_fast
    split = sg.split if split is None else split
    p, q = sd.projection, sd.complement
    ls = sg.slow.superop
    ok, res = centering_check(sg)
    if not ok:
        warnings.warn("centering condition fails (residual %.3e); error bounds "
                      "for the elimination do not apply" % res, CenteringWarning,
                      stacklevel=2)
    first = p @ ls @ p
    second = -sg.epsilon * (p @ ls @ sd.drazin @ q @ ls @ p)
    eff = first + second
    red = compress(split, eff) if split is not None else None
    return EffectiveGenerator(eff, first, second, p, sg.epsilon, ok, res, red, split)


def cptp_second_order_check(eff, t_samples=(0.1, 1.0, 10.0)):
    """Worst negative Choi eigenvalue of the effective semigroup.

    Uses the reduced generator when available, otherwise ``exp(t eff) P``.
    """
    worst = np.inf
    for t in t_samples:
        if eff.reduced is not None:
            s = expm(eff.reduced, t)
        else:
            s = expm(eff.superop, t) @ eff.projection
        lam = np.linalg.eigvalsh(hermitian_part(choi(s)))
        worst = min(worst, float(lam.min() / max(np.abs(lam).max(), 1e-300)))
    return {"cptp": bool(worst >= -1e-10), "worst_eigenvalue": worst,
            "violation": max(0.0, -worst)}


def schur_complement(sg, eps=None):
    """Exact Schur complement of ``L_eps`` on ``ran P`` by dense block inversion."""
    eps = sg.epsilon if eps is None else eps
    sd = sg.spectral_fast
    p, q = sd.projection, sd.complement
    ls = sg.slow.superop
    if eps * sd.gap < 1e3 * np.finfo(float).eps * max(sg.slow_norm, 1.0):
        raise ValueError("epsilon too small for a stable block inversion")
    a = p + q @ (sg.fast.superop + eps * ls) @ q
    return p @ ls @ p - eps * (p @ ls @ np.linalg.solve(a, q @ ls @ p))


def schur_kernel_check(sg, eps=None):
    """Residual ``||S_eps P v||`` for ``v`` spanning ``ker L_eps``."""
    eps = sg.epsilon if eps is None else eps
    lfull = sg.fast.superop / eps + sg.slow.superop
    w, v = np.linalg.eig(lfull)
    k = np.argmin(np.abs(w))
    s = schur_complement(sg, eps)
    pv = sg.spectral_fast.projection @ v[:, k]
    return float(np.linalg.norm(s @ pv) / max(np.linalg.norm(pv), 1e-300))


def expansion_order(sg, eps_grid=(1e-1, 3e-2, 1e-2, 3e-3)):
    """``||S_eps - first - eps * second_unit||`` over ``eps`` and its slope."""
    errs = []
    for eps in eps_grid:
        e = sg.with_epsilon(eps)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CenteringWarning)
            eff = effective_generator(e)
        errs.append(induced_trace_norm(schur_complement(e) - eff.superop))
    return {"eps": list(eps_grid), "errors": errs,
            "slope": loglog_slope(eps_grid, errs)}


def dynamics_error(sg, t_final=1.0, eps=None):
    """``||exp(T L_eps) - exp(T eff) P||`` in the induced trace norm."""
    e = sg if eps is None else sg.with_epsilon(eps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CenteringWarning)
        eff = effective_generator(e)
    exact = expm(e.full(), t_final)
    approx = expm(eff.superop, t_final) @ eff.projection
    return induced_trace_norm(exact - approx)


def dynamics_order(sg, eps_grid=(1e-1, 3e-2, 1e-2, 3e-3), t_final=1.0):
    errs = [dynamics_error(sg, t_final, eps) for eps in eps_grid]
    return {"eps": list(eps_grid), "errors": errs,
            "slope": loglog_slope(eps_grid, errs)}
