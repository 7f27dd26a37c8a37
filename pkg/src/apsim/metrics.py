"""Channel distances: induced trace norm and certified diamond norm.

The diamond norm of a Hermiticity-preserving map with Choi matrix ``J`` is
computed from the pair of programs

    primal:  max tr(J W)          s.t.  -I(x)rho <= W <= I(x)rho,  rho a state
    dual:    min lmax(tr_out Y)   s.t.  Y >= J,  Y >= -J

solved by ADMM on the dual. Whatever the solver does, the reported bounds
are recomputed from scratch: any state ``rho`` gives the lower bound
``||(I(x)sqrt(rho)) J (I(x)sqrt(rho))||_1`` with an explicit feasible ``W``,
and any Hermitian ``Y``, shifted by the smallest multiple of the identity
that makes it feasible, gives the upper bound ``lmax(tr_out Y)``.
"""
from dataclasses import dataclass, field

import numpy as np

from .linalg import (as_matrix, hermitian_part, psd_part, ptrace_out, lift_in,
                     induced_trace_norm, unvec, vec, trace_norm)
from .lindblad import choi, Channel
from ._rng import make_rng

__all__ = ["DiamondResult", "diamond_norm", "diamond_distance",
           "diamond_certificates", "norm_sandwich_check", "stability_check",
           "tensor_identity", "pure_input_oracle", "optimal_input",
           "achieved_distance"]

MAX_DIM = 16


@dataclass(frozen=True)
class DiamondResult:
    """Certified diamond-norm bracket.

    ``method`` is ``sdp-converged`` when ``duality_gap <= 1e-6 max(1, value)``
    and ``bound-sandwich`` otherwise.
    """
    value: float
    lower_bound: float
    upper_bound: float
    method: str
    iterations: int
    duality_gap: float
    rho: np.ndarray = field(default=None, repr=False)
    w: np.ndarray = field(default=None, repr=False)
    y: np.ndarray = field(default=None, repr=False)

    def to_json(self, certificates=False):
        out = {"value": self.value, "lower_bound": self.lower_bound,
               "upper_bound": self.upper_bound, "method": self.method,
               "iterations": self.iterations, "duality_gap": self.duality_gap}
        if certificates:
            from .lindblad import matrix_to_json
            out["rho"] = matrix_to_json(self.rho)
            out["W"] = matrix_to_json(self.w)
            out["Y"] = matrix_to_json(self.y)
        return out


def _sqrt_psd(rho):
    w, v = np.linalg.eigh(hermitian_part(rho))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def lower_certificate(j, d, rho):
    """Primal value and feasible ``W`` for a given input state ``rho``."""
    w_, v_ = np.linalg.eigh(hermitian_part(rho))
    w_ = np.clip(w_, 0.0, None)
    if w_.sum() <= 0:
        return 0.0, np.zeros_like(j), np.eye(d) / d
    w_ /= w_.sum()
    rho = (v_ * w_) @ v_.conj().T
    k = lift_in((v_ * np.sqrt(w_)) @ v_.conj().T, d)
    m = hermitian_part(k @ j @ k)
    lam, vec_ = np.linalg.eigh(m)
    sign = (vec_ * np.sign(lam)) @ vec_.conj().T
    w = k @ sign @ k
    return float(np.abs(lam).sum()), w, rho


def upper_certificate(j, d, y):
    """Feasible dual point and its objective from any Hermitian ``y``."""
    y = hermitian_part(y)
    s = max(0.0, -np.linalg.eigvalsh(y - j).min(), -np.linalg.eigvalsh(y + j).min())
    y = y + s * np.eye(y.shape[0])
    return float(np.linalg.eigvalsh(hermitian_part(ptrace_out(y, d, d))).max()), y


def diamond_certificates(j, d, rho, y):
    """Re-verify a ``(rho, Y)`` pair by direct substitution.

    Returns the certified ``(lower, upper)`` and the constraint residuals
    of the explicit primal ``W``.
    """
    lo, w, rho = lower_certificate(j, d, rho)
    up, y = upper_certificate(j, d, y)
    big = lift_in(rho, d)
    resid = max(0.0, -np.linalg.eigvalsh(hermitian_part(big - w)).min(),
                -np.linalg.eigvalsh(hermitian_part(big + w)).min())
    return {"lower": float(np.real(np.trace(j @ w))), "upper": up,
            "primal_residual": float(resid), "lower_from_rho": lo}


def _abs_herm(j):
    w, v = np.linalg.eigh(j)
    return (v * np.abs(w)) @ v.conj().T


def _admm(j, d, rho0, max_iter, rtol, check, sigma=1.0):
    """Dual ADMM on the normalized problem. Returns best certified bracket."""
    n = d * d
    eye_n = np.eye(n)
    eye_d = np.eye(d)
    y = _abs_herm(j)
    s0, s1 = y - j, y + j
    s2 = np.zeros((d, d), complex)
    u0 = np.zeros((n, n), complex)
    u1 = np.zeros((n, n), complex)
    u2 = np.zeros((d, d), complex)
    best_lo, best_w, best_rho = lower_certificate(j, d, rho0)
    best_up, best_y = upper_certificate(j, d, y)
    it = 0
    den = d - d * d / (2.0 + d)
    for it in range(1, max_iter + 1):
        # exact minimization of the augmented Lagrangian in (Y, t)
        r0, r1, r2 = j + s0 - u0, -j + s1 - u1, s2 - u2
        rhs = r0 + r1 - lift_in(r2, d)
        tr_rhs = ptrace_out(rhs, d, d)
        t = (np.trace(r2).real - 1.0 / sigma + np.trace(tr_rhs).real / (2 + d)) / den
        tmat = (tr_rhs + t * d * eye_d) / (2 + d)
        y = hermitian_part(rhs - lift_in(tmat, d) + t * eye_n) / 2
        a0, a1 = y - j, y + j
        a2 = t * eye_d - ptrace_out(y, d, d)
        s0 = psd_part(a0 + u0)
        s1 = psd_part(a1 + u1)
        s2 = psd_part(a2 + u2)
        u0 += a0 - s0
        u1 += a1 - s1
        u2 += a2 - s2
        if it % check == 0:
            # multiplier of tI - tr_out Y >= 0 lives in -PSD for scaled ADMM
            rho = -hermitian_part(u2)
            if np.trace(rho).real > 0:
                lo, w, rho_n = lower_certificate(j, d, rho)
                if lo > best_lo:
                    best_lo, best_w, best_rho = lo, w, rho_n
            up, yf = upper_certificate(j, d, y)
            if up < best_up:
                best_up, best_y = up, yf
            if best_up - best_lo <= rtol * best_up:
                break
    return best_lo, best_up, best_w, best_rho, best_y, it


def diamond_norm(m, max_iter=50000, rtol=1e-8, check=25, allow_large=False):
    """Diamond norm of a superoperator with certified bounds.

    Parameters
    ----------
    m : array_like or Channel
        ``d^2 x d^2`` superoperator.
    max_iter : int
        ADMM iteration cap.
    rtol : float
        Relative duality-gap target.
    allow_large : bool
        Lift the ``d <= 16`` size cap.

    Returns
    -------
    DiamondResult
    """
    s = m.superop if isinstance(m, Channel) else as_matrix(m, square=True)
    d = int(round(np.sqrt(s.shape[0])))
    if d > MAX_DIM and not allow_large:
        raise ValueError(f"dimension {d} exceeds the diamond-norm cap {MAX_DIM}")
    if np.linalg.norm(s) <= 1e-14:
        z = np.zeros((d * d, d * d), complex)
        return DiamondResult(0.0, 0.0, 0.0, "sdp-converged", 0, 0.0, np.eye(d) / d, z, z)
    j = choi(s)
    scale = np.abs(j).max()
    if np.abs(j - j.conj().T).max() > 1e-10 * scale:
        ind = induced_trace_norm(s)
        return DiamondResult(ind, ind, d * ind, "bound-sandwich", 0, (d - 1) * ind)
    j = hermitian_part(j)
    ja = _abs_herm(j)
    ub0 = np.linalg.eigvalsh(ptrace_out(ja, d, d)).max()
    jn = j / ub0
    # warm starts for the primal state
    cands = [np.eye(d) / d, ptrace_out(_abs_herm(jn), d, d)]
    wv, vv = np.linalg.eigh(cands[1])
    cands.append(np.outer(vv[:, -1], vv[:, -1].conj()))
    rho0 = max(cands, key=lambda r: lower_certificate(jn, d, r)[0])
    lo, w, rho = lower_certificate(jn, d, rho0)
    up, y = upper_certificate(jn, d, ja / ub0)
    it = 0
    if up - lo > rtol * up:
        lo, up, w, rho, y, it = _admm(jn, d, rho, max_iter, rtol, check)
    lo, up = lo * ub0, up * ub0
    gap = max(up - lo, 0.0)
    method = "sdp-converged" if gap <= 1e-6 * max(1.0, up) else "bound-sandwich"
    return DiamondResult(float(0.5 * (lo + up)), float(lo), float(up), method, it,
                         float(gap), rho, w, y * ub0)


def diamond_distance(a, b, **kw):
    """Diamond norm of ``a - b`` for channels or superoperators."""
    sa = a.superop if isinstance(a, Channel) else np.asarray(a)
    sb = b.superop if isinstance(b, Channel) else np.asarray(b)
    return diamond_norm(sa - sb, **kw)


def tensor_identity(s, n):
    """Superoperator of ``Phi (x) id_n`` on ``(d n) x (d n)`` matrices."""
    s = np.asarray(s, dtype=complex)
    d = int(round(np.sqrt(s.shape[0])))
    dn = d * n
    t = s.reshape(d, d, d, d, order="F")  # [a, b, i, k]
    big = np.zeros((dn, dn, dn, dn), complex)  # [(a,p), (b,q), (i,p'), (k,q')]
    big6 = big.reshape(d, n, d, n, d, n, d, n)
    for p in range(n):
        for q in range(n):
            big6[:, p, :, q, :, p, :, q] = t
    # rows/cols ordered as column-stacked vec of (dn x dn) matrices
    return big.reshape(dn, dn, dn, dn).reshape(dn * dn, dn * dn, order="F")


def norm_sandwich_check(m, slack=1e-8, **kw):
    """Check ``||Phi|| <= diamond <= d ||Phi||``."""
    s = m.superop if isinstance(m, Channel) else np.asarray(m, dtype=complex)
    d = int(round(np.sqrt(s.shape[0])))
    ind = induced_trace_norm(s)
    dia = diamond_norm(s, **kw)
    ok = ind <= dia.upper_bound + slack and dia.lower_bound <= d * ind + slack
    return {"induced": ind, "diamond": dia.value, "d_times_induced": d * ind,
            "passed": bool(ok)}


def stability_check(m, n, tol=1e-5, **kw):
    """Compare the diamond norm of ``Phi (x) id_n`` with that of ``Phi``."""
    s = m.superop if isinstance(m, Channel) else np.asarray(m, dtype=complex)
    d = int(round(np.sqrt(s.shape[0])))
    if d * n > MAX_DIM and not kw.get("allow_large", False):
        raise ValueError("enlarged dimension exceeds the diamond-norm cap")
    a = diamond_norm(s, **kw)
    b = diamond_norm(tensor_identity(s, n), **kw)
    return {"base": a.value, "enlarged": b.value, "difference": abs(a.value - b.value),
            "passed": bool(abs(a.value - b.value) <= tol)}


def _apply_ext(t, a):
    """``(Phi (x) id)(psi psi^dag)`` with ``psi[i, j]`` on system i, ancilla j."""
    # t[a, b, i, k] = Phi(|i><k|)[a, b]
    out = np.einsum("abik,ij,kl->ajbl", t, a, a.conj())
    d = a.shape[0]
    return out.reshape(d * d, d * d)


def _adjoint_ext(t, u, d):
    """``(Phi^dag (x) id)(U)`` as a matrix on system (x) ancilla."""
    u4 = u.reshape(d, d, d, d)  # [a, j, b, l]
    h = np.einsum("abik,ajbl->ijkl", t.conj(), u4)
    return h.reshape(d * d, d * d)


def pure_input_oracle(m, starts=8, iters=500, tol=1e-13, seed=0):
    """Diamond norm from below by ascent over pure system-ancilla inputs.

    Independent of the semidefinite programs: each step takes the sign
    operator of the current output and moves the input to the top
    eigenvector of its adjoint image, which never decreases the objective.
    One start is the maximally entangled state.
    """
    s = m.superop if isinstance(m, Channel) else np.asarray(m, dtype=complex)
    d = int(round(np.sqrt(s.shape[0])))
    t = s.reshape(d, d, d, d, order="F")
    rng = make_rng(seed, 0xA5)
    inits = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for _ in range(starts):
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        inits.append(a / np.linalg.norm(a))
    best = 0.0
    for a in inits:
        val = -1.0
        for _ in range(iters):
            out = hermitian_part(_apply_ext(t, a))
            lam, v = np.linalg.eigh(out)
            new = np.abs(lam).sum()
            u = (v * np.sign(lam)) @ v.conj().T
            h = hermitian_part(_adjoint_ext(t, u, d))
            _, hv = np.linalg.eigh(h)
            a = hv[:, -1].reshape(d, d)
            if new - val <= tol * max(new, 1e-300):
                val = max(val, new)
                break
            val = new
        val = max(val, trace_norm(_apply_ext(t, a)))
        best = max(best, val)
    return float(best)


def optimal_input(result):
    """Pure input ``psi[i, j] = sqrt(rho)[j, i]`` attaining the lower bound."""
    return _sqrt_psd(result.rho).T.copy()


def achieved_distance(a, b, psi):
    """``||((A - B) (x) id)(psi psi^dag)||_1`` evaluated channel by channel."""
    sa = a.superop if isinstance(a, Channel) else np.asarray(a)
    sb = b.superop if isinstance(b, Channel) else np.asarray(b)
    d = psi.shape[0]
    oa = _apply_ext(sa.reshape(d, d, d, d, order="F"), psi)
    ob = _apply_ext(sb.reshape(d, d, d, d, order="F"), psi)
    return trace_norm(oa - ob)
