"""Dense complex linear algebra used throughout the package.

Vectorization is column stacking everywhere: ``vec(X) = X.reshape(-1, order='F')``,
so the map ``X -> A X B`` is the matrix ``kron(B.T, A)`` acting on ``vec(X)``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._rng import make_rng

__all__ = [
    "as_matrix", "kron", "vec", "unvec", "spre", "spost", "sprepost",
    "commutator_super", "dissipator_super", "expm", "EigResult", "eig_general",
    "trace_norm", "induced_trace_norm", "hermitian_part", "psd_part",
    "ptrace_out", "lift_in", "identity_super",
]


def as_matrix(m, square=False, name="matrix"):
    """Coerce ``m`` to a finite 2-d complex array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def kron(a, b):
    """Kronecker product, shape ``(ra*rb, ca*cb)``."""
    return np.kron(as_matrix(a, name="a"), as_matrix(b, name="b"))


def vec(x):
    """Column-stack a matrix into a vector."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v, shape=None):
    """Inverse of :func:`vec`; square shape inferred when not given."""
    v = np.asarray(v)
    if shape is None:
        d = int(round(np.sqrt(v.size)))
        if d * d != v.size:
            raise ValueError("cannot infer a square shape from size %d" % v.size)
        shape = (d, d)
    return v.reshape(shape, order="F")


def spre(a):
    """Superoperator of ``X -> A X``."""
    a = np.asarray(a)
    return np.kron(np.eye(a.shape[1]), a)


def spost(b):
    """Superoperator of ``X -> X B``."""
    b = np.asarray(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def sprepost(a, b):
    """Superoperator of ``X -> A X B``."""
    return np.kron(np.asarray(b).T, np.asarray(a))


def identity_super(d):
    return np.eye(d * d, dtype=complex)


def commutator_super(h):
    """Superoperator of ``X -> -i[H, X]``."""
    return -1j * (spre(h) - spost(h))


def dissipator_super(l):
    """Superoperator of ``D[L](X) = L X L^dag - {L^dag L, X}/2``."""
    l = np.asarray(l, dtype=complex)
    ldl = l.conj().T @ l
    return sprepost(l, l.conj().T) - 0.5 * spre(ldl) - 0.5 * spost(ldl)


def hermitian_part(x):
    return 0.5 * (x + x.conj().T)


def psd_part(x):
    """Projection of a Hermitian matrix onto the PSD cone."""
    w, v = np.linalg.eigh(hermitian_part(x))
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def ptrace_out(z, d_out, d_in):
    """Trace out the first (output) factor of an operator on ``out (x) in``."""
    return np.einsum("aiaj->ij", np.asarray(z).reshape(d_out, d_in, d_out, d_in))


def lift_in(x, d_out):
    """``I_out (x) X``, the adjoint of :func:`ptrace_out`."""
    return np.kron(np.eye(d_out), x)


# ---------------------------------------------------------------------------
# matrix exponential

_PADE = {
    3: (120., 60., 12., 1.),
    5: (30240., 15120., 3360., 420., 30., 1.),
    7: (17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.),
    9: (17643225600., 8821612800., 2075673600., 302702400., 30270240.,
        2162160., 110880., 3960., 90., 1.),
    13: (64764752532480000., 32382376266240000., 7771770303897600.,
         1187353796428800., 129060195264000., 10559470521600.,
         670442572800., 33522128640., 1323241920., 40840800., 960960.,
         16380., 182., 1.),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1,
          7: 9.504178996162932e-1, 9: 2.097847961257068e0,
          13: 5.371920351148152e0}


def _taylor(a):
    n = a.shape[0]
    out = np.eye(n, dtype=a.dtype)
    term = np.eye(n, dtype=a.dtype)
    for k in range(1, 40):
        term = term @ a / k
        out = out + term
        if np.abs(term).sum() <= 1e-17 * np.abs(out).sum():
            break
    return out


def _pade(a, m):
    b = _PADE[m]
    n = a.shape[0]
    ident = np.eye(n, dtype=a.dtype)
    a2 = a @ a
    if m < 13:
        powers = [ident, a2]
        for _ in range((m - 1) // 2 - 1):
            powers.append(powers[-1] @ a2)
        u = a @ sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
        v = sum(b[2 * k] * powers[k] for k in range(len(powers)))
    else:
        a4 = a2 @ a2
        a6 = a4 @ a2
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return np.linalg.solve(v - u, v + u)


def expm(m, t=1.0):
    """Matrix exponential ``exp(t*m)``.

    Scaling and squaring with a diagonal Pade approximant of degree
    3, 5, 7, 9 or 13 chosen from the 1-norm. Inputs with norm below 0.5 go
    through a plain Taylor sum instead.

    Parameters
    ----------
    m : array_like
        Square matrix.
    t : float, optional
        Time factor.
    """
    a = as_matrix(m, square=True) * t
    if a.shape[0] == 0:
        return a.copy()
    nrm = np.abs(a).sum(axis=0).max()
    if nrm == 0.0:
        return np.eye(a.shape[0], dtype=complex)
    if nrm < 0.5:
        return _taylor(a)
    for deg in (3, 5, 7, 9):
        if nrm <= _THETA[deg]:
            return _pade(a, deg)
    s = max(0, int(np.ceil(np.log2(nrm / _THETA[13]))))
    r = _pade(a / 2.0 ** s, 13)
    for _ in range(s):
        r = r @ r
    return r


# ---------------------------------------------------------------------------
# eigen-decomposition

@dataclass(frozen=True)
class EigResult:
    """Eigen-decomposition ``m = V diag(w) W^dag`` with ``W^dag V = I``.

    ``defective`` is set when the eigenvector matrix condition number
    exceeds ``1e8``; ``W`` is then built from a pseudo-inverse and should
    not be trusted.
    """
    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    condition: float
    defective: bool

    def reconstruct(self):
        return (self.right * self.values) @ self.left.conj().T


def eig_general(m, cond_limit=1e8):
    """Eigenvalues with biorthonormal right and left eigenvectors."""
    a = as_matrix(m, square=True)
    w, v = sla.eig(a)
    cond = float(np.linalg.cond(v))
    if not np.isfinite(cond) or cond > cond_limit:
        vinv = np.linalg.pinv(v)
        return EigResult(w, v, vinv.conj().T, cond if np.isfinite(cond) else np.inf, True)
    vinv = np.linalg.inv(v)
    return EigResult(w, v, vinv.conj().T, cond, False)


# ---------------------------------------------------------------------------
# norms

def trace_norm(m):
    """Schatten-1 norm, the sum of singular values."""
    a = as_matrix(m, square=True)
    return float(np.linalg.svd(a, compute_uv=False).sum())


def _normalize(x):
    n = np.linalg.norm(x)
    return x / n if n > 0 else x


def induced_trace_norm(s, starts=8, iters=400, tol=1e-13, seed=0, full_output=False):
    """Trace-norm-induced norm ``sup ||S(X)||_1 / ||X||_1`` of a superoperator.

    Extreme points of the trace-norm ball are rank one, so the sup is taken
    over ``X = x y^dag`` with unit vectors. Each start alternates
    ``x <- G y`` and ``y <- G^dag x``, where ``G`` is the adjoint map applied
    to the polar factor of ``S(x y^dag)``. Each update cannot decrease the
    objective. The returned value is attained, hence a certified lower bound.

    Parameters
    ----------
    s : array_like
        ``d^2 x d^2`` superoperator.
    starts : int
        Number of random starts, on top of one deterministic start.
    full_output : bool
        Also return a convergence flag (every start stalled below ``tol``).
    """
    s = as_matrix(s, square=True)
    d = int(round(np.sqrt(s.shape[0])))
    if d * d != s.shape[0]:
        raise ValueError("superoperator size is not a square")
    if not np.any(s):
        return (0.0, True) if full_output else 0.0
    sh = s.conj().T
    rng = make_rng(seed, 0x1D)
    best = 0.0
    converged = True
    # deterministic start from the dominant right singular vector of S
    _, _, vh = np.linalg.svd(s)
    x0 = unvec(vh[0].conj())
    u, _, wh = np.linalg.svd(x0)
    inits = [(u[:, 0], wh[0].conj())]
    for _ in range(starts):
        x = rng.normal(size=d) + 1j * rng.normal(size=d)
        y = rng.normal(size=d) + 1j * rng.normal(size=d)
        inits.append((_normalize(x), _normalize(y)))
    for x, y in inits:
        val = -1.0
        ok = False
        for _ in range(iters):
            out = unvec(s @ vec(np.outer(x, y.conj())))
            u, sv, wh = np.linalg.svd(out)
            new = sv.sum()
            g = unvec(sh @ vec(u @ wh))
            x = _normalize(g @ y)
            y = _normalize(g.conj().T @ x)
            if new - val <= tol * max(new, 1e-300):
                ok = True
                val = max(val, new)
                break
            val = new
        out = unvec(s @ vec(np.outer(x, y.conj())))
        val = max(val, np.linalg.svd(out, compute_uv=False).sum())
        converged &= ok
        best = max(best, val)
    return (float(best), converged) if full_output else float(best)
