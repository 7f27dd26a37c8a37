"""GKSL generators, channels and their Choi / Kraus / Stinespring forms."""
from dataclasses import dataclass, field
import json

import numpy as np

from .linalg import (as_matrix, commutator_super, dissipator_super, expm, vec,
                     unvec, hermitian_part, ptrace_out)
from ._rng import make_rng

__all__ = [
    "LindbladGenerator", "Channel", "CPTPError", "build_generator",
    "generator_from_super", "channel_from_generator", "channel", "choi",
    "super_from_choi", "classify", "kraus_from_choi", "stinespring_isometry",
    "apply_isometry", "matrix_to_json", "matrix_from_json", "destroy",
    "sigma_minus", "sigma_z", "random_density", "random_channel",
    "random_lindbladian",
]

HERM_TOL = 1e-12
PSD_TOL = -1e-10


class CPTPError(RuntimeError):
    """A map that should be CPTP failed verification."""


@dataclass(frozen=True)
class LindbladGenerator:
    """Hamiltonian plus jump operators, with the superoperator cached.

    ``hamiltonian`` and ``jumps`` may be ``None`` for generators assembled
    directly from a superoperator (sums and rescalings).
    """
    dim: int
    superop: np.ndarray
    hamiltonian: np.ndarray = None
    jumps: tuple = ()

    def __add__(self, other):
        return generator_from_super(self.superop + other.superop)

    def __rmul__(self, c):
        return generator_from_super(c * self.superop)

    def trace_residual(self):
        """``||vec(I)^dag L||``, zero for trace-preserving generators."""
        one = vec(np.eye(self.dim))
        return float(np.abs(one.conj() @ self.superop).max())


@dataclass(frozen=True)
class Channel:
    """A linear map on ``d x d`` matrices with its verified kind.

    ``kind`` is one of ``general-linear``, ``hermiticity-preserving``,
    ``cp`` or ``cptp``.
    """
    dim: int
    superop: np.ndarray
    kind: str = field(default="general-linear")

    def __call__(self, rho):
        return unvec(self.superop @ vec(rho))

    def compose(self, other):
        """``self o other``."""
        return channel(self.superop @ other.superop)


def build_generator(h, jumps=()):
    """Assemble ``-i[H, .] + sum_k D[L_k]``.

    Raises
    ------
    ValueError
        On shape mismatch or a non-Hermitian ``h``.
    """
    h = as_matrix(h, square=True, name="hamiltonian")
    d = h.shape[0]
    if np.linalg.norm(h - h.conj().T) > HERM_TOL * max(np.linalg.norm(h), 1.0):
        raise ValueError("hamiltonian is not Hermitian")
    jumps = tuple(as_matrix(l, square=True, name="jump") for l in jumps)
    for l in jumps:
        if l.shape != (d, d):
            raise ValueError("jump operator dimension mismatch")
    sup = commutator_super(h)
    for l in jumps:
        sup = sup + dissipator_super(l)
    return LindbladGenerator(d, sup, h, jumps)


def generator_from_super(s):
    s = as_matrix(s, square=True, name="superoperator")
    d = int(round(np.sqrt(s.shape[0])))
    if d * d != s.shape[0]:
        raise ValueError("superoperator size is not a square")
    return LindbladGenerator(d, s)


def choi(m):
    """Choi matrix ``J = sum_ij Phi(|i><j|) (x) |i><j|`` (output (x) input).

    Accepts a :class:`Channel` or a raw superoperator.
    """
    s = m.superop if isinstance(m, Channel) else np.asarray(m, dtype=complex)
    d = int(round(np.sqrt(s.shape[0])))
    # column i + d*j of S is vec(Phi(|i><j|)); regroup into blocks
    t = s.reshape(d, d, d, d, order="F")  # [a, b, i, j] = Phi(|i><j|)[a, b]
    return t.transpose(0, 2, 1, 3).reshape(d * d, d * d)


def super_from_choi(j):
    """Inverse of :func:`choi`."""
    j = np.asarray(j, dtype=complex)
    d = int(round(np.sqrt(j.shape[0])))
    t = j.reshape(d, d, d, d).transpose(0, 2, 1, 3)
    return t.reshape(d * d, d * d, order="F")


def classify(s, tol=1e-10):
    """Return the strongest of the kinds the superoperator verifies."""
    j = choi(s)
    d = int(round(np.sqrt(j.shape[0])))
    scale = max(np.abs(j).max(), 1.0)
    if np.abs(j - j.conj().T).max() > tol * scale:
        return "general-linear"
    lam = np.linalg.eigvalsh(hermitian_part(j))
    if lam.min() < PSD_TOL * scale:
        return "hermiticity-preserving"
    if np.abs(ptrace_out(j, d, d) - np.eye(d)).max() <= tol * scale:
        return "cptp"
    return "cp"


def channel(s, verify=False):
    """Wrap a superoperator as a :class:`Channel`, optionally classified."""
    s = as_matrix(s, square=True, name="superoperator")
    d = int(round(np.sqrt(s.shape[0])))
    return Channel(d, s, classify(s) if verify else "general-linear")


def channel_from_generator(g, t):
    """``exp(t L)`` verified CPTP.

    Raises
    ------
    CPTPError
        If the result is not CPTP, which means the generator is malformed.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    s = expm(g.superop, t)
    kind = classify(s)
    if kind != "cptp":
        raise CPTPError(f"exp(tL) at t={t} verified only as {kind}")
    return Channel(g.dim, s, "cptp")


def kraus_from_choi(j, rel_cut=1e-12, return_clipped=False):
    """Minimal Kraus set from the eigen-decomposition of a PSD Choi matrix.

    Eigenvalues below ``rel_cut * tr J`` are discarded; eigenvalues between
    ``-1e-6 ||J||`` and 0 are treated as numerical dust.
    """
    j = hermitian_part(np.asarray(j, dtype=complex))
    d = int(round(np.sqrt(j.shape[0])))
    w, v = np.linalg.eigh(j)
    nrm = np.abs(w).max() if w.size else 0.0
    if w.min() < -1e-6 * nrm:
        raise ValueError("Choi matrix is materially non-PSD (min eig %.3e)" % w.min())
    clipped = float(-w[w < 0].sum())
    keep = w > rel_cut * max(np.real(np.trace(j)), 1e-300)
    ops = []
    for lam, col in zip(w[keep][::-1], v[:, keep].T[::-1]):
        # J = sum_ij Phi(E_ij) (x) E_ij, so each eigenvector is vec(K) row-major in (out, in)
        ops.append(np.sqrt(lam) * col.reshape(d, d))
    return (ops, clipped) if return_clipped else ops


def stinespring_isometry(kraus, tol=1e-8):
    """Stack Kraus operators into ``V = sum_m K_m (x) |m>``.

    Rows are ordered (system, environment) so that ``tr_env[V rho V^dag]``
    is the channel output.
    """
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    d = kraus[0].shape[1]
    comp = sum(k.conj().T @ k for k in kraus)
    if np.abs(comp - np.eye(d)).max() > tol:
        raise ValueError("Kraus set is not complete")
    m = len(kraus)
    v = np.zeros((kraus[0].shape[0] * m, d), dtype=complex)
    for idx, k in enumerate(kraus):
        v[idx::m, :] = k
    return v


def apply_isometry(v, rho, n_env):
    """``tr_env[V rho V^dag]`` for ``V`` from :func:`stinespring_isometry`."""
    big = v @ rho @ v.conj().T
    d = v.shape[0] // n_env
    return np.einsum("aibi->ab", big.reshape(d, n_env, d, n_env))


# ---------------------------------------------------------------------------
# JSON matrix schema {"rows", "cols", "re", "im"}

def matrix_to_json(m):
    m = np.asarray(m, dtype=complex)
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]),
            "re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(obj):
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        m = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix object: {exc}") from None
    if m.shape != (rows, cols):
        raise ValueError(f"matrix entries have shape {m.shape}, header says {(rows, cols)}")
    return as_matrix(m)


# ---------------------------------------------------------------------------
# standard operators and random instances

def destroy(n):
    """Truncated annihilation operator on ``n`` Fock levels."""
    return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)


def sigma_minus():
    """Lowering operator in the (|g>, |e>) basis."""
    return np.array([[0, 1], [0, 0]], dtype=complex)


def sigma_z():
    """``diag(-1, 1)`` in the (|g>, |e>) basis."""
    return np.diag([-1.0, 1.0]).astype(complex)


def random_density(d, seed=0, rank=None):
    rng = make_rng(seed, 0xD5)
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_channel(d, seed=0, n_kraus=3):
    """Random CPTP superoperator from a Haar-like isometry."""
    rng = make_rng(seed, 0xC4)
    g = rng.normal(size=(n_kraus * d, d)) + 1j * rng.normal(size=(n_kraus * d, d))
    q, _ = np.linalg.qr(g)
    ks = [q[i * d:(i + 1) * d] for i in range(n_kraus)]
    return sum(np.kron(k.conj(), k) for k in ks)


def random_lindbladian(d, seed=0, n_jumps=2, h_scale=1.0, l_scale=1.0):
    """Random GKSL generator with Gaussian Hamiltonian and jumps."""
    rng = make_rng(seed, 0x1B)

    def gin():
        return (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2 * d)
    h = gin()
    h = h_scale * (h + h.conj().T) / 2
    return build_generator(h, [l_scale * gin() for _ in range(n_jumps)])
