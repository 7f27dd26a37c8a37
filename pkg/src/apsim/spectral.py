"""Spectral structure of a generator: kernel, gap, projection, Drazin inverse."""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from .linalg import eig_general, expm, unvec, vec, induced_trace_norm
from .lindblad import LindbladGenerator, generator_from_super

__all__ = ["SpectralData", "SpectralError", "analyze", "drazin_check",
           "primitivity_test", "decay_rate_fit", "resolvent_bound",
           "ergodic_average", "spectral_report"]


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralData:
    """Kernel and gap data of one generator.

    ``gap`` is ``None`` when the generator has no nonzero eigenvalue.
    For a degenerate kernel ``steady_state`` is the image of ``I/d``.
    """
    generator: LindbladGenerator
    eigenvalues: np.ndarray
    steady_state: np.ndarray
    gap: float
    projection: np.ndarray
    drazin: np.ndarray
    kernel_dim: int
    primitive: bool
    eigen_condition: float
    defective: bool

    @property
    def complement(self):
        return np.eye(self.projection.shape[0]) - self.projection


def _as_generator(g):
    return g if isinstance(g, LindbladGenerator) else generator_from_super(g)


def analyze(g, tol_zero=None):
    """Eigen-decomposition based spectral data.

    The kernel collects eigenvalues with ``|lambda| < max(1e-10, 1e-12 ||L||)``.
    The gap is the smallest ``|Re lambda|`` over the rest. ``P`` and the
    Drazin inverse are assembled from biorthonormal eigenvectors.

    Raises
    ------
    SpectralError
        If no eigenvalue is numerically zero.
    """
    g = _as_generator(g)
    lmat = g.superop
    d = g.dim
    nrm = np.linalg.norm(lmat, 2)
    if tol_zero is None:
        tol_zero = max(1e-10, 1e-12 * nrm)
    eg = eig_general(lmat)
    lam = eg.values
    ker = np.abs(lam) < tol_zero
    kdim = int(ker.sum())
    if kdim == 0:
        raise SpectralError("no zero eigenvalue; not a valid generator")
    v, w = eg.right, eg.left
    proj = v[:, ker] @ w[:, ker].conj().T
    inv = np.zeros_like(lam)
    inv[~ker] = 1.0 / lam[~ker]
    drazin = (v * inv) @ w.conj().T
    gap = float(np.abs(lam[~ker].real).min()) if kdim < lam.size else None
    if kdim == 1:
        rho = unvec(v[:, ker][:, 0])
    else:
        rho = unvec(proj @ vec(np.eye(d) / d))
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) > 0:
        rho = rho / tr
    evals = np.linalg.eigvalsh(rho)
    primitive = bool(kdim == 1 and evals.min() > 1e-12)
    return SpectralData(g, lam, rho, gap, proj, drazin, kdim, primitive,
                        eg.condition, eg.defective)


def drazin_check(sd, t_cut=None, epsrel=1e-10, norm_seed=0):
    """Cross-check the Drazin inverse against ``-int_0^T e^{tL}(I-P) dt``.

    Returns a dict with the relative deviation, the induced norm of the
    Drazin inverse and its ratio to ``1/gap``.
    """
    if sd.gap is None:
        raise SpectralError("generator has no gap")
    lmat = sd.generator.superop
    q = sd.complement
    t_cut = 40.0 / sd.gap if t_cut is None else t_cut
    val, err = quad_vec(lambda t: -(expm(lmat, t) @ q), 0.0, t_cut,
                        epsrel=epsrel, epsabs=1e-14, limit=400)
    dev = np.linalg.norm(val - sd.drazin) / max(np.linalg.norm(sd.drazin), 1e-300)
    dn = induced_trace_norm(sd.drazin, seed=norm_seed)
    return {"relative_deviation": float(dev), "quadrature_error": float(err),
            "drazin_norm": dn, "ratio_to_inverse_gap": dn * sd.gap,
            "t_cut": t_cut, "passed": bool(dev <= 1e-6)}


def _probe_states(d):
    states = []
    for i in range(d):
        e = np.zeros(d, complex)
        e[i] = 1
        states.append(np.outer(e, e))
    for i in range(d):
        for j in range(i + 1, d):
            for ph in (1, 1j):
                e = np.zeros(d, complex)
                e[i], e[j] = 1, ph
                e /= np.sqrt(2)
                states.append(np.outer(e, e.conj()))
    return states


def primitivity_test(g, sd=None):
    """Strict primitivity plus the weaker gapped-unique-kernel verdict.

    Evidence: kernel dimension, smallest steady-state eigenvalue and the
    smallest output eigenvalue of ``exp(t0 L)`` on ``d^2`` probe states,
    with ``t0 = 10/gap``.
    """
    sd = analyze(g) if sd is None else sd
    d = sd.generator.dim
    steady_min = float(np.linalg.eigvalsh(sd.steady_state).min())
    out_min = np.nan
    if sd.gap is not None:
        s = expm(sd.generator.superop, 10.0 / sd.gap)
        out_min = min(float(np.linalg.eigvalsh(unvec(s @ vec(r))).min())
                      for r in _probe_states(d))
    primitive = bool(sd.kernel_dim == 1 and steady_min > 1e-12 and out_min > 1e-12)
    return {"primitive": primitive,
            "gapped_unique": bool(sd.kernel_dim == 1 and sd.gap is not None),
            "kernel_dim": sd.kernel_dim, "steady_min_eig": steady_min,
            "min_output_eig": out_min}


def _map_norm(m, norm, seed):
    if norm == "induced":
        return induced_trace_norm(m, seed=seed)
    if norm == "diamond":
        from .metrics import diamond_norm
        return diamond_norm(m).value
    raise ValueError(f"unknown norm {norm!r}")


def decay_rate_fit(g, norm="induced", n_points=20, floor=1e-13, sd=None, seed=0):
    """Fit ``||exp(tL) - P|| ~ C exp(-r t)`` on ``t = k/gap``, ``k = 1..n_points``.

    Returns
    -------
    rate, prefactor : float
    """
    sd = analyze(g) if sd is None else sd
    if sd.gap is None:
        raise SpectralError("generator has no gap")
    ts = np.arange(1, n_points + 1) / sd.gap
    vals = np.array([_map_norm(expm(sd.generator.superop, t) - sd.projection, norm, seed)
                     for t in ts])
    keep = vals > floor
    if keep.sum() < 2:
        raise SpectralError("too few points above the noise floor")
    slope, icpt = np.polyfit(ts[keep], np.log(vals[keep]), 1)
    return float(-slope), float(np.exp(icpt))


def resolvent_bound(sd, zetas=None, seed=0):
    """Measured ``K = max ||(z - L)^{-1}(I-P)|| (gap - |z|)`` over real ``z``."""
    if sd.gap is None:
        raise SpectralError("generator has no gap")
    if zetas is None:
        zetas = np.linspace(-0.45, 0.45, 7) * sd.gap
    lmat = sd.generator.superop
    p, q = sd.projection, sd.complement
    ks = []
    for z in zetas:
        # identity on ran P, (z - L) on ran(I-P)
        r = np.linalg.solve(z * q - lmat + p, q)
        ks.append(induced_trace_norm(r, seed=seed) * (sd.gap - abs(z)))
    return float(max(ks))


def ergodic_average(g, t_final, epsrel=1e-10):
    """``(1/T) int_0^T exp(tL) dt`` by adaptive quadrature."""
    g = _as_generator(g)
    val, _ = quad_vec(lambda t: expm(g.superop, t), 0.0, t_final,
                      epsrel=epsrel, epsabs=1e-14, limit=2000)
    return val / t_final


def spectral_report(sd, fit=None):
    """JSON-ready summary."""
    order = np.lexsort((sd.eigenvalues.imag, -sd.eigenvalues.real))
    lam = sd.eigenvalues[order]
    out = {"eigenvalues": {"re": lam.real.tolist(), "im": lam.imag.tolist()},
           "gap": sd.gap, "kernel_dim": sd.kernel_dim, "primitive": sd.primitive,
           "eigen_condition": sd.eigen_condition, "defective": sd.defective}
    if fit is not None:
        out["fit"] = {"rate": fit[0], "prefactor": fit[1]}
    return out
