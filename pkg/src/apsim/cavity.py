"""Cavity (x) qubit in the bad-cavity limit.

``H = w_q sz/2 + g (s+ a + s- a^dag)`` with cavity loss ``kappa D[a]``.
The stiffness parameter is ``eps = g/kappa``; ``eps`` is varied through
``kappa`` at fixed ``g`` so the slow part stays fixed. The stored fast
generator is the unscaled ``g D[a]``, so that ``fast/eps = kappa D[a]``.
Ordering is cavity (x) qubit.
"""
from dataclasses import dataclass
import warnings

import numpy as np

from .linalg import commutator_super, dissipator_super, induced_trace_norm
from .lindblad import build_generator, destroy, sigma_minus, sigma_z
from .elimination import (StiffGenerator, TensorSplit, effective_generator,
                          hamiltonian_centering, CenteringWarning,
                          cptp_second_order_check)
from .protocol import ap_verify, resource_model

__all__ = ["CavityModel", "cavity_operators", "build_cavity", "fast_generator",
           "purcell_target", "purcell_check", "cavity_ap_sweep"]


@dataclass(frozen=True)
class CavityModel:
    omega_q: float = 1.0
    g: float = 0.1
    kappa: float = 10.0
    n_max: int = 4

    def __post_init__(self):
        if not (self.kappa > 0 and self.g > 0):
            raise ValueError("kappa and g must be positive")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")

    @property
    def epsilon(self):
        return self.g / self.kappa

    @property
    def gamma(self):
        """Purcell rate ``4 g^2 / kappa``."""
        return 4.0 * self.g ** 2 / self.kappa

    def with_epsilon(self, eps):
        return CavityModel(self.omega_q, self.g, self.g / eps, self.n_max)


def cavity_operators(n_max):
    """``a``, ``s-`` and ``sz`` on the ``(n_max+1) * 2`` dimensional space."""
    nc = n_max + 1
    a = np.kron(destroy(nc), np.eye(2))
    sm = np.kron(np.eye(nc), sigma_minus())
    sz = np.kron(np.eye(nc), sigma_z())
    return a, sm, sz


def _hamiltonians(m):
    a, sm, sz = cavity_operators(m.n_max)
    h0 = m.omega_q * sz / 2
    hint = m.g * (sm.conj().T @ a + sm @ a.conj().T)
    return h0, hint


def fast_generator(m):
    """``kappa D[a]`` on cavity (x) qubit."""
    a, _, _ = cavity_operators(m.n_max)
    return build_generator(np.zeros_like(a), [np.sqrt(m.kappa) * a])


def build_cavity(m):
    """Stiff generator with ``fast = g D[a]``, ``slow = -i[H, .]``."""
    a, _, _ = cavity_operators(m.n_max)
    h0, hint = _hamiltonians(m)
    fast = build_generator(np.zeros_like(a), [np.sqrt(m.g) * a])
    slow = build_generator(h0 + hint)
    vac = np.zeros((m.n_max + 1, m.n_max + 1), complex)
    vac[0, 0] = 1
    return StiffGenerator(fast, slow, m.epsilon, TensorSplit(m.n_max + 1, 2, vac))


def purcell_target(m):
    """``-i[w_q sz/2, .] + (4 g^2/kappa) D[s-]`` on the qubit."""
    return commutator_super(m.omega_q * sigma_z() / 2) + m.gamma * dissipator_super(sigma_minus())


def _reduced(m):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CenteringWarning)
        return effective_generator(build_cavity(m))


def purcell_check(m, cutoff_step=2):
    """Compare the eliminated qubit generator with the Purcell form.

    Reports the maximum entry deviation, the cutoff sensitivity
    (``n_max`` against ``n_max + cutoff_step``), the measured decay rate,
    both centering residuals and the CP verdict.
    """
    eff = _reduced(m)
    target = purcell_target(m)
    dev = float(np.abs(eff.reduced - target).max())
    eff2 = _reduced(CavityModel(m.omega_q, m.g, m.kappa, m.n_max + cutoff_step))
    sens = float(np.abs(eff2.reduced - eff.reduced).max())
    first_red = eff.split.reduction() @ eff.first_order @ eff.split.embedding()
    first_dev = float(np.abs(first_red - commutator_super(m.omega_q * sigma_z() / 2)).max())
    # population transfer |e><e| -> |g><g|: column of vec(|e><e|) = 3, row vec(|g><g|) = 0
    gamma_measured = float(eff.reduced[0, 3].real)
    _, hint = _hamiltonians(m)
    return {
        "omega_q": m.omega_q, "g": m.g, "kappa": m.kappa, "n_max": m.n_max,
        "epsilon": m.epsilon, "gamma_target": m.gamma, "gamma_measured": gamma_measured,
        "max_entry_error": dev,
        "relative_error": dev / float(np.abs(target).max()),
        "cutoff_sensitivity": sens, "cutoff_compared": m.n_max + cutoff_step,
        "first_order_deviation": first_dev,
        "centering_superop_residual": eff.centering_residual,
        "centering_superop_satisfied": eff.centered,
        "centering_hamiltonian_residual": hamiltonian_centering(eff.split, hint),
        "cptp": cptp_second_order_check(eff)["cptp"],
        "reduced": eff.reduced,
    }


def cavity_ap_sweep(m, dt_grid=None, eps_grid=(1e-1, 3e-2, 1e-2, 3e-3),
                    dt_factors=(0.2, 0.1, 0.05, 0.025), diamond_cells=(),
                    threads=1, seed=0, c=1):
    """Layered-analog AP sweep with ``eps`` varied through ``kappa``.

    ``dt_grid`` defaults to ``dt_factors / ||L_slow||``.

    Raises
    ------
    ValueError
        If a time step violates ``dt <= min(1/w_q, 1/gamma)`` for some ``eps``.
    """
    sg = build_cavity(m)
    if dt_grid is None:
        dt_grid = [f / sg.slow_norm for f in dt_factors]
    for eps in eps_grid:
        gam = 4.0 * m.g * eps
        lim = min(1.0 / m.omega_q if m.omega_q else np.inf, 1.0 / gam)
        if max(dt_grid) > lim:
            raise ValueError(f"dt grid violates dt <= min(1/w_q, 1/gamma) at eps={eps}")
    rep = ap_verify(sg, dt_grid, eps_grid, diamond_cells=diamond_cells,
                    threads=threads, seed=seed)
    rep.summary["slow_norm"] = sg.slow_norm
    res = []
    for eps in eps_grid:
        r = resource_model(1.0 / eps, m.n_max + 1, 2, c=c, epsilon=eps).to_json()
        res.append({"eps": eps, "kappa_ratio": 1.0 / eps, "savings_ratio": r["savings_ratio"]})
    rep.summary["resources"] = res
    return rep
