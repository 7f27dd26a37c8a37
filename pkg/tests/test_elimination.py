import warnings

import numpy as np
import pytest

from apsim import elimination as el
from apsim.cavity import CavityModel, build_cavity
from apsim.linalg import induced_trace_norm, vec
from apsim.lindblad import random_lindbladian, random_density
from apsim.models import random_stiff, commuting_stiff, depolarizing


@pytest.fixture(scope="module")
def stiff():
    return random_stiff(3, 2, 0.1, seed=0)


def _eff(sg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", el.CenteringWarning)
        return el.effective_generator(sg)


def test_stiff_generator_validation():
    g2, g3 = random_lindbladian(2), random_lindbladian(3)
    with pytest.raises(ValueError):
        el.StiffGenerator(g2, g2, 0.0)
    with pytest.raises(ValueError):
        el.StiffGenerator(g2, g3, 0.1)


def test_with_epsilon_shares_spectral_cache(stiff):
    sd = stiff.spectral_fast
    other = stiff.with_epsilon(0.01)
    assert other.spectral_fast is sd
    assert np.allclose(other.full(), stiff.fast.superop / 0.01 + stiff.slow.superop)


def test_kernel_of_embedded_fast_part(stiff):
    sd = stiff.spectral_fast
    assert sd.kernel_dim == 4
    # P maps any state to rho_f (x) tr_fast(rho)
    rho = random_density(6, seed=2)
    sp = stiff.split
    assert np.allclose(sd.projection @ vec(rho), vec(sp.embed(sp.trace_fast(rho))), atol=1e-10)


def test_effective_decomposition(stiff):
    eff = _eff(stiff)
    assert np.allclose(eff.superop, eff.first_order + eff.second_order)
    p = eff.projection
    assert np.allclose(p @ eff.superop @ p, eff.superop, atol=1e-10)
    assert eff.reduced.shape == (4, 4)
    # reduced generator preserves the trace of the slow factor
    one = vec(np.eye(2))
    assert np.abs(one @ eff.reduced).max() < 1e-10


def test_second_order_term_is_linear_in_eps(stiff):
    a = _eff(stiff.with_epsilon(0.1)).second_order
    b = _eff(stiff.with_epsilon(0.05)).second_order
    assert np.allclose(a, 2 * b, atol=1e-12)


def test_centering_warning_on_random_model(stiff):
    with pytest.warns(el.CenteringWarning):
        eff = el.effective_generator(stiff)
    assert not eff.centered
    assert eff.centering_residual > 0


def test_cavity_centering_forms():
    # the coupling averages to zero in the cavity vacuum, but the qubit
    # Hamiltonian still links ran P to its complement at superoperator level
    m = CavityModel()
    sg = build_cavity(m)
    ok, res = el.centering_check(sg)
    eff = _eff(sg)
    from apsim.cavity import cavity_operators
    a, sm, _ = cavity_operators(m.n_max)
    hint = m.g * (sm.conj().T @ a + sm @ a.conj().T)
    assert el.hamiltonian_centering(eff.split, hint) == pytest.approx(0.0, abs=1e-14)
    assert not ok and res > 0.1
    assert res == pytest.approx(eff.centering_residual)


def test_commuting_model_is_centered():
    sg = commuting_stiff(2, 0.1)
    ok, res = el.centering_check(sg)
    assert ok and res < 1e-12


def test_schur_complement_kernel(stiff):
    for eps in (0.1, 0.01):
        assert el.schur_kernel_check(stiff, eps) < 1e-8


def test_schur_complement_close_to_effective(stiff):
    eff = _eff(stiff)
    s = el.schur_complement(stiff)
    d1 = induced_trace_norm(s - eff.first_order)
    d2 = induced_trace_norm(s - eff.superop)
    assert d2 < 0.2 * d1


def test_schur_rejects_tiny_eps(stiff):
    with pytest.raises(ValueError):
        el.schur_complement(stiff, 1e-20)


def test_expansion_order_slope_two(stiff):
    r = el.expansion_order(stiff)
    assert r["slope"] == pytest.approx(2.0, abs=0.2)


def test_dynamics_order_slope_one(stiff):
    r = el.dynamics_order(stiff)
    assert r["slope"] == pytest.approx(1.0, abs=0.15)
    assert all(np.diff(r["errors"]) < 0)


def _embed_first_factor(s, d_f, d_s):
    """Superoperator of ``Phi (x) id`` on ``H_f (x) H_s`` built entry by entry."""
    t = s.reshape(d_f, d_f, d_f, d_f, order="F")  # [a, b, c, e] = Phi(|c><e|)[a, b]
    n = d_f * d_s
    big = np.zeros((n * n, n * n), complex)
    for col in range(n * n):
        x = np.zeros(n * n, complex)
        x[col] = 1
        x4 = x.reshape(n, n, order="F").reshape(d_f, d_s, d_f, d_s)
        y4 = np.einsum("abce,cied->aibd", t, x4)
        big[:, col] = y4.reshape(n, n).reshape(-1, order="F")
    return big


def test_depolarizing_fast_part_oracle():
    # depolarizing fast part: Lf^+ Q = -Q, so eff = P Ls P + eps P Ls Q Ls P exactly
    from apsim.lindblad import generator_from_super
    d_f, d_s = 2, 2
    fast = generator_from_super(_embed_first_factor(depolarizing(d_f).superop, d_f, d_s))
    slow = random_lindbladian(4, seed=3, n_jumps=1)
    sg = el.StiffGenerator(fast, slow, 0.05, el.TensorSplit(d_f, d_s, np.eye(d_f) / d_f))
    eff = _eff(sg)
    p = sg.spectral_fast.projection
    q = np.eye(16) - p
    ls = slow.superop
    assert np.allclose(eff.superop, p @ ls @ p + 0.05 * p @ ls @ q @ ls @ p, atol=1e-10)
    rho = random_density(4, seed=1)
    sp = sg.split
    assert np.allclose(p @ vec(rho), vec(sp.embed(sp.trace_fast(rho))), atol=1e-10)


def test_cptp_second_order_check(stiff):
    r = el.cptp_second_order_check(_eff(stiff.with_epsilon(0.01)))
    assert r["cptp"]
    assert r["violation"] == 0.0
