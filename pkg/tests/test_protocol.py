from fractions import Fraction
import math

import numpy as np
import pytest

from apsim import protocol as pr
from apsim.cavity import CavityModel, build_cavity
from apsim.elimination import StiffGenerator
from apsim.fitting import loglog_slope
from apsim.linalg import expm, induced_trace_norm
from apsim.lindblad import Channel, build_generator, generator_from_super
from apsim.metrics import diamond_norm
from apsim.models import commuting_stiff, random_stiff
from apsim.spectral import analyze


@pytest.fixture(scope="module")
def small():
    # 2-qubit model, fast part on the first qubit
    return random_stiff(2, 2, 0.1, seed=1)


@pytest.fixture(scope="module")
def cavity():
    return build_cavity(CavityModel())


# ---------------------------------------------------------------------------
# config

def test_config_validation(small):
    with pytest.raises(ValueError):
        pr.ProtocolConfig(small, mode="bogus")
    with pytest.raises(ValueError):
        pr.ProtocolConfig(small, dt=0.0)
    with pytest.raises(ValueError):
        pr.ProtocolConfig(small, dt=0.1, total_time=0.05)
    with pytest.raises(ValueError):
        pr.ProtocolConfig(small, mode="layered-digital", fast_substep=0.0)
    with pytest.raises(ValueError):
        pr.ProtocolConfig(small, slow_order=3)
    assert pr.ProtocolConfig(small, dt=0.2).total_time == 0.2


@pytest.mark.parametrize("dt,eps,tau", [(0.1, 0.1, 0.1), (0.07, 0.013, 0.3), (1e-3, 0.5, 0.1)])
def test_digital_substep_count_covers_step(small, dt, eps, tau):
    cfg = pr.ProtocolConfig(small.with_epsilon(eps), mode="layered-digital", dt=dt, fast_substep=tau)
    n = cfg.n_fast
    assert n >= 1
    assert n * eps * tau >= dt * (1 - 1e-12)
    assert n == 1 or (n - 1) * eps * tau < dt


# ---------------------------------------------------------------------------
# standard splitting

def test_commuting_parts_are_exact():
    sg = commuting_stiff(3, 0.05)
    for dt in (0.01, 0.3):
        step = pr.trotter_step(sg, dt).superop
        assert np.abs(step - expm(sg.full(), dt)).max() <= 1e-12
    c = pr.trotter_error_certificate(sg, 0.1)
    assert c["certificate"] == 0.0
    assert c["measured"] <= 1e-12


def test_trotter_step_rejects_bad_args(small):
    with pytest.raises(ValueError):
        pr.trotter_step(small, 0.0)
    with pytest.raises(ValueError):
        pr.trotter_step(small, 0.1, order=3)


def test_exact_factors_have_unit_diamond_norm(small):
    lf = small.fast.superop / small.epsilon
    for s in (expm(lf, 0.05), expm(small.slow.superop, 0.05)):
        assert diamond_norm(s).value == pytest.approx(1.0, abs=1e-6)


def test_trotter_local_error_slope_two_on_cavity(cavity):
    dts = [0.004, 0.002, 0.001, 0.0005]
    kw = {"max_iter": 600, "rtol": 1e-3}
    errs = [diamond_norm(pr.trotter_step(cavity, dt).superop - expm(cavity.full(), dt), **kw).value
            for dt in dts]
    assert loglog_slope(dts, errs) == pytest.approx(2.0, abs=0.15)


def test_symmetric_splitting_is_third_order_locally(small):
    dts = [0.02, 0.01, 0.005, 0.0025]
    errs = [induced_trace_norm(pr.trotter_step(small, dt, 2).superop - expm(small.full(), dt))
            for dt in dts]
    assert loglog_slope(dts, errs) == pytest.approx(3.0, abs=0.2)


def test_trotter_error_scales_inversely_with_eps(small):
    dt = 1e-4
    eps = [1e-1, 3e-2, 1e-2, 3e-3]
    errs = []
    for e in eps:
        sg = small.with_epsilon(e)
        errs.append(induced_trace_norm(pr.trotter_step(sg, dt).superop - expm(sg.full(), dt)))
    assert loglog_slope(eps, errs) == pytest.approx(-1.0, abs=0.15)


def test_certificate_linear_in_inverse_eps(small):
    base = pr.trotter_error_certificate(small, 0.01, measure=False)["certificate"]
    for e in (0.05, 0.02):
        c = pr.trotter_error_certificate(small.with_epsilon(e), 0.01, measure=False)["certificate"]
        assert c * e == pytest.approx(base * 0.1, rel=1e-5)


def test_certificate_bounds_measured_error(small):
    sg = small.with_epsilon(0.1)
    nrm = np.linalg.norm(sg.full(), 2)
    for prod in (0.1, 0.05):
        c = pr.trotter_error_certificate(sg, prod / nrm)
        assert c["ratio"] <= 1.2


# ---------------------------------------------------------------------------
# layered protocol

def test_layered_analog_composition(small):
    cfg = pr.ProtocolConfig(small, dt=0.05)
    lf = small.fast.superop / small.epsilon
    expected = expm(small.slow.superop, 0.05) @ expm(lf, 0.05)
    assert np.allclose(pr.layered_step(cfg).superop, expected, atol=1e-12)
    cfg2 = pr.ProtocolConfig(small, dt=0.05, slow_order=2)
    h = expm(small.slow.superop, 0.025)
    assert np.allclose(pr.layered_step(cfg2).superop, h @ expm(lf, 0.05) @ h, atol=1e-12)


def test_digital_fast_layer_telescoping(small):
    sg = small.with_epsilon(0.02)
    lf = sg.fast.superop / sg.epsilon
    for order, tau in ((2, 0.2), (3, 0.3), (4, 0.5)):
        cfg = pr.ProtocolConfig(sg, mode="layered-digital", dt=0.05, fast_substep=tau, fast_order=order)
        fast, info = pr._fast_layer(cfg)
        n, h = info["n_fast"], cfg.dt / info["n_fast"]
        sub = pr._cp_repair(pr._taylor_step(lf, h, order))[0]
        sub_err = induced_trace_norm(sub - expm(lf, h))
        total = induced_trace_norm(fast - expm(lf, cfg.dt))
        assert total <= 1.1 * n * sub_err


def test_digital_layer_stays_cp(small):
    cfg = pr.ProtocolConfig(small.with_epsilon(0.01), mode="layered-digital", dt=0.1,
                            fast_substep=0.9, fast_order=1)
    ch, info = pr.layered_step(cfg, return_info=True)
    from apsim.lindblad import classify
    assert classify(ch.superop, tol=1e-8) in ("cptp", "cp")
    assert info["cp_violation"] >= 0


def test_zero_slow_part_relaxes_at_gap_rate():
    fast = random_stiff(2, 1, 0.1, seed=4).fast
    zero = generator_from_super(np.zeros_like(fast.superop))
    sd = analyze(fast)
    eps = 0.1
    sg = StiffGenerator(fast, zero, eps)
    dts = np.array([0.5, 1.0, 1.5, 2.0, 2.5])
    dist = [induced_trace_norm(pr.layered_step(pr.ProtocolConfig(sg, dt=dt)).superop - sd.projection)
            for dt in dts]
    rate = -np.polyfit(dts / eps, np.log(dist), 1)[0]
    assert rate == pytest.approx(sd.gap, rel=0.05)


def test_effective_only_has_no_eps_dependence_in_ap_error(small):
    rep = pr.ap_verify(small, [0.1, 0.05, 0.025, 0.0125], [1e-1, 3e-2, 1e-2, 3e-3],
                       mode="effective-only")
    assert max(r["asymptotic_err"] for r in rep.rows) <= 1e-12


# ---------------------------------------------------------------------------
# evolve

def test_evolve_single_step_and_semigroup(small):
    cfg = pr.ProtocolConfig(small, dt=0.02)
    assert np.allclose(pr.evolve(cfg).superop, pr.layered_step(cfg).superop)
    one = pr.evolve(pr.ProtocolConfig(small, dt=0.02, total_time=0.1)).superop
    two = pr.evolve(pr.ProtocolConfig(small, dt=0.02, total_time=0.2)).superop
    assert np.allclose(two, one @ one, atol=1e-12)


def test_evolve_converges_to_exact(small):
    sg = small.with_epsilon(0.1)
    ex = expm(sg.full(), 0.5)
    errs = [induced_trace_norm(pr.evolve(pr.ProtocolConfig(sg, mode="standard-trotter", dt=dt,
                                                           total_time=0.5)).superop - ex)
            for dt in (0.01, 0.005, 0.0025)]
    assert loglog_slope([0.01, 0.005, 0.0025], errs) == pytest.approx(1.0, abs=0.15)


def test_evolve_aborts_on_cp_violation(small, monkeypatch):
    # a step that is trace preserving but far from CP
    d = small.dim
    t = np.zeros((d * d, d * d), complex)
    for i in range(d):
        for j in range(d):
            t[j + d * i, i + d * j] = 1
    monkeypatch.setattr(pr, "layered_step", lambda cfg: Channel(d, t))
    with pytest.raises(pr.CPViolation):
        pr.evolve(pr.ProtocolConfig(small, dt=0.1))


# ---------------------------------------------------------------------------
# Duhamel oracle

@pytest.fixture(scope="module")
def d4():
    return random_stiff(2, 2, 0.1, seed=3)


@pytest.mark.parametrize("terms", [1, 2])
def test_duhamel_reproduces_propagator(d4, terms):
    t = 0.3 if terms == 1 else 0.1
    val = pr.duhamel_oracle(d4, t, terms=terms)
    assert np.abs(val - expm(d4.full(), t)).max() <= 1e-8


def test_duhamel_without_perturbation(d4):
    zero = generator_from_super(np.zeros_like(d4.slow.superop))
    sg = StiffGenerator(d4.fast, zero, 0.1)
    assert np.allclose(pr.duhamel_oracle(sg, 0.4), expm(sg.fast.superop / 0.1, 0.4), atol=1e-12)
    with pytest.raises(ValueError):
        pr.duhamel_oracle(d4, 0.1, terms=3)


def test_interaction_term_order_eps(d4):
    eps = [1e-1, 3e-2, 1e-2, 3e-3]
    vals = [induced_trace_norm(pr.interaction_term(d4.with_epsilon(e), 1.0)) for e in eps]
    assert loglog_slope(eps, vals) == pytest.approx(1.0, abs=0.15)


# ---------------------------------------------------------------------------
# AP sweep harness

@pytest.fixture(scope="module")
def sweep(small):
    return pr.ap_verify(small, [0.1, 0.05, 0.025, 0.0125], [1e-1, 3e-2, 1e-2, 3e-3],
                        diamond_cells=[(3, 0), (3, 1), (2, 0), (2, 1)])


def test_sweep_grid_needs_four_points(small):
    with pytest.raises(ValueError):
        pr.ap_verify(small, [0.1, 0.05, 0.025], [1e-1, 3e-2, 1e-2, 3e-3])


def test_sweep_triangle_and_nonnegative(sweep):
    main = [r for r in sweep.rows if r["norm"] == "induced"]
    assert len(main) == 16
    for r in main:
        for k in ("consistency_err", "asymptotic_err", "slow_err", "fast_err", "interaction_err"):
            assert r[k] >= 0
        assert r["triangle_ok"] == 1
    assert sweep.summary["triangle_all"]


def test_sweep_analog_has_no_slow_or_fast_layer_error(sweep):
    for r in sweep.rows:
        if r["norm"] == "induced":
            assert r["slow_err"] == 0 and r["fast_err"] == 0


def test_sweep_diagram_monotone(sweep):
    s = sweep.summary
    assert s["diagram_monotone"]
    assert s["diagram_max_by_eps_desc"][-1] < s["diagram_max_by_eps_desc"][0]


def test_sweep_diamond_spot_rows(sweep):
    spots = sweep.summary["diamond_spot_checks"]
    assert len(spots) == 4
    for s in spots:
        assert s["diamond"] >= s["induced"] * (1 - 1e-6)
    diamond_rows = [r for r in sweep.rows if r["norm"] == "diamond"]
    assert all(math.isnan(r["consistency_err"]) for r in diamond_rows)


FINE = ([0.01, 0.005, 0.0025, 0.00125], [1.0, 0.5, 0.25, 0.125])


@pytest.fixture(scope="module")
def fine_sweep(small):
    return pr.ap_verify(small, *FINE)


def test_sweep_consistency_order(fine_sweep):
    # local error of a first-order splitting is O(dt^2) once dt << eps
    for eps in FINE[1]:
        assert fine_sweep.summary["p_by_eps"][repr(eps)] == pytest.approx(2.0, abs=0.2)


def test_sweep_thread_determinism(small, fine_sweep):
    assert pr.ap_verify(small, *FINE, threads=4).to_csv() == fine_sweep.to_csv()


# ---------------------------------------------------------------------------
# stiffness penalty

def test_step_count_definition(small):
    n = pr.step_count(small, delta=1e-2)
    lfull = small.full()

    def err(k):
        h = 1.0 / k
        return k * induced_trace_norm(pr.trotter_step(small, h).superop - expm(lfull, h))
    assert err(n) <= 1e-2 < err(n - 1)
    with pytest.raises(ValueError):
        pr.step_count(small, accounting="other")


def test_global_accounting_never_needs_more_steps(small):
    assert pr.step_count(small, 1e-2, accounting="global") <= pr.step_count(small, 1e-2)


# ---------------------------------------------------------------------------
# resource model

def test_resource_ratio_exact():
    r = pr.resource_model(100, 4, 2, c=1)
    assert r.savings_ratio == Fraction(400)
    assert r.model["d_tot"] == 8
    assert r.g_std / r.g_ap_analog == pytest.approx(400)


def test_resource_doubling_fast_dimension_quadruples_at_c2():
    a = pr.resource_model(10, 2, 3, c=2).savings_ratio
    b = pr.resource_model(10, 4, 3, c=2).savings_ratio
    assert b == 4 * a


def test_digital_ap_is_constant_factor_of_standard():
    r = pr.resource_model(1000, 8, 2, c=2)
    assert r.g_ap_digital / r.g_std == pytest.approx(1.0)
    assert r.t_precomp == 16 ** 3


def test_resource_needs_split(small):
    sg = StiffGenerator(small.fast, small.slow, 0.1)
    with pytest.raises(ValueError):
        pr.resource_from_stiff(sg)
    with pytest.raises(ValueError):
        pr.resource_model(10, None, 2)


def test_resource_from_stiff_kappa(small):
    r = pr.resource_from_stiff(small)
    kappa = (1 / small.slow_norm) / (small.epsilon / small.spectral_fast.gap)
    assert r.model["kappa"] == pytest.approx(kappa)
    js = r.to_json()
    assert js["savings_ratio"] == pytest.approx(kappa * 2)
