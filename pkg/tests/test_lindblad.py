import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from apsim import lindblad as lb
from apsim.linalg import expm, unvec, vec


def test_build_generator_rejects_bad_input():
    with pytest.raises(ValueError):
        lb.build_generator(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        lb.build_generator(np.eye(2), [np.eye(3)])


@given(st.integers(2, 4), st.integers(0, 10 ** 6))
def test_random_generator_trace_preserving_and_cptp(d, seed):
    g = lb.random_lindbladian(d, seed=seed)
    assert g.trace_residual() < 1e-12
    ch = lb.channel_from_generator(g, 0.7)
    assert ch.kind == "cptp"
    rho = lb.random_density(d, seed=seed)
    out = ch(rho)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(0.5 * (out + out.conj().T)).min() > -1e-12


def test_generator_sum_and_scale():
    g1 = lb.random_lindbladian(2, seed=1)
    g2 = lb.random_lindbladian(2, seed=2)
    assert np.allclose((g1 + g2).superop, g1.superop + g2.superop)
    assert np.allclose((0.5 * g1).superop, 0.5 * g1.superop)


def test_channel_from_generator_detects_malformed():
    # a "generator" with a gain term that is not a dissipator
    bad = lb.generator_from_super(np.eye(4, dtype=complex))
    with pytest.raises(lb.CPTPError):
        lb.channel_from_generator(bad, 1.0)
    with pytest.raises(ValueError):
        lb.channel_from_generator(lb.random_lindbladian(2), -1.0)


def test_choi_definition_and_roundtrip():
    s = lb.random_channel(3, seed=4)
    j = lb.choi(s)
    d = 3
    # block (a,i),(b,j) of J equals Phi(|i><j|)[a,b]
    for i in range(d):
        for k in range(d):
            e = np.zeros((d, d))
            e[i, k] = 1
            out = unvec(s @ vec(e))
            blk = j.reshape(d, d, d, d)[:, i, :, k]
            assert np.allclose(blk, out)
    assert np.allclose(lb.super_from_choi(j), s)


def test_classify_kinds():
    d = 2
    assert lb.classify(lb.random_channel(d, seed=0)) == "cptp"
    t = np.zeros((4, 4))
    for i in range(d):
        for k in range(d):
            t[k + d * i, i + d * k] = 1
    assert lb.classify(t) == "hermiticity-preserving"
    assert lb.classify(0.5 * lb.random_channel(d, seed=1)) == "cp"
    rng = np.random.default_rng(0)
    assert lb.classify(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))) == "general-linear"


def test_channel_compose_and_call():
    a = lb.channel(lb.random_channel(2, seed=1), verify=True)
    b = lb.channel(lb.random_channel(2, seed=2), verify=True)
    rho = lb.random_density(2, seed=3)
    assert np.allclose(a.compose(b)(rho), a(b(rho)))
    assert a.kind == "cptp"


@pytest.mark.parametrize("d,n", [(2, 1), (2, 3), (3, 2), (4, 4)])
def test_kraus_roundtrip(d, n):
    s = lb.random_channel(d, seed=d + n, n_kraus=n)
    ks = lb.kraus_from_choi(lb.choi(s))
    assert len(ks) == n
    rebuilt = sum(np.kron(k.conj(), k) for k in ks)
    assert np.allclose(rebuilt, s, atol=1e-12)
    assert np.allclose(sum(k.conj().T @ k for k in ks), np.eye(d), atol=1e-12)


def test_kraus_rejects_non_psd():
    j = np.diag([1.0, -0.5, 0.2, 0.3])
    with pytest.raises(ValueError):
        lb.kraus_from_choi(j)


def test_kraus_reports_dust():
    s = lb.random_channel(2, seed=7)
    j = lb.choi(s) - 1e-11 * np.eye(4)
    ks, clipped = lb.kraus_from_choi(j, return_clipped=True)
    assert clipped >= 0
    assert len(ks) >= 1


def test_stinespring_reproduces_channel():
    s = lb.random_channel(3, seed=9, n_kraus=2)
    ks = lb.kraus_from_choi(lb.choi(s))
    v = lb.stinespring_isometry(ks)
    assert np.allclose(v.conj().T @ v, np.eye(3), atol=1e-12)
    rho = lb.random_density(3, seed=1)
    assert np.allclose(lb.apply_isometry(v, rho, len(ks)), unvec(s @ vec(rho)), atol=1e-12)


def test_stinespring_rejects_incomplete_set():
    with pytest.raises(ValueError):
        lb.stinespring_isometry([0.5 * np.eye(2)])


def test_matrix_json_roundtrip():
    m = np.array([[1 + 2j, 3], [0, -1j]])
    obj = lb.matrix_to_json(m)
    assert np.array_equal(lb.matrix_from_json(json.dumps(obj)), m)
    with pytest.raises(ValueError):
        lb.matrix_from_json({"rows": 3, "cols": 2, "re": [[1, 2]], "im": [[0, 0]]})
    with pytest.raises(ValueError):
        lb.matrix_from_json({"rows": 1})


def test_amplitude_damping_closed_form():
    g = lb.build_generator(np.zeros((2, 2)), [lb.sigma_minus()])
    rho = np.array([[0.2, 0.3], [0.3, 0.8]], dtype=complex)  # basis (g, e)
    t = 0.9
    out = unvec(expm(g.superop, t) @ vec(rho))
    pe = 0.8 * np.exp(-t)
    assert out[1, 1].real == pytest.approx(pe)
    assert out[0, 0].real == pytest.approx(1 - pe)
    assert abs(out[0, 1]) == pytest.approx(0.3 * np.exp(-t / 2))


def test_random_density_is_state():
    rho = lb.random_density(4, seed=2, rank=2)
    assert np.trace(rho).real == pytest.approx(1.0)
    w = np.linalg.eigvalsh(rho)
    assert w.min() > -1e-14
    assert np.sum(w > 1e-12) == 2
