import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexlab import nse
from vortexlab import spectral as sp
from vortexlab import stability as stb
from vortexlab.beltrami import shear_beltrami

G16 = sp.Grid(16)
C0 = (2 * math.pi) ** -1.5


def physical_hm_sq(v: sp.FourierField, m: int) -> float:
    """Sum over j <= m of the grid quadrature of |grad^j v|^2, derivatives taken mode by mode."""
    n = v.grid.n
    k = np.fft.fftfreq(n, 1 / n)
    K = np.meshgrid(k, k, np.arange(n // 2 + 1), indexing="ij")
    total = 0.0
    for j in range(m + 1):
        for idx in itertools.product(range(3), repeat=j):
            mult = np.ones_like(K[0], complex)
            for i in idx:
                mult = mult * 1j * K[i]
            f = np.fft.irfftn(v.coeffs * mult * n ** 3, s=(n, n, n), axes=(1, 2, 3))
            total += float((f ** 2).sum()) * (2 * math.pi / n) ** 3
    return total


def test_energy_of_zero():
    h = stb.energy_history([0.0], [sp.FourierField.zeros(G16)], 3)
    assert np.all(h.h == 0)


@pytest.mark.parametrize("axis", [1, 3])
def test_energy_single_shell(axis):
    d = 1e-3
    h = stb.energy_history([0.0], [shear_beltrami(1, G16, axis) * d], 4)
    assert np.allclose(h.h[0], d * d * np.arange(1, 6), rtol=1e-13, atol=0)


def test_energy_matches_physical_quadrature():
    v = sp.random_field(G16, np.random.default_rng(3), kmax=3)
    h = stb.energy_history([0.0], [v], 3)
    for m in range(4):
        assert h.h[0, m] == pytest.approx(physical_hm_sq(v, m), rel=1e-10)


@given(st.integers(0, 10 ** 6))
def test_energy_monotone_in_m_and_poincare(seed):
    v = sp.random_field(G16, np.random.default_rng(seed), kmax=3)
    h = stb.energy_history([0.0], [v], 4).h[0]
    assert np.all(np.diff(h) >= 0) and h[0] >= 0
    assert stb.poincare_ok(v)


def test_q_zero_field():
    t = np.linspace(0, 5, 11)
    Q = stb.q_recursion(np.zeros((3, len(t))), 3, t)
    assert np.all(Q.Q == 1)


def test_q1_closed_form():
    M, N, nu = 1.3, 2, 0.1
    t = np.linspace(0, 60, 60001)
    Q = stb.q_recursion(stb.beltrami_sup_histories(M, N, nu, t, 1), 1, t)
    assert Q.Q[1, -1] == pytest.approx(1 + C0 ** 2 * M ** 2 / (2 * nu), abs=1e-6)


def test_q_requires_enough_histories():
    with pytest.raises(ValueError):
        stb.q_recursion(np.zeros((1, 3)), 2, [0, 1, 2])


@given(st.floats(0.1, 3), st.integers(1, 6), st.floats(0.02, 0.5))
def test_q_monotone(M, N, nu):
    t = np.linspace(0, 4, 41)
    Q = stb.q_recursion(stb.beltrami_sup_histories(M, N, nu, t, 4), 4, t).Q
    assert np.all(Q[:, 0] == 1)
    assert np.all(np.diff(Q, axis=1) >= 0) and np.all(np.diff(Q, axis=0) >= 0)


def test_q_growth_in_N():
    nu, M = 0.05, 1.0
    ratios = {}
    for N in (2, 4, 8):
        t = np.linspace(0, 40 / (nu * N * N), 20001)
        Q = stb.q_recursion(stb.beltrami_sup_histories(M, N, nu, t, 3), 3, t).Q[:, -1]
        ratios[N] = [Q[m] / (1 + N ** (2 * m - 2)) for m in range(1, 4)]
    r = np.array(list(ratios.values()))
    assert np.all(r.max(axis=0) <= 1.01 * r[0])  # no growth beyond the N = 2 constant


def test_measured_sup_matches_closed_form():
    B = shear_beltrami(2, G16)
    got = stb.measured_sup_histories([B], 3)[:, 0]
    want = stb.beltrami_sup_histories(1.0, 2, 0.0, [0.0], 3)[:, 0]
    # |grad^j B_N| is constant in x: sqrt(2 components) * N^j / (2pi)^{3/2} / sqrt 2
    assert np.allclose(got, want, rtol=1e-12)


def _run(delta, M=1.0, nu=0.1, N0=2, T=3.0, samples=31):
    w0 = shear_beltrami(N0, G16) * M
    u0 = w0 + shear_beltrami(1, G16, axis=1) * delta
    t = np.linspace(0, T, samples)
    res = nse.run(u0, nu, t, dt=2e-2)
    vs = [s.u - nse.beltrami_solution(w0, N0, nu, s.t) for s in res.snapshots]
    return t, vs


def _envelopes(t, vs, M=1.0, nu=0.1, N0=2, r=2, sigma=0.9):
    hist = stb.energy_history(t, vs, r)
    Q = stb.q_recursion(stb.beltrami_sup_histories(M, N0, nu, t, r), r, t)
    K = (C0 * M) ** 2 / (2 * nu * N0 * N0)
    return hist, Q, stb.verify_decay_envelope(hist, Q, nu, sigma, K)


def test_envelope_zero_perturbation():
    t, vs = _run(0.0, samples=6)
    _, _, env = _envelopes(t, vs)
    assert all(e.C_star == 0 and e.ok for e in env)


def test_envelope_desk_run_and_halving():
    t, vs = _run(1e-3)
    hist, Q, env = _envelopes(t, vs)
    K = (C0) ** 2 / (2 * 0.1 * 4)
    for e in env:
        assert e.ok and math.isfinite(e.C_star) and e.C_star > 0
        bound = stb._envelope(e.C_star, Q.Q[e.m], K, hist.hm_norm(e.m)[0], 0.1, 0.9, t)
        assert np.all(hist.h[:, e.m] <= bound ** 2 * (1 + 1e-8))
        assert e.holds_for(2 * e.C_star) and not e.holds_for(0.5 * e.C_star)
    t2, vs2 = _run(5e-4)
    _, _, env2 = _envelopes(t2, vs2)
    for a, b in zip(env, env2):
        assert a.sup_scaled / b.sup_scaled == pytest.approx(2, rel=0.1)


def test_envelope_rejects_sigma():
    hist = stb.energy_history([0.0], [sp.FourierField.zeros(G16)], 1)
    Q = stb.q_recursion(np.zeros((1, 1)), 1, [0.0])
    with pytest.raises(ValueError):
        stb.verify_decay_envelope(hist, Q, 0.1, sigma=1.0)


def test_envelope_failure_when_v0_zero_but_growth():
    t = np.array([0.0, 1.0])
    vs = [sp.FourierField.zeros(G16), shear_beltrami(1, G16) * 1e-3]
    hist = stb.energy_history(t, vs, 0)
    Q = stb.q_recursion(np.zeros((0, 2)), 0, t)
    (e,) = stb.verify_decay_envelope(hist, Q, 0.1)
    assert not e.ok and math.isinf(e.C_star)


def test_report_rows_shape():
    t, vs = _run(1e-3, samples=4, T=0.3)
    hist, Q, env = _envelopes(t, vs)
    rows = stb.report_rows(hist, Q, env, 0.1, 0.9, 0.0)
    assert len(rows) == 3 * 4 and all(len(r) == 6 for r in rows)


def test_lin_bil_zero():
    rep = stb.verify_lin_bil_bounds([1e-4, 2e-4], [0, 0], [0, 0], 4, 8, 1)
    assert rep.ok and rep.C_lin == 0 and rep.C_bil == 0


def test_lin_bil_synthetic_slopes():
    d = np.array([1e-4, 2e-4, 4e-4])
    good = stb.verify_lin_bil_bounds(d, 3 * d, 5 * d ** 2, 4, 8, 1)
    assert good.ok and good.lin_slope == pytest.approx(1) and good.bil_slope == pytest.approx(2)
    assert good.C_lin == pytest.approx(3 * 16)
    bad = stb.verify_lin_bil_bounds(d, 3 * d, 5 * d ** 1.5, 4, 8, 1)
    assert not bad.ok


def _lin_bil_at(delta, N0, n, T, nu=0.05, per=32):
    g = sp.Grid(n)
    w0 = shear_beltrami(N0, g)
    u0 = w0 + shear_beltrami(1, g, axis=1) * delta
    m = int(per * T)
    res = nse.run(u0, nu, np.linspace(0, T, m + 1)[1:], dt=T / m, diagnostics=False)
    res.snapshots.insert(0, nse.SolverState(u0, 0.0, nu))
    led = nse.duhamel_decompose(res, lambda t: nse.beltrami_solution(w0, N0, nu, t), nu,
                                report_times=[T], nodes_per_unit=per)
    return led.entries[-1]


def test_lin_bil_delta_sweep():
    ds = [1e-4, 2e-4, 4e-4]
    es = [_lin_bil_at(d, 4, 16, 0.5) for d in ds]
    rep = stb.verify_lin_bil_bounds(ds, [sp.hm(e.lin, 1) for e in es], [sp.hm(e.bil, 1) for e in es], 4, 1, 1)
    assert rep.ok and 1.8 <= rep.bil_slope <= 2.2 and abs(rep.lin_slope - 1) <= 0.2


@pytest.mark.slow
def test_lin_decreases_with_n0():
    lin = [sp.hm(_lin_bil_at(1e-3, N0, n, 1.0).lin, 1) for N0, n in ((4, 16), (8, 32), (16, 64))]
    assert lin[0] > lin[1] > lin[2]
    assert stb.loglog_slope([4, 8, 16], lin) <= -1.5
