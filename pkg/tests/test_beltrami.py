import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexlab import beltrami as bt
from vortexlab import spectral as sp

G16 = sp.Grid(16)


def brute_points(N):
    out = set()
    r = range(-N, N + 1)
    for k in itertools.product(r, r, r):
        if sum(v * v for v in k) == N * N and math.gcd(math.gcd(*k), N) == 1:
            out.add(k)
    return out


def test_shear_modes_and_norm():
    B1 = bt.shear_beltrami(1, G16)
    K, C, _ = B1.sparse_modes()
    assert [tuple(k) for k in K] == [(0, 0, 1)]  # one representative per conjugate pair
    for N in (1, 2, 5):
        assert sp.l2_norm(bt.shear_beltrami(N, G16)) == pytest.approx(1, abs=1e-14)


def test_shear_band_limit():
    with pytest.raises(sp.BandLimitError):
        bt.shear_beltrami(8, G16)
    with pytest.raises(ValueError):
        bt.shear_beltrami(0, G16)


@pytest.mark.parametrize("N", [1, 2, 3, 5])
def test_shear_self_advection_vanishes(N):
    B = bt.shear_beltrami(N, G16)
    pts = np.random.default_rng(N).uniform(0, 2 * math.pi, (50, 3))
    assert np.abs(sp.advect(B, B).evaluate(pts)).max() < 1e-12


@pytest.mark.parametrize("axis", [1, 2, 3])
def test_rotated_shear_is_eigenfield(axis):
    B = bt.shear_beltrami(3, G16, axis)
    assert bt.eigen_residual(B, 3) < 1e-14 and sp.l2_norm(B) == pytest.approx(1, abs=1e-14)


def test_reynolds_family():
    norms = []
    for N in (1, 2, 3, 5):
        B = bt.reynolds_beltrami(N, G16)
        assert bt.eigen_residual(B, N) < 1e-12
        ratio = sp.l2_norm(sp.advect(B, B)) / sp.l2_norm(sp.laplacian(B))
        assert ratio == pytest.approx(1 / N, rel=1e-10)
        norms.append(sp.l2_norm(B))
    # Parseval on one shell: 2.5 * (4 + 1 + 4 + 1) / 2 * (2 pi)^3 per unit prefactor^2
    assert np.allclose(norms, math.sqrt(12.5 * (2 * math.pi) ** 3), rtol=1e-13)


def test_reynolds_with_other_prefactor_scales_ratio():
    B = bt.reynolds_beltrami(2, G16, prefactor=math.sqrt(5))
    ratio = sp.l2_norm(sp.advect(B, B)) / sp.l2_norm(sp.laplacian(B))
    assert ratio == pytest.approx(math.sqrt(2) / 2, rel=1e-10)


def test_point_counts_small():
    assert len(bt.rational_sphere_points(1)) == 6
    X3 = bt.rational_sphere_points(3)
    assert len(X3) == 24
    assert {tuple(sorted(map(abs, p.k))) for p in X3} == {(1, 2, 2)}


@pytest.mark.parametrize("N", range(1, 26))
def test_point_counts_match_brute_force(N):
    pts = bt.rational_sphere_points(N)
    assert {p.k for p in pts} == brute_points(N)


@pytest.mark.parametrize("N", [5, 9, 15])
def test_point_symmetries(N):
    ks = {p.k for p in bt.rational_sphere_points(N)}
    for k in ks:
        assert tuple(-v for v in k) in ks
        for perm in itertools.permutations(k):
            assert perm in ks
        for signs in itertools.product((1, -1), repeat=3):
            assert tuple(s * v for s, v in zip(signs, k)) in ks


def test_cardinality_window_odd():
    for N in range(1, 102, 2):
        c = len(bt.rational_sphere_points(N))
        assert N / 100 < c < 100 * N * N


def test_discrepancy_oracle_duplicates_and_trend():
    X1 = bt.rational_sphere_points(1)
    assert bt.equidistribution_discrepancy(X1) == pytest.approx(bt.cap_discrepancy_direct(X1), abs=1e-15)
    X5 = bt.rational_sphere_points(5)
    assert bt.equidistribution_discrepancy(X5) == pytest.approx(bt.cap_discrepancy_direct(X5), abs=1e-15)
    dup = bt.points_array(X5)
    assert bt.equidistribution_discrepancy(np.vstack([dup, dup])) == pytest.approx(
        bt.equidistribution_discrepancy(X5), abs=1e-15)
    assert bt.equidistribution_discrepancy(bt.rational_sphere_points(101)) < \
        bt.equidistribution_discrepancy(bt.rational_sphere_points(3))
    with pytest.raises(ValueError):
        bt.equidistribution_discrepancy(np.zeros((0, 3)))


def test_herglotz_zero_and_constant():
    assert sp.l2_norm(bt.herglotz_sample(bt.zero_amplitude(), 3, G16)) == 0
    g = bt.constant_amplitude([0.0, 0.0, 1.0])
    W = bt.herglotz_sample(g, 1, G16)
    pts = np.random.default_rng(0).uniform(0, 2 * math.pi, (40, 3))
    # (1/6) sum over +-e_i of e^{i x_i} e_3 = (cos x1 + cos x2 + cos x3)/3 e_3
    want = (np.cos(pts[:, 0]) + np.cos(pts[:, 1]) + np.cos(pts[:, 2])) / 3
    got = W.evaluate(pts)
    assert np.abs(got[:, 2] - want).max() < 1e-14 and np.abs(got[:, :2]).max() < 1e-15


def test_herglotz_band_violation():
    with pytest.raises(sp.BandLimitError):
        bt.herglotz_sample(bt.constant_amplitude([1, 0, 0]), 9, G16)


def test_herglotz_energy_trend():
    g = bt.smooth_perturbation(0)
    I = float(np.mean(np.sum(np.abs(g(bt.fibonacci_sphere(400000))) ** 2, axis=1)))
    errs = []
    for N in (3, 5, 101):
        pts = bt.rational_sphere_points(N)
        energy = (2 * math.pi) ** 3 * np.mean(np.sum(np.abs(g(bt.points_array(pts))) ** 2, axis=1))
        if N <= 5:
            W = bt.herglotz_sample(g, N, G16, pts)
            assert sp.l2_norm(W) ** 2 * len(pts) == pytest.approx(energy, rel=1e-12)
        errs.append(abs(energy - (2 * math.pi) ** 3 * I))
    assert errs[0] > errs[1] > errs[2]


@given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-3, 3))
def test_herglotz_linear(seed, a, b):
    g1, g2 = bt.smooth_perturbation(seed), bt.smooth_perturbation(seed + 1)
    lhs = bt.herglotz_sample(a * g1 + b * g2, 3, G16)
    rhs = bt.herglotz_sample(g1, 3, G16) * a + bt.herglotz_sample(g2, 3, G16) * b
    assert np.abs((lhs - rhs).coeffs).max() < 1e-13


def test_amplitude_library_symmetric_and_beltrami():
    xi = bt.points_array(bt.rational_sphere_points(7))
    for name, make in bt.AMPLITUDE_LIBRARY.items():
        g = make()
        assert g.symmetry_defect(xi) < 1e-14, name
    assert bt.AMPLITUDE_LIBRARY["planewave"]().beltrami_defect(xi) < 1e-14
    assert bt.smooth_perturbation(0).beltrami_defect(xi) > 0.1


def test_projector_identity_on_eigenfield():
    B = bt.shear_beltrami(3, G16)
    assert np.abs((bt.beltrami_project(B, 3) - B).coeffs).max() < 1e-16


def test_projector_coefficient_oracle():
    rng = np.random.default_rng(5)
    pts = bt.rational_sphere_points(3)
    modes = [(p.k, rng.standard_normal(3) + 1j * rng.standard_normal(3)) for p in pts]
    raw = sp.synthesize(G16, modes, symmetrize=True)
    W = bt.beltrami_project(raw, 3)
    assert bt.eigen_residual(W, 3) < 1e-12
    for k in [(1, 2, 2), (-2, 1, 2)]:
        a = raw.coeff(k)
        kv = np.array(k, float)
        ik = 1j * kv
        want = (np.cross(ik, np.cross(ik, a) + 3 * a)) / 18
        assert np.abs(W.coeff(k) - want).max() < 1e-15


@given(st.integers(0, 10 ** 5), st.sampled_from([1, 2, 3, 5]))
def test_projector_output_invariants(seed, N):
    rng = np.random.default_rng(seed)
    modes = [(p.k, rng.standard_normal(3) + 1j * rng.standard_normal(3)) for p in bt.rational_sphere_points(N)]
    W = bt.beltrami_project(sp.synthesize(G16, modes, symmetrize=True), N)
    assert bt.eigen_residual(W, N) <= 1e-12
    assert W.divergence_residual() <= 1e-12 and W.is_zero_mean and W.reality_residual() <= 1e-12


def test_projector_rejects_off_shell():
    with pytest.raises(ValueError):
        bt.beltrami_project(bt.shear_beltrami(2, G16), 3)


@pytest.mark.parametrize("name", ["planewave", "twisted"])
def test_projector_fixes_compatible_herglotz(name):
    W = bt.herglotz_sample(bt.AMPLITUDE_LIBRARY[name](), 5, G16)
    assert sp.l2_norm(bt.beltrami_project(W, 5) - W) / sp.l2_norm(W) <= 1e-10


def test_projector_defect_scales_with_eps():
    # frozen from a direct run: ||W - W~|| / (eps / sqrt N) for eps in {1e-2, 1e-3}
    base, h = bt.AMPLITUDE_LIBRARY["planewave"](), bt.smooth_perturbation(3)
    for N in (3, 5, 7):
        pts = bt.rational_sphere_points(N)
        vals = []
        for eps in (1e-2, 1e-3):
            Wt = bt.herglotz_sample(base + eps * h, N, G16, pts)
            vals.append(sp.l2_norm(bt.beltrami_project(Wt, N) - Wt) / (eps / math.sqrt(N)))
        assert vals[0] == pytest.approx(vals[1], rel=1e-9)
        assert vals[0] < 30


def test_beltrami_from_modes_validates():
    B = bt.beltrami_from_modes(1, G16, [((0, 0, 1), [1, 1j, 0])])
    assert bt.eigen_residual(B, 1) < 1e-14
    with pytest.raises(ValueError):
        bt.beltrami_from_modes(1, G16, [((0, 0, 1), [0, 0, 1])])
    with pytest.raises(ValueError):
        bt.beltrami_from_modes(2, G16, [((0, 0, 1), [1, 0, 0])])
