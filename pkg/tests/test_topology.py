import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexlab import spectral as sp
from vortexlab import topology as tp
from vortexlab.beltrami import shear_beltrami

G16 = sp.Grid(16)
C0 = (2 * math.pi) ** -1.5
B2 = shear_beltrami(2, G16)


def abc_field():
    """(-sin x2, sin x1, cos x1 + cos x2): its own curl, with invariant cos x1 + cos x2."""
    return sp.synthesize(G16, [((1, 0, 0), [0, -1j, 1]), ((0, 1, 0), [1j, 0, 1])], symmetrize=True)


def test_straight_line_explicit_solution():
    x0 = np.array([0.1, 0.2, math.pi / 4])
    line = tp.trace_vortex_line(B2, x0, 30.0, detect_closure=False)
    want = x0[None, :] + line.taus[:, None] * 2 * C0 * np.array([1.0, 0, 0])
    assert np.abs(line.X - want).max() < 1e-9
    rep = tp.winding_classification(tp.trace_vortex_line(B2, x0, 2000.0))
    assert rep.winding == (1, 0, 0) and rep.contractible is False


def test_tolerance_floor():
    with pytest.raises(ValueError):
        tp.trace_vortex_line(B2, [0, 0, 0.3], 1.0, tol=1e-13)


def test_stagnant_seed_rejected():
    ring = tp.ring_field(G16)
    with pytest.raises(tp.StagnantSeed):
        tp.trace_vortex_line(ring, [0.0, 0.0, 1.0], 10.0)


def test_ring_closure_contractible():
    line = tp.trace_vortex_line(tp.ring_field(G16), [0.5, 0.3, 1.0], 200.0)
    assert line.closed and line.closure_residual < 1e-6
    rep = tp.winding_classification(line)
    assert rep.winding == (0, 0, 0) and rep.contractible


def test_ring_field_vorticity():
    pts = np.random.default_rng(0).uniform(0, 2 * math.pi, (20, 3))
    w = sp.curl(tp.ring_field(G16)).evaluate(pts)
    want = np.stack([-np.sin(pts[:, 1]), np.sin(pts[:, 0]), 0 * pts[:, 0]], axis=1)
    assert np.abs(w - want).max() < 1e-14


def test_rational_slope_winding_and_reversal():
    x3 = math.atan2(1, 2) / 2  # tan(2 x3) = 1/2
    seed = [0.1, 0.2, x3]
    rep = tp.winding_classification(tp.trace_vortex_line(B2, seed, 5000.0))
    assert rep.winding == (1, 2, 0) == tp.explicit_shear_winding(2, seed).winding
    rev = tp.winding_classification(tp.trace_vortex_line(B2 * -1.0, seed, 5000.0))
    assert rev.winding == (-1, -2, 0)


def test_irrational_slope_open_line():
    B1 = shear_beltrami(1, G16)
    seed = [0.3, 0.1, 1.0]
    rep = tp.winding_classification(tp.trace_vortex_line(B1, seed, 2000.0))
    assert rep.kind == "open" and rep.contractible is False and rep.monotone_axis in (0, 1)
    assert tp.explicit_shear_winding(1, seed).kind == "open"


def test_off_lattice_closure_is_undetermined():
    line = tp.trace_vortex_line(tp.ring_field(G16), [0.5, 0.3, 1.0], 200.0)
    line.displacement = np.array([0.5 * math.pi, 0, 0])
    assert tp.winding_classification(line).kind == "undetermined"


def test_short_line_without_monotone_turn_is_undetermined():
    line = tp.trace_vortex_line(B2, [0.1, 0.2, math.pi / 4], 5.0, detect_closure=False)
    assert tp.winding_classification(line).kind == "undetermined"


@pytest.mark.parametrize("x3", [0.2, math.atan2(1, 2) / 2, math.pi / 4, 1.3])
def test_tolerance_refinement_and_reversal_invariance(x3):
    seed = [0.4, 1.1, x3]
    a = tp.winding_classification(tp.trace_vortex_line(B2, seed, 3000.0, tol=1e-8))
    b = tp.winding_classification(tp.trace_vortex_line(B2, seed, 3000.0, tol=1e-9))
    assert a.winding == b.winding and a.kind == b.kind
    r = tp.winding_classification(tp.trace_vortex_line(B2 * -1.0, seed, 3000.0, tol=1e-8))
    if a.winding is not None:
        assert r.winding == tuple(-v for v in a.winding)
    else:
        assert r.direction == tuple(-v for v in a.direction)


def test_classify_unperturbed_matches_explicit():
    seeds = tp.lattice_seeds(40)
    summ = tp.classify_structures(B2, seeds)
    for s, rep in zip(seeds, summ.reports):
        ex = tp.explicit_shear_winding(2, s)
        assert rep.contractible is False
        if rep.kind == "closed":
            assert rep.winding == ex.winding
    assert summ.verdict == "all sampled lines non-contractible"


def test_classify_ring_and_perturbed():
    ring = tp.classify_structures(tp.ring_field(G16), tp.lattice_seeds(20))
    assert ring.verdict.startswith("contractible structure found")
    pert = tp.classify_structures(tp.perturbed_shear(2, G16, 1e-4), tp.lattice_seeds(20))
    assert pert.verdict == "all sampled lines non-contractible"
    assert len(list(pert.records())) == 20


def test_classify_withholds_verdict():
    summ = tp.classify_structures(B2, tp.lattice_seeds(10), tau_max=1.0)
    assert summ.undetermined_fraction > 0.2 and summ.verdict.startswith("undetermined")


def test_bands_definition():
    b = tp.ConfinementBand(2, 1, 0.2, 3)
    assert b.center == pytest.approx(math.pi / 2 + 2 * math.pi)
    assert b.half_width == pytest.approx(math.pi / 4 + 0.2)
    with pytest.raises(ValueError):
        tp.ConfinementBand(5, 0, 0.1, 2)
    with pytest.raises(ValueError):
        tp.ConfinementBand(1, 2, 0.1, 2)


@given(st.floats(0, 4 * math.pi, exclude_max=True))
def test_bands_tile_circle_at_zero_aperture(z):
    N = 2
    odd = (z / (math.pi / 4) - 1) / 2
    on_seam = abs(odd - round(odd)) < 1e-9
    count = len(tp.bands_containing(z, N, 0.0))
    if on_seam:
        closed = [b for n in range(N) for j in (1, 2, 3, 4)
                  if abs(abs((b := tp.ConfinementBand(j, n, 0.0, N)).offset(z)) - b.half_width) < 1e-9]
        assert count == 0 and len(closed) == 2
    else:
        assert count == 1


def test_confinement_zero_perturbation():
    seeds = tp.confinement_seeds(2, 12)
    rep = tp.confinement_check(tp.perturbed_shear(2, G16, 0.0), 2, seeds, periods=20)
    assert rep.max_excursion < 1e-9 and rep.all_confined


def test_confinement_seeds_in_inner_bands():
    B = tp.perturbed_shear(2, G16, 1.0)
    levels = tp.resonant_levels(sp.curl(B), 2)
    seeds = tp.confinement_seeds(2, 100, levels)
    assert seeds.shape == (100, 3)
    assert all(tp.bands_containing(2 * s[2], 2, 0.1) for s in seeds)


def test_confinement_failure_identifies_seed():
    seeds = tp.confinement_seeds(2, 6, tp.resonant_levels(sp.curl(tp.perturbed_shear(2, G16, 1.0)), 2))
    rep = tp.confinement_check(tp.perturbed_shear(2, G16, 0.3), 2, seeds, periods=30)
    assert not rep.all_confined
    assert all(not f.confined for f in rep.failures())


def test_confinement_short_sweep_monotone():
    seeds = tp.confinement_seeds(2, 10, tp.resonant_levels(sp.curl(tp.perturbed_shear(2, G16, 1.0)), 2))
    ex = [tp.confinement_check(tp.perturbed_shear(2, G16, e), 2, seeds, periods=30).max_excursion
          for e in (1e-4, 4e-4, 1.6e-3)]
    assert ex[0] <= ex[1] <= ex[2]


def test_section_constant_increment():
    x3 = 0.3
    sec = tp.poincare_section(B2, 0, 0.0, np.array([[0.0, 0.2, x3]]), 5)
    inc = np.mod(np.diff(sec.points[:, 1]), 2 * math.pi)
    want = (2 * math.pi / math.tan(2 * x3)) % (2 * math.pi)
    assert np.allclose(inc, want, atol=1e-8) and np.all(sec.directions == 1)


def test_section_tangent_flow_skipped():
    sec = tp.poincare_section(B2, 2, 0.0, np.array([[0.5, 0.2, 0.0]]), 3, max_tau=100)
    assert sec.skipped >= 1 and len(sec.points) == 0


def test_section_integrable_invariant_curves():
    lf = tp.LineField.from_field(abc_field(), is_vorticity=True)
    sec = tp.poincare_section(lf, 2, 0.0, np.array([[0.5, 0.2, 0.0], [1.0, 0.4, 0.0]]), 20)

    def f(p):
        return np.cos(p[:, 0]) + np.cos(p[:, 1])

    for i in (0, 1):
        pts = sec.points[sec.seed_index == i][:, :2]
        assert len(pts) == 20 and tp.invariant_curve_residual(pts, f) <= 1e-6


def test_kasa_circle_fit():
    th = np.linspace(0, 2 * math.pi, 30)
    xy = np.stack([1 + 2 * np.cos(th), -1 + 2 * np.sin(th)], axis=1)
    c, R, res = tp.kasa_circle(xy)
    assert np.allclose(c, [1, -1]) and R == pytest.approx(2) and res < 1e-12
    assert tp.invariant_curve_residual(xy) < 1e-12


def test_line_rows_projected():
    line = tp.trace_vortex_line(B2, [0.1, 0.2, math.pi / 4], 100.0, detect_closure=False)
    rows = list(line.rows())
    assert len(rows[0]) == 7 and all(0 <= r[1] < 2 * math.pi for r in rows)
