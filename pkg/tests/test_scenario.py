import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortexlab import nse
from vortexlab import scenario as sc
from vortexlab import spectral as sp
from vortexlab.beltrami import reynolds_beltrami

G16 = sp.Grid(16)
G32 = sp.Grid(32)


@pytest.fixture(scope="module")
def rigorous():
    return sc.choose_constants(M=1, nu=1, r=7, times=(1, 2), margin=1e3)


def test_rigorous_set_passes(rigorous):
    C = rigorous
    assert C.all_ok and C.n == 2 and C.prec == 512
    assert set(C.flags) >= {f"ineq{i}" for i in range(1, 6)}
    # the frequencies do not fit a double
    assert math.isinf(C.as_floats()["N"][0])


def test_n1_and_margin_one():
    assert sc.choose_constants(times=(1.0,), margin=1e3).all_ok
    assert sc.choose_constants(times=(1.0, 2.0), margin=1).all_ok


def test_recipe_structure(rigorous):
    C = rigorous
    with mpmath.workprec(C.prec):
        N, d = C.N, C.delta
        for k in range(1, C.n):
            assert N[k + 1] * C.margin <= N[k]
        assert N[2] ** 2 * C.margin <= N[1]
        for k in range(C.n - 1):
            rho = mpmath.exp(-C.nu * N[k + 1] ** 2 * (C.times[k] + C.times[k + 1]) / 2)
            assert C.rho[k] == rho
            assert d[k + 1] == d[k] * C.rho[k]
        assert all(d[k] > d[k + 1] for k in range(C.n - 1))
        prod = mpmath.mpf(1)
        for k in range(1, C.n):
            prod *= C.rho[k - 1]
            assert abs(prod / (d[k] / d[0]) - 1) < mpmath.mpf(2) ** (-C.prec + 8)


@pytest.mark.parametrize("what,index", [("delta", 1), ("delta", 2), ("N", 0), ("N", 1), ("N", 2)])
@pytest.mark.parametrize("factor", [1e6, 1e-6])
def test_tampering_flips_a_flag(rigorous, what, index, factor):
    T = rigorous.tampered(what, index, factor)
    assert not T.all_ok


def test_delta1_tamper_flips_ineq5(rigorous):
    assert not rigorous.tampered("delta", 1, 1e6).flags["ineq5"]
    with pytest.raises(ValueError):
        rigorous.tampered("rho", 1, 2.0)


def test_constants_errors():
    with pytest.raises(ValueError):
        sc.choose_constants(times=(2.0, 1.0))
    with pytest.raises(ValueError):
        sc.choose_constants(margin=0.5)
    with pytest.raises(sc.ConstantsError) as ei:
        sc.choose_constants(times=(1.0, 2.0), margin=1e3, prec=24)
    assert ei.value.inequality


def test_text_round_trip(rigorous):
    text = rigorous.to_text()
    back = sc.constants_from_text(text)
    assert back == rigorous
    assert "check.ineq5[1] = true" in text or "check.ineq5 = true" in text.replace("[1]", "")
    assert sc.constants_to_text(back) == text


def test_text_tampered_round_trip(rigorous):
    T = rigorous.tampered("delta", 1, 1e6)
    back = sc.constants_from_text(T.to_text())
    assert back.flags == T.flags and not back.all_ok


def test_schedule_rigorous(rigorous):
    S = sc.dominance_schedule(rigorous)
    assert S.dominant == (1, 2)
    assert S.off_diagonal_ok()
    for k, row in enumerate(S.log_coeff, 1):
        assert row[k] == 0
    assert S.max_off_diagonal() <= -mpmath.log(rigorous.margin)


def test_schedule_time_shift():
    a = sc.dominance_schedule(sc.choose_constants(times=(1.0, 2.0)))
    b = sc.dominance_schedule(sc.choose_constants(times=(1.5, 2.5)))
    assert a.dominant == b.dominant == (1, 2)
    assert a.off_diagonal_ok() and b.off_diagonal_ok()


@pytest.fixture(scope="module")
def desk():
    C = sc.desk_constants(1, 0.1, (8, 4, 2), 1e-3, (3, 20), margin=100)
    fields, axes = sc.desk_fields(C, G32)
    return C, fields, axes


def test_desk_heat_only_schedule(desk):
    C, fields, axes = desk
    S = sc.dominance_schedule(C)
    datum = sc.build_initial_datum(C, fields)
    got = sc.heat_only_coefficients(datum.u0, fields, C)
    assert tuple(int(np.argmax(r)) for r in got) == S.dominant == (1, 2)
    assert np.allclose(got, S.coefficients() * datum.q, rtol=1e-10, atol=1e-300)
    assert axes == [3, 1, 3]


def test_desk_norm_audit():
    C = sc.desk_constants(1, 0.05, (8, 3), 1e-3, (1.0,))
    fields, _ = sc.desk_fields(C, G32)
    d = sc.build_initial_datum(C, fields)
    assert sp.l2_norm(d.u0) == pytest.approx(1, abs=1e-14) and d.q < 1


def test_single_term_datum():
    C = sc.desk_constants(2.0, 0.05, (4, 2), 0.0, (1.0,))
    fields, _ = sc.desk_fields(C, G16)
    d = sc.build_initial_datum(C, fields)
    assert sp.l2_norm(d.u0) == pytest.approx(2.0, rel=1e-15) and d.q == pytest.approx(1, rel=1e-15)


def test_reynolds_variant():
    C = sc.desk_constants(1, 0.05, (4, 2), 1e-3, (1.0,))
    fields, _ = sc.desk_fields(C, G16)
    d = sc.build_initial_datum(C, fields, "reynolds")
    assert d.reynolds == pytest.approx(1.0, rel=0.05)
    B = reynolds_beltrami(4, G16)
    assert sp.l2_norm(sp.advect(B, B)) / sp.l2_norm(sp.laplacian(B)) == pytest.approx(0.25, rel=1e-10)
    with pytest.raises(ValueError):
        sc.build_initial_datum(C, fields, "other")
    with pytest.raises(ValueError):
        sc.build_initial_datum(C, fields[:1])


def test_desk_fields_rejects_huge(rigorous):
    with pytest.raises(ValueError):
        sc.desk_fields(rigorous, G16)


def test_rescaling_linear_response():
    C = sc.desk_constants(1, 0.1, (4, 2), 1e-3, (1.0,))
    fields, _ = sc.desk_fields(C, G16)
    u0 = sc.build_initial_datum(C, fields).u0
    a = nse.run(u0, 0.1, [0.5, 1.0], dt=1e-2)
    b = nse.run(u0 * 0.5, 0.1, [0.5, 1.0], dt=1e-2)
    for sa, sb in zip(a.snapshots, b.snapshots):
        assert sp.l2_norm(sb.u - sa.u * 0.5) / sp.l2_norm(sa.u * 0.5) <= 0.01


@settings(max_examples=10)
@given(st.floats(0.2, 5), st.floats(0.5, 2))
def test_delta_monotone_property(t1, gap):
    C = sc.choose_constants(times=(t1, t1 + gap), margin=10)
    assert C.all_ok and C.delta[0] > C.delta[1]


def test_verify_only_report(rigorous):
    rep = sc.run_scenario(rigorous)
    assert rep.mode == "verify-only" and all(rep.flags.values()) and rep.schedule.dominant == (1, 2)
    assert rep.records == []
    with pytest.raises(ValueError):
        sc.run_scenario(rigorous, mode="bogus")
    with pytest.raises(ValueError):
        sc.run_scenario(rigorous, mode="desk-dns")


def _summary(vectors):
    from vortexlab.topology import StructureSummary, WindingReport
    reps = [WindingReport("open", None, False, 0, v) for v in vectors]
    return StructureSummary(reps, np.zeros((len(reps), 3)), "", 0.0)


def test_plane_axis():
    assert sc.plane_axis(_summary([(1, 1, 0)] * 9 + [(1, 1, 1)])) == 3
    assert sc.plane_axis(_summary([(0, 1, 1)] * 5 + [(1, 1, 0)] * 5)) is None
    assert sc.plane_axis(_summary([(0, 1, 0)] * 4)) is None
    assert sc.plane_axis(_summary([])) is None


def test_desk_dns_topology_switch():
    C = sc.desk_constants(1, 0.05, (8, 2), 1e-3, (4.0,), margin=100)
    rep = sc.run_scenario(C, sp.Grid(32), "desk-dns", dt=0.02, seeds=32)
    assert [r.expected_axis for r in rep.records] == [3, 1]
    assert rep.consistent and not rep.inconclusive
    assert len(rep.rows()) == 2


def test_desk_dns_unperturbed():
    C = sc.desk_constants(1, 0.05, (8, 2), 0.0, (4.0,), margin=100)
    rep = sc.run_scenario(C, sp.Grid(32), "desk-dns", dt=0.02, seeds=32)
    assert all(r.expected_axis == 3 and r.observed_axis == 3 for r in rep.records)
