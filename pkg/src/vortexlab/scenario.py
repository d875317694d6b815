"""
Constant cascade for the reconnection scenario, its verification in
arbitrary precision, the dominance schedule and a desk-scale driver.

Rigorous constants are astronomically large or small (``exp(-nu N0^2 T)``
does not even fit an mpmath exponent), so every inequality is checked in
log-space: each flag carries the slack ``log(rhs) - log(margin * lhs)`` and
is true only when that slack is positive beyond the working resolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import mpmath
import numpy as np

from . import nse
from .beltrami import reynolds_beltrami, shear_beltrami
from .spectral import FourierField, Grid, advect, l2_norm, laplacian
from .topology import LineField, StructureSummary, classify_structures, lattice_seeds, turnover_tau

DEFAULT_PREC = 512


class ConstantsError(ValueError):
    """The recipe cannot meet the margin; ``inequality`` names the binding one."""

    def __init__(self, inequality: str, slack):
        super().__init__(f"margin unattainable: {inequality} fails (log slack {mpmath.nstr(slack, 8)})")
        self.inequality = inequality
        self.slack = slack


@dataclass(frozen=True)
class Check:
    name: str
    slack: object  # mpf
    resolution: object  # mpf
    strict: bool = True

    @property
    def ok(self) -> bool:
        if self.strict:
            return bool(self.slack > self.resolution)
        return bool(self.slack >= -self.resolution)


@dataclass(frozen=True)
class ScenarioConstants:
    M: object
    nu: object
    r: int
    margin: object
    c: object
    times: tuple  # T_1..T_n
    N: tuple  # N_0..N_n
    delta: tuple  # delta_1..delta_n
    rho: tuple  # rho_1..rho_{n-1}
    prec: int = DEFAULT_PREC

    @property
    def n(self) -> int:
        return len(self.times)

    def checks(self) -> list:
        return verify_constants(self)

    @property
    def flags(self) -> dict:
        out: dict = {}
        for ch in self.checks():
            fam = ch.name.split("[")[0]
            out[fam] = out.get(fam, True) and ch.ok
        return out

    @property
    def all_ok(self) -> bool:
        return all(self.flags.values())

    def tampered(self, what: str, index: int, factor: float) -> "ScenarioConstants":
        """Copy with ``delta_index`` (1-based) or ``N_index`` multiplied by ``factor``."""
        with mpmath.workprec(self.prec):
            if what == "delta":
                vals = list(self.delta)
                vals[index - 1] = vals[index - 1] * factor
                return replace(self, delta=tuple(vals))
            if what == "N":
                vals = list(self.N)
                vals[index] = vals[index] * factor
                return replace(self, N=tuple(vals))
        raise ValueError("what must be 'delta' or 'N'")

    def as_floats(self) -> dict:
        """Double-precision view; entries that do not fit a double become 0 or inf."""
        def f(x):
            return float(x) if abs(x) < mpmath.mpf("1e300") else math.inf
        return dict(M=float(self.M), nu=float(self.nu), times=[float(t) for t in self.times],
                    N=[f(x) for x in self.N], delta=[float(x) for x in self.delta])

    def to_text(self) -> str:
        return constants_to_text(self)


# ---------------------------------------------------------------------------
# the inequality families, in log-space


def _resolution(prec, *terms):
    scale = sum(abs(t) for t in terms) + 1
    return scale * mpmath.mpf(2) ** (-(prec - 24))


def _check(name, prec, rhs_log, lhs_terms, strict=True):
    """Pass iff ``sum(lhs_terms) < rhs_log`` with certifiable slack (``<=`` if not strict)."""
    slack = rhs_log - mpmath.fsum(lhs_terms)
    return Check(name, slack, _resolution(prec, rhs_log, *lhs_terms), strict)


def verify_constants(C: ScenarioConstants) -> list:
    with mpmath.workprec(C.prec):
        ln = mpmath.log
        n, r, nu = C.n, C.r, mpmath.mpf(C.nu)
        lm = ln(C.margin)
        T = [mpmath.mpf(0)] + [mpmath.mpf(t) for t in C.times]
        N = [mpmath.mpf(x) for x in C.N]
        d = [mpmath.mpf(C.M)] + [mpmath.mpf(x) for x in C.delta]
        ld = [ln(x) for x in d]
        lN = [ln(x) for x in N]
        prec = C.prec
        out = []

        # ordering: 1 << N_n << ... << N_2 << sqrt(N_1), N_1 << N_0, times increasing
        out.append(_check("ordering[N_n]", prec, lN[n], [lm], False))
        for k in range(2, n):
            out.append(_check(f"ordering[N_{k}]", prec, lN[k], [lm, lN[k + 1]], False))
        if n >= 2:
            out.append(_check("ordering[N_1]", prec, lN[1], [lm, 2 * lN[2]], False))
        out.append(_check("ordering[N_0]", prec, lN[0], [lm, lN[1]], False))
        for k in range(1, n + 1):
            out.append(_check(f"ordering[T_{k}]", prec, T[k] - T[k - 1], [mpmath.mpf(0)]))

        # rho_k = exp(-nu N_k^2 (T_k + T_{k+1})/2) and delta_{k+1} = delta_k rho_k
        for k in range(1, n):
            lr = -nu * N[k] ** 2 * (T[k] + T[k + 1]) / 2
            got = ln(C.rho[k - 1])
            res = _resolution(prec, lr, got)
            out.append(Check(f"rho[{k}]", res * 2 - abs(got - lr), res))
            rec = ld[k + 1] - ld[k] - got
            res = _resolution(prec, ld[k + 1], ld[k], got)
            out.append(Check(f"recursion[{k}]", res * 2 - abs(rec), res))
        lprod = mpmath.fsum(ln(x) for x in C.rho)

        # N_0^2 >> N_1^(r-1) e^{nu T_n N_n^2} prod rho^-1
        out.append(_check("n0_choice", prec, 2 * lN[0], [lm, (r - 1) * lN[1], nu * T[n] * N[n] ** 2, -lprod]))
        # delta_1 = c N0^(-r-1) N1^(-r-2) e^{-nu T_n N_n^2} prod rho with c << 1
        lc = ld[1] + (r + 1) * lN[0] + (r + 2) * lN[1] + nu * T[n] * N[n] ** 2 - lprod
        out.append(_check("delta1_choice", prec, mpmath.mpf(0), [lm, lc]))

        # (ineq1) delta_1 N_1^(r+1/2) << N_0^-r
        out.append(_check("ineq1", prec, -r * lN[0], [lm, ld[1], (r + 0.5) * lN[1]]))
        # (ineq2) delta_1 N_1^(r-1/2) << 1
        out.append(_check("ineq2", prec, mpmath.mpf(0), [lm, ld[1], (r - 0.5) * lN[1]]))
        # (ineq3) delta_{k-1}/delta_k e^{-nu(N_{k-1}^2 - N_k^2) T_k} << N_{k-1}^-r
        for k in range(1, n + 1):
            out.append(_check(f"ineq3[{k}]", prec, -r * lN[k - 1],
                              [lm, ld[k - 1], -ld[k], -nu * (N[k - 1] ** 2 - N[k] ** 2) * T[k]]))
        # (ineq4) delta_{k+1}/delta_k e^{nu(N_k^2 - N_{k+1}^2) T_k} << N_{k+1}^-r
        for k in range(1, n):
            out.append(_check(f"ineq4[{k}]", prec, -r * lN[k + 1],
                              [lm, ld[k + 1], -ld[k], nu * (N[k] ** 2 - N[k + 1] ** 2) * T[k]]))
        # (ineq5) delta_n^-1 e^{nu N_n^2 T_n}(delta_1 N_0^-2 + delta_1^2 N_0^(r+1) N_1^(r+2)) << 1
        a = ld[1] - 2 * lN[0]
        b = 2 * ld[1] + (r + 1) * lN[0] + (r + 2) * lN[1]
        big = max(a, b)
        lsum = big + ln(1 + mpmath.exp(min(a, b) - big))
        out.append(_check("ineq5", prec, mpmath.mpf(0), [lm, -ld[n], nu * N[n] ** 2 * T[n], lsum]))
        return out


# ---------------------------------------------------------------------------
# the recipe


def _grow(x, ok, limit=4096):
    for _ in range(limit):
        if ok(x):
            return x
        x = x * 2
    raise ConstantsError("growth", mpmath.mpf(0))


def choose_constants(M=1, nu=1, r: int = 7, times=(1.0, 2.0), margin=1e3, c=None,
                     prec: int = DEFAULT_PREC) -> ScenarioConstants:
    """
    Build ``N_n << ... << N_1 << N_0`` and ``delta_1 > ... > delta_n`` by the
    recipe: frequencies grow geometrically by ``margin`` (doubling further
    until the neighbour inequalities hold), ``N_0`` is the smallest value
    meeting its defining inequality with a factor ``2 margin``, and ``c``
    defaults to ``1/(2 margin)`` so the two terms of (ineq5) split the budget.
    """
    times = tuple(float(t) for t in times)
    if not times or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be positive and strictly increasing")
    if margin < 1:
        raise ValueError("margin must be at least 1")
    if r < 1:
        raise ValueError("r must be a positive integer")
    n = len(times)
    with mpmath.workprec(prec):
        ln = mpmath.log
        nu_ = mpmath.mpf(nu)
        m_ = mpmath.mpf(margin)
        lm = ln(m_)
        c_ = 1 / (2 * m_) if c is None else mpmath.mpf(c)
        T = [mpmath.mpf(0)] + [mpmath.mpf(t) for t in times]
        N = [None] * (n + 1)
        N[n] = mpmath.mpf(max(math.ceil(margin), 2))

        def gap_ok(k, Nk):
            # (ineq4)[k] and (ineq3)[k+1]; both depend only on N_k, N_{k+1}
            Nn = N[k + 1]
            i4 = -nu_ * Nk ** 2 * (T[k + 1] - T[k]) / 2 - nu_ * Nn ** 2 * T[k] + r * ln(Nn) + lm
            i3 = -nu_ * Nk ** 2 * (T[k + 1] - T[k]) / 2 + nu_ * Nn ** 2 * T[k + 1] + r * ln(Nk) + lm
            return i4 < -1 and i3 < -1

        for k in range(n - 1, 0, -1):
            base = m_ * N[k + 1] ** 2 if k == 1 else m_ * N[k + 1]
            N[k] = _grow(base, lambda x, k=k: gap_ok(k, x))
        rho = [mpmath.exp(-nu_ * N[k] ** 2 * (T[k] + T[k + 1]) / 2) for k in range(1, n)]
        lprod = -mpmath.fsum(nu_ * N[k] ** 2 * (T[k] + T[k + 1]) / 2 for k in range(1, n))
        lX = ln(2 * m_) + (r - 1) * ln(N[1]) + nu_ * T[n] * N[n] ** 2 - lprod
        N0 = max(mpmath.exp(lX / 2), m_ * N[1])
        if N0 < mpmath.mpf(2) ** prec:
            N0 = mpmath.ceil(N0)

        def ld1(N0):
            return ln(c_) - (r + 1) * ln(N0) - (r + 2) * ln(N[1]) - nu_ * T[n] * N[n] ** 2 + lprod

        def first_ok(N0):
            # (ineq3)[1] with delta_0 = M
            return ln(mpmath.mpf(M)) - ld1(N0) - nu_ * (N0 ** 2 - N[1] ** 2) * T[1] + r * ln(N0) + lm < -1

        N[0] = _grow(N0, first_ok)
        d = [mpmath.exp(ld1(N[0]))]
        for k in range(1, n):
            d.append(d[-1] * rho[k - 1])
        C = ScenarioConstants(mpmath.mpf(M), nu_, int(r), m_, c_, tuple(T[1:]), tuple(N), tuple(d),
                              tuple(rho), prec)
    for ch in C.checks():
        if not ch.ok:
            raise ConstantsError(ch.name, ch.slack)
    return C


def desk_constants(M: float, nu: float, N, delta1: float, times, margin: float = 100.0, r: int = 7,
                   prec: int = DEFAULT_PREC) -> ScenarioConstants:
    """Explicit small frequencies with ``delta_{k+1} = delta_k rho_k``; flags are not enforced."""
    N = tuple(N)
    times = tuple(float(t) for t in times)
    if len(N) != len(times) + 1:
        raise ValueError("need N_0..N_n for n times")
    with mpmath.workprec(prec):
        nu_ = mpmath.mpf(nu)
        T = [mpmath.mpf(0)] + [mpmath.mpf(t) for t in times]
        Nm = [mpmath.mpf(x) for x in N]
        rho = [mpmath.exp(-nu_ * Nm[k] ** 2 * (T[k] + T[k + 1]) / 2) for k in range(1, len(times))]
        d = [mpmath.mpf(delta1)]
        for rk in rho:
            d.append(d[-1] * rk)
        return ScenarioConstants(mpmath.mpf(M), nu_, int(r), mpmath.mpf(margin), mpmath.mpf(0),
                                 tuple(T[1:]), tuple(Nm), tuple(d), tuple(rho), prec)


# ---------------------------------------------------------------------------
# structured-text serialisation

_SCALARS = ("M", "nu", "r", "margin", "c", "prec")


def constants_to_text(C: ScenarioConstants) -> str:
    digits = int(C.prec * math.log10(2)) + 4
    with mpmath.workprec(C.prec):
        def s(x):
            return mpmath.nstr(mpmath.mpf(x), digits, strip_zeros=False, min_fixed=1, max_fixed=0)
        lines = ["# vortexlab scenario constants", f"n = {C.n}"]
        lines += [f"{k} = {getattr(C, k) if k in ('r', 'prec') else s(getattr(C, k))}" for k in _SCALARS]
        lines += [f"T{k} = {s(t)}" for k, t in enumerate(C.times, 1)]
        lines += [f"N{k} = {s(x)}" for k, x in enumerate(C.N)]
        lines += [f"delta{k} = {s(x)}" for k, x in enumerate(C.delta, 1)]
        lines += [f"rho{k} = {s(x)}" for k, x in enumerate(C.rho, 1)]
        for ch in C.checks():
            lines.append(f"check.{ch.name} = {'true' if ch.ok else 'false'}  # log slack {mpmath.nstr(ch.slack, 12)}")
        for fam, ok in C.flags.items():
            lines.append(f"flag.{fam} = {'true' if ok else 'false'}")
    return "\n".join(lines) + "\n"


def constants_from_text(text: str) -> ScenarioConstants:
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v
    prec = int(kv.get("prec", DEFAULT_PREC))
    n = int(kv["n"])
    with mpmath.workprec(prec):
        f = mpmath.mpf
        return ScenarioConstants(
            f(kv["M"]), f(kv["nu"]), int(kv["r"]), f(kv["margin"]), f(kv["c"]),
            tuple(f(kv[f"T{k}"]) for k in range(1, n + 1)),
            tuple(f(kv[f"N{k}"]) for k in range(n + 1)),
            tuple(f(kv[f"delta{k}"]) for k in range(1, n + 1)),
            tuple(f(kv[f"rho{k}"]) for k in range(1, n)),
            prec)


# ---------------------------------------------------------------------------
# dominance schedule


@dataclass
class DominanceSchedule:
    """``log_coeff[k-1][j]``: log of the rescaled coefficient of ``W_j`` at ``T_k``."""

    times: tuple
    log_coeff: list
    margin: object

    @property
    def dominant(self) -> tuple:
        return tuple(max(range(len(row)), key=lambda j: row[j]) for row in self.log_coeff)

    def off_diagonal_ok(self) -> bool:
        lm = mpmath.log(self.margin)
        return all(row[j] <= -lm for k, row in enumerate(self.log_coeff, 1) for j in range(len(row)) if j != k)

    def max_off_diagonal(self):
        return max(row[j] for k, row in enumerate(self.log_coeff, 1) for j in range(len(row)) if j != k)

    def coefficients(self) -> np.ndarray:
        """Doubles; entries below the double range are 0."""
        return np.array([[float(mpmath.exp(x)) if x > -740 else 0.0 for x in row] for row in self.log_coeff])


def dominance_schedule(C: ScenarioConstants) -> DominanceSchedule:
    with mpmath.workprec(C.prec):
        ln = mpmath.log
        nu = mpmath.mpf(C.nu)
        N = [mpmath.mpf(x) for x in C.N]
        ld = [ln(C.M)] + [ln(x) for x in C.delta]
        rows = []
        for k, Tk in enumerate(C.times, 1):
            Tk = mpmath.mpf(Tk)
            rows.append([ld[j] - ld[k] + nu * (N[k] ** 2 - N[j] ** 2) * Tk for j in range(C.n + 1)])
        return DominanceSchedule(tuple(C.times), rows, C.margin)


def heat_only_coefficients(u0: FourierField, fields, C: ScenarioConstants) -> np.ndarray:
    """
    Rescaled coefficients of each ``W_j`` in ``exp(nu T_k Lap) u0``, by
    exact heat propagation and L2 projection.  Doubles only (desk scale).
    """
    from .spectral import heat_propagate, inner
    f = C.as_floats()
    out = np.zeros((C.n, C.n + 1))
    for k, Tk in enumerate(f["times"], 1):
        uk = heat_propagate(u0, f["nu"] * Tk)
        scale = math.exp(f["nu"] * f["N"][k] ** 2 * Tk) / f["delta"][k - 1]
        for j, W in enumerate(fields):
            out[k - 1, j] = scale * inner(uk, W) / inner(W, W)
    return out


# ---------------------------------------------------------------------------
# initial datum


@dataclass
class InitialDatum:
    u0: FourierField
    q: float
    reynolds: float
    variant: str


def reynolds_number(u: FourierField, nu: float) -> float:
    """``||(u.grad)u|| / (nu ||Lap u||)``."""
    return l2_norm(advect(u, u)) / (nu * l2_norm(laplacian(u)))


def desk_fields(C: ScenarioConstants, grid: Grid):
    """
    ``W_0 = B_{N0}`` and, as the decidable stand-in for the knotted sets,
    shear fields whose lines lie in planes ``x1 = const`` for odd ``k`` and
    ``x3 = const`` for even ``k``.  Returns ``(fields, plane_axes)``.
    """
    Ns = C.as_floats()["N"]
    fields, axes = [], []
    for k, Nk in enumerate(Ns):
        if not math.isfinite(Nk) or Nk != int(Nk):
            raise ValueError(f"N_{k} is not a desk-scale integer frequency")
        ax = 1 if k % 2 else 3
        fields.append(shear_beltrami(int(Nk), grid, axis=ax))
        axes.append(ax)
    return fields, axes


def build_initial_datum(C: ScenarioConstants, fields, variant: str = "l2") -> InitialDatum:
    """
    ``u0 = M W_0 + sum delta_j W_j`` rescaled to ``||u0|| = M``, or the
    Reynolds variant ``nu M N_0 Btilde_{N0} + sum delta_j W_j`` (no rescale).
    """
    f = C.as_floats()
    if len(fields) != C.n + 1:
        raise ValueError(f"need {C.n + 1} fields W_0..W_n")
    M, nu = f["M"], f["nu"]
    tail = None
    for dj, W in zip(f["delta"], fields[1:]):
        tail = W * dj if tail is None else tail + W * dj
    if variant == "l2":
        u = fields[0] * M if tail is None else fields[0] * M + tail
        q = M / l2_norm(u)
        u = u * q
    elif variant == "reynolds":
        N0 = int(f["N"][0])
        head = reynolds_beltrami(N0, fields[0].grid) * (nu * M * N0)
        u = head if tail is None else head + tail
        q = 1.0
    else:
        raise ValueError("variant must be 'l2' or 'reynolds'")
    return InitialDatum(u, q, reynolds_number(u, nu), variant)


# ---------------------------------------------------------------------------
# driver


def plane_axis(summary: StructureSummary, share: float = 0.8):
    """
    Coordinate axis along which (nearly) every classified line makes no net
    progress, i.e. the common normal of the planes the lines live in.
    """
    counts = np.zeros(3)
    total = 0
    for r in summary.reports:
        vec = r.winding if r.kind == "closed" else r.direction
        if vec is None:
            continue
        total += 1
        counts += np.array([v == 0 for v in vec], float)
    if total == 0:
        return None
    best = int(np.argmax(counts))
    if counts[best] < share * total or np.sum(counts == counts[best]) > 1:
        return None
    return best + 1


@dataclass
class TimeRecord:
    k: int
    T: float
    expected_axis: int | None
    observed_axis: int | None
    verdict: str
    undetermined_fraction: float

    @property
    def conclusive(self) -> bool:
        return not self.verdict.startswith("undetermined")

    @property
    def match(self) -> bool:
        return self.conclusive and self.expected_axis == self.observed_axis


@dataclass
class ScenarioReport:
    mode: str
    flags: dict
    schedule: DominanceSchedule
    records: list = field(default_factory=list)

    @property
    def inconclusive(self) -> bool:
        return any(not r.conclusive for r in self.records)

    @property
    def consistent(self) -> bool:
        return bool(self.records) and all(r.match for r in self.records)

    def rows(self):
        return [dict(k=r.k, T=r.T, expected_axis=r.expected_axis, observed_axis=r.observed_axis,
                     verdict=r.verdict, undetermined_fraction=r.undetermined_fraction,
                     match=r.match) for r in self.records]


def run_scenario(C: ScenarioConstants, grid: Grid | None = None, mode: str = "verify-only",
                 fields=None, plane_axes=None, dt: float = 1e-2, seeds=64,
                 tau_periods: float = 10.0) -> ScenarioReport:
    """
    ``verify-only``: flags and schedule.  ``desk-dns``: integrate the desk
    datum to ``T_n`` and classify the vortex lines of the rescaled field at
    ``T_0 = 0`` and every ``T_k``, comparing the plane normal of the lines
    with that of the field the schedule says dominates.
    """
    sched = dominance_schedule(C)
    rep = ScenarioReport(mode, C.flags, sched)
    if mode == "verify-only":
        return rep
    if mode != "desk-dns":
        raise ValueError("mode must be 'verify-only' or 'desk-dns'")
    if grid is None:
        raise ValueError("desk-dns needs a grid")
    if fields is None:
        fields, plane_axes = desk_fields(C, grid)
    datum = build_initial_datum(C, fields)
    f = C.as_floats()
    res = nse.run(datum.u0, f["nu"], f["times"], dt=dt, diagnostics=False)
    seed_pts = lattice_seeds(seeds) if np.isscalar(seeds) else np.asarray(seeds, float)
    dom = (0,) + sched.dominant
    snaps = [datum.u0 * (1.0 / f["M"])]
    for k, s in enumerate(res.snapshots, 1):
        delta_k = f["delta"][k - 1]
        if delta_k > 0:
            scale = math.exp(f["nu"] * f["N"][k] ** 2 * f["times"][k - 1]) / delta_k
        else:
            scale = math.exp(f["nu"] * f["N"][0] ** 2 * f["times"][k - 1]) / f["M"]
        snaps.append(s.u * scale)
    for k, uk in enumerate(snaps):
        idx = dom[k] if f["delta"][0] > 0 else 0
        summ = classify_structures(uk, seed_pts, tau_max=turnover_tau(LineField.from_field(uk), tau_periods))
        rep.records.append(TimeRecord(k, 0.0 if k == 0 else f["times"][k - 1],
                                      plane_axes[idx] if plane_axes else None, plane_axis(summ),
                                      summ.verdict, summ.undetermined_fraction))
    return rep

