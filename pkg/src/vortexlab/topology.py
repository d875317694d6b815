"""
Vortex-line tracing on the torus, winding classification, Poincare
sections and the KAM confinement experiment for perturbed shear fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .spectral import FourierField, curl

SPARSE_LIMIT = 200
SEED_MIN_SPEED = 1e-10
GUARD = 0.1
TWO_PI = 2 * math.pi


class StagnantSeed(ValueError):
    pass


# ---------------------------------------------------------------------------
# field evaluation


@dataclass
class LineField:
    """Evaluation data for ``kernels.trace``: sparse modes or an oversampled grid."""

    K: np.ndarray
    C: np.ndarray
    c0: np.ndarray
    G: np.ndarray
    use_grid: bool
    source: FourierField

    @classmethod
    def from_field(cls, u: FourierField, is_vorticity: bool = False, sparse_limit: int = SPARSE_LIMIT,
                   oversample: int = 2) -> "LineField":
        w = u if is_vorticity else curl(u)
        K, C, c0 = w.sparse_modes(1e-15)
        if len(K) <= sparse_limit:
            return cls(K, C, c0, np.zeros((3, 1, 1, 1)), False, w)
        G = np.ascontiguousarray(w.to_physical(w.grid.n * oversample))
        return cls(np.zeros((0, 3)), np.zeros((0, 3), complex), np.zeros(3), G, True, w)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if not self.use_grid:
            return kernels.eval_modes(self.K, self.C, self.c0, x)
        out = np.empty((len(x), 3))
        buf = np.empty(3)
        for i, p in enumerate(x):
            kernels.field_at(np.ascontiguousarray(p), self.K, self.C, self.c0, self.G, True, 1.0, buf)
            out[i] = buf
        return out

    def trace(self, x0, tau_max, tol, h_max, sign=1.0, max_steps=10 ** 6, closure_tol=1e-6,
              detect_closure=True, section_axis=-1, section_value=0.0, max_crossings=0, record_stride=1):
        return kernels.trace(np.asarray(x0, float), float(tau_max), float(tol), float(h_max), self.K, self.C,
                             self.c0, self.G, self.use_grid, float(sign), int(max_steps), float(closure_tol),
                             bool(detect_closure), int(section_axis), float(section_value), int(max_crossings),
                             int(record_stride))


# ---------------------------------------------------------------------------
# lines and winding


@dataclass
class VortexLine:
    seed: np.ndarray
    taus: np.ndarray
    X: np.ndarray
    closed: bool
    period: float
    displacement: np.ndarray
    closure_residual: float
    status: int
    tol: float
    nsteps: int

    def rows(self):
        x = np.mod(self.X, TWO_PI)
        for t, p, q in zip(self.taus, x, self.X):
            yield (t, *p, *q)


def trace_vortex_line(u: FourierField | LineField, seed, tau_max: float, tol: float = 1e-10,
                      h_max: float = 0.5, sign: float = 1.0, detect_closure: bool = True,
                      record_stride: int = 1, max_steps: int = 10 ** 6) -> VortexLine:
    """Integral curve of ``curl u`` from ``seed`` on the universal cover."""
    if tol < 1e-12:
        raise ValueError("tracing tolerance must be at least 1e-12")
    lf = u if isinstance(u, LineField) else LineField.from_field(u)
    seed = np.asarray(seed, float)
    speed = float(np.linalg.norm(lf(seed)[0]))
    if not speed >= SEED_MIN_SPEED:
        raise StagnantSeed(f"|omega| = {speed:.2e} at the seed {tuple(seed)}")
    r = lf.trace(seed, tau_max, tol, h_max, sign, max_steps, 1e-6, detect_closure, record_stride=record_stride)
    taus, X, _, status, ctau, cdisp, cres = r[:7]
    closed = status == kernels.CLOSED
    return VortexLine(seed, taus, X, closed, float(ctau) if closed else math.nan,
                      np.array(cdisp) if closed else X[-1] - X[0], float(cres), int(status), tol, int(r[12]))


@dataclass
class WindingReport:
    kind: str  # "closed", "open" or "undetermined"
    winding: tuple | None
    contractible: bool | None
    monotone_axis: int | None = None
    direction: tuple | None = None
    note: str = ""

    @property
    def label(self) -> str:
        if self.contractible is None:
            return "undetermined"
        return "contractible" if self.contractible else "non-contractible"


def winding_classification(line: VortexLine, guard: float = GUARD) -> WindingReport:
    """
    Closed lines: lift displacement over one period divided by 2pi, accepted
    only within ``guard`` of an integer vector.  Open lines: a lift
    coordinate that is strictly monotone and advances at least one full turn
    rules out contractibility.
    """
    if line.closed:
        w = line.displacement / TWO_PI
        r = np.rint(w)
        if np.abs(w - r).max() > guard:
            return WindingReport("undetermined", None, None, note=f"off-lattice displacement {w}")
        wv = tuple(int(v) for v in r)
        return WindingReport("closed", wv, wv == (0, 0, 0))
    d = np.diff(line.X, axis=0)
    direction = tuple(int(np.sign(v)) if abs(v) > TWO_PI else 0 for v in line.X[-1] - line.X[0])
    for i in np.argsort(-np.abs(line.X[-1] - line.X[0])):
        span = abs(line.X[-1, i] - line.X[0, i])
        if span >= TWO_PI and (np.all(d[:, i] > 0) or np.all(d[:, i] < 0)):
            return WindingReport("open", None, False, int(i), direction)
    return WindingReport("undetermined", None, None, direction=direction,
                         note="no closure and no monotone coordinate")


def explicit_shear_winding(N: int, seed, max_den: int = 12) -> WindingReport:
    """
    Exact classification for lines of ``B_N``: straight lines with direction
    ``(sin N x3, cos N x3, 0)``; closed iff the slope is rational.
    """
    a, b = math.sin(N * seed[2]), math.cos(N * seed[2])
    for num, den, swap in ((a, b, False), (b, a, True)):
        if abs(den) < 1e-14:
            wv = (int(np.sign(a)), 0, 0) if not swap else (0, int(np.sign(b)), 0)
            return WindingReport("closed", wv, False)
    fr = Fraction(a / b).limit_denominator(max_den)
    if abs(float(fr) - a / b) < 1e-12:
        p, q = abs(fr.numerator), fr.denominator
        wv = (int(np.sign(a)) * p, int(np.sign(b)) * q, 0)
        return WindingReport("closed", wv, False)
    i = 0 if abs(a) >= abs(b) else 1
    return WindingReport("open", None, False, i)


# ---------------------------------------------------------------------------
# confinement bands


@dataclass(frozen=True)
class ConfinementBand:
    j: int
    n: int
    delta: float
    N: int

    CENTERS = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)

    def __post_init__(self):
        if self.j not in (1, 2, 3, 4) or not 0 <= self.n < self.N:
            raise ValueError("band indices out of range")

    @property
    def center(self) -> float:
        return self.CENTERS[self.j - 1] + TWO_PI * self.n

    @property
    def half_width(self) -> float:
        return math.pi / 4 + self.delta

    def offset(self, z) -> np.ndarray:
        """Signed distance of ``z`` from the centre on R / 2 pi N Z."""
        L = TWO_PI * self.N
        return (np.asarray(z, float) - self.center + L / 2) % L - L / 2

    def contains(self, z) -> np.ndarray:
        return np.abs(self.offset(z)) < self.half_width


def bands_containing(z: float, N: int, delta: float) -> list:
    return [b for n in range(N) for j in (1, 2, 3, 4)
            if (b := ConfinementBand(j, n, delta, N)).contains(z)]


# ---------------------------------------------------------------------------
# confinement check


@dataclass
class SeedOutcome:
    seed: np.ndarray
    bands: list
    excursion: float
    confined: bool
    status: int


@dataclass
class ConfinementReport:
    eps: float
    outcomes: list
    horizon: float

    @property
    def max_excursion(self) -> float:
        return max((o.excursion for o in self.outcomes), default=0.0)

    @property
    def all_confined(self) -> bool:
        return all(o.confined for o in self.outcomes)

    def failures(self) -> list:
        return [o for o in self.outcomes if not o.confined]


def shear_period(N: int) -> float:
    """Parameter time for a line of B_N to advance one full turn (speed (2pi)^(-3/2))."""
    return TWO_PI / (2 * math.pi) ** -1.5


def resonant_levels(b: FourierField, N: int, top: int = 8) -> np.ndarray:
    """
    Values of ``N x3`` on which modes of ``b`` with ``b_3 != 0`` are resonant
    with the shear, ``k1 sin(N x3) + k2 cos(N x3) = 0``, strongest first.
    """
    K, C, _ = b.sparse_modes(1e-12)
    amp = np.abs(C[:, 2])
    levels = []
    for i in np.argsort(-amp):
        k1, k2 = K[i, 0], K[i, 1]
        if k1 == 0 and k2 == 0 or amp[i] == 0:
            continue
        z = math.atan2(-k2, k1) % math.pi
        for zz in (z, z + math.pi):
            if all(abs((zz - v + math.pi) % TWO_PI - math.pi) > 1e-9 for v in levels):
                levels.append(zz)
        if len(levels) >= 2 * top:
            break
    return np.array(levels)


def halton(n: int, base: int) -> np.ndarray:
    out = np.empty(n)
    for i in range(n):
        f, r, k = 1.0, 0.0, i + 1
        while k:
            f /= base
            r += f * (k % base)
            k //= base
        out[i] = r
    return out


def confinement_seeds(N: int, count: int = 100, levels=None) -> np.ndarray:
    """
    Deterministic seeds: ``(x1, x2)`` from a Halton lattice, ``N x3`` cycling
    through ``levels`` (resonant tori where excursions are largest) and
    then evenly spread over the circle.
    """
    u1, u2, u3 = halton(count, 2), halton(count, 3), halton(count, 5)
    z = TWO_PI * u3
    if levels is not None and len(levels):
        m = min(count // 2, len(levels) * 6)
        z[:m] = np.asarray(levels)[np.arange(m) % len(levels)]
    n_turn = np.arange(count) % N
    x3 = (z + TWO_PI * n_turn) / N
    return np.stack([TWO_PI * u1, TWO_PI * u2, x3], axis=1)


def confinement_check(B_prime: FourierField, N: int, seeds=None, periods: float = 1000.0,
                      tol: float = 1e-9, h_max: float = 5.0, delta_in: float = 0.1,
                      delta_out: float = 0.2, eps: float = math.nan) -> ConfinementReport:
    """
    Trace lines of ``B'' = curl(B')/N`` and verify ``N x3`` stays inside every
    band ``I_j^n(delta_out)`` whose ``I_j^n(delta_in)`` contains its start.
    """
    lf = LineField.from_field(B_prime * (1.0 / N))
    if seeds is None:
        seeds = confinement_seeds(N, 100, resonant_levels(lf.source, N))
    horizon = periods * shear_period(N)
    outs = []
    for s in np.atleast_2d(seeds):
        z0 = N * s[2]
        bands = bands_containing(z0, N, delta_in)
        r = lf.trace(s, horizon, tol, h_max, 1.0, 10 ** 7, 1e-6, False, record_stride=1)
        X, status = r[1], int(r[3])
        z = N * X[:, 2]
        exc = float(np.abs(z - z0).max())
        ok = status == kernels.FINISHED and all(
            np.all(ConfinementBand(b.j, b.n, delta_out, N).contains(z)) for b in bands)
        outs.append(SeedOutcome(s, bands, exc, bool(ok), status))
    return ConfinementReport(eps, outs, horizon)


def perturbed_shear(N: int, grid, eps: float, seed: int = 0, kmax: int = 3, decay: float = 1.0) -> FourierField:
    """``B_N + eps * R`` with ``R`` a random unit-L2 solenoidal field; curl/N gives ``B_N + eps curl(R)/N``."""
    from .beltrami import shear_beltrami
    from .spectral import l2_norm, random_field

    R = random_field(grid, np.random.default_rng(seed), kmax=kmax, decay=decay)
    R = R / l2_norm(R)
    return shear_beltrami(N, grid) + eps * R


@dataclass
class KAMFit:
    eps: np.ndarray
    excursion: np.ndarray
    slope: float


def kam_sweep(N: int, grid, eps_values=(1e-4, 4e-4, 1.6e-3), seed: int = 0, periods: float = 1000.0,
              n_seeds: int = 100) -> tuple:
    """Max excursion against eps on a fixed seed set; returns (reports, fit)."""
    reps = []
    base = perturbed_shear(N, grid, 1.0, seed)
    levels = resonant_levels(curl(base), N)
    seeds = confinement_seeds(N, n_seeds, levels)
    for e in eps_values:
        reps.append(confinement_check(perturbed_shear(N, grid, e, seed), N, seeds, periods, eps=e))
    ex = np.array([r.max_excursion for r in reps])
    slope = float(np.polyfit(np.log(eps_values), np.log(ex), 1)[0])
    return reps, KAMFit(np.array(eps_values), ex, slope)


# ---------------------------------------------------------------------------
# Poincare sections


@dataclass
class SectionResult:
    points: np.ndarray  # (m, 3) crossing positions on the lift
    directions: np.ndarray
    taus: np.ndarray
    seed_index: np.ndarray
    skipped: int


def poincare_section(u: FourierField | LineField, axis: int, value: float, seeds, crossings: int,
                     tol: float = 1e-11, h_max: float = 0.5, merge_tol: float = 1e-9,
                     max_tau: float = 1e7) -> SectionResult:
    """Crossings of ``x_axis = value (mod 2pi)`` along lines from each seed."""
    lf = u if isinstance(u, LineField) else LineField.from_field(u)
    pts, dirs, taus, idx = [], [], [], []
    skipped = 0
    for i, s in enumerate(np.atleast_2d(seeds)):
        r = lf.trace(s, max_tau, tol, h_max, 1.0, 10 ** 7, 1e-6, False, axis, value, crossings, 10 ** 7)
        sp, st, sd, nsec, nskip = r[7], r[8], r[9], r[10], r[11]
        skipped += int(nskip)
        for p, t, d in zip(sp[:nsec], st[:nsec], sd[:nsec]):
            tp = np.mod(p, TWO_PI)
            if any(np.abs(np.mod(tp - q + math.pi, TWO_PI) - math.pi).max() < merge_tol for q in pts[-50:]):
                continue
            pts.append(tp)
            dirs.append(int(d))
            taus.append(float(t))
            idx.append(i)
    return SectionResult(np.array(pts).reshape(-1, 3), np.array(dirs, int), np.array(taus),
                         np.array(idx, int), skipped)


def kasa_circle(xy: np.ndarray):
    """Algebraic least-squares circle fit; returns (center, radius, max |dist - R|)."""
    x, y = xy[:, 0], xy[:, 1]
    A = np.stack([x, y, np.ones_like(x)], axis=1)
    sol, *_ = np.linalg.lstsq(A, x * x + y * y, rcond=None)
    c = sol[:2] / 2
    R = math.sqrt(sol[2] + c @ c)
    return c, R, float(np.abs(np.hypot(x - c[0], y - c[1]) - R).max())


def invariant_curve_residual(points2d: np.ndarray, invariant=None) -> float:
    """
    Spread of a conserved quantity over section points (or of the distance
    to a fitted circle when no invariant is supplied).
    """
    if invariant is None:
        return kasa_circle(points2d)[2]
    v = np.asarray(invariant(points2d), float)
    return float(v.max() - v.min())


def ring_field(grid) -> FourierField:
    """``u = (0, 0, cos x1 + cos x2)``; its vorticity has closed contractible lines around (0, 0)."""
    from .spectral import synthesize

    a = np.array([0, 0, 0.5])
    return synthesize(grid, [((1, 0, 0), a), ((-1, 0, 0), a), ((0, 1, 0), a), ((0, -1, 0), a)], label="ring")


# ---------------------------------------------------------------------------
# aggregate classification


@dataclass
class StructureSummary:
    reports: list
    seeds: np.ndarray
    verdict: str
    undetermined_fraction: float
    directions: dict = field(default_factory=dict)

    def records(self):
        for s, r in zip(self.seeds, self.reports):
            yield dict(seed=[float(v) for v in s], kind=r.kind, label=r.label,
                       winding=list(r.winding) if r.winding else None,
                       monotone_axis=r.monotone_axis)


def lattice_seeds(count: int = 1000) -> np.ndarray:
    return TWO_PI * np.stack([halton(count, 2), halton(count, 3), halton(count, 5)], axis=1)


def turnover_tau(lf: "LineField", periods: float = 10.0) -> float:
    """``periods`` times the time a line at the peak sampled speed needs to cross the box."""
    vmax = float(np.linalg.norm(lf(lattice_seeds(64)), axis=1).max())
    return periods * TWO_PI / max(vmax, 1e-300)


def classify_structures(u: FourierField, seeds=None, tau_max: float | None = None, tol: float = 1e-10,
                        h_max: float = 0.5, is_vorticity: bool = False) -> StructureSummary:
    """
    Per-seed winding reports and a verdict.  More than 20% undetermined
    lines withholds the verdict.
    """
    lf = LineField.from_field(u, is_vorticity)
    seeds = lattice_seeds() if seeds is None else np.atleast_2d(seeds)
    if tau_max is None:
        tau_max = turnover_tau(lf)
    reps = []
    for s in seeds:
        try:
            line = trace_vortex_line(lf, s, tau_max, tol, h_max, record_stride=1)
            reps.append(winding_classification(line))
        except StagnantSeed:
            reps.append(WindingReport("undetermined", None, None, note="stagnant seed"))
    und = sum(r.contractible is None for r in reps) / max(len(reps), 1)
    dirs = {}
    for r in reps:
        key = r.winding if r.kind == "closed" else r.direction
        dirs[key] = dirs.get(key, 0) + 1
    if und > 0.2:
        verdict = f"undetermined fraction {und:.2f}"
    else:
        hit = next((i for i, r in enumerate(reps) if r.contractible), None)
        verdict = (f"contractible structure found at seed {hit}" if hit is not None
                   else "all sampled lines non-contractible")
    return StructureSummary(reps, seeds, verdict, und, dirs)
