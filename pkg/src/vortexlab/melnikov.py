"""
Resonant-torus breakdown for a sheared unit-frequency Beltrami vorticity.

The initial vorticity is the pullback of ``M (sin x3, cos x3, 0)`` under
``Phi(x) = (x1, x2, x3 + eps h(x1, x2))``.  To first order in time its
vortex lines feel the vorticity-equation bracket; the Melnikov function
integrates the third pushed-forward component of that bracket along the
unperturbed periodic orbits on the torus ``cot X3 = p/q``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .spectral import (
    FourierField,
    Grid,
    curl,
    grad,
    hm,
    inverse_laplacian,
    l2_norm,
    vorticity_bracket,
)

TRUNCATION_TOL = 1e-8
CURL_TOL = 1e-10
QUADRATURE_TOL = 1e-3
WINDOW = (1.0 / math.tan(3 * math.pi / 8), 1.0)


# ---------------------------------------------------------------------------
# inputs


@dataclass(frozen=True)
class ProfileH:
    """``h(x1, x2) = sum_j c_j cos(a_j x1 + b_j x2 + phase_j)``."""

    modes: tuple = ((1, -2, 1.0, 0.0),)

    @classmethod
    def resonant_cosine(cls, p: int, q: int) -> "ProfileH":
        return cls(((p, -q, 1.0, 0.0),))

    @classmethod
    def zero(cls) -> "ProfileH":
        return cls(())

    def derivatives(self, x1, x2, order: int = 1):
        """Values ``h, h1, h2`` (and ``h11, h12, h22`` when ``order == 2``)."""
        x1 = np.asarray(x1, float)
        x2 = np.asarray(x2, float)
        h = np.zeros(np.broadcast(x1, x2).shape)
        d = [np.zeros_like(h) for _ in range(5)]
        for a, b, c, ph in self.modes:
            th = a * x1 + b * x2 + ph
            cs, sn = c * np.cos(th), c * np.sin(th)
            h += cs
            d[0] -= a * sn
            d[1] -= b * sn
            d[2] -= a * a * cs
            d[3] -= a * b * cs
            d[4] -= b * b * cs
        if order == 1:
            return h, d[0], d[1]
        return (h, *d)

    def __call__(self, x1, x2):
        return self.derivatives(x1, x2)[0]


@dataclass(frozen=True)
class ResonanceTarget:
    p: int
    q: int

    def __post_init__(self):
        if self.p < 1 or self.q < 1 or math.gcd(self.p, self.q) != 1:
            raise ValueError(f"(p, q) = ({self.p}, {self.q}) must be coprime positive integers")
        r = self.p / self.q
        if not WINDOW[0] < r < WINDOW[1]:
            raise ValueError(f"p/q = {r:.4f} outside the admissible window ({WINDOW[0]:.4f}, 1)")

    @property
    def X3(self) -> float:
        return math.atan2(self.q, self.p)

    @property
    def rotation(self) -> float:
        return self.p / self.q

    @property
    def xi_period(self) -> float:
        return 2 * math.pi / self.p


PRESETS = {"1:2": ResonanceTarget(1, 2), "2:3": ResonanceTarget(2, 3)}


# ---------------------------------------------------------------------------
# fields


def _composed(h: ProfileH, eps: float, grid: Grid, oversample: int):
    X1, X2, X3 = grid.coordinates(grid.n * oversample)
    hv, h1, h2 = h.derivatives(X1[..., 0], X2[..., 0])
    hv, h1, h2 = hv[..., None], h1[..., None], h2[..., None]
    return X3 + eps * hv, h1, h2


def _to_grid(grid: Grid, values, what: str, zero_mean: bool = False) -> FourierField:
    values = np.asarray(values)
    if values.ndim == 3:
        values = values[None]
    m = values.shape[-1]
    big = FourierField.from_physical(Grid(m), values)
    small = FourierField.from_physical(grid, values)
    total = np.abs(big.coeffs).max()
    lost = np.abs(big.coeffs * ~_band_mask(Grid(m), grid.kmax)).max()
    if total > 0 and lost / total > TRUNCATION_TOL:
        raise ValueError(f"{what}: truncation error {lost / total:.1e} exceeds {TRUNCATION_TOL:g}; "
                         f"use a grid of at least {2 * grid.n}^3")
    if zero_mean:
        # the exact mean vanishes; drop sampling roundoff
        c = small.coeffs.copy()
        c[:, 0, 0, 0] = 0.0
        small = small.with_coeffs(c)
    return small


def _band_mask(grid: Grid, kmax: int) -> np.ndarray:
    k1, k2, k3 = grid.wavenumbers()
    return (np.abs(k1)[:, None, None] <= kmax) & (np.abs(k2)[None, :, None] <= kmax) & (k3[None, None, :] <= kmax)


def build_omega0(M: float, eps: float, h: ProfileH, grid: Grid, oversample: int = 2) -> FourierField:
    """``M (sin a, cos a, -eps(h1 sin a + h2 cos a))`` with ``a = x3 + eps h``."""
    a, h1, h2 = _composed(h, eps, grid, oversample)
    sa, ca = np.sin(a), np.cos(a)
    vals = M * np.stack([sa, ca, -eps * (h1 * sa + h2 * ca)])
    return _to_grid(grid, vals, "omega0", zero_mean=True)


def solve_phi(h: ProfileH, eps: float, grid: Grid, oversample: int = 2) -> FourierField:
    """Zero-mean solution of ``Lap phi = h2 sin(x3 + eps h) - h1 cos(x3 + eps h)``."""
    a, h1, h2 = _composed(h, eps, grid, oversample)
    rhs = _to_grid(grid, h2 * np.sin(a) - h1 * np.cos(a), "phi source")
    mean = abs(rhs.coeffs[0, 0, 0, 0])
    if mean > 1e-12:
        raise RuntimeError(f"Poisson source has mean {mean:.2e}; synthesis defect")
    return inverse_laplacian(rhs)


def build_u0(M: float, eps: float, h: ProfileH, grid: Grid, oversample: int = 2,
             omega0: FourierField | None = None) -> FourierField:
    a, _, _ = _composed(h, eps, grid, oversample)
    base = _to_grid(grid, M * np.stack([np.sin(a), np.cos(a), np.zeros_like(a)]), "u0", zero_mean=True)
    u0 = base + eps * M * grad(solve_phi(h, eps, grid, oversample))
    w0 = build_omega0(M, eps, h, grid, oversample) if omega0 is None else omega0
    res = np.abs((curl(u0) - w0).coeffs).max() / max(abs(M), 1e-300)
    if res > CURL_TOL:
        raise ValueError(f"curl u0 differs from omega0 by {res:.1e}")
    return u0


def unperturbed_field(M: float, grid: Grid) -> FourierField:
    X1, X2, X3 = grid.coordinates()
    return FourierField.from_physical(grid, M * np.stack([np.sin(X3), np.cos(X3), np.zeros_like(X3)]))


def early_vorticity(u0: FourierField, omega0: FourierField, nu: float, t: float) -> FourierField:
    """First-order Taylor vorticity ``omega0 + t (nu Lap omega0 + (w.grad)u - (u.grad)w)``."""
    if t == 0:
        return omega0
    lin, nl = vorticity_bracket(u0, omega0, nu)
    return omega0 + t * (lin + nl)


def phi_map(h: ProfileH, eps: float, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, float))
    out = x.copy()
    out[:, 2] += eps * h(x[:, 0], x[:, 1])
    return out


def phi_jacobian_det(h: ProfileH, eps: float, x) -> np.ndarray:
    """Determinant of ``DPhi = I + eps e3 (h1, h2, 0)^T`` at each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, float))
    _, h1, h2 = h.derivatives(x[:, 0], x[:, 1])
    J = np.broadcast_to(np.eye(3), (len(x), 3, 3)).copy()
    J[:, 2, 0] = eps * h1
    J[:, 2, 1] = eps * h2
    return np.linalg.det(J)


@dataclass
class TorusSetup:
    """Everything derived from ``(target, M, nu, eps, h, grid)``."""

    target: ResonanceTarget
    M: float
    nu: float
    eps: float
    h: ProfileH
    grid: Grid
    omega0: FourierField
    u0: FourierField
    linear: FourierField
    nonlinear: FourierField

    @property
    def bracket(self) -> FourierField:
        return self.linear + self.nonlinear

    def bracket_ratio(self) -> float:
        return l2_norm(self.bracket) / l2_norm(self.omega0)

    def u0_deviation(self, kmax: int = 4) -> dict:
        """``||u0 - W||_{H^k} / (M eps)`` for ``k <= kmax``."""
        d = self.u0 - unperturbed_field(self.M, self.grid)
        return {k: hm(d, k) / (abs(self.M) * self.eps) for k in range(kmax + 1)}


def prepare(target: ResonanceTarget, M: float = 1.0, nu: float = 0.05, eps: float = 1e-3,
            h: ProfileH | None = None, grid: Grid | None = None) -> TorusSetup:
    h = ProfileH.resonant_cosine(target.p, target.q) if h is None else h
    grid = Grid(32) if grid is None else grid
    w0 = build_omega0(M, eps, h, grid)
    u0 = build_u0(M, eps, h, grid, omega0=w0)
    lin, nl = vorticity_bracket(u0, w0, nu)
    return TorusSetup(target, M, nu, eps, h, grid, w0, u0, lin, nl)


# ---------------------------------------------------------------------------
# Melnikov function


def closed_form(target: ResonanceTarget, nu: float, eps: float, xi) -> np.ndarray:
    p, q = target.p, target.q
    return -(2 * math.pi * nu * eps ** 2 * p * (p * p + q * q) ** 2 / q) * np.sin(2 * p * np.asarray(xi))


@dataclass
class MelnikovProfile:
    target: ResonanceTarget
    xi: np.ndarray
    numeric: np.ndarray
    closed: np.ndarray
    part: str = "full"
    nodes: int = 0
    quadrature_error: float = 0.0
    converged: bool = True
    evaluator: Callable | None = field(default=None, repr=False)

    def max_relative_deviation(self) -> float:
        return float(np.abs(self.numeric - self.closed).max() / np.abs(self.closed).max())

    def amplitude(self) -> float:
        return float(np.abs(self.numeric).max())

    def rows(self):
        for x, m, c in zip(self.xi, self.numeric, self.closed):
            yield (x, m, c, abs(m - c))


def _orbit_points(target: ResonanceTarget, h: ProfileH, eps: float, xi: float, s: np.ndarray, X20: float):
    X1 = s + xi
    X2 = X20 + target.rotation * s
    hv, h1, h2 = h.derivatives(X1, X2)
    pts = np.stack([X1, X2, target.X3 - eps * hv], axis=1)
    return pts, h1, h2


def _make_integrand(setup: TorusSetup, part: str, method: str, X20: float):
    tg, h, eps, M = setup.target, setup.h, setup.eps, setup.M
    scale = tg.rotation / (M * math.sin(tg.X3))
    if method == "leading":
        if part != "full":
            raise ValueError("the leading-order path has no linear/nonlinear split")
        p, q = tg.p, tg.q

        def integrand(xi, s):
            X1 = s + xi
            X2 = X20 + tg.rotation * s
            _, h1, h2, h11, h12, h22 = h.derivatives(X1, X2, order=2)
            # the psi term integrates to zero over a closed orbit
            return (2 * p * setup.nu * eps ** 2 / q) * (h2 * h22 + h1 * h12 - (p / q) * (h2 * h12 + h1 * h11))

        return integrand
    if method != "pushforward":
        raise ValueError(f"unknown Melnikov method {method!r}")
    src = {"full": setup.bracket, "linear": setup.linear, "nonlinear": setup.nonlinear}[part]
    K, C, c0 = src.sparse_modes(1e-15)

    def integrand(xi, s):
        pts, h1, h2 = _orbit_points(tg, h, eps, xi, s, X20)
        B = kernels.eval_modes(K, C, c0, pts)
        F3 = B[:, 2] + eps * h1 * B[:, 0] + eps * h2 * B[:, 1]
        return scale * F3

    return integrand


def _trapezoid(integrand, q: int, xi: float, ns: int) -> float:
    s = 2 * math.pi * q * np.arange(ns) / ns
    return float(integrand(xi, s).sum() * 2 * math.pi * q / ns)


def melnikov_numeric(setup: TorusSetup, xi: Sequence[float] | int = 128, part: str = "full",
                     method: str = "pushforward", X20: float = 0.0, nodes: int | None = None,
                     max_refine: int = 3) -> MelnikovProfile:
    """
    Periodic trapezoid quadrature over one orbit period ``2 pi q``.

    ``nodes`` doubles until two successive levels agree to ``QUADRATURE_TOL``
    relative to the profile amplitude; ``converged`` records the outcome.
    """
    tg = setup.target
    if np.isscalar(xi):
        xi = tg.xi_period * np.arange(int(xi)) / int(xi)
    xi = np.asarray(xi, float)
    integrand = _make_integrand(setup, part, method, X20)
    ns = 64 * tg.q if nodes is None else int(nodes)

    def profile(n):
        return np.array([_trapezoid(integrand, tg.q, x, n) for x in xi])

    vals = profile(ns)
    err = np.inf
    for _ in range(max_refine):
        finer = profile(2 * ns)
        scale = max(np.abs(finer).max(), 1e-300)
        err = float(np.abs(finer - vals).max() / scale)
        vals, ns = finer, 2 * ns
        if err <= QUADRATURE_TOL:
            break
    final_ns = ns

    def evaluator(x):
        return _trapezoid(integrand, tg.q, float(x), final_ns)

    return MelnikovProfile(tg, xi, vals, closed_form(tg, setup.nu, setup.eps, xi), part, ns,
                           err, err <= QUADRATURE_TOL, evaluator)


@dataclass(frozen=True)
class MelnikovZero:
    xi: float
    slope: float
    degenerate: bool


def find_zeros(profile: MelnikovProfile, tol: float = 1e-8) -> list:
    """
    Zeros in ``[0, 2 pi / p)`` by sign-change bracketing on the periodic
    samples followed by bisection on the quadrature itself.
    """
    xi, vals = profile.xi, profile.numeric
    period = profile.target.xi_period
    if len(xi) < 64 * profile.target.p:
        raise ValueError("profile needs at least 64 p samples per period")
    amp = np.abs(vals).max()
    if amp == 0 or not np.isfinite(amp):
        raise ValueError("Melnikov profile vanishes identically: no isolated zeros (degenerate)")
    f = profile.evaluator
    if f is None:
        coef = np.fft.rfft(vals)
        n = len(vals)

        def f(x):
            k = np.arange(len(coef))
            w = np.where((k == 0) | ((n % 2 == 0) & (k == n // 2)), 1.0, 2.0)
            return float(np.real(np.sum(w * coef * np.exp(2j * math.pi * k * x / period))) / n)

    xs = np.append(xi, xi[0] + period)
    ys = np.append(vals, vals[0])
    dmax = np.abs(np.diff(ys) / np.diff(xs)).max()
    found = []
    for i in range(len(xi)):
        a, b, fa, fb = xs[i], xs[i + 1], ys[i], ys[i + 1]
        if fa * fb > 0 or (fa == 0 and i > 0 and ys[i - 1] == 0):
            continue
        if fa == 0:
            root = a
        elif fb == 0:
            continue
        else:
            while b - a > tol:
                c = 0.5 * (a + b)
                fc = f(c)
                if fc == 0:
                    a = b = c
                    break
                if (fc > 0) == (fa > 0):
                    a, fa = c, fc
                else:
                    b = c
            root = 0.5 * (a + b)
        root %= period
        if any(min(abs(root - z), period - abs(root - z)) < 1e-6 for z in found):
            continue
        found.append(root)
    zeros = []
    for r in sorted(found):
        d = 1e-5
        slope = (f(r + d) - f(r - d)) / (2 * d)
        zeros.append(MelnikovZero(r, slope, abs(slope) < 1e-3 * dmax))
    return zeros


# ---------------------------------------------------------------------------
# return map and breakdown


@dataclass
class FixedPoint:
    theta: float
    X3: float
    xi: float
    kind: str
    trace: float
    det: float
    eigenvalues: tuple
    residual: float


@dataclass
class SurvivorReport:
    status: str
    t_probe: float
    fixed_points: list
    scan: np.ndarray | None = None

    def counts(self) -> dict:
        out = {"elliptic": 0, "hyperbolic": 0, "parabolic": 0}
        for fp in self.fixed_points:
            out[fp.kind] += 1
        return out

    def records(self) -> list:
        return [dict(position=fp.xi, theta=fp.theta, X3=fp.X3, type=fp.kind,
                     eig_re=[float(np.real(e)) for e in fp.eigenvalues],
                     eig_im=[float(np.imag(e)) for e in fp.eigenvalues], trace=fp.trace)
                for fp in self.fixed_points]


class ReturnMap:
    """q-th return to the section ``X1 = 0`` in coordinates ``(X2, X3)``."""

    def __init__(self, vorticity: FourierField, target: ResonanceTarget, h: ProfileH, eps: float,
                 tol: float = 1e-13, h_max: float = 0.2):
        self.K, self.C, self.c0 = vorticity.sparse_modes(1e-15)
        self.G = np.zeros((3, 1, 1, 1))
        self.target, self.h, self.eps = target, h, eps
        self.tol, self.h_max = tol, h_max

    def __call__(self, z) -> np.ndarray:
        th, X3 = float(z[0]), float(z[1])
        tg = self.target
        x0 = np.array([0.0, th, X3 - self.eps * self.h(0.0, th)])
        out = kernels.trace(x0, 1e4, self.tol, self.h_max, self.K, self.C, self.c0, self.G, False, 1.0,
                            10 ** 6, 1e-6, False, 0, 0.0, tg.q, 10 ** 6)
        if out[3] != kernels.CROSSINGS_DONE:
            return np.array([np.nan, np.nan])
        y = out[7][-1]
        X3n = y[2] + self.eps * self.h(y[0], y[1])
        return np.array([y[1] - th - 2 * math.pi * tg.p, X3n - X3])

    def jacobian(self, z, step: float = 1e-6) -> np.ndarray:
        """Central differences with one Richardson level."""

        def cd(hs):
            J = np.zeros((2, 2))
            for j in range(2):
                e = np.zeros(2)
                e[j] = hs
                J[:, j] = (self(z + e) - self(z - e)) / (2 * hs)
            return J

        return (4 * cd(step / 2) - cd(step)) / 3


def theta_to_xi(theta: float, target: ResonanceTarget) -> float:
    """Section angle X2 to the Melnikov phase of the orbit through it."""
    return (-target.q * theta / target.p) % target.xi_period


def select_t_probe(setup: TorusSetup, level: float = 3e-3) -> float:
    """Probe time with ``t ||bracket|| / ||omega0|| = level`` (inside [1e-3, 1e-2])."""
    return level / setup.bracket_ratio()


def _classify(tr: float) -> str:
    if abs(abs(tr) - 2) < 1e-9:
        return "parabolic"
    return "elliptic" if abs(tr) < 2 else "hyperbolic"


def breakdown_diagnostic(setup: TorusSetup, t_probe: float | None = None,
                         vorticity: FourierField | None = None, n_scan: int = 32,
                         newton_tol: float = 1e-12, max_iter: int = 20) -> SurvivorReport:
    """
    Fixed points of the q-th return map near the resonant circle.

    The vortex-line field is the first-order vorticity at ``t_probe`` unless
    ``vorticity`` (for example a DNS snapshot) is supplied.
    """
    tg = setup.target
    t = select_t_probe(setup) if t_probe is None else float(t_probe)
    w = vorticity if vorticity is not None else early_vorticity(setup.u0, setup.omega0, setup.nu, t)
    rm = ReturnMap(w, tg, setup.h, setup.eps)
    window = 2 * math.pi / tg.q
    thetas = window * np.arange(n_scan) / n_scan
    scan = np.array([rm([th, tg.X3]) for th in thetas])
    if not np.all(np.isfinite(scan)):
        return SurvivorReport("unresolved", t, [], scan)
    if np.abs(scan[:, 1]).max() < 1e-11 and np.abs(scan[:, 0]).max() < 1e-9:
        return SurvivorReport("resonant, unbroken", t, [], scan)

    seeds = []
    d3 = np.append(scan[:, 1], scan[0, 1])
    for i in range(n_scan):
        if d3[i] == 0 or d3[i] * d3[i + 1] < 0:
            f = d3[i] / (d3[i] - d3[i + 1]) if d3[i] != d3[i + 1] else 0.0
            seeds.append(thetas[i] + f * window / n_scan)

    found = []
    for th0 in seeds:
        z = np.array([th0, tg.X3])
        d = rm(z)
        ok = False
        for _ in range(max_iter):
            if not np.all(np.isfinite(d)):
                break
            if np.abs(d).max() < newton_tol:
                ok = True
                break
            z = z - np.linalg.solve(rm.jacobian(z), d)
            d = rm(z)
        if not ok:
            continue
        th = z[0] % window
        if any(min(abs(th - f.theta), window - abs(th - f.theta)) < 1e-6 for f in found):
            continue
        J = rm.jacobian(np.array([th, z[1]])) + np.eye(2)
        tr, det = float(np.trace(J)), float(np.linalg.det(J))
        ev = tuple(complex(e) for e in np.linalg.eigvals(J))
        found.append(FixedPoint(th, float(z[1]), theta_to_xi(th, tg), _classify(tr), tr, det, ev,
                                float(np.abs(d).max())))
    if not found:
        return SurvivorReport("unresolved", t, [], scan)
    found.sort(key=lambda f: f.theta)
    return SurvivorReport("broken", t, found, scan)


def angular_distance(a: float, b: float, period: float) -> float:
    d = abs(a - b) % period
    return min(d, period - d)


# ---------------------------------------------------------------------------
# exactness and twist


@dataclass
class AuditReport:
    max_flux: float
    rotation_X3: np.ndarray
    rotation: np.ndarray
    monotone: bool

    @property
    def exact(self) -> bool:
        return self.max_flux <= 1e-8


def coordinate_fluxes(w: FourierField, levels: int = 5) -> np.ndarray:
    """Flux of ``w`` through ``{x_i = c}`` for a few ``c`` per axis."""
    g = w.grid
    out = np.zeros((3, levels))
    cs = 2 * math.pi * np.arange(levels) / levels
    for i in range(3):
        # Fourier modes along the i-th axis only
        for k in range(-g.kmax, g.kmax + 1):
            kv = [0, 0, 0]
            kv[i] = k
            a = w.coeff(kv)[i]
            out[i] += (4 * math.pi ** 2) * np.real(a * np.exp(1j * k * cs))
    return out


def rotation_numbers(w: FourierField, X3_values, h: ProfileH, eps: float, crossings: int = 20) -> np.ndarray:
    """Average X2 advance per X1 advance of vortex lines seeded on ``X1 = 0``."""
    K, C, c0 = w.sparse_modes(1e-15)
    G = np.zeros((3, 1, 1, 1))
    out = []
    for X3 in X3_values:
        x0 = np.array([0.0, 0.0, X3 - eps * h(0.0, 0.0)])
        r = kernels.trace(x0, 1e5, 1e-11, 0.2, K, C, c0, G, False, 1.0, 10 ** 6, 1e-6, False,
                          0, 0.0, crossings, 10 ** 6)
        y = r[7][-1]
        out.append((y[1] - x0[1]) / (y[0] - x0[0]))
    return np.array(out)


def exactness_and_twist_audit(u: FourierField, target: ResonanceTarget | None = None,
                              h: ProfileH | None = None, eps: float = 0.0, n_levels: int = 8) -> AuditReport:
    w = curl(u)
    flux = float(np.abs(coordinate_fluxes(w)).max())
    h = ProfileH.zero() if h is None else h
    X3s = np.linspace(math.pi / 4, 3 * math.pi / 8, n_levels + 2)[1:-1]
    rot = rotation_numbers(w, X3s, h, eps)
    return AuditReport(flux, X3s, rot, bool(np.all(np.diff(rot) < 0)))
