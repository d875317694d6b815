"""
Pseudo-spectral Navier-Stokes on the 2pi-periodic torus.

Time stepping is Lawson's integrating-factor RK4: the dissipative multiplier
``exp(-nu |k|^(2 alpha) dt)`` is applied exactly and the projected
nonlinearity ``P(u x curl u)`` is integrated explicitly with 2/3 dealiasing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .spectral import (
    FourierField,
    Grid,
    advect,
    heat_multiplier,
    heat_propagate,
    hm,
    l2_norm,
    leray_project,
)

CFL = 0.5
DIV_TOL = 1e-10
WORKERS = -1


class CFLError(ValueError):
    def __init__(self, dt, bound):
        super().__init__(f"dt = {dt:g} exceeds the CFL bound {bound:g}; use dt <= {bound:g}")
        self.dt, self.bound = dt, bound


class NumericalFailure(RuntimeError):
    """Non-finite values or a broken invariant during integration."""


@dataclass(frozen=True)
class SolverState:
    u: FourierField
    t: float
    nu: float
    alpha: float = 1.0

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if self.alpha <= 0:
            raise ValueError("dissipation exponent must be positive")


@dataclass(frozen=True)
class StepDiagnostic:
    t: float
    l2: float
    h1: float
    div: float
    dt: float


def _nonlinear(c: np.ndarray, grid: Grid, ik: tuple, mask: np.ndarray, want_speed: bool = False):
    """Dealiased Leray projection of u x curl u, in coefficient space."""
    n = grid.n
    k1, k2, k3 = ik
    s = n ** 3
    both = np.empty((6,) + c.shape[1:], complex)
    both[:3] = c * s
    both[3] = (k2 * c[2] - k3 * c[1]) * s
    both[4] = (k3 * c[0] - k1 * c[2]) * s
    both[5] = (k1 * c[1] - k2 * c[0]) * s
    P = sfft.irfftn(both, s=(n, n, n), axes=(1, 2, 3), workers=WORKERS)
    U, W = P[:3], P[3:]
    prod = np.stack([U[1] * W[2] - U[2] * W[1], U[2] * W[0] - U[0] * W[2], U[0] * W[1] - U[1] * W[0]])
    N = sfft.rfftn(prod, axes=(1, 2, 3), workers=WORKERS) / s
    N *= mask
    out = _project(N, ik)
    if want_speed:
        return out, float(np.sqrt((U ** 2).sum(axis=0)).max())
    return out


def _project(c: np.ndarray, ik: tuple) -> np.ndarray:
    k1, k2, k3 = ik
    k2sum = -(k1 * k1 + k2 * k2 + k3 * k3).real
    k2sum[0, 0, 0] = 1.0
    kdotc = (k1 * c[0] + k2 * c[1] + k3 * c[2]) / k2sum
    # ik (ik.c) / |k|^2 = -k (k.c)/|k|^2 in terms of real k
    return c + np.stack([k1 * kdotc, k2 * kdotc, k3 * kdotc])


class Integrator:
    """Holds the grid-dependent operators for repeated steps."""

    def __init__(self, grid: Grid, nu: float, alpha: float = 1.0):
        self.grid, self.nu, self.alpha = grid, nu, alpha
        k1, k2, k3 = grid.wavenumbers()
        self.ik = (1j * k1[:, None, None], 1j * k2[None, :, None], 1j * k3[None, None, :])
        self.mask = grid.dealias_mask() & grid.nyquist_mask()
        self._cache = {}

    def factor(self, dt: float) -> np.ndarray:
        key = round(dt, 15)
        if key not in self._cache:
            self._cache[key] = heat_multiplier(self.grid, self.nu * dt, self.alpha)
        return self._cache[key]

    def nonlinear(self, c: np.ndarray) -> np.ndarray:
        return _nonlinear(c, self.grid, self.ik, self.mask)

    def cfl_bound_from_speed(self, vmax: float) -> float:
        return math.inf if vmax == 0 else CFL * (2 * math.pi / self.grid.n) / vmax

    def cfl_bound(self, c: np.ndarray) -> float:
        return self.cfl_bound_from_speed(_nonlinear(c, self.grid, self.ik, self.mask, True)[1])

    def advance(self, c: np.ndarray, dt: float) -> np.ndarray:
        """One Lawson RK4 step; raises CFLError before doing any work past stage 1."""
        E2, E = self.factor(dt / 2), self.factor(dt)
        k1, vmax = _nonlinear(c, self.grid, self.ik, self.mask, True)
        bound = self.cfl_bound_from_speed(vmax)
        if dt > bound:
            raise CFLError(dt, bound)
        k2 = self.nonlinear(E2 * (c + 0.5 * dt * k1))
        k3 = self.nonlinear(E2 * c + 0.5 * dt * k2)
        k4 = self.nonlinear(E * c + dt * E2 * k3)
        out = E * c + (dt / 6) * (E * k1 + 2 * E2 * (k2 + k3) + k4)
        out[:, 0, 0, 0] = c[:, 0, 0, 0]
        return out


def _check(u: FourierField, t: float):
    if not np.all(np.isfinite(u.coeffs)):
        raise NumericalFailure(f"non-finite coefficients at t = {t:g}")
    div = u.divergence_residual()
    if div > DIV_TOL:
        raise NumericalFailure(f"divergence residual {div:.2e} at t = {t:g}")
    return div


def step(state: SolverState, dt: float, integrator: Integrator | None = None) -> SolverState:
    """One integrating-factor RK4 step."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    it = integrator or Integrator(state.u.grid, state.nu, state.alpha)
    u = state.u.with_coeffs(it.advance(state.u.coeffs, dt))
    _check(u, state.t + dt)
    return SolverState(u, state.t + dt, state.nu, state.alpha)


@dataclass
class RunResult:
    snapshots: list
    diagnostics: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def energies(self) -> np.ndarray:
        return np.array([d.l2 ** 2 for d in self.diagnostics])


def run(u0: FourierField, nu: float, sample_times, dt: float = 1e-3, alpha: float = 1.0,
        diagnostics: bool = True) -> RunResult:
    """
    Integrate to each sample time, shrinking ``dt`` on every interval so the
    samples are hit exactly.
    """
    times = np.asarray(sample_times, float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("sample times must be nonnegative and strictly increasing")
    if u0.divergence_residual() > DIV_TOL or not u0.is_zero_mean:
        raise ValueError("initial velocity must be divergence-free with zero mean")
    it = Integrator(u0.grid, nu, alpha)
    state = SolverState(u0, 0.0, nu, alpha)
    snaps, diag = [], []

    def record(s, h):
        if diagnostics:
            diag.append(StepDiagnostic(s.t, l2_norm(s.u), hm(s.u, 1), s.u.divergence_residual(), h))

    record(state, 0.0)
    for target in times:
        span = target - state.t
        if span > 0:
            nsteps = max(1, math.ceil(span / dt - 1e-9))
            h = span / nsteps
            for i in range(nsteps):
                state = step(state, h, it)
                record(state, h)
            state = SolverState(state.u, float(target), nu, alpha)
        snaps.append(state)
    return RunResult(snaps, diag)


def beltrami_solution(W: FourierField, N: float, nu: float, t: float, alpha: float = 1.0) -> FourierField:
    """Exact solution ``exp(-nu N^(2 alpha) t) W`` for an eigenfield of frequency N."""
    return W * math.exp(-nu * N ** (2 * alpha) * t)


# ---------------------------------------------------------------------------
# Duhamel decomposition


def sym_div(a: FourierField, b: FourierField) -> FourierField:
    """P div(a (x)_s b) with the symmetric product ``(a_i b_j + b_i a_j)/2``."""
    return leray_project(0.5 * (advect(a, b) + advect(b, a)))


def simpson_weights(nint: int, h: float) -> np.ndarray:
    """Composite Simpson weights; an odd interval count ends with a 3/8 panel."""
    if nint < 2:
        raise ValueError("Simpson quadrature needs at least two intervals")
    w = np.zeros(nint + 1)
    m = nint if nint % 2 == 0 else nint - 3
    for i in range(0, m, 2):
        w[i:i + 3] += np.array([1, 4, 1]) * h / 3
    if m != nint:
        w[m:m + 4] += np.array([1, 3, 3, 1]) * 3 * h / 8
    return w


@dataclass
class DuhamelEntry:
    t: float
    heat: FourierField
    lin: FourierField
    bil: FourierField
    v: FourierField
    residual: float
    quad_error: float
    flagged: bool


@dataclass
class DuhamelLedger:
    entries: list

    @property
    def times(self):
        return [e.t for e in self.entries]

    def at(self, t: float) -> DuhamelEntry:
        return min(self.entries, key=lambda e: abs(e.t - t))


def duhamel_decompose(result: RunResult, w_of_t, nu: float, alpha: float = 1.0,
                      report_times=None, nodes_per_unit: int = 33, tol_factor: float = 10.0) -> DuhamelLedger:
    """
    ``v(t) = e^{nu t Lap} v0 - 2 Lin(t) - Bil(t)`` with ``v = u - w`` evaluated by
    composite Simpson over the stored snapshots (uniformly spaced).

    The quadrature error estimate is ``|S_h - S_2h| / 15`` (H^1) when the
    interval count is even, else the Simpson / trapezoid gap (trapezoid /
    rectangle gap for the first interval, which is conservative).
    """
    snaps = result.snapshots
    ts = np.array([s.t for s in snaps])
    if len(ts) < 3:
        raise ValueError("need at least three snapshots")
    hs = np.diff(ts)
    if np.abs(hs - hs[0]).max() > 1e-9 * hs[0]:
        raise ValueError("Duhamel quadrature expects uniformly spaced snapshots")
    if 1.0 / hs[0] < nodes_per_unit - 1e-9:
        raise ValueError(f"snapshot density {1 / hs[0]:.1f} per unit time below {nodes_per_unit}")
    vs = [s.u - w_of_t(s.t) for s in snaps]
    lin_src = [sym_div(v, w_of_t(t)) for v, t in zip(vs, ts)]
    bil_src = [sym_div(v, v) for v in vs]
    want = ts[1:] if report_times is None else np.asarray(report_times, float)
    entries = []
    for t in want:
        j = int(np.argmin(np.abs(ts - t)))
        if abs(ts[j] - t) > 1e-9:
            raise ValueError(f"report time {t} is not a snapshot time")
        heat = heat_propagate(vs[0], nu * ts[j], alpha)
        if j == 0:
            z = vs[0] * 0.0
            entries.append(DuhamelEntry(t, heat, z, z, vs[0], 0.0, 0.0, False))
            continue

        def integrate(src, idx, h):
            wts = simpson_weights(len(idx) - 1, h) if len(idx) >= 3 else np.array([h / 2, h / 2])
            acc = src[idx[0]] * 0.0
            for wgt, i in zip(wts, idx):
                acc = acc + wgt * heat_propagate(src[i], nu * (ts[j] - ts[i]), alpha)
            return acc

        idx = list(range(j + 1))
        lin = integrate(lin_src, idx, hs[0])
        bil = integrate(bil_src, idx, hs[0])
        if j % 2 == 0 and j >= 4:
            coarse = idx[::2]
            lc = integrate(lin_src, coarse, 2 * hs[0])
            bc = integrate(bil_src, coarse, 2 * hs[0])
            qerr = hm(2 * (lin - lc) + (bil - bc), 1) / 15
        elif j == 1:
            # single interval: the trapezoid / left-rectangle gap bounds the error
            ll = hs[0] * heat_propagate(lin_src[0], nu * ts[1], alpha)
            bl = hs[0] * heat_propagate(bil_src[0], nu * ts[1], alpha)
            qerr = hm(2 * (lin - ll) + (bil - bl), 1)
        else:
            lt = _trap(lin_src, idx, hs[0], ts, j, nu, alpha)
            bt = _trap(bil_src, idx, hs[0], ts, j, nu, alpha)
            qerr = hm(2 * (lin - lt) + (bil - bt), 1)
        resid = hm(vs[j] - (heat - 2 * lin - bil), 1)
        # roundoff floor: v is a difference of O(1) fields
        floor = 1e-13 * max(hm(snaps[j].u, 1), 1e-300)
        entries.append(DuhamelEntry(float(ts[j]), heat, lin, bil, vs[j], resid, qerr,
                                    resid > tol_factor * max(qerr, floor)))
    return DuhamelLedger(entries)


def _trap(src, idx, h, ts, j, nu, alpha):
    acc = src[idx[0]] * 0.0
    for n, i in enumerate(idx):
        wgt = h / 2 if n in (0, len(idx) - 1) else h
        acc = acc + wgt * heat_propagate(src[i], nu * (ts[j] - ts[i]), alpha)
    return acc
