"""
Energy hierarchy, the Q recursion and fitted decay envelopes for
perturbations ``v = u - w`` of an exact Beltrami solution ``w``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .spectral import (
    FourierField,
    hm,
    l2_norm,
    sup_norm,
)


@dataclass
class EnergyHistory:
    times: np.ndarray
    h: np.ndarray  # shape (len(times), r + 1)

    @property
    def r(self) -> int:
        return self.h.shape[1] - 1

    def hm_norm(self, m: int) -> np.ndarray:
        return np.sqrt(self.h[:, m])


def energy_history(times, fields, r: int) -> EnergyHistory:
    """``h_m(t) = sum_{j<=m} int |grad^j v|^2`` by Parseval, for ``m <= r``."""
    h = np.array([[hm(v, m) ** 2 for m in range(r + 1)] for v in fields])
    return EnergyHistory(np.asarray(times, float), h.reshape(len(fields), r + 1))


def poincare_ok(v: FourierField) -> bool:
    """``||grad v|| >= ||v||`` on a zero-mean field."""
    return bool(hm(v, 1) ** 2 - l2_norm(v) ** 2 >= l2_norm(v) ** 2 * (1 - 1e-12))


@dataclass
class QRecursion:
    times: np.ndarray
    Q: np.ndarray  # shape (r + 1, len(times))

    @property
    def r(self) -> int:
        return self.Q.shape[0] - 1


def q_recursion(sup_histories, r: int, times) -> QRecursion:
    """
    ``Q_0 = 1``; ``Q_r(t) = 1 + sum_{m<r} Q_m(t) int_0^t ||grad^{r-m} w||_inf^2``.

    ``sup_histories[j - 1]`` holds ``||grad^j w(t)||_inf`` on ``times`` for
    ``j = 1..r``.
    """
    t = np.asarray(times, float)
    S = np.asarray(sup_histories, float).reshape(-1, len(t))
    if S.shape[0] < r:
        raise ValueError(f"need {r} derivative histories, got {S.shape[0]}")
    I = [cumulative_trapezoid(S[j] ** 2, t, initial=0.0) for j in range(S.shape[0])]
    Q = np.ones((r + 1, len(t)))
    for k in range(1, r + 1):
        Q[k] = 1.0 + sum(Q[m] * I[k - m - 1] for m in range(k))
    return QRecursion(t, Q)


def beltrami_sup_histories(M: float, N: int, nu: float, times, r: int, amplitude: float = (2 * math.pi) ** -1.5):
    """``||grad^j (M e^{-nu N^2 t} B_N)||_inf = amplitude M N^j e^{-nu N^2 t}``."""
    t = np.asarray(times, float)
    return np.array([amplitude * M * N ** j * np.exp(-nu * N * N * t) for j in range(1, r + 1)])


def measured_sup_histories(ws, r: int, oversample: int = 2):
    """Sampled ``||grad^j w||_inf`` for a sequence of snapshot fields."""
    return np.array([[sup_norm(w, j, oversample) for w in ws] for j in range(1, r + 1)])


@dataclass
class EnvelopeReport:
    m: int
    C_star: float
    ok: bool
    tight_time: float
    sup_scaled: float

    def holds_for(self, C: float) -> bool:
        return self.ok and C >= self.C_star


def _envelope(C, Qm, K, v0m, nu, sigma, t):
    with np.errstate(over="ignore"):
        return C * np.sqrt(Qm) * math.exp(min(C * K, 700.0)) * v0m * np.exp(-nu * sigma * t)


def verify_decay_envelope(hist: EnergyHistory, Q: QRecursion, nu: float, sigma: float = 0.9,
                          w_l2linf_sq: float = 0.0, m: int | None = None, C_cap: float = 1e6,
                          rtol: float = 1e-10, floor: float = 1e-14) -> list:
    """
    For each ``m``, the smallest ``C`` with
    ``||v(t)||_{H^m} <= C Q_m^{1/2} e^{C K} ||v0||_{H^m} e^{-nu sigma t}``
    at every sample, ``K = ||w||^2_{L2 Linf}``, found by bisection (the
    envelope is increasing in C).  Norms at or below ``floor`` count as zero,
    so an unperturbed run (``v`` at roundoff level) reports ``C* = 0``.
    """
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    if not np.allclose(hist.times, Q.times):
        raise ValueError("energy history and Q recursion must share a time grid")
    ms = range(min(hist.r, Q.r) + 1) if m is None else [m]
    out = []
    t = hist.times
    for mm in ms:
        vm = np.where(hist.hm_norm(mm) <= floor, 0.0, hist.hm_norm(mm))
        v0m = vm[0]
        scaled = vm * np.exp(nu * sigma * t)
        if vm.max() == 0:
            out.append(EnvelopeReport(mm, 0.0, True, 0.0, 0.0))
            continue
        if v0m == 0:
            out.append(EnvelopeReport(mm, math.inf, False, float(t[np.argmax(vm)]), float(scaled.max())))
            continue

        def holds(C):
            return bool(np.all(vm <= _envelope(C, Q.Q[mm], w_l2linf_sq, v0m, nu, sigma, t)))

        if not holds(C_cap):
            out.append(EnvelopeReport(mm, math.inf, False, float(t[np.argmax(scaled)]), float(scaled.max())))
            continue
        lo, hi = 0.0, 1.0
        while not holds(hi):
            lo, hi = hi, hi * 2
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if holds(mid):
                hi = mid
            else:
                lo = mid
        ratio = vm / _envelope(hi, Q.Q[mm], w_l2linf_sq, v0m, nu, sigma, t)
        out.append(EnvelopeReport(mm, hi, True, float(t[np.argmax(ratio)]), float(scaled.max())))
    return out


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass
class LinBilReport:
    deltas: np.ndarray
    lin: np.ndarray
    bil: np.ndarray
    lin_slope: float
    bil_slope: float
    C_lin: float
    C_bil: float
    ok: bool


def verify_lin_bil_bounds(deltas, lin_norms, bil_norms, N0: int, N1: int, r: int,
                          slope_tol: float = 0.2) -> LinBilReport:
    """
    Check ``||Lin|| ~ delta`` and ``||Bil|| ~ delta^2`` by log-log fits and
    report the constants in ``C delta N0^-2`` and ``C delta^2 N0^(r+1) N1^(r+2)``.
    """
    d = np.asarray(deltas, float)
    lin = np.asarray(lin_norms, float)
    bil = np.asarray(bil_norms, float)
    if np.all(lin == 0) and np.all(bil == 0):
        return LinBilReport(d, lin, bil, math.nan, math.nan, 0.0, 0.0, True)
    ls, bs = loglog_slope(d, lin), loglog_slope(d, bil)
    C_lin = float(np.max(lin / (d * N0 ** -2.0)))
    C_bil = float(np.max(bil / (d ** 2 * N0 ** (r + 1.0) * N1 ** (r + 2.0))))
    ok = abs(ls - 1) <= slope_tol and abs(bs - 2) <= slope_tol
    return LinBilReport(d, lin, bil, ls, bs, C_lin, C_bil, ok)


def report_rows(hist: EnergyHistory, Q: QRecursion, envelopes: list, nu: float, sigma: float,
                w_l2linf_sq: float):
    """Rows ``(t, m, h_m, Q_m, envelope, C*)`` for CSV export."""
    rows = []
    for env in envelopes:
        m = env.m
        v0m = hist.hm_norm(m)[0]
        C = env.C_star if math.isfinite(env.C_star) else math.nan
        e = _envelope(C, Q.Q[m], w_l2linf_sq, v0m, nu, sigma, hist.times) if math.isfinite(C) else \
            np.full(len(hist.times), math.nan)
        for i, t in enumerate(hist.times):
            rows.append((t, m, hist.h[i, m], Q.Q[m, i], e[i], C))
    return rows
