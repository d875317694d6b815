"""
Numeric inner loops.

Each kernel is plain Python over numpy arrays and is compiled by numba unless
``VORTEXLAB_NUMBA=0``.  ``eval_modes`` additionally has a vectorised numpy
path, which is what runs when numba is disabled.

Field representations passed to the tracer:

* sparse: ``K`` (m, 3) float wavevectors, ``C`` (m, 3) complex amplitudes and
  ``c0`` (3,) real mean, with ``u(x) = c0 + 2 Re sum_j C_j exp(i K_j.x)``;
* grid: ``G`` (3, g, g, g) samples on the uniform periodic grid, interpolated
  with 4-point periodic Lagrange stencils per axis (tricubic).
"""
import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

TWO_PI = 2.0 * math.pi

# tracer status codes
FINISHED = 0
CLOSED = 1
UNDERFLOW = 2
MAX_STEPS = 3
NONFINITE = 4
CROSSINGS_DONE = 5


@njit
def _eval_modes_loop(K, C, c0, pts):
    npts = pts.shape[0]
    nc = C.shape[1]
    out = np.empty((npts, nc))
    for p in range(npts):
        for c in range(nc):
            out[p, c] = c0[c]
        x0 = pts[p, 0]
        x1 = pts[p, 1]
        x2 = pts[p, 2]
        for j in range(K.shape[0]):
            ph = K[j, 0] * x0 + K[j, 1] * x1 + K[j, 2] * x2
            cs = math.cos(ph)
            sn = math.sin(ph)
            for c in range(nc):
                out[p, c] += 2.0 * (C[j, c].real * cs - C[j, c].imag * sn)
    return out


def _eval_modes_numpy(K, C, c0, pts):
    out = np.empty((pts.shape[0], C.shape[1]))
    out[:] = c0
    chunk = max(1, 4_000_000 // max(1, K.shape[0]))
    for s in range(0, pts.shape[0], chunk):
        ph = pts[s : s + chunk] @ K.T
        out[s : s + chunk] += 2.0 * (np.cos(ph) @ C.real - np.sin(ph) @ C.imag)
    return out


def eval_modes(K, C, c0, pts):
    """Evaluate a sparse real trigonometric polynomial at ``pts`` (npts, 3)."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.complex128)
    c0 = np.ascontiguousarray(c0, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if NUMBA_ENABLED:
        return _eval_modes_loop(K, C, c0, pts)
    return _eval_modes_numpy(K, C, c0, pts)


eval_modes_loop = _eval_modes_loop
eval_modes_numpy = _eval_modes_numpy


@njit
def _lagrange4(t, w):
    # weights for nodes -1, 0, 1, 2 at fractional offset t in [0, 1)
    w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0
    w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0
    w[3] = (t + 1.0) * t * (t - 1.0) / 6.0


@njit
def field_at(x, K, C, c0, G, use_grid, sign, out):
    """Field value at a single point, multiplied by ``sign``."""
    if use_grid:
        g = G.shape[1]
        hstep = TWO_PI / g
        wa = np.empty(4)
        wb = np.empty(4)
        wc = np.empty(4)
        sa = x[0] / hstep
        sb = x[1] / hstep
        sc = x[2] / hstep
        ia = int(math.floor(sa))
        ib = int(math.floor(sb))
        ic = int(math.floor(sc))
        _lagrange4(sa - ia, wa)
        _lagrange4(sb - ib, wb)
        _lagrange4(sc - ic, wc)
        for c in range(3):
            acc = 0.0
            for a in range(4):
                pa = (ia - 1 + a) % g
                for b in range(4):
                    pb = (ib - 1 + b) % g
                    wab = wa[a] * wb[b]
                    for d in range(4):
                        pc = (ic - 1 + d) % g
                        acc += wab * wc[d] * G[c, pa, pb, pc]
            out[c] = sign * acc
    else:
        v0 = c0[0]
        v1 = c0[1]
        v2 = c0[2]
        # per-axis phase tables: one complex product per mode instead of sin/cos
        km = 0
        for j in range(K.shape[0]):
            for d in range(3):
                a = int(abs(K[j, d]))
                if a > km:
                    km = a
        tab = np.empty((3, km + 1), dtype=np.complex128)
        for d in range(3):
            e1 = complex(math.cos(x[d]), math.sin(x[d]))
            tab[d, 0] = 1.0
            for m in range(1, km + 1):
                tab[d, m] = tab[d, m - 1] * e1
        for j in range(K.shape[0]):
            ph = complex(1.0, 0.0)
            for d in range(3):
                kd = int(K[j, d])
                if kd >= 0:
                    ph *= tab[d, kd]
                else:
                    ph *= tab[d, -kd].conjugate()
            cs = ph.real
            sn = ph.imag
            v0 += 2.0 * (C[j, 0].real * cs - C[j, 0].imag * sn)
            v1 += 2.0 * (C[j, 1].real * cs - C[j, 1].imag * sn)
            v2 += 2.0 * (C[j, 2].real * cs - C[j, 2].imag * sn)
        out[0] = sign * v0
        out[1] = sign * v1
        out[2] = sign * v2


# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1 = 71.0 / 57600.0
_E3 = -71.0 / 16695.0
_E4 = 71.0 / 1920.0
_E5 = -17253.0 / 339200.0
_E6 = 22.0 / 525.0
_E7 = -1.0 / 40.0


@njit
def dopri_step(y, f0, h, K, C, c0, G, use_grid, sign, ynew, fnew, err):
    """One Dormand-Prince step; returns the 5th-order solution and error vector."""
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    k5 = np.empty(3)
    k6 = np.empty(3)
    tmp = np.empty(3)
    for i in range(3):
        tmp[i] = y[i] + h * _A21 * f0[i]
    field_at(tmp, K, C, c0, G, use_grid, sign, k2)
    for i in range(3):
        tmp[i] = y[i] + h * (_A31 * f0[i] + _A32 * k2[i])
    field_at(tmp, K, C, c0, G, use_grid, sign, k3)
    for i in range(3):
        tmp[i] = y[i] + h * (_A41 * f0[i] + _A42 * k2[i] + _A43 * k3[i])
    field_at(tmp, K, C, c0, G, use_grid, sign, k4)
    for i in range(3):
        tmp[i] = y[i] + h * (_A51 * f0[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
    field_at(tmp, K, C, c0, G, use_grid, sign, k5)
    for i in range(3):
        tmp[i] = y[i] + h * (_A61 * f0[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
    field_at(tmp, K, C, c0, G, use_grid, sign, k6)
    for i in range(3):
        ynew[i] = y[i] + h * (_B1 * f0[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i])
    field_at(ynew, K, C, c0, G, use_grid, sign, fnew)
    for i in range(3):
        err[i] = h * (_E1 * f0[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * fnew[i])


@njit
def _advance_exact(y, f0, theta, K, C, c0, G, use_grid, sign, yout, fout):
    # theta never exceeds an accepted step, so the local error stays within tolerance
    err = np.empty(3)
    dopri_step(y, f0, theta, K, C, c0, G, use_grid, sign, yout, fout, err)


@njit
def _refine_root(y, f0, h, g0, K, C, c0, G, use_grid, sign, axis_vec, target, yout, fout):
    """
    Newton iteration for theta in [0, h] with (y(theta) . axis_vec) = target.
    ``g0`` is the residual at theta = 0.
    """
    gdot0 = 0.0
    for i in range(3):
        gdot0 += f0[i] * axis_vec[i]
    theta = 0.5 * h
    if gdot0 != 0.0:
        theta = -g0 / gdot0
    if theta < 0.0:
        theta = 0.0
    if theta > h:
        theta = h
    for _ in range(30):
        _advance_exact(y, f0, theta, K, C, c0, G, use_grid, sign, yout, fout)
        g = -target
        gd = 0.0
        for i in range(3):
            g += yout[i] * axis_vec[i]
            gd += fout[i] * axis_vec[i]
        if gd == 0.0:
            break
        d = g / gd
        theta -= d
        if theta < 0.0:
            theta = 0.0
        if theta > h:
            theta = h
        if abs(d) < 1e-15 * (1.0 + abs(theta)):
            break
    _advance_exact(y, f0, theta, K, C, c0, G, use_grid, sign, yout, fout)
    return theta


@njit
def trace(x0, tau_max, tol, h_max, K, C, c0, G, use_grid, sign, max_steps,
          closure_tol, detect_closure, section_axis, section_value, max_crossings,
          record_stride):
    """
    Adaptive integration of dx/dtau = sign * u(x) from ``x0`` on the lift.

    Returns ``(taus, X, nrec, status, close_tau, close_disp, close_resid,
    sec_pts, sec_taus, sec_dirs, nsec, nskip, nsteps)``.
    ``section_axis < 0`` disables section detection; ``max_crossings > 0``
    stops after that many crossings.
    """
    cap = max_steps // record_stride + 2
    taus = np.empty(cap)
    X = np.empty((cap, 3))
    nsec_cap = max(max_crossings, 1) if max_crossings > 0 else max_steps + 1
    if section_axis < 0:
        nsec_cap = 1
    sec_pts = np.empty((nsec_cap, 3))
    sec_taus = np.empty(nsec_cap)
    sec_dirs = np.empty(nsec_cap, dtype=np.int64)

    y = np.empty(3)
    f = np.empty(3)
    ynew = np.empty(3)
    fnew = np.empty(3)
    err = np.empty(3)
    yr = np.empty(3)
    fr = np.empty(3)
    axis_vec = np.zeros(3)
    for i in range(3):
        y[i] = x0[i]
    field_at(y, K, C, c0, G, use_grid, sign, f)

    speed0 = math.sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2])
    e = np.zeros(3)
    if speed0 > 0.0:
        for i in range(3):
            e[i] = f[i] / speed0

    taus[0] = 0.0
    for i in range(3):
        X[0, i] = y[i]
    nrec = 1
    tau = 0.0
    h = 0.1 * h_max
    status = FINISHED
    close_tau = -1.0
    close_disp = np.zeros(3)
    close_resid = -1.0
    nsec = 0
    nskip = 0
    left_seed = False
    nsteps = 0

    if section_axis >= 0:
        axis_vec[section_axis] = 1.0
        off = (y[section_axis] - section_value) / TWO_PI
        if abs(off - math.floor(off + 0.5)) * TWO_PI < 1e-12 and abs(f[section_axis]) < 1e-8 * max(speed0, 1e-300):
            nskip += 1

    h_min = 1e-14 * max(1.0, tau_max)
    while tau < tau_max:
        if nsteps >= max_steps:
            status = MAX_STEPS
            break
        if tau + h > tau_max:
            h = tau_max - tau
        dopri_step(y, f, h, K, C, c0, G, use_grid, sign, ynew, fnew, err)
        en = math.sqrt((err[0] ** 2 + err[1] ** 2 + err[2] ** 2) / 3.0) / tol
        if not (en == en) or not math.isfinite(ynew[0] + ynew[1] + ynew[2]):
            h *= 0.25
            if h < h_min:
                status = NONFINITE
                break
            continue
        if en > 1.0:
            h = h * max(0.2, 0.9 * en ** -0.2)
            if h < h_min:
                status = UNDERFLOW
                break
            continue
        nsteps += 1
        stop = False

        # closure: crossing of the plane through the seed normal to u(seed)
        if detect_closure:
            m0 = math.floor((ynew[0] - x0[0]) / TWO_PI + 0.5)
            m1 = math.floor((ynew[1] - x0[1]) / TWO_PI + 0.5)
            m2 = math.floor((ynew[2] - x0[2]) / TWO_PI + 0.5)
            r0 = ynew[0] - x0[0] - TWO_PI * m0
            r1 = ynew[1] - x0[1] - TWO_PI * m1
            r2 = ynew[2] - x0[2] - TWO_PI * m2
            dist = math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
            if not left_seed and dist > 1e-3:
                left_seed = True
            if left_seed and dist < 0.5:
                s_new = r0 * e[0] + r1 * e[1] + r2 * e[2]
                q0 = y[0] - x0[0] - TWO_PI * m0
                q1 = y[1] - x0[1] - TWO_PI * m1
                q2 = y[2] - x0[2] - TWO_PI * m2
                s_old = q0 * e[0] + q1 * e[1] + q2 * e[2]
                if s_old < 0.0 and s_new >= 0.0:
                    target = (x0[0] + TWO_PI * m0) * e[0] + (x0[1] + TWO_PI * m1) * e[1] + (x0[2] + TWO_PI * m2) * e[2]
                    th = _refine_root(y, f, h, s_old, K, C, c0, G, use_grid, sign, e, target, yr, fr)
                    p0 = yr[0] - x0[0] - TWO_PI * m0
                    p1 = yr[1] - x0[1] - TWO_PI * m1
                    p2 = yr[2] - x0[2] - TWO_PI * m2
                    resid = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
                    if resid < closure_tol:
                        status = CLOSED
                        close_tau = tau + th
                        close_disp[0] = TWO_PI * m0
                        close_disp[1] = TWO_PI * m1
                        close_disp[2] = TWO_PI * m2
                        close_resid = resid
                        stop = True

        if section_axis >= 0 and not stop:
            a = section_axis
            j_old = math.floor((y[a] - section_value) / TWO_PI)
            j_new = math.floor((ynew[a] - section_value) / TWO_PI)
            if j_old != j_new:
                lvl = j_new if j_new > j_old else j_old
                target = section_value + TWO_PI * lvl
                g0 = y[a] - target
                th = _refine_root(y, f, h, g0, K, C, c0, G, use_grid, sign, axis_vec, target, yr, fr)
                sp = math.sqrt(fr[0] * fr[0] + fr[1] * fr[1] + fr[2] * fr[2])
                if abs(fr[a]) < 1e-8 * max(sp, 1e-300):
                    nskip += 1
                else:
                    if nsec < sec_pts.shape[0]:
                        for i in range(3):
                            sec_pts[nsec, i] = yr[i]
                        sec_taus[nsec] = tau + th
                        sec_dirs[nsec] = 1 if fr[a] > 0 else -1
                    nsec += 1
                    if max_crossings > 0 and nsec >= max_crossings:
                        status = CROSSINGS_DONE
                        stop = True

        tau += h
        for i in range(3):
            y[i] = ynew[i]
            f[i] = fnew[i]
        if nsteps % record_stride == 0 or stop or tau >= tau_max:
            if nrec < cap:
                taus[nrec] = tau
                for i in range(3):
                    X[nrec, i] = y[i]
                nrec += 1
        if stop:
            break
        fac = 5.0
        if en > 0.0:
            fac = min(5.0, max(0.2, 0.9 * en ** -0.2))
        h = min(h * fac, h_max)

    nsec_out = min(nsec, sec_pts.shape[0])
    return (taus[:nrec], X[:nrec], nrec, status, close_tau, close_disp, close_resid,
            sec_pts[:nsec_out], sec_taus[:nsec_out], sec_dirs[:nsec_out], nsec_out, nskip, nsteps)


@njit
def cap_counts(points, centers, cos_apertures):
    """Number of points within each spherical cap (dot >= cos aperture)."""
    nc = centers.shape[0]
    na = cos_apertures.shape[0]
    out = np.zeros((nc, na), dtype=np.int64)
    for c in range(nc):
        for p in range(points.shape[0]):
            d = points[p, 0] * centers[c, 0] + points[p, 1] * centers[c, 1] + points[p, 2] * centers[c, 2]
            for a in range(na):
                if d >= cos_apertures[a]:
                    out[c, a] += 1
    return out


@njit
def _isqrt(v):
    r = int(math.sqrt(v))
    while r * r > v:
        r -= 1
    while (r + 1) * (r + 1) <= v:
        r += 1
    return r


@njit
def shell_scan(N):
    """All integer k with |k|^2 = N^2 (direct scan of the cube)."""
    N2 = N * N
    cap = 64
    out = np.empty((cap, 3), dtype=np.int64)
    cnt = 0
    for a in range(-N, N + 1):
        ra = N2 - a * a
        b_lim = _isqrt(ra)
        for b in range(-b_lim, b_lim + 1):
            rb = ra - b * b
            c = _isqrt(rb)
            if c * c != rb:
                continue
            for s in (-1, 1):
                if c == 0 and s == 1:
                    continue
                if cnt == cap:
                    new = np.empty((2 * cap, 3), dtype=np.int64)
                    new[:cap] = out
                    out = new
                    cap *= 2
                out[cnt, 0] = a
                out[cnt, 1] = b
                out[cnt, 2] = s * c
                cnt += 1
    return out[:cnt]
