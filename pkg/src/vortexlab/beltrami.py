"""
Beltrami fields on the torus: explicit shear families, rational points on
spheres, Herglotz-type shell sampling and the projector onto the
``curl = +N`` eigenspace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .spectral import (
    BandLimitError,
    FourierField,
    Grid,
    curl,
    synthesize,
)

SHEAR_AMPLITUDE = (2.0 * math.pi) ** -1.5
REYNOLDS_PREFACTOR = math.sqrt(2.5)


def _check_band(N, grid):
    if N < 1:
        raise ValueError("frequency must be a positive integer")
    if N > grid.kmax:
        raise BandLimitError((0, 0, N), grid.n)


def _sin_cos_modes(N, axis, amp_sin, amp_cos):
    # amp_sin * sin(N x_axis) + amp_cos * cos(N x_axis)
    k = [0, 0, 0]
    k[axis] = N
    kp = tuple(k)
    km = tuple(-v for v in k)
    a_p = np.asarray(amp_sin, complex) / 2j + np.asarray(amp_cos, complex) / 2
    return [(kp, a_p), (km, np.conj(a_p))]


def shear_beltrami(N: int, grid: Grid, axis: int = 3) -> FourierField:
    """
    Unit-L2 shear field of frequency N depending only on ``x_axis``.

    ``axis=3`` is ``(2pi)^(-3/2) (sin N x3, cos N x3, 0)``; axes 1 and 2 are
    its cyclic relabellings, which keep ``curl B = N B``.
    """
    _check_band(N, grid)
    if axis not in (1, 2, 3):
        raise ValueError("axis must be 1, 2 or 3")
    a = axis - 1
    s = np.zeros(3)
    c = np.zeros(3)
    s[(a + 1) % 3] = SHEAR_AMPLITUDE
    c[(a + 2) % 3] = SHEAR_AMPLITUDE
    return synthesize(grid, _sin_cos_modes(N, a, s, c), label=f"B_{N}" + ("" if axis == 3 else f"@x{axis}"))


def reynolds_beltrami(N: int, grid: Grid, prefactor: float = REYNOLDS_PREFACTOR) -> FourierField:
    """
    ``prefactor * (2 sin N x3, sin N x1 + 2 cos N x3, cos N x1)``.

    The default prefactor makes ``||(B.grad)B|| / ||Lap B|| = 1/N`` exactly.
    """
    _check_band(N, grid)
    modes = []
    modes += _sin_cos_modes(N, 2, [2 * prefactor, 0, 0], [0, 2 * prefactor, 0])
    modes += _sin_cos_modes(N, 0, [0, prefactor, 0], [0, 0, prefactor])
    return synthesize(grid, modes, label=f"Btilde_{N}")


def beltrami_from_modes(N: int, grid: Grid, modes) -> FourierField:
    """General Beltrami field from ``(k, b_k)`` with ``|k| = N`` and ``k.b_k = 0``."""
    for k, b in modes:
        if int(np.dot(k, k)) != N * N:
            raise ValueError(f"mode {tuple(k)} not on the shell |k| = {N}")
        if abs(np.dot(k, b)) > 1e-12 * (np.linalg.norm(b) * N + 1e-300):
            raise ValueError(f"amplitude at {tuple(k)} not orthogonal to k")
    raw = synthesize(grid, modes, symmetrize=True)
    return beltrami_project(raw, N)


# ---------------------------------------------------------------------------
# rational points on the sphere


@dataclass(frozen=True)
class RationalSpherePoint:
    k: tuple
    N: int

    @property
    def xi(self) -> np.ndarray:
        return np.asarray(self.k, float) / self.N


def shell_vectors(N: int) -> np.ndarray:
    """All integer vectors with ``|k|^2 = N^2``."""
    return kernels.shell_scan(int(N))


def rational_sphere_points(N: int) -> list:
    """Points of S^2 with height exactly N, as integer numerators over N."""
    if N < 1:
        raise ValueError("height must be positive")
    ks = shell_vectors(N)
    pts = []
    for k in ks:
        if math.gcd(math.gcd(int(k[0]), int(k[1])), math.gcd(int(k[2]), int(N))) == 1:
            pts.append(RationalSpherePoint(tuple(int(v) for v in k), int(N)))
    pts.sort(key=lambda p: p.k)
    return pts


def points_array(points) -> np.ndarray:
    """Unit vectors from a list of RationalSpherePoint or an (m, 3) array."""
    if len(points) and isinstance(points[0], RationalSpherePoint):
        return np.array([p.xi for p in points])
    arr = np.asarray(points, float)
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def fibonacci_sphere(m: int) -> np.ndarray:
    i = np.arange(m) + 0.5
    z = 1.0 - 2.0 * i / m
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


CAP_CENTERS = 200
CAP_APERTURES_DEG = (10.0, 30.0, 60.0)


def cap_family(m: int = CAP_CENTERS, apertures_deg=CAP_APERTURES_DEG):
    centers = fibonacci_sphere(m)
    cos_ap = np.cos(np.radians(np.asarray(apertures_deg, float)))
    return centers, cos_ap


def equidistribution_discrepancy(points, m: int = CAP_CENTERS, apertures_deg=CAP_APERTURES_DEG) -> float:
    """
    Spherical-cap discrepancy: max over the fixed cap family of
    ``|fraction of points in cap - normalised cap area|``.
    """
    xyz = np.ascontiguousarray(points_array(points))
    if len(xyz) == 0:
        raise ValueError("empty point list")
    centers, cos_ap = cap_family(m, apertures_deg)
    counts = kernels.cap_counts(xyz, centers, cos_ap)
    area = (1.0 - cos_ap) / 2.0
    return float(np.max(np.abs(counts / len(xyz) - area[None, :])))


def cap_discrepancy_direct(points, m: int = CAP_CENTERS, apertures_deg=CAP_APERTURES_DEG) -> float:
    """Loop-by-loop cap counting, kept as an independent check."""
    xyz = points_array(points)
    centers, cos_ap = cap_family(m, apertures_deg)
    worst = 0.0
    for c in centers:
        d = xyz @ c
        for ca in cos_ap:
            frac = np.count_nonzero(d >= ca) / len(xyz)
            worst = max(worst, abs(frac - (1.0 - ca) / 2.0))
    return worst


# ---------------------------------------------------------------------------
# spherical amplitudes and Herglotz sampling


def plus_projector(xi: np.ndarray, a: np.ndarray) -> np.ndarray:
    """(i xi x (i xi x a) + i xi x a) / 2 for unit xi, row-wise."""
    s = 1j * np.cross(xi, a)
    return 0.5 * (1j * np.cross(xi, s) + s)


@dataclass
class SphericalAmplitude:
    """
    A rule ``xi -> g(xi)`` in C^3 on the unit sphere, vectorised over rows.

    Real synthesis needs ``g(xi) = conj(g(-xi))``; :meth:`symmetry_defect`
    measures it on a point set.
    """

    rule: Callable[[np.ndarray], np.ndarray]
    name: str = "g"

    def __call__(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, float))
        return np.asarray(self.rule(xi), complex).reshape(len(xi), 3)

    def symmetry_defect(self, xi) -> float:
        xi = np.atleast_2d(xi)
        return float(np.max(np.abs(self(xi) - np.conj(self(-xi))), initial=0.0))

    def beltrami_defect(self, xi) -> float:
        xi = np.atleast_2d(xi)
        g = self(xi)
        return float(np.max(np.linalg.norm(1j * np.cross(xi, g) - g, axis=1), initial=0.0))

    def __add__(self, other):
        return SphericalAmplitude(lambda xi: self(xi) + other(xi), f"{self.name}+{other.name}")

    def __rmul__(self, c):
        return SphericalAmplitude(lambda xi: c * self(xi), f"{c}*{self.name}")


def zero_amplitude() -> SphericalAmplitude:
    return SphericalAmplitude(lambda xi: np.zeros((len(xi), 3), complex), "zero")


def constant_amplitude(v) -> SphericalAmplitude:
    """Constant real vector (already symmetric)."""
    v = np.asarray(v, float)
    return SphericalAmplitude(lambda xi: np.tile(v.astype(complex), (len(xi), 1)), "const")


def plane_wave_amplitude(v, shift, beltrami: bool = True) -> SphericalAmplitude:
    """
    ``g(xi) = v exp(i xi . shift)``, optionally projected to satisfy
    ``i xi x g = g``; both forms are symmetric for real ``v`` and ``shift``.
    """
    v = np.asarray(v, float)
    shift = np.asarray(shift, float)

    def rule(xi):
        a = np.exp(1j * xi @ shift)[:, None] * v[None, :]
        return plus_projector(xi, a) if beltrami else a

    return SphericalAmplitude(rule, "planewave" + ("+" if beltrami else ""))


def smooth_perturbation(seed: int = 0) -> SphericalAmplitude:
    """Symmetric, non-Beltrami amplitude built from a few random plane waves."""
    rng = np.random.default_rng(seed)
    vs = rng.standard_normal((3, 3))
    shifts = rng.standard_normal((3, 3))

    def rule(xi):
        out = np.zeros((len(xi), 3), complex)
        for v, s in zip(vs, shifts):
            out += np.exp(1j * xi @ s)[:, None] * v[None, :]
        return out

    return SphericalAmplitude(rule, f"perturb{seed}")


AMPLITUDE_LIBRARY = {
    "constant": lambda: constant_amplitude([1.0, 0.0, 0.0]),
    "planewave": lambda: plane_wave_amplitude([1.0, 0.3, -0.2], [0.4, -0.7, 1.1]),
    "twisted": lambda: plane_wave_amplitude([0.0, 1.0, 1.0], [1.5, 0.0, 0.5]),
}


def herglotz_sample(g: SphericalAmplitude, N: int, grid: Grid, points=None) -> FourierField:
    """
    ``(1/|X_N|) sum_{xi in X_N} g(xi) exp(i N xi . x)`` on the torus.
    """
    pts = rational_sphere_points(N) if points is None else points
    ks = np.array([p.k for p in pts], dtype=np.int64)
    for k in ks:
        if not grid.fits(k):
            raise BandLimitError(k, grid.n)
    xi = ks / float(N)
    amps = g(xi) / len(pts)
    return synthesize(grid, list(zip(map(tuple, ks), amps)), label=f"Wtilde_{N}")


def shell_support_defect(field: FourierField, N: int) -> float:
    """Largest relative coefficient magnitude off the shell |k| = N."""
    k2 = field.grid.k_squared()
    mag = np.max(np.abs(field.coeffs), axis=0)
    top = mag.max()
    if top == 0:
        return 0.0
    return float(mag[k2 != N * N].max(initial=0.0) / top)


def beltrami_project(field: FourierField, N: int, tol: float = 1e-12) -> FourierField:
    """curl(curl + N)/(2N^2) applied to a field supported on |k| = N."""
    if shell_support_defect(field, N) > tol:
        raise ValueError(f"field has support off the shell |k| = {N}")
    c = curl(field)
    return (curl(c) + N * c) / (2.0 * N * N)


def eigen_residual(field: FourierField, N: float) -> float:
    """max |curl W - N W| / max |N W| in coefficient space."""
    top = np.abs(N * field.coeffs).max()
    if top == 0:
        return 0.0
    return float(np.abs((curl(field) - N * field).coeffs).max() / top)
