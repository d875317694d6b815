"""
Fourier representation of real periodic fields on the 3-torus [0, 2pi)^3.

A :class:`FourierField` stores the half spectrum produced by ``numpy.fft.rfftn``
normalised so that ``u(x) = sum_k c_k exp(i k.x)``; the conjugate half is
implied, which makes the reality condition structural.  Nyquist planes are
kept at zero: every field handled here is band-limited to ``|k_i| < n/2``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels

TWO_PI = 2.0 * np.pi
VOLUME = TWO_PI ** 3
STRUCTURAL_TOL = 1e-12


class BandLimitError(ValueError):
    """A wavevector does not fit the grid band."""

    def __init__(self, k, n):
        self.k = tuple(int(v) for v in k)
        super().__init__(f"wavevector {self.k} outside the band |k_i| < {n // 2} of grid n={n}")


class RealityError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``n`` points per axis on the cube of side 2pi."""

    n: int

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {n!r}")

    @property
    def length(self) -> float:
        return TWO_PI

    @property
    def spectral_shape(self) -> tuple:
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def kmax(self) -> int:
        """Largest representable wavenumber per axis (Nyquist excluded)."""
        return self.n // 2 - 1

    def fits(self, k) -> bool:
        return all(abs(int(v)) <= self.kmax for v in k)

    def wavenumbers(self):
        """Integer wavenumber axes in rfftn layout (k1, k2 full, k3 half)."""
        n = self.n
        full = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        half = np.arange(n // 2 + 1, dtype=np.int64)
        return full, full, half

    def k_vectors(self):
        k1, k2, k3 = self.wavenumbers()
        return np.meshgrid(k1, k2, k3, indexing="ij")

    def k_squared(self):
        k1, k2, k3 = self.k_vectors()
        return (k1 * k1 + k2 * k2 + k3 * k3).astype(np.float64)

    def coordinates(self, n: int | None = None):
        m = self.n if n is None else n
        x = TWO_PI * np.arange(m) / m
        return np.meshgrid(x, x, x, indexing="ij")

    def nyquist_mask(self):
        """True on coefficients that are kept (non-Nyquist)."""
        k1, k2, k3 = self.k_vectors()
        h = self.n // 2
        return (np.abs(k1) < h) & (np.abs(k2) < h) & (k3 < h)

    def dealias_mask(self):
        """2/3-rule mask: keep 3|k_i| < n on every axis."""
        k1, k2, k3 = self.k_vectors()
        n = self.n
        return (3 * np.abs(k1) < n) & (3 * np.abs(k2) < n) & (3 * k3 < n)

    def half_index(self, k):
        """Index into the half spectrum and whether conjugation is needed."""
        k = [int(v) for v in k]
        conj = k[2] < 0
        if conj:
            k = [-v for v in k]
        n = self.n
        return (k[0] % n, k[1] % n, k[2]), conj


class FourierField:
    """
    Real scalar (``ncomp=1``) or vector (``ncomp=3``) field on the torus.

    Coefficients are read-only; operations always return new fields.
    """

    __slots__ = ("grid", "_coeffs", "label")

    def __init__(self, grid: Grid, coeffs, label: str = ""):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.ndim == 3:
            coeffs = coeffs[None]
        if coeffs.shape[1:] != grid.spectral_shape or coeffs.shape[0] not in (1, 3):
            raise ValueError(f"coefficient shape {coeffs.shape} incompatible with grid n={grid.n}")
        coeffs = coeffs.copy()
        coeffs[:, ~grid.nyquist_mask()] = 0.0
        coeffs.setflags(write=False)
        self.grid = grid
        self._coeffs = coeffs
        self.label = label

    # -- basic accessors -------------------------------------------------
    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def ncomp(self) -> int:
        return self._coeffs.shape[0]

    def coeff(self, k) -> np.ndarray:
        idx, conj = self.grid.half_index(k)
        c = self._coeffs[(slice(None),) + idx]
        return np.conj(c) if conj else c.copy()

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 3) -> "FourierField":
        return cls(grid, np.zeros((ncomp,) + grid.spectral_shape, np.complex128))

    def with_coeffs(self, coeffs, label: str | None = None) -> "FourierField":
        return FourierField(self.grid, coeffs, self.label if label is None else label)

    # -- arithmetic --------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, FourierField) or other.grid != self.grid or other.ncomp != self.ncomp:
            raise TypeError("fields must share grid and component count")

    def __add__(self, other):
        self._check(other)
        return self.with_coeffs(self._coeffs + other._coeffs)

    def __sub__(self, other):
        self._check(other)
        return self.with_coeffs(self._coeffs - other._coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self._coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_coeffs(self._coeffs / scalar)

    def __neg__(self):
        return self.with_coeffs(-self._coeffs)

    # -- invariants ----------------------------------------------------------
    def divergence_residual(self) -> float:
        """max_k |k . c_k| / |k|, relative to the largest coefficient (0 for scalars)."""
        if self.ncomp != 3:
            return 0.0
        k1, k2, k3 = self.grid.k_vectors()
        c = self._coeffs
        scale = np.sqrt(np.sum(np.abs(c) ** 2, axis=0)).max()
        if scale == 0.0:
            return 0.0
        dot = np.abs(k1 * c[0] + k2 * c[1] + k3 * c[2])
        kk = np.sqrt(k1 * k1 + k2 * k2 + k3 * k3)
        return float((dot / np.maximum(kk, 1.0)).max() / scale)

    @property
    def is_zero_mean(self) -> bool:
        return bool(np.all(self._coeffs[:, 0, 0, 0] == 0.0))

    @property
    def is_divergence_free(self) -> bool:
        return self.divergence_residual() <= STRUCTURAL_TOL

    def reality_residual(self) -> float:
        """Hermitian mismatch on the self-conjugate k3 = 0 plane."""
        p = self._coeffs[:, :, :, 0]
        n = self.grid.n
        idx = (-np.arange(n)) % n
        mirror = np.conj(p[:, idx][:, :, idx])
        return float(np.max(np.abs(p - mirror), initial=0.0))

    # -- physical space ----------------------------------------------------------
    def to_physical(self, n: int | None = None) -> np.ndarray:
        """Sample on an ``n``-point grid (``n >= grid.n`` zero-pads)."""
        m = self.grid.n if n is None else int(n)
        if m == self.grid.n:
            spec = self._coeffs
        else:
            if m < self.grid.n:
                raise ValueError("physical grid must not be coarser than the spectral grid")
            spec = _pad_half_spectrum(self._coeffs, self.grid.n, m)
        return np.fft.irfftn(spec * m ** 3, s=(m, m, m), axes=(1, 2, 3))

    @classmethod
    def from_physical(cls, grid: Grid, values, label: str = "") -> "FourierField":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 3:
            values = values[None]
        m = values.shape[-1]
        spec = np.fft.rfftn(values, axes=(1, 2, 3)) / m ** 3
        if m != grid.n:
            spec = _truncate_half_spectrum(spec, m, grid.n)
        return cls(grid, spec, label)

    def sparse_modes(self, rel_tol: float = 0.0):
        """
        Nonzero modes as arrays ``(K, C, c0)`` for direct summation.

        ``K`` holds one representative per conjugate pair, so that
        ``u(x) = c0 + 2 Re sum_j C_j exp(i K_j . x)``.
        """
        k1, k2, k3 = self.grid.k_vectors()
        c = self._coeffs
        rep = (k3 > 0) | ((k3 == 0) & (k2 > 0)) | ((k3 == 0) & (k2 == 0) & (k1 > 0))
        mag = np.max(np.abs(c), axis=0)
        cut = rel_tol * mag.max() if mag.max() > 0 else 0.0
        sel = rep & (mag > cut) & (mag > 0)
        K = np.stack([k1[sel], k2[sel], k3[sel]], axis=1).astype(np.float64)
        C = np.ascontiguousarray(c[:, sel].T)
        c0 = c[:, 0, 0, 0].real.copy()
        return K, C, c0

    def evaluate(self, points) -> np.ndarray:
        """Exact trigonometric sum at arbitrary points, shape (npts, ncomp)."""
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        K, C, c0 = self.sparse_modes()
        return kernels.eval_modes(K, C, c0, pts)

    def __repr__(self):
        return f"FourierField(n={self.grid.n}, ncomp={self.ncomp}, label={self.label!r})"


def _pad_half_spectrum(c, n, m):
    out = np.zeros(c.shape[:1] + (m, m, m // 2 + 1), np.complex128)
    h = n // 2
    lo = np.r_[0:h, n - h + 1 : n]
    lo_m = np.r_[0:h, m - h + 1 : m]
    out[:, lo_m[:, None], lo_m[None, :], : h] = c[:, lo[:, None], lo[None, :], :h]
    return out


def _truncate_half_spectrum(c, m, n):
    h = n // 2
    idx_m = np.r_[0:h, m - h + 1 : m]
    out = np.zeros(c.shape[:1] + (n, n, n // 2 + 1), np.complex128)
    idx_n = np.r_[0:h, n - h + 1 : n]
    out[:, idx_n[:, None], idx_n[None, :], :h] = c[:, idx_m[:, None], idx_m[None, :], :h]
    return out


# ---------------------------------------------------------------------------
# synthesis


def synthesize(grid: Grid, modes: Iterable, symmetrize: bool = False, ncomp: int = 3, label: str = "") -> FourierField:
    """
    Build a real field from ``(k, amplitude)`` pairs.

    The list must be closed under ``k -> -k`` with conjugate amplitudes unless
    ``symmetrize`` is set, in which case ``c(k) <- (c(k) + conj c(-k)) / 2``.
    """
    table: dict = {}
    for k, a in modes:
        k = tuple(int(v) for v in k)
        if not grid.fits(k):
            raise BandLimitError(k, grid.n)
        a = np.asarray(a, dtype=np.complex128).reshape(ncomp)
        table[k] = table.get(k, 0) + a
    if symmetrize:
        sym = {}
        for k in set(table) | {tuple(-v for v in k) for k in table}:
            mk = tuple(-v for v in k)
            a = table.get(k, np.zeros(ncomp, np.complex128))
            b = table.get(mk, np.zeros(ncomp, np.complex128))
            sym[k] = 0.5 * (a + np.conj(b))
        table = sym
    else:
        for k, a in table.items():
            mk = tuple(-v for v in k)
            b = table.get(mk)
            partner = np.zeros(ncomp) if b is None else np.conj(b)
            if np.max(np.abs(a - partner)) > STRUCTURAL_TOL * max(1.0, np.max(np.abs(a))):
                raise RealityError(f"mode {k} has no conjugate partner at {mk}")
    coeffs = np.zeros((ncomp,) + grid.spectral_shape, np.complex128)
    for k, a in table.items():
        if k[2] < 0:
            continue
        idx, _ = grid.half_index(k)
        coeffs[(slice(None),) + idx] = a
    return FourierField(grid, coeffs, label)


def trig_sum(points, modes, ncomp: int = 3) -> np.ndarray:
    """Reference pointwise sum of ``sum_k a_k exp(i k.x)`` (real part)."""
    pts = np.atleast_2d(np.asarray(points, float))
    out = np.zeros((len(pts), ncomp), complex)
    for k, a in modes:
        phase = np.exp(1j * pts @ np.asarray(k, float))
        out += phase[:, None] * np.asarray(a, complex).reshape(1, ncomp)
    return out.real


# ---------------------------------------------------------------------------
# differential operators


def _ik(grid):
    k1, k2, k3 = grid.k_vectors()
    return 1j * k1, 1j * k2, 1j * k3


def curl(field: FourierField) -> FourierField:
    if field.ncomp != 3:
        raise ValueError("curl needs a vector field")
    a, b, c = _ik(field.grid)
    u = field.coeffs
    return field.with_coeffs(np.stack([b * u[2] - c * u[1], c * u[0] - a * u[2], a * u[1] - b * u[0]]))


def grad(field: FourierField) -> FourierField:
    if field.ncomp != 1:
        raise ValueError("grad needs a scalar field")
    a, b, c = _ik(field.grid)
    s = field.coeffs[0]
    return FourierField(field.grid, np.stack([a * s, b * s, c * s]))


def divergence(field: FourierField) -> FourierField:
    a, b, c = _ik(field.grid)
    u = field.coeffs
    return FourierField(field.grid, (a * u[0] + b * u[1] + c * u[2])[None])


def laplacian(field: FourierField) -> FourierField:
    return field.with_coeffs(-field.grid.k_squared() * field.coeffs)


def partial(field: FourierField, orders: Sequence[int]) -> FourierField:
    """Mixed derivative d1^a d2^b d3^c."""
    a, b, c = _ik(field.grid)
    mult = a ** orders[0] * b ** orders[1] * c ** orders[2]
    return field.with_coeffs(mult * field.coeffs)


def inverse_laplacian(field: FourierField) -> FourierField:
    """Zero-mean solution of Lap(phi) = f; the mean of f is ignored."""
    k2 = field.grid.k_squared()
    safe = np.where(k2 == 0, 1.0, k2)
    out = -field.coeffs / safe
    out[:, 0, 0, 0] = 0.0
    return field.with_coeffs(out)


def leray_project(field: FourierField) -> FourierField:
    """Projection onto divergence-free, zero-mean fields."""
    k1, k2, k3 = field.grid.k_vectors()
    k2sum = (k1 * k1 + k2 * k2 + k3 * k3).astype(np.float64)
    k2sum[0, 0, 0] = 1.0
    u = field.coeffs
    dot = (k1 * u[0] + k2 * u[1] + k3 * u[2]) / k2sum
    out = np.stack([u[0] - k1 * dot, u[1] - k2 * dot, u[2] - k3 * dot])
    out[:, 0, 0, 0] = 0.0
    return field.with_coeffs(out)


def dealias(field: FourierField) -> FourierField:
    return field.with_coeffs(field.coeffs * field.grid.dealias_mask())


def advect(a: FourierField, b: FourierField, oversample: int = 2) -> FourierField:
    """(a.grad) b with products formed on a zero-padded grid (alias-free for oversample >= 3/2)."""
    m = int(round(oversample * a.grid.n))
    A = a.to_physical(m)
    out = np.zeros((b.ncomp, m, m, m))
    for j in range(3):
        orders = [0, 0, 0]
        orders[j] = 1
        out += A[j] * partial(b, orders).to_physical(m)
    return FourierField.from_physical(a.grid, out)


def vorticity_bracket(u: FourierField, w: FourierField, nu: float, oversample: int = 2):
    """Right-hand side of the vorticity equation, split as (viscous, nonlinear)."""
    return nu * laplacian(w), advect(w, u, oversample) - advect(u, w, oversample)


def heat_propagate(field: FourierField, s: float, alpha: float = 1.0) -> FourierField:
    """Apply exp(-s |k|^(2 alpha)) to every coefficient."""
    if s < 0:
        raise ValueError(f"heat propagation time must be nonnegative, got {s}")
    if alpha <= 0:
        raise ValueError("dissipation exponent must be positive")
    if s == 0:
        return field.with_coeffs(field.coeffs)
    return field.with_coeffs(field.coeffs * heat_multiplier(field.grid, s, alpha))


def heat_multiplier(grid: Grid, s: float, alpha: float = 1.0) -> np.ndarray:
    k2 = grid.k_squared()
    return np.exp(-s * k2 ** alpha)


# ---------------------------------------------------------------------------
# norms


def _half_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.spectral_shape, 2.0)
    w[:, :, 0] = 1.0
    if grid.n % 2 == 0:
        w[:, :, -1] = 1.0
    return w


def mode_energy(field: FourierField) -> np.ndarray:
    """(2pi)^3 |c_k|^2 summed over components, with half-spectrum multiplicities."""
    return VOLUME * _half_weights(field.grid) * np.sum(np.abs(field.coeffs) ** 2, axis=0)


def inner(f: FourierField, g: FourierField) -> float:
    """L2 pairing of two real fields."""
    f._check(g)
    w = _half_weights(f.grid)
    return float(VOLUME * np.sum(w * np.sum(np.real(f.coeffs * np.conj(g.coeffs)), axis=0)))


def l2_norm(field: FourierField) -> float:
    return math.sqrt(float(np.sum(mode_energy(field))))


def sobolev_weight(grid: Grid, m: int) -> np.ndarray:
    """sum_{j<=m} |k|^{2j}."""
    k2 = grid.k_squared()
    w = np.zeros_like(k2)
    p = np.ones_like(k2)
    for _ in range(m + 1):
        w += p
        p = p * k2
    return w


def homogeneous_weight(grid: Grid, j: int) -> np.ndarray:
    return grid.k_squared() ** j


@dataclass(frozen=True)
class SobolevReport:
    field_id: str
    m: int
    value: float


def sobolev_norm(field: FourierField, m: int) -> SobolevReport:
    """H^m norm with |grad^j w|^2 summed over ordered index tuples (Parseval-exact)."""
    if m < 0:
        raise ValueError("Sobolev order must be nonnegative")
    val = math.sqrt(float(np.sum(sobolev_weight(field.grid, m) * mode_energy(field))))
    return SobolevReport(field.label, int(m), val)


def hm(field: FourierField, m: int) -> float:
    return sobolev_norm(field, m).value


# ---------------------------------------------------------------------------
# pointwise derivative tensors


def gradient_tensor_magnitude(field: FourierField, j: int, oversample: int = 2) -> np.ndarray:
    """
    Pointwise |grad^j u| on an oversampled grid.

    Uses multinomial weights so the result equals the sum over ordered index
    tuples, consistent with :func:`sobolev_norm`.
    """
    m = field.grid.n * oversample
    acc = np.zeros((m, m, m))
    for alpha in _multi_indices(j):
        w = math.factorial(j) / math.prod(math.factorial(a) for a in alpha)
        vals = partial(field, alpha).to_physical(m)
        acc += w * np.sum(vals * vals, axis=0)
    return np.sqrt(acc)


def sup_norm(field: FourierField, j: int = 0, oversample: int = 2) -> float:
    return float(gradient_tensor_magnitude(field, j, oversample).max())


def _multi_indices(j):
    for a in range(j + 1):
        for b in range(j - a + 1):
            yield (a, b, j - a - b)


def random_field(grid: Grid, rng: np.random.Generator, kmax: int = 3, solenoidal: bool = True, decay: float = 1.0, label="random") -> FourierField:
    """Random zero-mean real field supported on |k_i| <= kmax."""
    modes = []
    rng_modes = range(-kmax, kmax + 1)
    for k in itertools.product(rng_modes, rng_modes, rng_modes):
        if k == (0, 0, 0):
            continue
        amp = (rng.standard_normal(3) + 1j * rng.standard_normal(3)) / (1.0 + np.dot(k, k)) ** decay
        modes.append((k, amp))
    f = synthesize(grid, modes, symmetrize=True, label=label)
    return leray_project(f) if solenoidal else f.with_coeffs(_zero_mean(f.coeffs))


def _zero_mean(c):
    c = c.copy()
    c[:, 0, 0, 0] = 0.0
    return c


def heat_bounds(field: FourierField, s: float, m: int) -> tuple:
    """
    ``(||e^{s Lap} f||_{H^m}, sqrt(m!) s^{-m/2} ||f||_{L2}, e^{-s} ||f||_{H^m})``
    for a zero-mean ``f``; the first value should not exceed either bound.
    """
    if not field.is_zero_mean:
        raise ValueError("heat-kernel bounds need a zero-mean field")
    lhs = hm(heat_propagate(field, s), m)
    return lhs, math.sqrt(math.factorial(m)) * s ** (-m / 2) * l2_norm(field), math.exp(-s) * hm(field, m)
