"""Fourier representation of zero-mean periodic fields on the unit torus.

Fields live on T^2 = [0, 1)^2 sampled on an M x M grid, ``x1`` along array
axis 0 and ``x2`` along axis 1. Coefficients are normalized so that

    f_hat(k) = \\int f(x) exp(-2 pi i k.x) dx,    f(x) = sum_k f_hat(k) exp(2 pi i k.x),

which makes Parseval read ||f||_{L^2}^2 = sum_k |f_hat(k)|^2. Internally the
coefficients are stored in the real-FFT half layout of shape (M, M//2 + 1):
row ``i`` holds k1 = fftfreq(M)[i] * M and column ``j`` holds k2 = j. Modes with
k2 < 0 are implied by Hermitian symmetry.

Conventions:

* Sobolev norms are homogeneous, ||f||_{H^s}^2 = sum_{k != 0} |k|^{2s} |f_hat(k)|^2,
  with no 2 pi factor. The physical Laplacian multiplier is -4 pi^2 |k|^2.
* ``perp`` is (d2, -d1); ``biot_savart`` returns u = perp (-Laplacian)^{-1} xi,
  i.e. u_hat = i k_perp xi_hat / (2 pi |k|^2) with k_perp = (k2, -k1). With this
  sign curl(u) = d1 u2 - d2 u1 = xi.
* The Nyquist row and column (|k1| or k2 equal to M/2) are always zero in a
  SpectralField. The 2/3 rule keeps modes with max(|k1|, |k2|) <= M/3.

Binary snapshot layout (``to_bytes``/``from_bytes``): the grid size as a
little-endian int64, then the full M x M coefficient lattice in row-major FFT
order (row = k1 mod M, column = k2 mod M) as little-endian float64 (re, im)
pairs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi

__all__ = [
    "Grid",
    "get_grid",
    "SpectralField",
    "VelocityField",
    "forward",
    "inverse",
    "transform",
    "derivative",
    "curl",
    "biot_savart",
    "sobolev_norm",
    "inner",
    "advect",
    "convolution_oracle",
    "to_bytes",
    "from_bytes",
]


class Grid:
    """Wavenumber tables and masks for an M x M grid (cached per M)."""

    def __init__(self, M: int):
        if M < 4 or M % 2:
            raise ValueError(f"grid size must be an even integer >= 4, got {M}")
        self.M = M
        self.nk2 = M // 2 + 1
        k1 = np.fft.fftfreq(M, d=1.0 / M).round().astype(np.int64)
        k2 = np.arange(self.nk2, dtype=np.int64)
        self.k1 = k1[:, None]
        self.k2 = k2[None, :]
        self.ksq = (self.k1**2 + self.k2**2).astype(float)
        self.kmag = np.sqrt(self.ksq)
        inv = np.zeros_like(self.ksq)
        inv[self.ksq > 0] = 1.0 / self.ksq[self.ksq > 0]
        self.inv_ksq = inv
        # multipliers of d1, d2 (2 pi i k_j)
        self.d1 = (1j * TWO_PI) * self.k1 * np.ones((1, self.nk2))
        self.d2 = (1j * TWO_PI) * self.k2 * np.ones((M, 1))
        self.lap = -(TWO_PI**2) * self.ksq

        keep = np.ones((M, self.nk2), dtype=bool)
        keep[M // 2, :] = False
        keep[:, M // 2] = False
        self.keep = keep
        kmax = np.maximum(np.abs(self.k1), np.abs(self.k2))
        self.dealias = keep & (3 * kmax < M)

        # inner products over the full lattice from the half layout
        w = np.full((1, self.nk2), 2.0)
        w[0, 0] = 1.0
        w[0, -1] = 1.0
        self.weight = w * np.ones((M, 1))

        x = np.arange(M) / M
        self.x1 = x[:, None] * np.ones((1, M))
        self.x2 = x[None, :] * np.ones((M, 1))

    def mask(self, dealias: bool) -> np.ndarray:
        return self.dealias if dealias else self.keep


@lru_cache(maxsize=None)
def get_grid(M: int) -> Grid:
    return Grid(M)


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        bad = int(np.size(a) - np.count_nonzero(np.isfinite(a)))
        raise ValueError(f"{what}: {bad} non-finite value(s) in input")


def hermitize(c: np.ndarray) -> np.ndarray:
    """Make column k2 = 0 exactly conjugate-symmetric in k1, in place.

    That column stores both k and -k. An anti-symmetric roundoff part there is
    discarded by irfft2, so left alone it would never be advected and would
    decay only through diffusion.
    """
    M = c.shape[-2]
    col = c[..., :, 0]
    col[...] = 0.5 * (col + np.conj(col[..., (-np.arange(M)) % M]))
    return c


def forward(samples: np.ndarray) -> np.ndarray:
    """Physical samples (M, M) -> half-layout coefficients, no projection."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] != samples.shape[1]:
        raise ValueError(f"expected square (M, M) samples, got shape {samples.shape}")
    _check_finite(samples, "forward transform")
    M = samples.shape[0]
    return hermitize(sfft.rfft2(samples) / (M * M))


def inverse(coeffs: np.ndarray) -> np.ndarray:
    """Half-layout coefficients -> physical samples."""
    coeffs = np.asarray(coeffs)
    _check_finite(coeffs, "inverse transform")
    M = coeffs.shape[-2]
    return sfft.irfft2(coeffs, s=(M, M)) * (M * M)


def transform(x, direction: str = "forward"):
    """Dispatching wrapper: ``forward`` returns coefficients, ``inverse`` samples."""
    if direction == "forward":
        return forward(x)
    if direction == "inverse":
        if isinstance(x, SpectralField):
            return x.samples()
        return inverse(x)
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real zero-mean scalar field stored as half-layout Fourier coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[1] != c.shape[0] // 2 + 1:
            raise ValueError(f"coefficient array has shape {c.shape}, expected (M, M//2+1)")
        g = get_grid(c.shape[0])
        if abs(c[0, 0]) > 1e-12 * max(1.0, float(np.sqrt(np.sum(g.weight * np.abs(c) ** 2)))):
            raise ValueError(f"SpectralField must have zero mean (mean coefficient {c[0, 0]!r})")
        c = hermitize(c * g.keep)
        c[0, 0] = 0.0
        object.__setattr__(self, "coeffs", c)

    @property
    def grid_size(self) -> int:
        return self.coeffs.shape[0]

    @property
    def grid(self) -> Grid:
        return get_grid(self.grid_size)

    @classmethod
    def zeros(cls, M: int) -> "SpectralField":
        return cls(np.zeros((M, M // 2 + 1), dtype=complex))

    @classmethod
    def project(cls, coeffs: np.ndarray) -> "SpectralField":
        """Drop the mean and the Nyquist modes of arbitrary coefficients."""
        c = np.array(coeffs, dtype=complex)
        c[0, 0] = 0.0
        return cls(c)

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "SpectralField":
        """Project physical samples: drops the mean and the Nyquist modes."""
        return cls.project(forward(samples))

    @classmethod
    def from_function(cls, fn, M: int) -> "SpectralField":
        g = get_grid(M)
        return cls.from_samples(fn(g.x1, g.x2))

    def samples(self) -> np.ndarray:
        return inverse(self.coeffs)

    def full(self) -> np.ndarray:
        """Coefficients on the full M x M lattice in FFT order."""
        return _to_full(self.coeffs)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.weight * np.abs(self.coeffs) ** 2)))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.coeffs * a)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Two-component field; both components real and zero-mean."""

    u1: SpectralField
    u2: SpectralField

    def __post_init__(self):
        if self.u1.grid_size != self.u2.grid_size:
            raise ValueError("velocity components on different grids")

    @property
    def grid_size(self) -> int:
        return self.u1.grid_size

    def samples(self) -> np.ndarray:
        return np.stack([self.u1.samples(), self.u2.samples()])

    def divergence_residual(self) -> float:
        """max_k |k1 u1_hat + k2 u2_hat| (exactly zero for divergence-free fields)."""
        g = self.u1.grid
        return float(np.max(np.abs(g.k1 * self.u1.coeffs + g.k2 * self.u2.coeffs)))

    def l2_norm(self) -> float:
        return float(np.hypot(self.u1.l2_norm(), self.u2.l2_norm()))

    def __add__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(self.u1 + other.u1, self.u2 + other.u2)


def _to_full(c: np.ndarray) -> np.ndarray:
    M = c.shape[0]
    full = np.zeros((M, M), dtype=complex)
    full[:, : M // 2 + 1] = c
    neg = (-np.arange(M)) % M
    full[:, M // 2 + 1 :] = np.conj(c[neg, 1 : M // 2][:, ::-1])
    return full


def derivative(f: SpectralField, which: str):
    """Apply ``d1``, ``d2``, ``lap`` or ``perp`` (= (d2, -d1), returns a VelocityField)."""
    g = f.grid
    if which == "d1":
        return SpectralField(g.d1 * f.coeffs)
    if which == "d2":
        return SpectralField(g.d2 * f.coeffs)
    if which == "lap":
        return SpectralField(g.lap * f.coeffs)
    if which == "perp":
        return VelocityField(SpectralField(g.d2 * f.coeffs), SpectralField(-g.d1 * f.coeffs))
    raise ValueError(f"unknown derivative {which!r}; use d1, d2, lap or perp")


def curl(v: VelocityField) -> SpectralField:
    g = v.u1.grid
    return SpectralField(g.d1 * v.u2.coeffs - g.d2 * v.u1.coeffs)


def _biot_savart_coeffs(xi_hat: np.ndarray, g: Grid) -> tuple[np.ndarray, np.ndarray]:
    psi = xi_hat * g.inv_ksq * (1.0 / TWO_PI**2)
    return g.d2 * psi, -g.d1 * psi


def biot_savart(xi: SpectralField) -> VelocityField:
    """Divergence-free velocity with curl equal to ``xi``."""
    u1, u2 = _biot_savart_coeffs(xi.coeffs, xi.grid)
    return VelocityField(SpectralField(u1), SpectralField(u2))


def sobolev_norm(f, s: float) -> float:
    """Homogeneous H^s norm of a zero-mean scalar or vector field.

    Accepts a SpectralField, a VelocityField or a raw half-layout coefficient
    array; a raw array with a nonzero mean coefficient is rejected.
    """
    if isinstance(f, VelocityField):
        return float(np.hypot(sobolev_norm(f.u1, s), sobolev_norm(f.u2, s)))
    if not isinstance(f, SpectralField):
        f = SpectralField(np.asarray(f))
    return float(np.sqrt(_sobolev_sq(f.coeffs, f.grid, s)))


def _sobolev_sq(c: np.ndarray, g: Grid, s: float) -> float:
    if s == 0:
        w = g.weight
    else:
        kp = np.zeros_like(g.ksq)
        nz = g.ksq > 0
        kp[nz] = g.ksq[nz] ** s
        w = g.weight * kp
    return float(np.sum(w * (c.real**2 + c.imag**2)))


def inner(f: SpectralField, h: SpectralField) -> float:
    """L^2 inner product <f, h> on the unit torus."""
    return float(np.sum(f.grid.weight * (f.coeffs * np.conj(h.coeffs)).real))


def _advect_coeffs(
    U1: np.ndarray,
    U2: np.ndarray,
    xi_hat: np.ndarray,
    g: Grid,
    dealias: bool = True,
    want_umax: bool = False,
):
    """Coefficients of U.grad(xi) by the pseudo-spectral product.

    Returns ``(coeffs, max|U|)``; the second entry is ``None`` unless asked.
    """
    m = g.mask(dealias)
    M = g.M
    stack = np.empty((4, M, g.nk2), dtype=complex)
    np.multiply(U1, m, out=stack[0])
    np.multiply(U2, m, out=stack[1])
    xm = xi_hat * m
    np.multiply(g.d1, xm, out=stack[2])
    np.multiply(g.d2, xm, out=stack[3])
    phys = sfft.irfft2(stack, s=(M, M), overwrite_x=True)
    phys *= M * M
    prod = phys[0] * phys[2]
    prod += phys[1] * phys[3]
    out = sfft.rfft2(prod)
    out *= m / (M * M)
    hermitize(out)
    out[0, 0] = 0.0
    umax = None
    if want_umax:
        umax = float(np.sqrt(np.max(phys[0] ** 2 + phys[1] ** 2)))
    return out, umax


def advect(u: VelocityField, xi: SpectralField, dealias: bool = True) -> SpectralField:
    """u . grad(xi), projected to zero mean (and to the 2/3 band when dealiasing)."""
    if u.grid_size != xi.grid_size:
        raise ValueError(f"grid mismatch: velocity M={u.grid_size}, scalar M={xi.grid_size}")
    out, _ = _advect_coeffs(u.u1.coeffs, u.u2.coeffs, xi.coeffs, xi.grid, dealias)
    return SpectralField(out)


ORACLE_MAX_M = 32


def convolution_oracle(u: VelocityField, xi: SpectralField, band: str = "dealias") -> SpectralField:
    """Exact Fourier double sum for u . grad(xi), free of aliasing.

    sum_{p + q = k} u_hat(p) . (2 pi i q) xi_hat(q) is accumulated on the
    doubled lattice, then restricted to the modes the grid keeps: the 2/3
    band for ``band="dealias"`` or every non-Nyquist mode for ``band="grid"``.
    Cost is O(M^4).
    """
    M = xi.grid_size
    if u.grid_size != M:
        raise ValueError(f"grid mismatch: velocity M={u.grid_size}, scalar M={M}")
    if M > ORACLE_MAX_M:
        raise ValueError(f"convolution oracle limited to M <= {ORACLE_MAX_M} (got {M})")
    if band not in ("dealias", "grid"):
        raise ValueError(f"unknown band {band!r}")
    f1, f2, fx = u.u1.full(), u.u2.full(), xi.full()
    ks = np.fft.fftfreq(M, d=1.0 / M).round().astype(int)
    q1, q2 = np.meshgrid(ks, ks, indexing="ij")
    gx1 = (1j * TWO_PI) * q1 * fx
    gx2 = (1j * TWO_PI) * q2 * fx
    # doubled lattice, index = k + M, k in [-M, M)
    acc = np.zeros((2 * M, 2 * M), dtype=complex)
    qi1 = q1 + M
    qi2 = q2 + M
    for a in range(M):
        for b in range(M):
            c1, c2 = f1[a, b], f2[a, b]
            if c1 == 0 and c2 == 0:
                continue
            p1, p2 = ks[a], ks[b]
            acc[qi1 + p1, qi2 + p2] += c1 * gx1 + c2 * gx2
    g = xi.grid
    out = acc[g.k1 + M, g.k2 + M]
    out = out * g.mask(band == "dealias")
    return SpectralField(out)


def to_bytes(f: SpectralField) -> bytes:
    full = np.ascontiguousarray(f.full(), dtype="<c16")
    return struct.pack("<q", f.grid_size) + full.tobytes(order="C")


def from_bytes(data: bytes) -> SpectralField:
    (M,) = struct.unpack_from("<q", data, 0)
    expected = 8 + 16 * M * M
    if len(data) != expected:
        raise ValueError(f"snapshot length {len(data)} does not match M={M} (expected {expected})")
    full = np.frombuffer(data, dtype="<c16", offset=8).reshape(M, M)
    return SpectralField(full[:, : M // 2 + 1].astype(complex))
