"""Uniform periodic grids, Fourier transforms, norms and finite-scale moduli.

Grid nodes sit at ``x_j = j * h`` for ``j = 0..N-1`` along each axis, so the
box ``[0, L)^d`` is the torus; with the default ``L = 2*pi`` it is the same
torus as ``[-pi, pi)^d``.

Fourier normalization: ``forward_transform`` divides by ``N**d``, so the zero
coefficient is the mean and ``h**d * sum(f**2) == L**d * sum(|c|**2)``
(Parseval).  Wavenumbers are physical, ``xi = 2*pi*k/L``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import InvalidExponent, InvalidField, NonHermitianSpectrum, ScaleTooFine

TWO_PI = 2.0 * math.pi
HERMITIAN_RTOL = 1e-12
IMAG_RTOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    d: int
    n: int
    length: float = TWO_PI

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"points per axis must be a power of two >= 16, got {self.n}")
        if not self.length > 0:
            raise ValueError("box length must be positive")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def diameter(self) -> float:
        """Largest torus distance between two points."""
        return 0.5 * self.length * math.sqrt(self.d)

    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def coords(self) -> list:
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        if self.d == 1:
            return [self.axis()]
        return list(np.meshgrid(self.axis(), self.axis(), indexing="ij"))

    def wavenumbers(self) -> list:
        """Physical wavenumber arrays (full FFT layout), one per axis."""
        k1 = np.fft.fftfreq(self.n, d=1.0 / self.n) * (TWO_PI / self.length)
        if self.d == 1:
            return [k1]
        return list(np.meshgrid(k1, k1, indexing="ij"))

    def wavenumber_norm(self) -> np.ndarray:
        return np.sqrt(sum(k**2 for k in self.wavenumbers()))


@dataclass(frozen=True, eq=False)
class ScalarField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.spec.size:
            raise InvalidField(f"expected {self.spec.size} samples, got {v.size}")
        v = v.reshape(self.spec.shape)
        if not np.all(np.isfinite(v)):
            raise InvalidField("field contains non-finite samples")
        object.__setattr__(self, "values", v)

    def __mul__(self, other):
        return ScalarField(self.spec, self.values * other)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, ScalarField):
            other = other.values
        return ScalarField(self.spec, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            other = other.values
        return ScalarField(self.spec, self.values - other)

    def __neg__(self):
        return ScalarField(self.spec, -self.values)

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True, eq=False)
class Spectrum:
    spec: GridSpec
    coefficients: np.ndarray

    def coefficient(self, *k: int) -> complex:
        """Coefficient of integer wavevector ``k`` (negative indices allowed)."""
        return complex(self.coefficients[tuple(i % self.spec.n for i in k)])


def field_from_function(spec: GridSpec, fn) -> ScalarField:
    return ScalarField(spec, fn(*spec.coords()))


def _reflect(c: np.ndarray) -> np.ndarray:
    """Array whose entry at ``k`` is ``c[-k]`` (indices mod N)."""
    axes = tuple(range(c.ndim))
    return np.roll(np.flip(c, axis=axes), 1, axis=axes)


def hermitian_defect(coefficients: np.ndarray) -> float:
    scale = float(np.max(np.abs(coefficients))) if coefficients.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(coefficients - np.conj(_reflect(coefficients))))) / scale


def forward_transform(field: ScalarField) -> Spectrum:
    v = np.asarray(field.values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidField("field contains non-finite samples")
    return Spectrum(field.spec, np.fft.fftn(v) / field.spec.size)


def inverse_transform(spectrum: Spectrum) -> ScalarField:
    c = np.asarray(spectrum.coefficients, dtype=complex).reshape(spectrum.spec.shape)
    if hermitian_defect(c) > HERMITIAN_RTOL:
        raise NonHermitianSpectrum(
            f"coefficient(-k) != conj(coefficient(k)): defect {hermitian_defect(c):.3e}"
        )
    z = np.fft.ifftn(c) * spectrum.spec.size
    scale = max(float(np.max(np.abs(z))), 1e-300)
    if float(np.max(np.abs(z.imag))) > IMAG_RTOL * scale:
        raise NonHermitianSpectrum("inverse transform has a non-negligible imaginary part")
    return ScalarField(spectrum.spec, z.real)


def parseval_defect(field: ScalarField) -> float:
    spec = field.spec
    physical = spec.h**spec.d * float(np.sum(field.values**2))
    spectral = spec.length**spec.d * float(np.sum(np.abs(forward_transform(field).coefficients) ** 2))
    return abs(physical - spectral) / max(physical, 1e-300)


def spectral_derivative(values: np.ndarray, spec: GridSpec, axis: int, order: int = 1) -> np.ndarray:
    k = spec.wavenumbers()[axis]
    hat = np.fft.fftn(values)
    if order % 2 == 1 and spec.n % 2 == 0:
        # Nyquist mode has no well-defined odd derivative on a real grid
        k = k.copy()
        k[np.isclose(np.abs(k), spec.n * math.pi / spec.length)] = 0.0
    return np.real(np.fft.ifftn((1j * k) ** order * hat))


def gradient(field: ScalarField) -> tuple:
    return tuple(
        ScalarField(field.spec, spectral_derivative(field.values, field.spec, a))
        for a in range(field.spec.d)
    )


def spectral_shift(values: np.ndarray, spec: GridSpec, shift) -> np.ndarray:
    """Samples of ``x -> f(x + shift)`` from the trigonometric interpolant."""
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    ks = spec.wavenumbers()
    nyq = spec.n * math.pi / spec.length
    hat = np.fft.fftn(values)
    for k, s in zip(ks, shift):
        # the Nyquist cosine restricted to the grid shifts by a real factor
        hat = hat * np.where(np.isclose(np.abs(k), nyq), np.cos(k * s), np.exp(1j * k * s))
    return np.real(np.fft.ifftn(hat))


def argmax_abs(field: ScalarField):
    """First (lowest row-major index) grid location of max |value|."""
    flat = np.abs(field.values).ravel()
    i = int(np.argmax(flat))
    loc = tuple(int(j) for j in np.unravel_index(i, field.spec.shape))
    return loc, float(field.values[loc])


def lp_norm(field: ScalarField, p: float) -> float:
    if p == math.inf or p == "inf":
        return float(np.max(np.abs(field.values)))
    if not p >= 1:
        raise InvalidExponent(f"p must be >= 1 or inf, got {p}")
    spec = field.spec
    a = np.abs(field.values)
    m = float(a.max())
    if m == 0.0:
        return 0.0
    # scale out the maximum to keep large p finite
    return m * (spec.h**spec.d * float(np.sum((a / m) ** p))) ** (1.0 / p)


@lru_cache(maxsize=16)
def offsets_by_distance(spec: GridSpec):
    """Half-space grid offsets (excluding 0) sorted by torus distance.

    ``+o`` and ``-o`` give the same set of pairs, so one of each is enough.
    Returns ``(offsets, distances)`` with offsets as an int array ``(M, d)``.
    """
    n = spec.n
    if spec.d == 1:
        offs = np.arange(1, n // 2 + 1)[:, None]
        dist = offs[:, 0] * spec.h
    else:
        a, b = np.meshgrid(np.arange(0, n // 2 + 1), np.arange(-n // 2 + 1, n // 2 + 1), indexing="ij")
        keep = (a > 0) | (b > 0)
        offs = np.stack([a[keep], b[keep]], axis=1)
        dist = spec.h * np.hypot(offs[:, 0], offs[:, 1])
    order = np.argsort(dist, kind="stable")
    offs, dist = offs[order], dist[order]
    offs.setflags(write=False)
    dist.setflags(write=False)
    return offs, dist


def max_increment(values: np.ndarray, offset) -> float:
    """max_x |f(x + offset) - f(x)| on the torus grid."""
    shifted = np.roll(values, shift=tuple(-int(o) for o in offset), axis=tuple(range(values.ndim)))
    return float(np.max(np.abs(shifted - values)))


def increment_profile(field: ScalarField, max_distance: float = math.inf, min_distance: float = 0.0):
    """Per-offset sup-increments for offsets with distance in the given range.

    Returns ``(distances, increments)`` sorted by distance.
    """
    offs, dist = offsets_by_distance(field.spec)
    tol = 1e-9 * field.spec.h
    sel = (dist <= max_distance + tol) & (dist >= min_distance - tol)
    inc = np.array([max_increment(field.values, o) for o in offs[sel]])
    return np.asarray(dist[sel]), inc


def holder_seminorm(field: ScalarField, delta: float, min_scale: float) -> float:
    """Finite-scale C^delta norm: ``||f||_inf + sup |f(x)-f(y)| / |x-y|^delta``.

    The supremum runs over grid pairs whose torus distance is at least
    ``min_scale``, so the result is non-increasing in ``min_scale``.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    h = field.spec.h
    if min_scale < h * (1.0 - 1e-12):
        raise ScaleTooFine(f"min_scale {min_scale} is below the grid spacing {h}")
    dist, inc = increment_profile(field, min_distance=min_scale)
    semi = float(np.max(inc / dist**delta)) if dist.size else 0.0
    return lp_norm(field, math.inf) + semi


def resample(field: ScalarField, n: int) -> ScalarField:
    """Trigonometric interpolant of ``field`` on an ``n``-point grid (n >= N).

    Exact for fields without content at the coarse Nyquist mode, which is dropped.
    """
    spec = field.spec
    if n < spec.n:
        raise InvalidField(f"resample only refines: {n} < {spec.n}")
    fine = GridSpec(spec.d, n, spec.length)
    half = spec.n // 2
    dst = np.r_[0:half, n - half + 1:n]
    src = np.r_[0:half, spec.n - half + 1:spec.n]
    big = np.zeros(fine.shape, dtype=complex)
    big[np.ix_(*[dst] * spec.d)] = np.fft.fftn(field.values)[np.ix_(*[src] * spec.d)]
    return ScalarField(fine, np.real(np.fft.ifftn(big)) * (n / spec.n) ** spec.d)


HEADER_PREFIX = "# fraclab-field v1"


def write_field(path, field: ScalarField) -> None:
    spec = field.spec
    lines = [f"{HEADER_PREFIX} d={spec.d} N={spec.n} L={spec.length!r}"]
    lines.extend(repr(float(v)) for v in field.values.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path) -> ScalarField:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith(HEADER_PREFIX):
        raise InvalidField(f"{path}: missing '{HEADER_PREFIX}' header")
    meta = dict(tok.split("=", 1) for tok in text[0][len(HEADER_PREFIX):].split())
    try:
        spec = GridSpec(int(meta["d"]), int(meta["N"]), float(meta["L"]))
    except (KeyError, ValueError) as exc:
        raise InvalidField(f"{path}: bad header: {exc}") from exc
    body = [ln for ln in text[1:] if ln.strip()]
    if len(body) != spec.size:
        raise InvalidField(f"{path}: expected {spec.size} samples, found {len(body)}")
    return ScalarField(spec, np.array([float(v) for v in body]))
