"""Radial dissipation kernels and the data the lattice quadrature needs.

A kernel supplies its full radial density ``K(r)`` (normalizing constant
included), the power law it follows at large radius (for the analytic tail
of the periodic image sum) and the lattice second-moment defect used to
correct the omitted singular cell.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import gamma

from .errors import DimensionMismatch, InvalidAlpha, InvalidInput

SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi}


def normalizing_constant(d: int, alpha: float) -> float:
    """C(d, alpha) with C * PV int (g(x) - g(x-y)) |y|^(-d-alpha) dy = Lambda^alpha g.

    Uses the convention where the symbol of Lambda^alpha is |xi|^alpha with
    physical wavenumbers; e.g. C(1, 1) = 1/pi and C(2, 1) = 1/(2 pi).
    """
    if d not in (1, 2):
        raise DimensionMismatch(f"dimension must be 1 or 2, got {d}")
    if not 0.0 < alpha < 2.0:
        raise InvalidAlpha(f"alpha must lie in (0, 2), got {alpha}")
    return float(
        alpha * 2.0 ** (alpha - 1.0) * gamma((d + alpha) / 2.0)
        / (math.pi ** (d / 2.0) * gamma(1.0 - alpha / 2.0))
    )


def lattice_zeta(d: int, s: float) -> float:
    """Analytic continuation of sum_{j in Z^d, j != 0} |j|^(-s)."""
    if d == 1:
        return 2.0 * float(mpmath.zeta(s))
    # Z^2: sum of |j|^(-2t) = 4 zeta(t) beta(t) with Dirichlet beta
    t = s / 2.0
    return 4.0 * float(mpmath.zeta(t)) * float(mpmath.dirichlet(t, [0, 1, 0, -1]))


@lru_cache(maxsize=64)
def _cos_power_integral(p: float) -> float:
    """int_0^{pi/4} cos(phi)^p dphi."""
    return integrate.quad(lambda t: math.cos(t) ** p, 0.0, math.pi / 4.0, epsabs=1e-14)[0]


def image_tail(d: int, y: np.ndarray, length: float, outer: float, prefactor: float, s: float) -> np.ndarray:
    """Sum over far periodic images of ``prefactor * |y + x|^-(d+s)``.

    ``y`` is the signed offset in d = 1 and the offset norm in d = 2.
    Images with ``|x|_inf > outer`` are replaced by the integral over that
    region divided by the cell volume; in d = 2 the angular average is
    expanded to second order in |y|.
    """
    if d == 1:
        y = np.asarray(y, dtype=float)
        return prefactor * ((outer + y) ** (-s) + (outer - y) ** (-s)) / (s * length)
    r2 = np.asarray(y, dtype=float) ** 2
    i0 = outer ** (-s) / s * 8.0 * _cos_power_integral(s)
    i2 = outer ** (-s - 2.0) / (s + 2.0) * 8.0 * _cos_power_integral(s + 2.0)
    return prefactor * (i0 + 0.25 * r2 * (2.0 + s) ** 2 * i2) / length**2


@dataclass(frozen=True)
class CutoffChi:
    """Radial ramp equal to 0 on r <= inner, 1 on r >= outer, cosine in between."""

    inner: float = 1.0
    outer: float = 2.0

    def __call__(self, r):
        t = np.clip((np.asarray(r, dtype=float) - self.inner) / (self.outer - self.inner), 0.0, 1.0)
        return 0.5 * (1.0 - np.cos(math.pi * t))

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        width = self.outer - self.inner
        inside = (r > self.inner) & (r < self.outer)
        return np.where(inside, 0.5 * math.pi / width * np.sin(math.pi * (r - self.inner) / width), 0.0)


cutoff_chi = CutoffChi()


@dataclass(frozen=True)
class FractionalPower:
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise InvalidAlpha(f"alpha must lie in (0, 2), got {self.alpha}")

    def check_dimension(self, d: int) -> None:
        if d not in (1, 2):
            raise DimensionMismatch(f"dimension must be 1 or 2, got {d}")

    def density(self, r, d: int):
        return normalizing_constant(d, self.alpha) * np.asarray(r, dtype=float) ** (-d - self.alpha)

    def tail_law(self, d: int, r: float):
        return normalizing_constant(d, self.alpha), self.alpha

    def second_moment_defect(self, d: int, h: float) -> float:
        """int |y|^2 K - h^d sum_{y != 0} |y|^2 K over the lattice hZ^d."""
        c = normalizing_constant(d, self.alpha)
        return -c * h ** (2.0 - self.alpha) * lattice_zeta(d, d + self.alpha - 2.0)

    def symbol(self, xi_norm):
        return np.asarray(xi_norm, dtype=float) ** self.alpha


@dataclass(frozen=True)
class GeneralizedM:
    """Kernel ``1 / (|y|^2 m(|y|))`` in d = 2 with ``m`` given by a table.

    ``m`` is interpolated linearly in log-log coordinates and extended as a
    power law past both ends, using the slope of the end segments.
    """

    radii: tuple
    values: tuple

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        m = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.size < 2 or r.size != m.size:
            raise InvalidInput("m-table needs matching radii and values with at least 2 entries")
        if not (np.all(np.isfinite(r)) and np.all(r > 0) and np.all(np.diff(r) > 0)):
            raise InvalidInput("m-table radii must be positive and strictly increasing")
        if not (np.all(np.isfinite(m)) and np.all(m > 0)):
            raise InvalidInput("m-table values must be strictly positive")
        if np.any(np.diff(m) < 0):
            raise InvalidInput("m-table values must be non-decreasing")
        if self.slopes[-1] <= 0:
            raise InvalidInput("m must grow at large radius (last segment slope > 0) for the image sum to converge")
        object.__setattr__(self, "radii", tuple(float(v) for v in r))
        object.__setattr__(self, "values", tuple(float(v) for v in m))

    @property
    def log_r(self) -> np.ndarray:
        return np.log(np.asarray(self.radii, dtype=float))

    @property
    def log_m(self) -> np.ndarray:
        return np.log(np.asarray(self.values, dtype=float))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.log_m) / np.diff(self.log_r)

    def m(self, r):
        lr = np.log(np.asarray(r, dtype=float))
        x, y, g = self.log_r, self.log_m, self.slopes
        out = np.interp(lr, x, y)
        out = np.where(lr < x[0], y[0] + g[0] * (lr - x[0]), out)
        out = np.where(lr > x[-1], y[-1] + g[-1] * (lr - x[-1]), out)
        return np.exp(out)

    def check_dimension(self, d: int) -> None:
        if d != 2:
            raise DimensionMismatch("the m-table kernel is defined in two dimensions only")

    def density(self, r, d: int = 2):
        self.check_dimension(d)
        r = np.asarray(r, dtype=float)
        return 1.0 / (r**2 * self.m(r))

    def tail_law(self, d: int, r: float):
        """Local power law K = P r^-(2+s) of the segment containing r."""
        self.check_dimension(d)
        lr = math.log(r)
        i = int(np.clip(np.searchsorted(self.log_r, lr) - 1, 0, len(self.radii) - 2))
        s = float(self.slopes[i])
        r_i = self.radii[i]
        return r_i**s / self.values[i], s

    @property
    def doubling_constant(self) -> float:
        r = np.asarray(self.radii, dtype=float)
        return float(np.max(self.m(2.0 * r) / self.m(r)))

    @property
    def integrability(self) -> float:
        """int_0^1 m(r)/r dr for the interpolated and extended table."""
        return self.log_integral(1.0)

    def log_integral(self, upper: float) -> float:
        # exact integral of the piecewise power law in the variable ln r
        g0 = float(self.slopes[0])
        if g0 <= 0:
            return math.inf
        knots = [r for r in self.radii if r < upper] + [upper]
        total = float(self.m(knots[0])) / g0
        for a, b in zip(knots[:-1], knots[1:]):
            ma, mb = float(self.m(a)), float(self.m(b))
            du = math.log(b / a)
            total += du * ma if abs(mb - ma) < 1e-14 * ma else (mb - ma) * du / math.log(mb / ma)
        return total

    def second_moment_defect(self, d: int, h: float, width_cells: int = 32) -> float:
        """int psi - h^2 sum_{y != 0} psi with psi = |y|^2 K e^{-|y|^2/sigma^2}.

        The Gaussian damping makes both sides converge without changing the
        defect, which is controlled by the behaviour near the origin.
        """
        self.check_dimension(d)
        sigma = width_cells * h
        span = int(7 * width_cells)
        j = np.arange(-span, span + 1) * h
        r = np.hypot(*np.meshgrid(j, j, indexing="ij"))
        r = r[r > 0]
        lattice = h * h * float(np.sum(np.exp(-((r / sigma) ** 2)) / self.m(r)))
        with warnings.catch_warnings():
            # quad reports roundoff once it is at machine precision; harmless here
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            cont = 2.0 * math.pi * integrate.quad(
                lambda t: t * math.exp(-((t / sigma) ** 2)) / float(self.m(t)),
                0.0, 12.0 * sigma, limit=500, points=[h, sigma], epsabs=1e-14, epsrel=1e-12,
            )[0]
        return cont - lattice

    def symbol(self, xi_norm):
        return None


def power_law_table(alpha: float, radii=None) -> GeneralizedM:
    """m-table reproducing Lambda^alpha in d = 2 (m = r^alpha / C(2, alpha))."""
    if radii is None:
        radii = np.logspace(-8, 3, 45)
    radii = np.asarray(radii, dtype=float)
    return GeneralizedM(tuple(radii), tuple(radii**alpha / normalizing_constant(2, alpha)))


def reference_weak_kernel(epsilon: float = 0.5, r0: float = 0.1, outer_slope: float = 0.5,
                          radii=None) -> GeneralizedM:
    """m = (-ln r)^-(1+epsilon) below r0, a power law of slope ``outer_slope`` above."""
    if not epsilon > 0:
        raise InvalidInput("epsilon must be positive")
    if radii is None:
        radii = np.logspace(-12, 3, 241)
    radii = np.asarray(radii, dtype=float)
    m0 = (-math.log(r0)) ** (-(1.0 + epsilon))
    below = np.minimum(radii, r0)
    m = np.where(radii < r0, (-np.log(below)) ** (-(1.0 + epsilon)), m0 * (radii / r0) ** outer_slope)
    return GeneralizedM(tuple(radii), tuple(m))


def kernel_from_config(cfg):
    """Build a kernel from ``{"kind": "alpha", ...}`` or ``{"kind": "m-table", ...}``."""
    if isinstance(cfg, str):
        cfg = json.loads(cfg)
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise InvalidInput("kernel config must be an object with a 'kind' field")
    kind = cfg["kind"]
    if kind == "alpha":
        extra = set(cfg) - {"kind", "alpha"}
        if extra:
            raise InvalidInput(f"unknown kernel keys: {sorted(extra)}")
        return FractionalPower(float(cfg["alpha"]))
    if kind == "m-table":
        if "reference" in cfg:
            extra = set(cfg) - {"kind", "reference", "epsilon"}
            if extra or cfg["reference"] != "weak-log":
                raise InvalidInput("reference m-table must be {'reference': 'weak-log', 'epsilon': ...}")
            return reference_weak_kernel(float(cfg.get("epsilon", 0.5)))
        extra = set(cfg) - {"kind", "radii", "values"}
        if extra:
            raise InvalidInput(f"unknown kernel keys: {sorted(extra)}")
        return GeneralizedM(tuple(cfg["radii"]), tuple(cfg["values"]))
    raise InvalidInput(f"unknown kernel kind {kind!r}")


def kernel_to_config(kernel) -> dict:
    if isinstance(kernel, FractionalPower):
        return {"kind": "alpha", "alpha": kernel.alpha}
    return {"kind": "m-table", "radii": list(kernel.radii), "values": list(kernel.values)}
