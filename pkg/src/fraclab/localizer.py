"""Log-modulus localizer Phi(h) = exp(-Psi(|h|)) for squared increments.

Psi' saturates the differential inequality Psi'(1 + log(1 + Psi')) <= q / y
through the explicit profile q / (y (1 + log(1 + q/y))), switched on by a
cosine ramp on [l/2, l].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .errors import InvalidInput, InvalidRange
from .kernels import CutoffChi

QUAD_TOL = 1e-10


def F(p):
    """p (1 + log(1 + p)) for p >= 0."""
    arr = np.asarray(p, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise InvalidInput("F is defined for p >= 0")
    out = arr * (1.0 + np.log1p(arr))
    return float(out) if out.ndim == 0 else out


def _f_inverse_scalar(x: float) -> float:
    if x == 0.0:
        return 0.0
    lo, hi = x / (1.0 + math.log1p(x)), x
    if hi - lo <= 1e-15 * hi:
        return hi
    p = optimize.brentq(lambda t: t * (1.0 + math.log1p(t)) - x, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=200)
    # one Newton step cleans up the last ulps
    fp = 1.0 + math.log1p(p) + p / (1.0 + p)
    return p - (p * (1.0 + math.log1p(p)) - x) / fp


def F_inverse(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise InvalidInput("F_inverse is defined for x >= 0")
    if arr.ndim == 0:
        return _f_inverse_scalar(float(arr))
    return np.array([_f_inverse_scalar(float(v)) for v in arr.ravel()]).reshape(arr.shape)


def compute_q(delta0: float, linf_norm: float, c7: float, cmax: float) -> float:
    """q = delta0 c7 |theta0|_inf / (4 C_max)."""
    for name, v in (("delta0", delta0), ("linf_norm", linf_norm), ("c7", c7), ("cmax", cmax)):
        if not v > 0:
            raise InvalidInput(f"{name} must be positive, got {v}")
    return delta0 * c7 * linf_norm / (4.0 * cmax)


def profile(y, q: float):
    """Saturating slope q / (y (1 + log(1 + q/y)))."""
    y = np.asarray(y, dtype=float)
    if q == 0:
        return np.zeros_like(y)
    return q / (y * (1.0 + np.log1p(q / y)))


def G(y: float, q: float, l: float) -> float:
    """int_l^y of the saturating slope (diverges as l -> 0)."""
    return integrate.quad(lambda t: float(profile(t, q)), l, y, epsabs=QUAD_TOL, limit=200)[0]


@dataclass(frozen=True, eq=False)
class LocalizerPsi:
    q: float
    l: float
    y: np.ndarray
    psi_prime: np.ndarray
    psi: np.ndarray
    phi: np.ndarray

    @property
    def ramp(self) -> CutoffChi:
        return CutoffChi(self.l / 2.0, self.l)

    def psi_prime_at(self, y):
        y = np.asarray(y, dtype=float)
        return self.ramp(y) * profile(np.where(y > 0, y, 1.0), self.q) * (y > 0)

    @cached_property
    def _spline(self):
        return CubicHermiteSpline(self.y, self.psi, self.psi_prime)

    def _integral(self, a: float, b: float) -> float:
        pts = [p for p in (self.l / 2.0, self.l) if a < p < b]
        return integrate.quad(lambda t: float(self.psi_prime_at(t)), a, b, points=pts or None,
                              epsabs=QUAD_TOL, limit=200)[0]

    def psi_at(self, y):
        """Psi at arbitrary radii: Hermite spline inside the sample range, quadrature beyond."""
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        half = self.l / 2.0
        y_max = float(self.y[-1])
        inside = (y > half) & (y <= y_max)
        out[inside] = self._spline(y[inside])
        for idx in zip(*np.nonzero(y > y_max)):
            out[idx] = self.psi[-1] + self._integral(y_max, float(y[idx]))
        return out

    def phi_at(self, y):
        return np.exp(-self.psi_at(y))

    def to_csv(self) -> str:
        lines = ["y,psi_prime,psi,phi"]
        for row in zip(self.y, self.psi_prime, self.psi, self.phi):
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def build_localizer(q: float, l: float, y_max: float, samples: int = 256) -> LocalizerPsi:
    """Sample Psi', Psi and Phi on ``samples`` log-spaced radii in [l/4, y_max].

    The radii l/2 and l are always included so the ramp ends are sampled.
    ``q = 0`` gives the trivial localizer Phi = 1.
    """
    if not q >= 0:
        raise InvalidInput(f"q must be non-negative, got {q}")
    if not 0 < l < y_max:
        raise InvalidRange(f"need 0 < l < y_max, got l={l}, y_max={y_max}")
    if samples < 128:
        raise InvalidInput("at least 128 samples are required")
    y = np.unique(np.concatenate([np.geomspace(l / 4.0, y_max, samples), [l / 2.0, l]]))
    loc = LocalizerPsi(q, l, y, np.zeros(0), np.zeros(0), np.zeros(0))
    psi_prime = loc.psi_prime_at(y)
    psi = np.zeros_like(y)
    start = int(np.searchsorted(y, l / 2.0))
    for i in range(start + 1, y.size):
        psi[i] = psi[i - 1] + loc._integral(float(y[i - 1]), float(y[i]))
    for arr in (y, psi_prime, psi):
        arr.setflags(write=False)
    phi = np.exp(-psi)
    phi.setflags(write=False)
    return LocalizerPsi(q, l, y, psi_prime, psi, phi)


def ode_margin(loc: LocalizerPsi) -> np.ndarray:
    """q / y - F(Psi'(y)) at the samples (>= 0 when the inequality holds)."""
    return loc.q / loc.y - F(loc.psi_prime)


def verify_log_inequality(C: float, a: float, b: float) -> float:
    """a/2 + C b log(2 C b) - C b log a, non-negative for positive inputs."""
    for name, v in (("C", C), ("a", a), ("b", b)):
        if not v > 0:
            raise InvalidInput(f"{name} must be positive, got {v}")
    cb = C * b
    # written as cb (t - log t) with t = a / (2 C b) to avoid cancellation
    t = a / (2.0 * cb)
    return cb * (t - math.log(t))
