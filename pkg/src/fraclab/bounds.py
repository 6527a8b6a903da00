"""Numerical certificates for nonlinear lower bounds on fractional Laplacians.

Each ``check_*`` function evaluates the dissipative operator at the extremum
of a derivative and compares it with a superlinear lower bound.  The
operator is always taken through the lattice quadrature (positive weights),
so the left-hand side is an honest PV evaluation, not a symbol product.

Two constants are explicit (``linf_constant``, ``pointwise_constant``);
the others are calibrated (see ``fraclab.calibrate``) and read from the
packaged ``constants.v1`` file.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DegenerateGradient, InvalidDelta, InvalidExponent, NoPositiveMaximum
from .fields import GridSpec, ScalarField, holder_seminorm, lp_norm, spectral_derivative, spectral_shift
from .kernels import SPHERE_AREA, FractionalPower, normalizing_constant
from .operators import (
    DEFAULT_IMAGE_RADIUS,
    apply_quadrature_torus,
    apply_spectral,
    dissipation_density,
)

PASS_RTOL = 1e-8
THEOREMS = ("Linf", "Holder", "Lp", "Periodic", "Pointwise")


@dataclass
class BoundReport:
    theorem: str
    lhs: float
    rhs: float
    constant: float
    location: tuple
    value: float
    alpha: float
    passed: bool
    margin: float
    branch: str | None = None
    delta: float | None = None
    p: float | None = None
    trial: int | None = None
    extra: dict = field(default_factory=dict)


def _passes(lhs: float, rhs: float) -> bool:
    return lhs >= rhs - PASS_RTOL * (abs(lhs) + abs(rhs))


def _report(theorem, lhs, rhs, constant, loc, value, alpha, **kw) -> BoundReport:
    return BoundReport(theorem, float(lhs), float(rhs), float(constant), tuple(loc), float(value),
                       float(alpha), _passes(lhs, rhs), float(lhs - rhs), **kw)


# ---------------------------------------------------------------- constants

def linf_constant(d: int, alpha: float) -> float:
    """Explicit constant alpha 2^((1+alpha)^2) (4+d)^alpha / (|S^{d-1}| C(d, alpha))."""
    return alpha * 2.0 ** ((1.0 + alpha) ** 2) * (4.0 + d) ** alpha / (
        SPHERE_AREA[d] * normalizing_constant(d, alpha)
    )


def pointwise_constant(d: int, alpha: float) -> float:
    """Explicit constant for the gradient bound.

    Follows the cut-off argument with a cosine ramp on [R/2, R]:
    D >= c1 |G|^2 R^-alpha - c2 |G| |f| R^-(1+alpha), optimized at
    R = 2 c2 |f| / (c1 |G|).
    """
    area_c = SPHERE_AREA[d] * normalizing_constant(d, alpha)
    c1 = area_c / alpha
    c2 = 2.0 * area_c * (math.pi * (2.0**alpha - 1.0) / alpha + (d + alpha) * 2.0 ** (1.0 + alpha) / (1.0 + alpha))
    return 2.0 * 2.0 ** (1.0 + alpha) * c2**alpha / c1 ** (1.0 + alpha)


def _fmt_num(x: float) -> str:
    return repr(float(x))


def holder_key(d, alpha, delta):
    return f"holder:d={d}:alpha={_fmt_num(alpha)}:delta={_fmt_num(delta)}"


def lp_key(d, alpha, p):
    return f"lp:d={d}:alpha={_fmt_num(alpha)}:p={_fmt_num(p)}"


def periodic_key(d, alpha):
    return f"periodic:d={d}:alpha={_fmt_num(alpha)}"


def pointwise_key(d, alpha):
    return f"pointwise:d={d}:alpha={_fmt_num(alpha)}"


LOCALIZER_C7_KEY = "localizer:c7"
LOCALIZER_CMAX_KEY = "localizer:cmax"
MAJORANT_A_KEY = "majorant:a"
MAJORANT_B_KEY = "majorant:b"


def parse_constants(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.rpartition(" = ")
        if not sep:
            raise ValueError(f"bad constants line: {raw!r}")
        out[key.strip()] = float(val)
    return out


@lru_cache(maxsize=1)
def packaged_constants() -> dict:
    try:
        text = resources.files("fraclab").joinpath("data/constants.v1").read_text()
    except FileNotFoundError:
        return {}
    return parse_constants(text)


def lookup_constant(key: str, table: dict | None = None) -> float:
    table = packaged_constants() if table is None else table
    if key not in table:
        raise KeyError(f"no calibrated constant {key!r}; run `python3 -m fraclab.calibrate`")
    return table[key]


# ---------------------------------------------------------------- extrema

def polish_shift(values: np.ndarray, spec: GridSpec, loc, maximize: bool = True) -> np.ndarray:
    """One Newton step from grid point ``loc`` toward the interpolant's extremum.

    Returns the displacement (zero when the Hessian has the wrong sign or the
    step would leave the grid cell).
    """
    d = spec.d
    grad = np.array([spectral_derivative(values, spec, a)[loc] for a in range(d)])
    hess = np.empty((d, d))
    hat = np.fft.fftn(values)
    ks = spec.wavenumbers()
    for a in range(d):
        for b in range(a, d):
            hess[a, b] = hess[b, a] = np.real(np.fft.ifftn(-ks[a] * ks[b] * hat))[loc]
    eig = np.linalg.eigvalsh(hess)
    if (maximize and eig.max() >= 0) or (not maximize and eig.min() <= 0):
        return np.zeros(d)
    step = -np.linalg.solve(hess, grad)
    if np.max(np.abs(step)) > spec.h:
        return np.zeros(d)
    return step


def _grid_argmax(values: np.ndarray):
    i = int(np.argmax(values))
    return tuple(int(j) for j in np.unravel_index(i, values.shape))


def _polished(f: ScalarField, target: np.ndarray, polish: bool):
    """Translate ``f`` so the polished maximum of ``target`` sits on a grid point."""
    loc = _grid_argmax(target)
    if not polish:
        return f, loc
    shift = polish_shift(target, f.spec, loc)
    if not np.any(shift):
        return f, loc
    return ScalarField(f.spec, spectral_shift(f.values, f.spec, shift)), loc


def _derivative_max(f: ScalarField, k: int, polish: bool):
    if not 0 <= k < f.spec.d:
        raise ValueError(f"axis {k} out of range for d={f.spec.d}")
    g = spectral_derivative(f.values, f.spec, k)
    if g.max() <= 0:
        raise NoPositiveMaximum("the derivative has no positive maximum")
    f2, loc = _polished(f, g, polish)
    if f2 is not f:
        g = spectral_derivative(f2.values, f2.spec, k)
    return f2, ScalarField(f.spec, g), loc


def _operator_at(g: ScalarField, alpha: float, loc, image_radius: int) -> float:
    return float(apply_quadrature_torus(g, FractionalPower(alpha), image_radius).values[loc])


# ---------------------------------------------------------------- checks

def check_linf_bound(f: ScalarField, k: int, alpha: float, constant: float | None = None,
                     polish: bool = True, image_radius: int = DEFAULT_IMAGE_RADIUS) -> BoundReport:
    """Lambda^a g(x) >= g(x)^(1+a) / (c |f|_inf^a) at the maximum of g = d_k f."""
    c = linf_constant(f.spec.d, alpha) if constant is None else constant
    f, g, loc = _derivative_max(f, k, polish)
    gmax = float(g.values[loc])
    lhs = _operator_at(g, alpha, loc, image_radius)
    rhs = gmax ** (1 + alpha) / (c * lp_norm(f, math.inf) ** alpha)
    return _report("Linf", lhs, rhs, c, loc, gmax, alpha)


def holder_rhs(gmax, norm, c, alpha, delta):
    kappa = alpha / (1.0 - delta)
    return gmax ** (1 + kappa) / (c * norm**kappa)


def lp_rhs(gmax, norm, c, alpha, p, d):
    kappa = alpha * p / (d + p)
    return gmax ** (1 + kappa) / (c * norm**kappa)


def linf_rhs(gmax, norm, c, alpha):
    return gmax ** (1 + alpha) / (c * norm**alpha)


def check_holder_bound(f: ScalarField, k: int, alpha: float, delta: float, constant: float | None = None,
                       polish: bool = True, image_radius: int = DEFAULT_IMAGE_RADIUS,
                       norm: float | None = None) -> BoundReport:
    if not 0.0 < delta < 1.0:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    c = lookup_constant(holder_key(f.spec.d, alpha, delta)) if constant is None else constant
    f, g, loc = _derivative_max(f, k, polish)
    gmax = float(g.values[loc])
    if norm is None:
        norm = holder_seminorm(f, delta, f.spec.h)
    lhs = _operator_at(g, alpha, loc, image_radius)
    return _report("Holder", lhs, holder_rhs(gmax, norm, c, alpha, delta), c, loc, gmax, alpha,
                   delta=delta, extra={"norm": norm})


def check_lp_bound(f: ScalarField, k: int, alpha: float, p: float, constant: float | None = None,
                   polish: bool = True, image_radius: int = DEFAULT_IMAGE_RADIUS) -> BoundReport:
    if not p >= 1:
        raise InvalidExponent(f"p must be >= 1, got {p}")
    d = f.spec.d
    c = lookup_constant(lp_key(d, alpha, p)) if constant is None else constant
    f, g, loc = _derivative_max(f, k, polish)
    gmax = float(g.values[loc])
    norm = lp_norm(f, p)
    lhs = _operator_at(g, alpha, loc, image_radius)
    return _report("Lp", lhs, lp_rhs(gmax, norm, c, alpha, p, d), c, loc, gmax, alpha, p=p,
                   extra={"norm": norm})


def check_periodic_bound(f: ScalarField, k: int, alpha: float, constant: float | None = None,
                         polish: bool = True, image_radius: int = DEFAULT_IMAGE_RADIUS) -> BoundReport:
    """Dichotomy: either g(x) <= c |f|_inf, or the L-infinity lower bound holds."""
    c = lookup_constant(periodic_key(f.spec.d, alpha)) if constant is None else constant
    f, g, loc = _derivative_max(f, k, polish)
    gmax = float(g.values[loc])
    norm = lp_norm(f, math.inf)
    lhs = _operator_at(g, alpha, loc, image_radius)
    if gmax <= c * norm:
        return _report("Periodic", lhs, 0.0, c, loc, gmax, alpha, branch="bounded-by-norm")
    return _report("Periodic", lhs, linf_rhs(gmax, norm, c, alpha), c, loc, gmax, alpha, branch="lower-bound")


def _gradient_values(f: ScalarField):
    return [spectral_derivative(f.values, f.spec, a) for a in range(f.spec.d)]


def check_pointwise_bound(f: ScalarField, alpha: float, constant: float | None = None,
                          polish: bool = True, image_radius: int = DEFAULT_IMAGE_RADIUS) -> BoundReport:
    """G.Lambda^a G >= Lambda^a|G|^2 / 2 + |G|^(2+a) / (c |f|^a) at the max of |G|^2.

    The report's ``extra`` carries the corollary margin (same bound without
    the Lambda^a|G|^2 term) and the smallest theorem margin over all grid
    points, since the theorem holds everywhere.  A constant field yields a
    vacuous pass flagged ``extra["degenerate"]``.
    """
    spec = f.spec
    c = pointwise_constant(spec.d, alpha) if constant is None else constant
    kern = FractionalPower(alpha)
    grads = _gradient_values(f)
    sq = sum(gv**2 for gv in grads)
    scale = max(float(np.max(np.abs(f.values))), 1e-300)
    if float(np.max(sq)) <= (1e-14 * scale) ** 2:
        loc = (0,) * spec.d
        rep = _report("Pointwise", 0.0, 0.0, c, loc, 0.0, alpha)
        rep.extra = {"degenerate": True, "error": DegenerateGradient.__name__,
                     "corollary_margin": 0.0, "min_margin_all_points": 0.0}
        return rep
    f, loc = _polished(f, sq, polish)
    grads = _gradient_values(f)
    sq = sum(gv**2 for gv in grads)
    fields = [ScalarField(spec, gv) for gv in grads]
    lhs_field = sum(gv * apply_quadrature_torus(fv, kern, image_radius).values for gv, fv in zip(grads, fields))
    half_op = 0.5 * apply_quadrature_torus(ScalarField(spec, sq), kern, image_radius).values
    norm = lp_norm(f, math.inf)
    extra_field = np.sqrt(sq) ** (2 + alpha) / (c * norm**alpha)
    lhs = float(lhs_field[loc])
    rhs = float(half_op[loc] + extra_field[loc])
    rep = _report("Pointwise", lhs, rhs, c, loc, float(np.sqrt(sq[loc])), alpha)
    cor_margin = lhs - float(extra_field[loc])
    margins = lhs_field - half_op - extra_field
    tol = PASS_RTOL * (np.abs(lhs_field) + np.abs(half_op + extra_field))
    rep.extra = {
        "corollary_margin": cor_margin,
        "min_margin_all_points": float(np.min(margins)),
        "all_points_pass": bool(np.all(margins >= -tol)),
    }
    rep.passed = rep.passed and _passes(lhs, float(extra_field[loc])) and rep.extra["all_points_pass"]
    return rep


def verify_pointwise_identity(f: ScalarField, alpha: float, kernel=None,
                              image_radius: int = DEFAULT_IMAGE_RADIUS) -> float:
    """Relative residual of G.Lambda^a G - Lambda^a|G|^2/2 - D/2.

    The two operator terms use the Fourier symbol and D uses the lattice
    quadrature, so the residual compares two independent routes.
    """
    spec = f.spec
    kernel = FractionalPower(alpha) if kernel is None else kernel
    fields = [ScalarField(spec, gv) for gv in _gradient_values(f)]
    sq = ScalarField(spec, sum(fv.values**2 for fv in fields))
    first = sum(fv.values * apply_spectral(fv, alpha).values for fv in fields)
    second = 0.5 * apply_spectral(sq, alpha).values
    dens = 0.5 * dissipation_density(tuple(fields), kernel, image_radius).values
    scale = float(np.max(np.abs(first)))
    resid = float(np.max(np.abs(first - second - dens)))
    if scale == 0.0:
        return 0.0 if resid == 0.0 else math.inf
    return resid / scale


# ---------------------------------------------------------------- families

SCHWARTZ_BOX = 8.0 * math.pi


def gaussian_mixture(rng: np.random.Generator, spec: GridSpec) -> ScalarField:
    """Sum of 1-4 Gaussians a exp(-|x-b|^2/s^2), |a| <= 1, s in [0.3, 1.5].

    Centres lie within pi of the box centre, so on the default 8 pi box the
    data sit in the central quarter and the periodic tails are negligible.
    """
    terms = int(rng.integers(1, 5))
    coords = spec.coords()
    centre = spec.length / 2.0
    out = np.zeros(spec.shape)
    for _ in range(terms):
        a = rng.uniform(-1.0, 1.0)
        s = rng.uniform(0.3, 1.5)
        b = centre + rng.uniform(-math.pi, math.pi, size=spec.d)
        r2 = sum((x - bj) ** 2 for x, bj in zip(coords, b))
        out += a * np.exp(-r2 / s**2)
    return ScalarField(spec, out)


def band_limited_field(rng: np.random.Generator, spec: GridSpec, max_mode: int = 8) -> ScalarField:
    """Random real trigonometric polynomial, modes |k_j| <= max_mode, unit sup norm, zero mean."""
    k = np.fft.fftfreq(spec.n, 1.0 / spec.n)
    grids = np.meshgrid(*([k] * spec.d), indexing="ij")
    mask = np.all([np.abs(g) <= max_mode for g in grids], axis=0)
    c = (rng.normal(size=spec.shape) + 1j * rng.normal(size=spec.shape)) * mask
    v = np.real(np.fft.ifftn(c))
    v -= v.mean()
    return ScalarField(spec, v / np.max(np.abs(v)))


FAMILIES = {"gaussian-mixture": gaussian_mixture, "band-limited": band_limited_field}


def family_spec(family: dict) -> GridSpec:
    kind = family.get("kind", "gaussian-mixture")
    d = int(family.get("d", 1))
    default_n = 1024 if kind == "gaussian-mixture" and d == 1 else 256
    default_len = SCHWARTZ_BOX if kind == "gaussian-mixture" else 2.0 * math.pi
    return GridSpec(d, int(family.get("n", default_n)), float(family.get("length", default_len)))


def draw(family: dict, seed: int, trial: int) -> ScalarField:
    kind = family.get("kind", "gaussian-mixture")
    if kind not in FAMILIES:
        raise ValueError(f"unknown family {kind!r}")
    rng = np.random.default_rng([seed, trial])
    spec = family_spec(family)
    if kind == "band-limited":
        return band_limited_field(rng, spec, int(family.get("max_mode", 8)))
    return gaussian_mixture(rng, spec)


def run_check(f: ScalarField, check: dict) -> BoundReport:
    theorem = check["theorem"]
    alpha = float(check["alpha"])
    k = int(check.get("k", 0))
    const = check.get("constant")
    if theorem == "Linf":
        return check_linf_bound(f, k, alpha, const)
    if theorem == "Holder":
        return check_holder_bound(f, k, alpha, float(check["delta"]), const)
    if theorem == "Lp":
        return check_lp_bound(f, k, alpha, float(check["p"]), const)
    if theorem == "Periodic":
        return check_periodic_bound(f, k, alpha, const)
    if theorem == "Pointwise":
        return check_pointwise_bound(f, alpha, const)
    raise ValueError(f"unknown theorem {theorem!r}")


def sweep(family: dict, checks: list, trials: int, seed: int) -> list:
    """Run every check on ``trials`` seeded draws; trial t uses rng([seed, t])."""
    reports = []
    for t in range(trials):
        f = draw(family, seed, t)
        for chk in checks:
            rep = run_check(f, chk)
            rep.trial = t
            reports.append(rep)
    return reports


CSV_HEADER = ["trial", "theorem", "alpha", "delta", "p", "lhs", "rhs", "constant", "margin", "pass"]


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def sweep_csv(reports: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow([_cell(v) for v in (r.trial, r.theorem, r.alpha, r.delta, r.p, r.lhs, r.rhs,
                                      r.constant, r.margin, r.passed)])
    return buf.getvalue()


def write_sweep_csv(path, reports: list) -> None:
    Path(path).write_text(sweep_csv(reports))


def summarize(reports: list) -> dict:
    if not reports:
        return {"count": 0, "pass_rate": 1.0, "min_margin": None}
    return {
        "count": len(reports),
        "pass_rate": sum(r.passed for r in reports) / len(reports),
        "min_margin": min(r.margin for r in reports),
    }
