"""Quantities monitored along a run: OSS moduli, the localized squared
increment sup v, dissipation/forcing balance, BKM integrals and the
log-majorant scan of velocity increments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .bounds import lookup_constant, pointwise_constant, pointwise_key
from .errors import DimensionMismatch, InvalidAlpha, InvalidDelta, InvalidInput
from .fields import GridSpec, ScalarField, gradient, holder_seminorm, increment_profile, spectral_shift
from .kernels import FractionalPower
from .operators import dissipation_density, sqg_velocity


def primary_field(state) -> ScalarField:
    """The transported scalar of a state: theta, else u (Burgers), else omega."""
    for name in ("theta", "u", "omega"):
        if name in state.fields:
            return state.fields[name]
    raise InvalidInput(f"no scalar unknown in {sorted(state.fields)}")


def _grad_norm(f: ScalarField) -> np.ndarray:
    return np.sqrt(sum(g.values**2 for g in gradient(f)))


# --- OSS moduli -----------------------------------------------------------

@dataclass(frozen=True)
class OSSProfile:
    scales: tuple
    moduli: tuple
    # continuum sup can exceed the grid sup by at most this much
    grid_error: float


def _oscillation(theta: ScalarField) -> float:
    return float(np.max(theta.values) - np.min(theta.values))


def _cumulative_profile(theta: ScalarField, max_distance: float):
    dist, inc = increment_profile(theta, max_distance=max_distance)
    return dist, np.maximum.accumulate(inc) if inc.size else inc


def oss_modulus(theta: ScalarField, L: float) -> float:
    """sup |theta(x) - theta(y)| over grid pairs at torus distance <= L."""
    spec = theta.spec
    if not 0 < L <= spec.diameter + 1e-12:
        raise InvalidInput(f"L must lie in (0, {spec.diameter}], got {L}")
    if L >= spec.diameter - 1e-12:
        return _oscillation(theta)
    _, inc = increment_profile(theta, max_distance=L)
    return float(inc.max()) if inc.size else 0.0


def oss_profile(theta: ScalarField, scales) -> OSSProfile:
    scales = tuple(sorted(float(s) for s in scales))
    spec = theta.spec
    top = min(scales[-1], spec.diameter)
    dist, cum = _cumulative_profile(theta, top)
    osc = _oscillation(theta)
    moduli = []
    for L in scales:
        if L >= spec.diameter - 1e-12:
            moduli.append(osc)
            continue
        k = int(np.searchsorted(dist, L + 1e-9 * spec.h, side="right"))
        moduli.append(float(cum[k - 1]) if k else 0.0)
    err = spec.h * float(np.max(_grad_norm(theta)))
    return OSSProfile(scales, tuple(moduli), err)


def oss_scale_for_delta(theta: ScalarField, delta: float) -> float:
    """Largest grid distance L with oss_modulus(theta, L) <= delta (0 if none)."""
    if not delta > 0:
        raise InvalidInput("delta must be positive")
    spec = theta.spec
    if _oscillation(theta) <= delta:
        return spec.diameter
    reach = 8 * spec.h
    while True:
        dist, cum = _cumulative_profile(theta, reach)
        over = np.nonzero(cum > delta)[0]
        if over.size:
            k = int(over[0])
            return float(dist[k - 1]) if k else 0.0
        if reach >= spec.diameter:
            return float(dist[-1])
        reach = min(2 * reach, spec.diameter)


def uniform_oss_check(trajectory, delta: float, L: float):
    """(holds, first violating time or None) for the modulus at L along a trajectory."""
    states = getattr(trajectory, "trajectory", trajectory)
    if not states:
        raise InvalidInput("empty trajectory")
    for st in states:
        if oss_modulus(primary_field(st), L) > delta:
            return False, st.time
    return True, None


# --- localized squared increments ------------------------------------------

@dataclass(frozen=True)
class DisplacementReport:
    sup_v: float
    shift: tuple
    threshold: float | None
    below_threshold: bool | None


def _directions(d: int, count: int):
    if d == 1:
        return [np.array([1.0])]
    ang = np.pi * np.arange(count) / count
    return [np.array([math.cos(a), math.sin(a)]) for a in ang]


class _Translator:
    """Repeated band-limited translations of one field (one forward FFT)."""

    def __init__(self, values: np.ndarray, spec: GridSpec):
        self.values = values
        self.spec = spec
        self.hat = np.fft.rfftn(values)
        scale = 2 * math.pi / spec.length
        ints = [np.fft.fftfreq(spec.n, 1.0 / spec.n)] * (spec.d - 1) + [np.fft.rfftfreq(spec.n, 1.0 / spec.n)]
        self.k = [scale * i for i in ints]
        self.nyq = [np.abs(i) == spec.n // 2 for i in ints]

    def __call__(self, shift) -> np.ndarray:
        """Samples of x -> f(x + shift)."""
        hat = self.hat
        for ax, (k, nyq, s) in enumerate(zip(self.k, self.nyq, shift)):
            phase = np.where(nyq, np.cos(k * s), np.exp(1j * k * s))
            shape = [1] * self.spec.d
            shape[ax] = -1
            hat = hat * phase.reshape(shape)
        return np.fft.irfftn(hat, s=self.spec.shape, axes=tuple(range(self.spec.d)))

    def increment(self, shift) -> np.ndarray:
        return self(shift) - self.values


def _sup_v_at(tr: _Translator, phi_of, shift) -> float:
    r = float(np.linalg.norm(shift))
    return float(np.max(tr.increment(shift) ** 2)) * float(phi_of(r))


def displacement_field(theta: ScalarField, localizer, shells=None, directions: int = 8,
                       delta0: float | None = None, refine: bool = True) -> DisplacementReport:
    """sup over x and sampled h of (theta(x+h) - theta(x))^2 Phi(|h|).

    Shells default to 16 log-spaced magnitudes in [h, L/2]; the best
    magnitude is then refined by a bounded scalar search along its direction.
    ``localizer=None`` means Phi = 1.
    """
    spec = theta.spec
    if shells is None:
        shells = np.geomspace(spec.h, spec.length / 2, 16)
    shells = np.sort(np.asarray(shells, dtype=float))
    if shells[0] <= 0 or shells[-1] > spec.diameter + 1e-12:
        raise InvalidInput("shells must lie in (0, box diameter]")

    def phi_of(r):
        return 1.0 if localizer is None else float(localizer.phi_at(np.array([r]))[0])

    tr = _Translator(theta.values, spec)
    best, best_shift, best_i, best_dir = -1.0, None, 0, None
    for e in _directions(spec.d, directions):
        for i, r in enumerate(shells):
            val = _sup_v_at(tr, phi_of, tuple(r * e))
            if val > best:
                best, best_shift, best_i, best_dir = val, tuple(r * e), i, e
    if refine and shells.size > 2:
        lo = shells[max(best_i - 1, 0)]
        hi = shells[min(best_i + 1, shells.size - 1)]
        res = optimize.minimize_scalar(lambda r: -_sup_v_at(tr, phi_of, tuple(r * best_dir)),
                                       bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        if -res.fun > best:
            best, best_shift = float(-res.fun), tuple(float(res.x) * best_dir)
    best_shift = tuple(float(s) for s in best_shift)
    if delta0 is None:
        return DisplacementReport(best, best_shift, None, None)
    thr = delta0**2 / 16.0
    return DisplacementReport(best, best_shift, thr, best < thr)


def pair_scan_sup_v(theta: ScalarField, localizer=None) -> float:
    """Brute-force sup of (delta_o theta)^2 Phi(|o|) over every grid offset o."""
    dist, inc = increment_profile(theta)
    phi = np.ones_like(dist) if localizer is None else localizer.phi_at(dist)
    return float(np.max(inc**2 * phi))


# --- dissipation versus nonlinearity ------------------------------------------

@dataclass(frozen=True)
class BalanceReport:
    max_ratio: float
    location: tuple | None
    c1: float
    linf0: float


def default_c1(d: int, alpha: float) -> float:
    """Coefficient c1 with D/4 >= c1 |G|^(2+a) / |f|^a.

    The gradient bound gives D/2 >= |G|^(2+a) / (c |f|^a), so c1 = 1/(2c),
    using the calibrated c when shipped and the explicit one otherwise.
    """
    try:
        c = lookup_constant(pointwise_key(d, alpha))
    except KeyError:
        c = pointwise_constant(d, alpha)
    return 1.0 / (2.0 * c)


def _velocity_gradient_norm(velocity) -> np.ndarray:
    """Frobenius norm of grad u."""
    return np.sqrt(sum(g.values**2 for comp in velocity for g in gradient(comp)))


def balance_check(state, config, c1: float | None = None, linf0: float | None = None) -> BalanceReport:
    """max over x of |grad u||grad theta|^2 / (D/4 + c1 |grad theta|^3 / |theta_0|_inf).

    Points with vanishing gradient contribute 0. Without dissipation
    (alpha = 0 and no kernel) the ratio is infinite wherever forcing is
    positive.
    """
    theta = primary_field(state)
    spec = theta.spec
    grad = gradient(theta)
    g2 = sum(g.values**2 for g in grad)
    gnorm = np.sqrt(g2)
    if float(np.max(gnorm)) == 0.0:
        return BalanceReport(0.0, None, float("nan") if c1 is None else c1, 0.0)
    linf0 = float(np.max(np.abs(theta.values))) if linf0 is None else linf0
    kernel = _kernel_of(config)
    if kernel is None:
        diss = np.zeros(spec.shape)
        c1 = 0.0 if c1 is None else c1
    else:
        c1 = default_c1(spec.d, getattr(kernel, "alpha", 1.0)) if c1 is None else c1
        dens = dissipation_density(grad, kernel).values
        diss = dens / 4.0 + c1 * gnorm**3 / linf0
    if state.velocity and len(state.velocity) == spec.d and "u" not in state.fields:
        du = _velocity_gradient_norm(state.velocity)
    else:
        du = gnorm
    forcing = du * g2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(forcing > 0, forcing / diss, 0.0)
    idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return BalanceReport(float(ratio[idx]), tuple(int(i) for i in idx), float(c1), linf0)


def _kernel_of(config):
    kern = getattr(config, "kernel", None)
    if kern is not None:
        return kern
    alpha = getattr(config, "alpha", 0.0)
    if getattr(config, "system", "") == "Boussinesq2D":
        alpha = getattr(config, "beta", 0.0)
    return FractionalPower(alpha) if alpha > 0 else None


def max_dissipation(theta: ScalarField, config) -> float:
    kernel = _kernel_of(config)
    if kernel is None:
        return 0.0
    return float(np.max(dissipation_density(gradient(theta), kernel).values))


# --- BKM integral ---------------------------------------------------------

def bkm_quantity(state) -> float:
    """||omega||_inf for ModEuler, ||grad theta||_inf (or |u_x|) otherwise."""
    if set(state.fields) == {"omega"}:
        return float(np.max(np.abs(state.fields["omega"].values)))
    return float(np.max(_grad_norm(primary_field(state))))


def bkm_partial(times, values) -> np.ndarray:
    """Cumulative trapezoid integral, starting at 0."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size == 0:
        return np.zeros(0)
    steps = 0.5 * np.diff(t) * (v[1:] + v[:-1])
    return np.concatenate([[0.0], np.cumsum(steps)])


def bkm_integral(trajectory) -> float:
    states = getattr(trajectory, "trajectory", trajectory)
    if not states:
        return 0.0
    cum = bkm_partial([s.time for s in states], [bkm_quantity(s) for s in states])
    return float(cum[-1])


# --- conditional regularity ------------------------------------------------

@dataclass(frozen=True)
class ConditionalReport:
    alpha: float
    delta: float
    seminorm: float
    criterion: bool
    lhs_exponent: float
    rhs_exponent: float

    @property
    def gap(self) -> float:
        return self.lhs_exponent - self.rhs_exponent


def supercritical_conditional_check(theta: ScalarField, alpha: float, delta: float,
                                    min_scale: float | None = None) -> ConditionalReport:
    """C^delta size of theta and the strict test delta > 1 - alpha."""
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")
    if not 0 < delta < 1:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    scale = theta.spec.h if min_scale is None else min_scale
    m = holder_seminorm(theta, delta, scale)
    lhs = 2.0 + alpha / (1.0 - delta)
    rhs = 4.0 - 2.0 * alpha / (1.0 - delta + alpha)
    return ConditionalReport(alpha, delta, m, bool(delta > 1.0 - alpha), lhs, rhs)


def gradient_threshold_combination(theta: ScalarField, L: float, linf0: float) -> float:
    """Dimensionless ||grad theta||_inf L / ||theta_0||_inf^2."""
    return float(np.max(_grad_norm(theta))) * L / linf0**2


# --- log majorant of velocity increments ----------------------------------------

def shifted_increment(values: np.ndarray, spec: GridSpec, shift) -> np.ndarray:
    """f(x + shift) - f(x) with a band-limited translation."""
    return spectral_shift(values, spec, tuple(float(s) for s in shift)) - values


def increment_log_bound_scan(theta: ScalarField, shift, stride: int = 1):
    """Pairs (D_h(x), |delta_h u(x)|) for the SQG velocity of theta.

    D_h is the alpha = 1 dissipation density of delta_h theta. ``stride``
    subsamples x along every axis.
    """
    spec = theta.spec
    if spec.d != 2:
        raise DimensionMismatch("the increment scan uses the 2-D SQG law")
    shift = tuple(float(s) for s in shift)
    dtheta = ScalarField(spec, shifted_increment(theta.values, spec, shift))
    dh = dissipation_density(dtheta, FractionalPower(1.0)).values
    u = sqg_velocity(theta)
    du = np.sqrt(sum(shifted_increment(c.values, spec, shift) ** 2 for c in u))
    sl = tuple(slice(None, None, stride) for _ in range(spec.d))
    return dh[sl].ravel(), du[sl].ravel()


def log_plus(x):
    x = np.asarray(x, dtype=float)
    return np.log(np.maximum(x, 1.0))


def fit_log_majorant(dh, du):
    """Smallest mean majorant a + b log+(D_h) >= |delta_h u| with a, b >= 0 (linear program)."""
    dh = np.asarray(dh, dtype=float).ravel()
    du = np.asarray(du, dtype=float).ravel()
    lp = log_plus(dh)
    c = np.array([1.0, float(lp.mean())])
    a_ub = np.stack([-np.ones_like(lp), -lp], axis=1)
    res = optimize.linprog(c, A_ub=a_ub, b_ub=-du, bounds=[(0, None), (0, None)], method="highs")
    if not res.success:
        raise InvalidInput(f"majorant fit failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


def majorant_excess(dh, du, a: float, b: float) -> float:
    """max(|delta_h u| - a - b log+ D_h); <= 0 when the majorant holds."""
    return float(np.max(np.asarray(du) - a - b * log_plus(dh)))


# --- per-snapshot records ---------------------------------------------------------

def energy(state) -> float:
    """(1/2) int |u|^2."""
    spec = state.spec
    return 0.5 * spec.h**spec.d * float(sum(np.sum(c.values**2) for c in state.velocity))


def enstrophy(state) -> float:
    """(1/2) int |curl u|^2 in 2-D, (1/2) int u_x^2 for Burgers."""
    spec = state.spec
    if spec.d == 1:
        w = gradient(state.velocity[0])[0].values
    else:
        u1, u2 = state.velocity
        w = gradient(u2)[0].values - gradient(u1)[1].values
    return 0.5 * spec.h**spec.d * float(np.sum(w**2))


@dataclass
class DiagnosticsRecord:
    time: float
    step: int
    linf_theta: float
    linf_grad: float
    energy: float
    enstrophy: float
    bkm: float
    oss: tuple
    max_D: float
    balance_ratio: float
    sup_v: float | None


@dataclass
class Recorder:
    """Observer for ``solvers.run``: one DiagnosticsRecord per snapshot."""
    config: object
    oss_scales: tuple = (0.2,)
    localizer: object = None
    c1: float | None = None
    linf0: float | None = None
    _last: tuple | None = field(default=None, repr=False)
    _bkm: float = field(default=0.0, repr=False)

    def __call__(self, state) -> DiagnosticsRecord:
        theta = primary_field(state)
        if self.linf0 is None:
            self.linf0 = float(np.max(np.abs(theta.values))) or 1.0
        q = bkm_quantity(state)
        if self._last is not None:
            t0, q0 = self._last
            self._bkm += 0.5 * (state.time - t0) * (q + q0)
        self._last = (state.time, q)
        prof = oss_profile(theta, self.oss_scales)
        bal = balance_check(state, self.config, self.c1, self.linf0)
        sup_v = None
        if self.localizer is not None:
            sup_v = displacement_field(theta, self.localizer).sup_v
        return DiagnosticsRecord(
            time=state.time,
            step=state.step,
            linf_theta=float(np.max(np.abs(theta.values))),
            linf_grad=float(np.max(_grad_norm(theta))),
            energy=energy(state),
            enstrophy=enstrophy(state),
            bkm=self._bkm,
            oss=prof.moduli,
            max_D=max_dissipation(theta, self.config),
            balance_ratio=bal.max_ratio,
            sup_v=sup_v,
        )


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def diagnostics_csv(records, oss_scales) -> str:
    head = ["time", "linf_theta", "linf_grad", "energy", "enstrophy", "bkm"]
    head += [f"oss@{float(L)!r}" for L in oss_scales] + ["balance_ratio", "sup_v"]
    lines = [",".join(head)]
    for r in records:
        row = [r.time, r.linf_theta, r.linf_grad, r.energy, r.enstrophy, r.bkm, *r.oss, r.balance_ratio, r.sup_v]
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def manifest_csv(records) -> str:
    lines = ["step,time,linf_theta,linf_grad,energy,enstrophy,bkm_integral"]
    for r in records:
        lines.append(",".join([str(r.step)] + [_cell(v) for v in (r.time, r.linf_theta, r.linf_grad,
                                                                  r.energy, r.enstrophy, r.bkm)]))
    return "\n".join(lines) + "\n"
