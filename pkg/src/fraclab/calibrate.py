"""Regenerate the frozen constants file.

Protocol: draw ``--trials`` seeded fields, compute for each the smallest
constant that makes the inequality pass, and freeze a safety factor of 2
beyond the worst case (twice the max for upper constants, half the min for
lower ones). The seed differs from the one used by the acceptance sweeps,
so those sweeps test the frozen values out of sample.

    python3 -m fraclab.calibrate [--trials 1000] [--seed 1001] [--output PATH]
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .bounds import (
    LOCALIZER_C7_KEY,
    LOCALIZER_CMAX_KEY,
    MAJORANT_A_KEY,
    MAJORANT_B_KEY,
    draw,
    holder_key,
    lp_key,
    periodic_key,
    pointwise_key,
)
from .diagnostics import fit_log_majorant, increment_log_bound_scan, log_plus, shifted_increment
from .fields import ScalarField, gradient, increment_profile, lp_norm
from .kernels import FractionalPower
from .operators import apply_quadrature_torus, dissipation_density

SAFETY = 2.0
ALPHAS = (0.5, 1.0, 1.5)
DELTAS = (0.25, 0.5, 0.75)
PS = (1.0, 2.0, 4.0)
MIXTURE = {"kind": "gaussian-mixture", "d": 1}
PERIODIC = {"kind": "band-limited", "d": 1, "n": 256}
PLANAR = {"kind": "band-limited", "d": 2, "n": 64}
SHIFTS = ((0.1, 0.0), (0.0, 0.2), (0.3, 0.3))


def _holder_norms(f: ScalarField, deltas) -> dict:
    dist, inc = increment_profile(f, min_distance=f.spec.h)
    top = float(np.max(np.abs(f.values)))
    return {d: top + float(np.max(inc / dist**d)) for d in deltas}


def derivative_constants(trials: int, seed: int) -> dict:
    """Worst-case constants for the Holder- and Lp-norm gradient bounds."""
    need = {}
    for t in range(trials):
        f = draw(MIXTURE, seed, t)
        f, g, loc = bounds._derivative_max(f, 0, True)
        gmax = float(g.values[loc])
        norms = _holder_norms(f, DELTAS)
        lp = {p: lp_norm(f, p) for p in PS}
        for a in ALPHAS:
            lhs = float(apply_quadrature_torus(g, FractionalPower(a)).values[loc])
            for dl in DELTAS:
                key = holder_key(1, a, dl)
                need[key] = max(need.get(key, 0.0), bounds.holder_rhs(gmax, norms[dl], 1.0, a, dl) / lhs)
            for p in PS:
                key = lp_key(1, a, p)
                need[key] = max(need.get(key, 0.0), bounds.lp_rhs(gmax, lp[p], 1.0, a, p, 1) / lhs)
    return need


def periodic_constants(trials: int, seed: int) -> dict:
    need = {}
    for t in range(trials):
        f = draw(PERIODIC, seed, t)
        f, g, loc = bounds._derivative_max(f, 0, True)
        gmax = float(g.values[loc])
        norm = lp_norm(f, math.inf)
        for a in ALPHAS:
            lhs = float(apply_quadrature_torus(g, FractionalPower(a)).values[loc])
            c = min(gmax / norm, bounds.linf_rhs(gmax, norm, 1.0, a) / lhs)
            key = periodic_key(1, a)
            need[key] = max(need.get(key, 0.0), c)
    return need


def pointwise_constant_needed(f: ScalarField, alpha: float) -> float:
    """max over x of 2 |G|^(2+a) / (D |f|^a): the smallest c valid at every point."""
    grads = gradient(f)
    dens = dissipation_density(grads, FractionalPower(alpha)).values
    g = np.sqrt(sum(c.values**2 for c in grads))
    norm = lp_norm(f, math.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(g > 0, 2.0 * g ** (2 + alpha) / (dens * norm**alpha), 0.0)
    return float(np.max(ratio))


def planar_constants(trials: int, seed: int) -> dict:
    """Pointwise gradient constant (d = 2, alpha = 1) and localizer inputs."""
    c_need = 0.0
    c7 = math.inf
    dh_all, du_all = [], []
    for t in range(trials):
        f = draw(PLANAR, seed, t)
        c_need = max(c_need, pointwise_constant_needed(f, 1.0))
        norm = lp_norm(f, math.inf)
        for s in SHIFTS:
            dh, du = increment_log_bound_scan(f, s, stride=2)
            dh_all.append(dh)
            du_all.append(du)
            inc = np.abs(shifted_increment(f.values, f.spec, s))[::2, ::2].ravel()
            keep = inc > 1e-8 * float(inc.max())
            r = math.hypot(*s)
            c7 = min(c7, float(np.min(0.5 * dh[keep] * r * norm / inc[keep] ** 3)))
    a, b = fit_log_majorant(np.concatenate(dh_all), np.concatenate(du_all))
    return {"pointwise": c_need, "c7": c7, "a": a, "b": b}


def _line(key, value, note) -> str:
    return f"{key} = {float(value)!r}  # {note}"


def build_constants(trials: int, seed: int, log=print) -> str:
    lines = [
        "# fraclab frozen constants v1",
        f"# regenerate with: python3 -m fraclab.calibrate --trials {trials} --seed {seed}",
        f"# upper constants are {SAFETY:g} x the worst case over the calibration draws;",
        f"# lower constants are the best case / {SAFETY:g}.",
    ]
    log("derivative bounds ...")
    mix = f"{trials} gaussian-mixture fields d=1 N=1024 L=8pi seed={seed}"
    for key, v in sorted(derivative_constants(trials, seed).items()):
        lines.append(_line(key, SAFETY * v, f"{SAFETY:g} x max needed {v!r} over {mix}"))
    log("periodic dichotomy ...")
    per = f"{trials} band-limited fields d=1 N=256 modes<=8 seed={seed}"
    for key, v in sorted(periodic_constants(trials, seed).items()):
        lines.append(_line(key, SAFETY * v, f"{SAFETY:g} x max needed {v!r} over {per}"))
    log("planar pointwise and localizer inputs ...")
    pl = planar_constants(trials, seed)
    planar = f"{trials} band-limited fields d=2 N=64 modes<=8 seed={seed}"
    lines.append(_line(pointwise_key(2, 1.0), SAFETY * pl["pointwise"],
                       f"{SAFETY:g} x max over all grid points needed {pl['pointwise']!r} over {planar}"))
    shifts = " ".join(f"({s[0]:g},{s[1]:g})" for s in SHIFTS)
    lines.append(_line(LOCALIZER_C7_KEY, pl["c7"] / SAFETY,
                       f"min {pl['c7']!r} / {SAFETY:g} of D_h|h||theta|/(2|delta_h theta|^3), shifts {shifts}, {planar}"))
    a, b = SAFETY * pl["a"], SAFETY * pl["b"]
    lines.append(_line(MAJORANT_A_KEY, a, f"{SAFETY:g} x LP fit {pl['a']!r} of |delta_h u| <= a + b log+ D_h, same draws"))
    lines.append(_line(MAJORANT_B_KEY, b, f"{SAFETY:g} x LP fit {pl['b']!r}, same draws"))
    cp = 1.0 + a + b * float(log_plus(8.0 * b))
    lines.append(_line(LOCALIZER_CMAX_KEY, max(cp, b),
                       "max(1 + a + b log+(8 b), b) for unit sup-norm data"))
    return "\n".join(lines) + "\n"


def default_output() -> Path:
    return Path(__file__).resolve().parent / "data" / "constants.v1"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python3 -m fraclab.calibrate", description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1001)
    ap.add_argument("--output", type=Path, default=None)
    args = ap.parse_args(argv)
    text = build_constants(args.trials, args.seed, log=lambda m: print(m, file=sys.stderr))
    out = args.output or default_output()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
