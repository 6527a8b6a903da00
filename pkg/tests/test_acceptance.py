"""Acceptance gate: one printed PASS/FAIL line per criterion.

Run with ``pytest -v tests/test_acceptance.py``; the verdict lines are
printed outside output capture so they land in the pytest log.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from fraclab import bounds, diagnostics
from fraclab.bounds import draw, run_check, verify_pointwise_identity
from fraclab.cli import main
from fraclab.errors import BlowUpDetected
from fraclab.fields import GridSpec, ScalarField, gradient, resample
from fraclab.kernels import FractionalPower, reference_weak_kernel
from fraclab.localizer import F, F_inverse, build_localizer, compute_q, ode_margin, verify_log_inequality
from fraclab.operators import apply_quadrature_torus, apply_spectral, divergence_defect
from fraclab.solvers import SolverConfig, make_initial_data, run

from conftest import band_limited

ROOT = Path(__file__).resolve().parents[1]
EXPERIMENTS = ROOT / "experiments"
ALPHAS = (0.5, 1.0, 1.5)
SWEEP_SEED = 2026


def verdict(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def grad_max(f: ScalarField) -> float:
    return float(np.max(np.sqrt(sum(g.values**2 for g in gradient(f)))))


def test_01_operator_oracle_agreement(capsys):
    start = time.perf_counter()
    worst = 0.0
    for d in (1, 2):
        spec = GridSpec(d, 256)
        for alpha in ALPHAS:
            for seed in range(5):
                f = band_limited(spec, spec.n // 8, seed)
                quad = apply_quadrature_torus(f, FractionalPower(alpha)).values
                ref = apply_spectral(f, alpha).values
                worst = max(worst, float(np.max(np.abs(quad - ref)) / np.max(np.abs(ref))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-2 and elapsed <= 60
    verdict(capsys, 1, ok, f"quadrature vs spectral rel Linf {worst:.2e} <= 1e-2, {elapsed:.1f}s <= 60s")


def sweep_pass(family, checks, trials=100):
    reps = [run_check(draw(family, SWEEP_SEED, t), chk) for t in range(trials) for chk in checks]
    rate = sum(r.passed for r in reps) / len(reps)
    return rate, min(r.margin for r in reps), len(reps)


def test_02_linf_suite_explicit_constant(capsys):
    checks = [{"theorem": "Linf", "alpha": a} for a in ALPHAS]
    rate, margin, n = sweep_pass({"kind": "gaussian-mixture", "d": 1}, checks)
    const = ", ".join(f"{bounds.linf_constant(1, a):.4g}" for a in ALPHAS)
    verdict(capsys, 2, rate == 1.0, f"{n} checks, pass rate {rate}, min margin {margin:.3e}, constants {const}")


def test_03_calibrated_suites(capsys):
    mixture = {"kind": "gaussian-mixture", "d": 1}
    checks = [{"theorem": "Holder", "alpha": a, "delta": dl} for a in ALPHAS for dl in (0.25, 0.5, 0.75)]
    checks += [{"theorem": "Lp", "alpha": a, "p": p} for a in ALPHAS for p in (1.0, 2.0, 4.0)]
    rate1, m1, n1 = sweep_pass(mixture, checks)
    periodic = [{"theorem": "Periodic", "alpha": a} for a in ALPHAS]
    rate2, m2, n2 = sweep_pass({"kind": "band-limited", "d": 1, "n": 256}, periodic)
    constants = Path(bounds.__file__).parent / "data" / "constants.v1"
    frozen = constants.is_file() and "regenerate with" in constants.read_text()
    ok = rate1 == 1.0 and rate2 == 1.0 and frozen
    verdict(capsys, 3, ok, f"Holder/Lp {n1} checks rate {rate1} (min margin {m1:.2e}); "
                           f"Periodic {n2} checks rate {rate2}; constants file present={frozen}")


def test_04_pointwise_identity(capsys):
    family = {"kind": "band-limited", "d": 1, "n": 256}
    worst, worst_growth = 0.0, -math.inf
    for t in range(100):
        f = draw(family, SWEEP_SEED, t)
        fine = resample(f, 512)
        for a in ALPHAS:
            coarse = verify_pointwise_identity(f, a)
            refined = verify_pointwise_identity(fine, a)
            worst = max(worst, coarse)
            worst_growth = max(worst_growth, refined - coarse)
    ok = worst <= 2e-2 and worst_growth <= 1e-3
    verdict(capsys, 4, ok, f"max residual {worst:.2e} <= 2e-2; max growth N=256->512 {worst_growth:.2e} <= 1e-3")


def test_05_localizer(capsys):
    x = np.concatenate([[0.0], np.geomspace(1e-12, 1e6, 20000), [1e6]])
    round_trip = float(np.max(np.abs(F(F_inverse(x)) - x) / np.maximum(x, 1.0)))
    table = bounds.packaged_constants()
    q = compute_q(0.02, 1.0, table[bounds.LOCALIZER_C7_KEY], table[bounds.LOCALIZER_CMAX_KEY])
    ode_ok, half_ok = True, True
    for qq, l in ((q, 0.1), (1.0, 0.05), (50.0, 0.5)):
        loc = build_localizer(qq, l, math.pi)
        ode_ok &= bool(np.all(ode_margin(loc) >= 0))
        half_ok &= float(loc.psi_at(np.array([l / 2]))[0]) == 0.0
    rng = np.random.default_rng(SWEEP_SEED)
    triples = np.exp(rng.uniform(-10, 10, size=(10_000, 3)))
    log_margin = min(verify_log_inequality(*t) for t in triples)
    ok = round_trip <= 1e-10 and ode_ok and half_ok and log_margin >= 0
    verdict(capsys, 5, ok, f"F(F^-1(x)) rel err {round_trip:.1e}; ODE at all samples={ode_ok}; "
                           f"Psi(l/2)==0 {half_ok}; log inequality min margin {log_margin:.2e} on 1e4 triples")


def test_06_conservation_and_monotonicity(capsys):
    spec = GridSpec(2, 64)
    data = make_initial_data("random", 2.0, 8, spec, "ModEuler2D")
    e_jump = z_jump = 0.0
    div = 0.0
    for kern, alpha in ((None, 0.5), (reference_weak_kernel(), 0.0)):
        cfg = SolverConfig("ModEuler2D", alpha=alpha, A=1.5, kernel=kern, dt=0.01, t_end=2.0)
        traj = run(cfg, data).trajectory
        e = np.array([diagnostics.energy(s) for s in traj])
        z = np.array([diagnostics.enstrophy(s) for s in traj])
        e_jump = max(e_jump, float(np.max(np.diff(e) / e[:-1])))
        z_jump = max(z_jump, float(np.max(np.diff(z) / z[:-1])))
        div = max(div, max(divergence_defect(s.velocity) for s in traj))
    linf_growth = 0.0
    runs = [
        (SolverConfig("SQG2D", alpha=1.0, dt=0.01, t_end=1.0, snapshot_stride=5),
         make_initial_data("random", 1.0, 4, spec, "SQG2D")),
        (SolverConfig("Boussinesq2D", alpha=1.0, beta=1.0, dt=0.01, t_end=1.0, snapshot_stride=5),
         make_initial_data("two-mode", 1.0, 0, spec, "Boussinesq2D")),
    ]
    for cfg, init in runs:
        traj = run(cfg, init).trajectory
        top0 = float(np.max(np.abs(init["theta"].values)))
        top = max(float(np.max(np.abs(s["theta"].values))) for s in traj)
        linf_growth = max(linf_growth, top / top0 - 1)
        div = max(div, max(divergence_defect(s.velocity) for s in traj))
    ok = e_jump <= 1e-6 and z_jump <= 1e-6 and linf_growth <= 1e-3 and div <= 1e-10
    verdict(capsys, 6, ok, f"ModEuler max per-step rel increase energy {e_jump:.1e}, enstrophy {z_jump:.1e} "
                           f"(<= 1e-6); theta Linf growth {linf_growth:.1e} (<= 1e-3); div {div:.1e} (<= 1e-10)")


def test_07_burgers_anchors(capsys):
    spec = GridSpec(1, 1024)
    u0 = {"u": ScalarField(spec, np.sin(spec.axis()))}
    cfg = SolverConfig("Burgers1D", dt=1e-3, t_end=1.2, snapshot_stride=10, tail_tolerance=1e-3)
    try:
        traj = run(cfg, u0).trajectory
        steep_time, steep_grad = math.inf, max(grad_max(s["u"]) for s in traj)
        for s in traj:
            if grad_max(s["u"]) >= 10:
                steep_time = s.time
                break
    except BlowUpDetected as exc:
        steep_time, steep_grad = exc.time, exc.max_gradient
    cfg = SolverConfig("Burgers1D", alpha=1.0, dt=2e-3, t_end=10.0, snapshot_stride=50, tail_tolerance=1e-3)
    critical = max(grad_max(s["u"]) for s in run(cfg, u0).trajectory)
    g0 = grad_max(u0["u"])
    ok = steep_grad >= 10 and steep_time < 1.2 and critical <= 2 * g0
    verdict(capsys, 7, ok, f"inviscid max|u_x| {steep_grad:.1f} >= 10 at t={steep_time:.3f} < 1.2; "
                           f"critical sup max|u_x| {critical:.4f} <= {2 * g0:.4f}")


def test_08_oss_persistence(capsys, tmp_path):
    out = tmp_path / "oss"
    code = main(["oss-scan", "--config", str(EXPERIMENTS / "sqg-oss.json"), "--output", str(out)])
    rows = (out / "oss.csv").read_text().splitlines()
    moduli = [float(r.split(",")[1]) for r in rows[1:]]
    times = [float(r.split(",")[0]) for r in rows[1:]]
    summary = json.loads((out / "summary.json").read_text())
    ok = code == 0 and summary["uniform_oss"] and times[-1] == pytest.approx(5.0) and max(moduli) <= 0.02
    verdict(capsys, 8, ok, f"SQG a=0.05 N=256 T=5: {len(moduli)} modulus samples, "
                           f"max oscillation over |h|<=0.2 {max(moduli):.4e} <= 0.02")


def boussinesq_error(T, n=64):
    spec = GridSpec(2, n)
    x1, _ = spec.coords()
    data = {"omega": ScalarField(spec, np.zeros(spec.shape)), "theta": ScalarField(spec, np.cos(x1))}
    cfg = SolverConfig("Boussinesq2D", alpha=1.0, beta=1.0, dt=T / 20, t_end=T)
    omega = run(cfg, data).trajectory[-1]["omega"].values
    # d1 theta0 = -sin x1
    return float(np.max(np.abs(omega - T * (-np.sin(x1)))))


def test_09_boussinesq_short_time(capsys):
    ts = (0.1, 0.05, 0.025)
    e = [boussinesq_error(t) for t in ts]
    orders = [math.log2(e[0] / e[1]), math.log2(e[1] / e[2])]
    verdict(capsys, 9, min(orders) >= 1.9, f"errors {', '.join(f'{x:.3e}' for x in e)}; "
                                           f"measured orders {orders[0]:.3f}, {orders[1]:.3f} >= 1.9")


def tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "run.log"}


def test_10_determinism(capsys, tmp_path):
    mismatched = []
    configs = sorted(EXPERIMENTS.glob("*.json"))
    for cfg in configs:
        command = json.loads(cfg.read_text())["command"]
        trees = []
        for rep in ("a", "b"):
            out = tmp_path / cfg.stem / rep
            main([command, "--config", str(cfg), "--output", str(out), "--threads", "2" if rep == "b" else "1"])
            trees.append(tree(out))
        if trees[0] != trees[1] or not trees[0]:
            mismatched.append(cfg.stem)
    verdict(capsys, 10, not mismatched, f"{len(configs)} shipped experiments rerun (1 vs 2 threads): "
                                        f"byte-identical trees except run.log; mismatches {mismatched or 'none'}")
