"""Command-line entry point: ``fraclab <command> --config run.json``.

Every run writes into its output directory a byte copy of the config
(``config.echo.json``), the command's CSV/JSON results, and ``run.log``,
the only file carrying timestamps. Exit codes: 0 success, 1 bad config,
2 failed check, 3 unexpected blow-up.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds, diagnostics, localizer, solvers
from .errors import BlowUpDetected, FraclabError
from .fields import GridSpec, resample, write_field
from .kernels import kernel_from_config

COMMANDS = ("verify-bounds", "identity-check", "localizer", "simulate", "oss-scan", "balance")
EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_BLOWUP = 0, 1, 2, 3
IDENTITY_TOL = 2e-2
REFINE_SLACK = 1e-3

log = logging.getLogger("fraclab")


class ConfigError(Exception):
    pass


NUM = (int, float)
COMMON = {"command": str, "seed": int, "output_dir": str}
FAMILY_KEYS = {"kind": str, "d": int, "n": int, "length": NUM, "max_mode": int}
CHECK_KEYS = {"theorem": str, "alpha": NUM, "k": int, "delta": NUM, "p": NUM, "constant": NUM}
SIM_KEYS = {
    "system": str, "n": int, "length": NUM, "alpha": NUM, "beta": NUM, "A": NUM, "kernel": (dict, str),
    "epsilon": NUM, "dt": NUM, "t_end": NUM, "dealias": bool, "snapshot_stride": int,
    "tail_tolerance": NUM, "recipe": str, "amplitude": NUM, "width": NUM, "max_mode": int,
    "expect_steepening": bool, "oss_scales": list, "localizer": dict, "invariants": list,
    "write_snapshots": str,
}
SCHEMAS = {
    "verify-bounds": {"family": dict, "checks": list, "trials": int},
    "identity-check": {"family": dict, "alpha": (list, *NUM), "trials": int, "refine_n": int},
    "localizer": {"q": NUM, "delta0": NUM, "linf": NUM, "c7": NUM, "cmax": NUM, "l": NUM, "y_max": NUM,
                  "samples": int, "log_inequality_trials": int},
    "simulate": SIM_KEYS,
    "oss-scan": {**SIM_KEYS, "delta": NUM, "L": NUM},
    "balance": {**SIM_KEYS, "expect": str},
}
LOCALIZER_KEYS = {"q": NUM, "l": NUM, "y_max": NUM, "samples": int, "delta0": NUM}
INVARIANTS = ("linf-nonincreasing", "energy-nonincreasing", "enstrophy-nonincreasing", "incompressible")


def _check_keys(obj: dict, schema: dict, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    for key, val in obj.items():
        if key not in schema:
            raise ConfigError(f"{where}: unknown key {key!r}")
        want = schema[key]
        if isinstance(val, bool) and bool not in (want if isinstance(want, tuple) else (want,)):
            raise ConfigError(f"{where}.{key}: expected {_type_name(want)}, got a boolean")
        if not isinstance(val, want):
            raise ConfigError(f"{where}.{key}: expected {_type_name(want)}, got {type(val).__name__}")


def _type_name(want) -> str:
    names = {int: "integer", float: "number", str: "string", dict: "object", list: "array", bool: "boolean"}
    if isinstance(want, tuple):
        return " or ".join(sorted({names[w] for w in want}))
    return names[want]


def _require(cfg: dict, keys, where: str) -> None:
    for k in keys:
        if k not in cfg:
            raise ConfigError(f"{where}: missing required key {k!r}")


def load_config(path: Path, command: str) -> tuple:
    """Parse and validate; returns (raw bytes, dict)."""
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not UTF-8") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {command!r}")
    _check_keys(cfg, {**COMMON, **SCHEMAS[command]}, "config")
    if command == "verify-bounds":
        _require(cfg, ("family", "checks", "trials"), "config")
        _check_keys(cfg["family"], FAMILY_KEYS, "config.family")
        for i, chk in enumerate(cfg["checks"]):
            _check_keys(chk, CHECK_KEYS, f"config.checks[{i}]")
            _require(chk, ("theorem", "alpha"), f"config.checks[{i}]")
            if chk["theorem"] not in bounds.THEOREMS:
                raise ConfigError(f"config.checks[{i}].theorem: unknown theorem {chk['theorem']!r}")
    elif command == "identity-check":
        _require(cfg, ("family", "alpha", "trials"), "config")
        _check_keys(cfg["family"], FAMILY_KEYS, "config.family")
    elif command == "localizer":
        _require(cfg, ("l", "y_max"), "config")
    else:
        _require(cfg, ("system", "n", "dt", "t_end", "recipe", "amplitude"), "config")
        if cfg["system"] not in solvers.SYSTEMS:
            raise ConfigError(f"config.system: unknown system {cfg['system']!r}")
        if "localizer" in cfg:
            _check_keys(cfg["localizer"], LOCALIZER_KEYS, "config.localizer")
        for name in cfg.get("invariants", []):
            if name not in INVARIANTS:
                raise ConfigError(f"config.invariants: unknown invariant {name!r}")
        if cfg.get("write_snapshots", "all") not in ("all", "final", "none"):
            raise ConfigError("config.write_snapshots: expected 'all', 'final' or 'none'")
        if command == "oss-scan":
            _require(cfg, ("delta", "L"), "config")
        if cfg.get("expect", "none") not in ("none", "below-one", "above-one"):
            raise ConfigError("config.expect: expected 'none', 'below-one' or 'above-one'")
    return raw, cfg


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --- commands ---------------------------------------------------------

def cmd_verify_bounds(cfg: dict, out: Path, seed: int, threads: int) -> int:
    family, checks, trials = cfg["family"], cfg["checks"], cfg["trials"]

    def one(t):
        f = bounds.draw(family, seed, t)
        reps = []
        for chk in checks:
            rep = bounds.run_check(f, chk)
            rep.trial = t
            reps.append(rep)
        return reps

    reports = [r for batch in _map(one, range(trials), threads) for r in batch]
    bounds.write_sweep_csv(out / "bounds.csv", reports)
    summary = {}
    for i, chk in enumerate(checks):
        mine = reports[i::len(checks)] if checks else []
        summary[f"{i}:{chk['theorem']}:alpha={chk['alpha']}"] = bounds.summarize(mine)
    _dump_json(out / "summary.json", summary)
    failed = sum(not r.passed for r in reports)
    log.info("verify-bounds: %d reports, %d failed", len(reports), failed)
    return EXIT_CHECK if failed else EXIT_OK


def cmd_identity_check(cfg: dict, out: Path, seed: int, threads: int) -> int:
    family = cfg["family"]
    alphas = cfg["alpha"] if isinstance(cfg["alpha"], list) else [cfg["alpha"]]
    refine_n = cfg.get("refine_n")

    def one(t):
        f = bounds.draw(family, seed, t)
        rows = []
        for a in alphas:
            res = bounds.verify_pointwise_identity(f, float(a))
            fine = None
            if refine_n:
                fine = bounds.verify_pointwise_identity(resample(f, refine_n), float(a))
            rows.append((t, float(a), res, fine))
        return rows

    rows = [r for batch in _map(one, range(cfg["trials"]), threads) for r in batch]
    lines = ["trial,alpha,residual,residual_refined,pass"]
    failed = 0
    for t, a, res, fine in rows:
        ok = res <= IDENTITY_TOL and (fine is None or fine <= res + REFINE_SLACK)
        failed += not ok
        lines.append(f"{t},{a!r},{res!r},{'' if fine is None else repr(fine)},{'true' if ok else 'false'}")
    (out / "identity.csv").write_text("\n".join(lines) + "\n")
    _dump_json(out / "summary.json", {"count": len(rows), "failed": failed,
                                      "max_residual": max((r[2] for r in rows), default=0.0)})
    return EXIT_CHECK if failed else EXIT_OK


def cmd_localizer(cfg: dict, out: Path, seed: int, threads: int) -> int:
    if "q" in cfg:
        q = float(cfg["q"])
    else:
        table = bounds.packaged_constants()
        q = localizer.compute_q(
            float(cfg.get("delta0", 0.02)),
            float(cfg.get("linf", 1.0)),
            float(cfg.get("c7", table.get(bounds.LOCALIZER_C7_KEY, 1.0))),
            float(cfg.get("cmax", table.get(bounds.LOCALIZER_CMAX_KEY, 1.0))),
        )
    loc = localizer.build_localizer(q, float(cfg["l"]), float(cfg["y_max"]), int(cfg.get("samples", 256)))
    loc.write_csv(out / "localizer.csv")
    ode_ok = bool(np.all(localizer.ode_margin(loc) >= -1e-12))
    half_ok = float(loc.psi_at(np.array([loc.l / 2]))[0]) == 0.0
    summary = {"q": q, "l": loc.l, "psi_at_y_max": float(loc.psi[-1]), "ode_holds": ode_ok,
               "psi_zero_at_half_l": half_ok}
    ok = ode_ok and half_ok
    trials = int(cfg.get("log_inequality_trials", 0))
    if trials:
        rng = np.random.default_rng(seed)
        triples = np.exp(rng.uniform(-10, 10, size=(trials, 3)))
        worst = min(localizer.verify_log_inequality(*t) for t in triples)
        summary["log_inequality_min_margin"] = worst
        ok = ok and worst >= -1e-12
    _dump_json(out / "summary.json", summary)
    return EXIT_OK if ok else EXIT_CHECK


def _solver_config(cfg: dict) -> solvers.SolverConfig:
    kernel = kernel_from_config(cfg["kernel"]) if "kernel" in cfg else None
    tail = cfg.get("tail_tolerance")
    return solvers.SolverConfig(
        system=cfg["system"], dt=float(cfg["dt"]), t_end=float(cfg["t_end"]),
        alpha=float(cfg.get("alpha", 0.0)), beta=float(cfg.get("beta", 0.0)), A=float(cfg.get("A", 0.0)),
        kernel=kernel, epsilon=float(cfg.get("epsilon", 0.0)), dealias=bool(cfg.get("dealias", True)),
        snapshot_stride=int(cfg.get("snapshot_stride", 1)),
        tail_tolerance=None if tail is None else float(tail),
    )


def _simulate(cfg: dict, out: Path, seed: int):
    """Run, write snapshots and CSVs; returns (result, blow-up or None, records, scales)."""
    config = _solver_config(cfg)
    spec = GridSpec(config.dimension, int(cfg["n"]), float(cfg.get("length", 2 * math.pi)))
    data = solvers.make_initial_data(cfg["recipe"], float(cfg["amplitude"]), seed, spec, config.system,
                                     width=float(cfg.get("width", 0.1)), max_mode=int(cfg.get("max_mode", 8)))
    scales = tuple(float(s) for s in cfg.get("oss_scales", [0.2]))
    loc = None
    if "localizer" in cfg:
        lc = cfg["localizer"]
        loc = localizer.build_localizer(float(lc.get("q", 1.0)), float(lc.get("l", 0.1)),
                                        float(lc.get("y_max", spec.length / 2)), int(lc.get("samples", 256)))
    rec = diagnostics.Recorder(config, oss_scales=scales, localizer=loc)
    blow = None
    try:
        result = solvers.run(config, data, observer=rec)
    except BlowUpDetected as exc:
        blow = exc
        result = exc.trajectory
    mode = cfg.get("write_snapshots", "all")
    if mode != "none":
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        states = result.trajectory if mode == "all" else result.trajectory[-1:]
        for st in states:
            for name, f in sorted(st.fields.items()):
                write_field(snap_dir / f"{st.step:06d}_{name}.txt", f)
    manifest = diagnostics.manifest_csv(result.records)
    if blow is not None:
        manifest += f"# blow-up t={blow.time!r} max_gradient={blow.max_gradient!r} reason={blow.reason}\n"
    (out / "manifest.csv").write_text(manifest)
    (out / "diagnostics.csv").write_text(diagnostics.diagnostics_csv(result.records, scales))
    return result, blow, result.records


def _invariant_failures(names, result) -> dict:
    states = result.trajectory
    recs = result.records
    out = {}
    if "linf-nonincreasing" in names:
        top0 = recs[0].linf_theta
        out["linf-nonincreasing"] = all(r.linf_theta <= top0 * (1 + 1e-3) for r in recs)
    if "energy-nonincreasing" in names:
        e = [r.energy for r in recs]
        out["energy-nonincreasing"] = all(b <= a * (1 + 1e-6) for a, b in zip(e, e[1:]))
    if "enstrophy-nonincreasing" in names:
        z = [r.enstrophy for r in recs]
        out["enstrophy-nonincreasing"] = all(b <= a * (1 + 1e-6) for a, b in zip(z, z[1:]))
    if "incompressible" in names:
        from .operators import divergence_defect
        out["incompressible"] = all(divergence_defect(s.velocity) <= 1e-10 for s in states if len(s.velocity) == 2)
    return out


def _blowup_summary(blow):
    if blow is None:
        return None
    return {"time": blow.time, "max_gradient": blow.max_gradient, "reason": blow.reason}


def _finish_sim(cfg, out, blow, summary, ok: bool) -> int:
    summary["blowup"] = _blowup_summary(blow)
    summary["expect_steepening"] = bool(cfg.get("expect_steepening", False))
    _dump_json(out / "summary.json", summary)
    if blow is not None and not cfg.get("expect_steepening", False):
        log.warning("unexpected blow-up: %s", blow)
        return EXIT_BLOWUP
    return EXIT_OK if ok else EXIT_CHECK


def cmd_simulate(cfg: dict, out: Path, seed: int, threads: int) -> int:
    result, blow, recs = _simulate(cfg, out, seed)
    inv = _invariant_failures(cfg.get("invariants", []), result)
    summary = {"snapshots": len(recs), "final_time": recs[-1].time if recs else 0.0,
               "sup_linf_grad": max((r.linf_grad for r in recs), default=0.0), "invariants": inv}
    return _finish_sim(cfg, out, blow, summary, all(inv.values()))


def cmd_oss_scan(cfg: dict, out: Path, seed: int, threads: int) -> int:
    delta, L = float(cfg["delta"]), float(cfg["L"])
    result, blow, recs = _simulate(cfg, out, seed)
    lines = ["time,modulus,grid_error"]
    holds, first = True, None
    for st in result.trajectory:
        theta = diagnostics.primary_field(st)
        prof = diagnostics.oss_profile(theta, (L,))
        m = prof.moduli[0]
        lines.append(f"{st.time!r},{m!r},{prof.grid_error!r}")
        if holds and m > delta:
            holds, first = False, st.time
    (out / "oss.csv").write_text("\n".join(lines) + "\n")
    summary = {"delta": delta, "L": L, "uniform_oss": holds, "first_violation": first}
    return _finish_sim(cfg, out, blow, summary, holds)


def cmd_balance(cfg: dict, out: Path, seed: int, threads: int) -> int:
    result, blow, recs = _simulate(cfg, out, seed)
    lines = ["time,max_ratio"] + [f"{r.time!r},{r.balance_ratio!r}" for r in recs]
    (out / "balance.csv").write_text("\n".join(lines) + "\n")
    peak = max((r.balance_ratio for r in recs), default=0.0)
    expect = cfg.get("expect", "none")
    ok = expect == "none" or (expect == "below-one" and peak < 1) or (expect == "above-one" and peak > 1)
    return _finish_sim(cfg, out, blow, {"max_ratio": peak, "expect": expect}, ok)


HANDLERS = {
    "verify-bounds": cmd_verify_bounds,
    "identity-check": cmd_identity_check,
    "localizer": cmd_localizer,
    "simulate": cmd_simulate,
    "oss-scan": cmd_oss_scan,
    "balance": cmd_balance,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fraclab", description="Nonlocal dissipation experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--output", type=Path, default=None, help="output directory (default: config output_dir)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    return ap


def _setup_log(out: Path) -> logging.Handler:
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw, cfg = load_config(args.config, args.command)
    except ConfigError as exc:
        print(f"fraclab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.output or Path(cfg.get("output_dir", f"runs/{args.command}"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo.json").write_bytes(raw)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    handler = _setup_log(out)
    try:
        log.info("command=%s seed=%d output=%s", args.command, seed, out)
        code = HANDLERS[args.command](cfg, out, seed, max(1, args.threads))
        log.info("exit code %d", code)
        return code
    except (FraclabError, ValueError, KeyError) as exc:
        log.error("invalid parameters: %s", exc)
        print(f"fraclab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        log.removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
