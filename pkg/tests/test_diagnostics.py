import math

import numpy as np
import pytest

from fraclab import bounds
from fraclab.bounds import packaged_constants
from fraclab.diagnostics import (
    Recorder,
    balance_check,
    bkm_integral,
    bkm_partial,
    diagnostics_csv,
    displacement_field,
    fit_log_majorant,
    increment_log_bound_scan,
    majorant_excess,
    manifest_csv,
    oss_modulus,
    oss_profile,
    oss_scale_for_delta,
    pair_scan_sup_v,
    supercritical_conditional_check,
    uniform_oss_check,
)
from fraclab.errors import InvalidAlpha, InvalidDelta
from fraclab.fields import GridSpec, ScalarField, field_from_function, gradient
from fraclab.localizer import build_localizer
from fraclab.solvers import SolverConfig, SolverState, initial_state, make_initial_data, run

from conftest import band_limited


def brute_modulus(values, h, L):
    n = values.size
    best = 0.0
    for k in range(1, n // 2 + 1):
        if k * h <= L + 1e-12:
            best = max(best, float(np.max(np.abs(np.roll(values, -k) - values))))
    return best


def test_oss_modulus_examples():
    s = GridSpec(1, 1024)
    assert oss_modulus(ScalarField(s, np.full(1024, 3.0)), 0.5) == 0.0
    sin = field_from_function(s, np.sin)
    assert oss_modulus(sin, math.pi) == pytest.approx(2.0, abs=1e-12)
    val = oss_modulus(sin, 0.1)
    assert val == brute_modulus(sin.values, s.h, 0.1)
    # the continuum value 2 sin(0.05) lies within the grid error h max|theta'|
    assert 0 <= 2 * math.sin(0.05) - val <= s.h * 1.0


def test_oss_profile_properties():
    f = band_limited(GridSpec(2, 32), 4, seed=2)
    scales = [0.2, 0.5, 1.0, 3.0, 10.0]
    prof = oss_profile(f, scales)
    assert list(prof.moduli) == sorted(prof.moduli)
    assert max(prof.moduli) <= 2 * np.max(np.abs(f.values))
    assert prof.moduli[-1] == pytest.approx(np.ptp(f.values))
    for L, m in zip(scales[:-1], prof.moduli):
        assert m == oss_modulus(f, L)
    shifted = oss_profile(ScalarField(f.spec, 3 * f.values + 7.0), scales)
    assert np.allclose(shifted.moduli, 3 * np.array(prof.moduli), rtol=1e-12)


def test_oss_scale_for_delta():
    s = GridSpec(1, 1024)
    sin = field_from_function(s, np.sin)
    assert oss_scale_for_delta(sin, 2.5) == s.diameter
    L = oss_scale_for_delta(sin, 0.09996)
    assert abs(L - 0.1) <= s.h
    assert oss_modulus(sin, L) <= 0.09996
    assert oss_scale_for_delta(sin * 2.0, 0.05) <= oss_scale_for_delta(sin, 0.05)
    assert oss_scale_for_delta(sin, 1e-6) == 0.0


def test_uniform_oss_zero_solution():
    spec = GridSpec(2, 32)
    zero = {"theta": ScalarField(spec, np.zeros(spec.shape))}
    res = run(SolverConfig("SQG2D", alpha=1.0, dt=0.1, t_end=0.5), zero)
    assert uniform_oss_check(res, 1e-3, 0.5) == (True, None)


def test_uniform_oss_detects_burgers_front():
    spec = GridSpec(1, 1024)
    a, w = 1.0, 0.3
    data = make_initial_data("steep-front", a, 0, spec, "Burgers1D", width=w)
    res = run(SolverConfig("Burgers1D", dt=1e-3, t_end=0.32), data)
    ok, when = uniform_oss_check(res, 1.0, 2 * spec.h)
    assert not ok
    assert when == pytest.approx(w / a, rel=0.1)


def test_displacement_examples():
    s = GridSpec(1, 256)
    assert displacement_field(ScalarField(s, np.ones(256)), None).sup_v == 0.0
    sin = field_from_function(s, np.sin)
    trivial = build_localizer(0.0, 0.1, math.pi)
    rep = displacement_field(sin, trivial)
    assert rep.sup_v == pytest.approx(4.0, abs=1e-10)
    assert rep.sup_v == pytest.approx(oss_modulus(sin, math.pi) ** 2, abs=1e-10)
    loc = build_localizer(1.0, 0.1, math.pi)
    shells = displacement_field(sin, loc, delta0=4.0)
    assert shells.sup_v == pytest.approx(pair_scan_sup_v(sin, loc), abs=1e-3)
    assert shells.threshold == 1.0 and shells.below_threshold


def test_displacement_2d_against_pair_scan():
    f = band_limited(GridSpec(2, 32), 3, seed=5)
    loc = build_localizer(0.5, 0.2, 4.0)
    rep = displacement_field(f, loc)
    oracle = pair_scan_sup_v(f, loc)
    assert rep.sup_v == pytest.approx(oracle, rel=5e-2)


def sqg_state(theta):
    cfg = SolverConfig("SQG2D", alpha=1.0, dt=0.1, t_end=1.0)
    return initial_state(cfg, {"theta": theta}), cfg


def test_balance_examples():
    spec = GridSpec(2, 64)
    st, cfg = sqg_state(ScalarField(spec, np.zeros(spec.shape)))
    assert balance_check(st, cfg).max_ratio == 0.0
    small = make_initial_data("single-mode", 0.05, 0, spec, "SQG2D")["theta"]
    st, cfg = sqg_state(small)
    rep = balance_check(st, cfg)
    assert 0 < rep.max_ratio < 1
    assert rep.c1 == pytest.approx(1 / (2 * packaged_constants()[bounds.pointwise_key(2, 1.0)]))
    neg, _ = sqg_state(-small)
    assert balance_check(neg, cfg).max_ratio == pytest.approx(rep.max_ratio, rel=1e-12)
    steep = make_initial_data("steep-front", 1.0, 0, GridSpec(2, 128), "SQG2D", width=0.1)["theta"]
    st, cfg = sqg_state(steep)
    assert balance_check(st, cfg).max_ratio > 1


def frozen(omega, times):
    return [SolverState(t, {"omega": omega}, ()) for t in times]


def test_bkm_examples():
    spec = GridSpec(2, 32)
    x1, _ = spec.coords()
    zero = ScalarField(spec, np.zeros(spec.shape))
    assert bkm_integral(frozen(zero, np.linspace(0, 2, 11))) == 0.0
    cos = ScalarField(spec, np.cos(x1))
    assert bkm_integral(frozen(cos, np.linspace(0, 2, 21))) == pytest.approx(2.0, abs=1e-6)
    t = np.linspace(0, 3, 31)
    v = np.exp(np.sin(t))
    whole = bkm_partial(t, v)[-1]
    split = bkm_partial(t[:11], v[:11])[-1] + bkm_partial(t[10:], v[10:])[-1]
    assert whole == pytest.approx(split, abs=1e-12)
    assert np.all(np.diff(bkm_partial(t, v)) >= 0)


def test_supercritical_check():
    f = band_limited(GridSpec(2, 32), 4, seed=1)
    rep = supercritical_conditional_check(f, 0.6, 0.5)
    assert rep.criterion and rep.gap > 0 and rep.seminorm > 0
    rep = supercritical_conditional_check(f, 0.6, 0.3)
    assert not rep.criterion and rep.gap < 0
    edge = supercritical_conditional_check(f, 0.6, 1 - 0.6)
    assert not edge.criterion
    with pytest.raises(InvalidAlpha):
        supercritical_conditional_check(f, 1.0, 0.5)
    with pytest.raises(InvalidDelta):
        supercritical_conditional_check(f, 0.5, 0.0)


def test_increment_scan_zero_and_resolution():
    spec = GridSpec(2, 64)
    dh, du = increment_log_bound_scan(ScalarField(spec, np.zeros(spec.shape)), (0.1, 0.0))
    assert np.all(dh == 0) and np.all(du == 0)
    pairs = []
    for n, stride in ((256, 1), (512, 2)):
        s = GridSpec(2, n)
        theta = field_from_function(s, lambda x, y: np.cos(x + 2 * y))
        pairs.append(increment_log_bound_scan(theta, (0.2, 0.1), stride=stride))
    assert np.max(np.abs(pairs[0][0] - pairs[1][0])) <= 1e-3 * np.max(pairs[1][0])
    assert np.max(np.abs(pairs[0][1] - pairs[1][1])) <= 1e-3 * np.max(pairs[1][1])


def test_frozen_majorant_holds_out_of_sample():
    table = packaged_constants()
    a, b = table[bounds.MAJORANT_A_KEY], table[bounds.MAJORANT_B_KEY]
    fam = {"kind": "band-limited", "d": 2, "n": 64}
    for t in range(100):
        f = bounds.draw(fam, 77, t)
        dh, du = increment_log_bound_scan(f, (0.15, -0.05), stride=2)
        assert majorant_excess(dh, du, a, b) <= 0


def test_fit_log_majorant_is_tight():
    rng = np.random.default_rng(0)
    dh = np.exp(rng.uniform(-3, 4, 500))
    du = 0.5 + 0.3 * np.log(np.maximum(dh, 1)) * rng.uniform(0, 1, 500)
    a, b = fit_log_majorant(dh, du)
    assert majorant_excess(dh, du, a, b) <= 1e-9
    assert majorant_excess(dh, du, 0.99 * a, 0.99 * b) > 0


def test_recorder_and_csv():
    spec = GridSpec(2, 32)
    data = make_initial_data("random", 0.2, 1, spec, "SQG2D")
    cfg = SolverConfig("SQG2D", alpha=1.0, dt=0.05, t_end=0.2, snapshot_stride=2)
    rec = Recorder(cfg, oss_scales=(0.2, 0.5), localizer=build_localizer(0.1, 0.1, 3.0))
    res = run(cfg, data, observer=rec)
    assert len(res.records) == 3
    bk = [r.bkm for r in res.records]
    assert bk[0] == 0 and bk == sorted(bk)
    assert bk[-1] == pytest.approx(bkm_integral(res), rel=1e-12)
    text = diagnostics_csv(res.records, (0.2, 0.5))
    assert text.splitlines()[0] == "time,linf_theta,linf_grad,energy,enstrophy,bkm,oss@0.2,oss@0.5,balance_ratio,sup_v"
    man = manifest_csv(res.records)
    assert man.splitlines()[0] == "step,time,linf_theta,linf_grad,energy,enstrophy,bkm_integral"
    assert man.splitlines()[-1].startswith("4,")
