import math

import numpy as np
import pytest

from fraclab.errors import InvalidInput, InvalidRange
from fraclab.localizer import F, F_inverse, build_localizer, compute_q, ode_margin, profile, verify_log_inequality


def test_F_examples():
    assert F(0.0) == 0.0
    assert F(1.0) == pytest.approx(1 + math.log(2), rel=1e-15)
    assert F(math.e - 1) == pytest.approx(2 * (math.e - 1), rel=1e-15)
    with pytest.raises(InvalidInput):
        F(-0.1)


def bisect_inverse(x):
    lo, hi = 0.0, max(x, 1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * (1 + math.log1p(mid)) < x:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_F_inverse_examples():
    assert F_inverse(0.0) == 0.0
    assert F_inverse(1 + math.log(2)) == pytest.approx(1.0, abs=1e-10)
    for x in (0.1, 1.0, 10.0, 1000.0):
        p = F_inverse(x)
        assert x / (1 + math.log1p(x)) <= p <= x
        assert p == pytest.approx(bisect_inverse(x), rel=1e-12)


def test_F_round_trip_wide_range():
    xs = np.concatenate([[0.0], np.geomspace(1e-8, 1e6, 2000)])
    back = F(F_inverse(xs))
    assert np.max(np.abs(back - xs) / np.maximum(xs, 1e-300)) < 1e-12


def test_compute_q():
    assert compute_q(4, 1, 1, 1) == pytest.approx(1.0)
    assert compute_q(8, 1, 1, 1) == pytest.approx(2 * compute_q(4, 1, 1, 1))
    assert compute_q(0.35, 2.0, 0.8, 3.1) == pytest.approx(0.35 * 0.8 * 2.0 / (4 * 3.1))
    with pytest.raises(InvalidInput):
        compute_q(0.0, 1, 1, 1)


def test_build_localizer_invariants():
    loc = build_localizer(q=0.3, l=0.05, y_max=math.pi)
    assert loc.y.size >= 128
    assert loc.psi_at(np.array([0.025]))[0] == 0.0
    assert np.all(loc.psi[loc.y <= loc.l / 2] == 0.0)
    assert np.all(np.diff(loc.psi) >= 0)
    assert np.all(ode_margin(loc) >= -1e-14)
    sat = loc.y >= loc.l
    assert np.allclose(loc.psi_prime[sat], profile(loc.y[sat], loc.q), rtol=1e-14)
    assert np.max(np.abs(loc.phi * np.exp(loc.psi) - 1)) < 1e-12
    assert loc.phi[0] == 1.0 and np.all(loc.phi > 0) and np.all(np.diff(loc.phi) <= 0)
    assert loc.psi[-1] > 0


def test_psi_matches_closed_integral_beyond_ramp():
    from fraclab.localizer import G
    loc = build_localizer(q=0.7, l=0.1, y_max=3.0)
    y = 2.0
    ramp_part = loc.psi_at(np.array([loc.l]))[0]
    assert loc.psi_at(np.array([y]))[0] == pytest.approx(ramp_part + G(y, 0.7, 0.1), abs=1e-9)


def test_halving_l_increases_psi():
    a = build_localizer(q=0.5, l=0.2, y_max=3.0)
    b = build_localizer(q=0.5, l=0.1, y_max=3.0)
    ys = np.linspace(0.2, 3.0, 50)
    assert np.all(b.psi_at(ys) > a.psi_at(ys))


def test_psi_grows_as_l_shrinks():
    vals = [build_localizer(0.5, l, 3.0).psi[-1] for l in (1e-1, 1e-3, 1e-6)]
    assert vals[0] < vals[1] < vals[2]


def test_phi_log_derivative_bound():
    loc = build_localizer(q=0.4, l=0.1, y_max=3.0)
    ys = np.linspace(0.03, 2.9, 400)
    eps = 1e-6
    dphi = (loc.phi_at(ys + eps) - loc.phi_at(ys - eps)) / (2 * eps)
    assert np.all(np.abs(dphi) / loc.phi_at(ys) <= loc.psi_prime_at(ys) + 1e-4)


def test_trivial_localizer_and_errors():
    loc = build_localizer(0.0, 0.1, 1.0)
    assert np.all(loc.phi == 1.0)
    with pytest.raises(InvalidRange):
        build_localizer(0.5, 1.0, 1.0)
    with pytest.raises(InvalidInput):
        build_localizer(0.5, 0.1, 1.0, samples=64)


def test_csv_dump(tmp_path):
    loc = build_localizer(0.5, 0.1, 1.0, samples=128)
    loc.write_csv(tmp_path / "loc.csv")
    lines = (tmp_path / "loc.csv").read_text().splitlines()
    assert lines[0] == "y,psi_prime,psi,phi" and len(lines) == loc.y.size + 1


def test_log_inequality():
    assert verify_log_inequality(1, 2, 1) == pytest.approx(1.0)
    for C in (0.1, 1, 10):
        for b in (0.1, 1, 10):
            assert verify_log_inequality(C, 2 * C * b, b) >= -1e-12
    rng = np.random.default_rng(5)
    triples = np.exp(rng.uniform(-10, 10, size=(10_000, 3)))
    assert min(verify_log_inequality(*t) for t in triples) >= -1e-12
    with pytest.raises(InvalidInput):
        verify_log_inequality(0, 1, 1)
