import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lyapspec import jacobi, orbits
from lyapspec.errors import CycleCapError, PreconditionError, ShadowingError
from lyapspec.models import get_model


def block(a):
    return np.array([[math.cosh(a), math.sinh(a) / a], [a * math.sinh(a), math.cosh(a)]])


def test_m0_single_cycle(models):
    (o,) = orbits.enumerate_cycles(models["M0"], 1)
    assert o.period == 1
    assert np.allclose(o.matrix, [[math.cosh(1), math.sinh(1)], [math.sinh(1), math.cosh(1)]], atol=1e-15)
    assert o.chi == pytest.approx(1.0, abs=1e-14)


def test_mflat_unipotent(models):
    (o,) = orbits.enumerate_cycles(models["MFLAT"], 1)
    assert np.array_equal(o.matrix, [[1.0, 1.0], [0.0, 1.0]])
    assert o.chi == 0.0 and o.parabolic


def test_m2_ab_oracle(models):
    o = orbits.periodic_orbit(models["M2"], "AB")
    rho = max(abs(np.linalg.eigvals(block(2.0) @ block(1.0))))
    assert o.chi == pytest.approx(0.5 * math.log(rho), rel=1e-13)


def test_counts_and_cap(models):
    # necklaces of length <= 12 over two letters (rotation classes, non-primitive included)
    assert len(orbits.enumerate_cycles(models["M2"], 12)) == 801
    with pytest.raises(CycleCapError, match="cap"):
        orbits.enumerate_cycles(models["M2"], 12, cap=100)


@pytest.mark.parametrize("name", ["M0", "MFLAT", "M2", "MRANK1"])
def test_cycle_invariants(models, name):
    cyc = orbits.enumerate_cycles(models[name], 10)
    labels = [o.label for o in cyc]
    assert labels == sorted(labels, key=lambda w: (len(w), w))
    for o in cyc:
        assert o.det_defect < 1e-10
        assert o.chi >= 0
        assert (o.chi == 0) == o.parabolic
        assert orbits.chi_bound_check(o).ok


def test_bound_equality_cases(models):
    r = orbits.chi_bound_check(orbits.periodic_orbit(models["M0"], "H"))
    assert r.slack == pytest.approx(0.0, abs=1e-12) and r.equality
    r = orbits.chi_bound_check(orbits.periodic_orbit(models["MFLAT"], "F"))
    assert r.chi == 0 and r.bound == 0
    for n in range(1, 8):
        o = orbits.periodic_orbit(models["MRANK1"], "H" + "F" * n)
        rep = orbits.chi_bound_check(o)
        assert rep.bound == pytest.approx(math.sqrt(1 / (n + 1)))
        assert rep.slack > 1e-6


@pytest.mark.parametrize("name", ["M2", "MRANK1"])
def test_chi_matches_lyapunov_forward(models, name):
    m = models[name]
    for o in orbits.enumerate_cycles(m, 6):
        chi = jacobi.lyapunov_forward(m, m.periodic_point(o.label), o.period)
        assert chi == pytest.approx(o.chi, abs=1e-8)


def test_small_exponent_sequence(models):
    seq = orbits.small_exponent_orbits(models["MRANK1"])
    chis = [o.chi for _, o, _ in seq]
    assert all(a > b for a, b in zip(chis, chis[1:]))
    assert chis[-1] < 0.2
    assert all(o.chi <= bound for _, o, bound in seq)
    with pytest.raises(PreconditionError):
        orbits.small_exponent_orbits(models["M0"])


def test_small_exponent_closed_form(models):
    # chi(F^n H) = acosh(tr/2)/(n+1) with tr = (n+2) cosh 1 + n sinh 1 ... checked against a direct product
    m = models["MRANK1"]
    for n in (1, 5, 20):
        mono = block(1.0) @ np.linalg.matrix_power(np.array([[1.0, 1.0], [0.0, 1.0]]), n)
        tr = abs(np.trace(mono))
        assert orbits.periodic_orbit(m, "F" * n + "H").chi == pytest.approx(math.acosh(tr / 2) / (n + 1), rel=1e-12)


def test_endpoints(models):
    assert orbits.exponent_endpoint_orbits(models["M0"], 4) == pytest.approx((1.0, 1.0))
    lo, hi = orbits.exponent_endpoint_orbits(models["M2"], 8)
    assert lo >= 1 - 1e-12 and hi <= 2 + 1e-12
    lo, hi = orbits.exponent_endpoint_orbits(models["MRANK1"], 12)
    assert lo < 0.3 and hi == pytest.approx(1.0, abs=1e-9)


def test_markov_shadow_exact(models):
    m = models["M2"]
    res = orbits.shadow_chain(m, orbits.OrbitChain((("AAB", 3), ("BA", 2))), 0.1)
    assert res.error == 0.0
    per = orbits.shadow_chain(m, orbits.OrbitChain((("AB", 2), ("BBA", 3)), periodic=True), 0.1)
    assert per.periodic and per.period == 5


def test_markov_shadow_requires_regular_endpoints(models):
    with pytest.raises(PreconditionError):
        orbits.shadow_chain(models["MRANK1"], orbits.OrbitChain((("FF", 2), ("FFF", 3)), T=1, eta=1), 0.1)


@given(seed=st.integers(0, 2 ** 31 - 1), periodic=st.booleans(), n=st.integers(2, 6))
def test_cat_shadow_bound(seed, periodic, n):
    m = get_model("CAT")
    rng = np.random.default_rng(seed)
    chain = orbits.random_cat_chain(m, rng, n, 1e-4, periodic=periodic)
    res = orbits.shadow_chain(m, chain, 1.0)
    assert res.error <= res.bound
    for a, b, c in zip(res.times, res.times[1:], chain.segments):
        assert b - a == pytest.approx(c[1], abs=1.0)
    if periodic:
        assert res.periodic
        x = np.asarray(res.point.x)
        y = m.map(x, res.period)
        # forward iteration amplifies the rounding of x by lam^period
        assert np.max(np.abs((y - x + 0.5) % 1.0 - 0.5)) < 1e-14 * m.lam ** res.period + 1e-9


def test_cat_shadow_gap_too_large(models, rng):
    m = models["CAT"]
    chain = orbits.random_cat_chain(m, rng, 3, 0.2)
    with pytest.raises(ShadowingError) as exc:
        orbits.shadow_chain(m, chain, 0.1)
    assert "junction" in exc.value.details


def test_shadow_delta(models):
    assert orbits.shadow_delta(models["CAT"], 0.4) == pytest.approx(0.1 / models["CAT"].kappa ** 2)
