import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lyapspec import thermo
from lyapspec.errors import BracketError, ConvexityError, EstimatorError
from lyapspec.thermo import EstimatorConfig

PROXY = EstimatorConfig(weights="proxy")
SMALL_GRID = np.linspace(-4, 4, 33)


@pytest.fixture(scope="module")
def mrank1_curve():
    from lyapspec.models import get_model
    return thermo.pressure_curve(get_model("MRANK1"))


@pytest.fixture(scope="module")
def m2_proxy_table():
    from lyapspec.models import get_model
    return thermo.legendre(thermo.pressure_curve(get_model("M2"), config=PROXY))


def test_oracle_closed_forms(models):
    m2, m0 = models["M2"], models["M0"]
    assert thermo.suspension_pressure_oracle(m2, {"A": 0.0, "B": 0.0}) == pytest.approx(math.log(2), abs=1e-12)
    assert thermo.suspension_pressure_oracle(m2, {"A": -1.0, "B": -2.0}) == pytest.approx(
        math.log(math.exp(-1) + math.exp(-2)), abs=1e-12)
    for t in (-3.0, 0.0, 2.5):
        assert thermo.suspension_pressure_oracle(m0, [-t]) == pytest.approx(-t, abs=1e-12)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_oracle_full_shift_closed_form(a, b):
    from lyapspec.models import get_model
    P = thermo.suspension_pressure_oracle(get_model("M2"), [a, b])
    assert P == pytest.approx(math.log(math.exp(a) + math.exp(b)), abs=1e-10)


def test_bracket_failure_reports_endpoints():
    with pytest.raises(BracketError) as exc:
        thermo.solve_pressure(np.array([[1]]), np.array([0.0]), np.array([1.0]), bracket=(1.0, 2.0))
    assert {"lo", "hi"} <= set(exc.value.details)


def test_orbit_sum_examples(models):
    assert thermo.pressure_orbit_sum(models["M0"], 0.0, 10, 1).value == pytest.approx(0.0, abs=1e-12)
    r = thermo.pressure_orbit_sum(models["M2"], 0.0, 10, 1)
    assert r.value == pytest.approx(math.log(2), abs=0.05) and r.count == 2 ** 10
    with pytest.raises(EstimatorError, match="delta_T"):
        thermo.pressure_orbit_sum(models["M2"], 0.0, 10.5, 0.25)


@pytest.mark.parametrize("name", ["M2", "MRANK1"])
def test_orbit_sum_vs_oracle(models, name):
    m = models[name]
    unit = thermo.proxy_rates(m)
    for t in np.linspace(-4, 4, 17):
        est = thermo.pressure_orbit_sum(m, t, 12, 1, "proxy").value
        assert abs(est - thermo.suspension_pressure_oracle(m, t * unit)) < 0.05


def test_m2_geo_orbit_sum_at_t4(models):
    m = models["M2"]
    est = thermo.pressure_orbit_sum(m, 4.0, 12, 1).value
    assert abs(est - thermo.geometric_pressure_oracle(m, 4.0)) < 0.05


def test_m0_curve_linear(models):
    c = thermo.pressure_curve(models["M0"], SMALL_GRID)
    assert np.allclose(c.P_values, -SMALL_GRID, atol=1e-12)
    assert c.t_c is None
    assert thermo.phase_transition_report(c).detected is False


def test_m2_curve_structure(models):
    c = thermo.pressure_curve(models["M2"], SMALL_GRID)
    assert np.all(np.diff(c.P_values) < 0)
    assert c.convex_ok and c.monotone_ok and c.t_c is None
    assert not thermo.phase_transition_report(c).detected


def test_mrank1_plateau_and_kink(mrank1_curve):
    c = mrank1_curve
    assert c.monotone_ok and c.convex_ok
    assert np.all(c.P_values >= -1e-12)
    assert c.t_c is not None
    assert np.max(np.abs(c.P_values[c.t_grid >= c.t_c])) < 0.02
    rep = thermo.phase_transition_report(c)
    assert rep.detected and rep.D_minus <= -0.1 and rep.D_plus == 0.0
    assert rep.kink == pytest.approx(-rep.D_minus)


def test_curve_invariants_gate(mrank1_curve):
    c = mrank1_curve
    tol = 2 * 1e-10
    assert np.all(np.diff(c.P_values) <= tol)
    assert np.all(c.D_minus <= c.D_plus + 1e-6)


def test_nonconvex_input_rejected(models):
    c = thermo.pressure_curve(models["M2"], SMALL_GRID)
    c.convex_ok = False
    with pytest.raises(ConvexityError):
        thermo.legendre(c)


def test_legendre_m2_proxy(m2_proxy_table):
    tab = m2_proxy_table
    assert tab.E(-1.5) == pytest.approx(math.log(2), abs=1e-3)
    assert tab.dim_lower(-1.5) == pytest.approx(1 + 2 * math.log(2) / 1.5, abs=2e-3)
    assert tab.concave_ok
    for row in tab.rows:
        assert tab.alpha_1 < row["alpha"] < 0
        assert row["dim_lower"] == pytest.approx(1 + 2 * row["E"] / (-row["alpha"]), rel=1e-14)
    assert tab.E(-3.0) is None  # below the attainable range


def test_double_transform(m2_proxy_table):
    tab = m2_proxy_table
    curve = tab.curve
    inner = [t for t, d in zip(curve.t_grid, curve.D_plus) if tab.alphas[0] < d < tab.alphas[-1]]
    assert len(inner) > 10
    for t in inner:
        assert thermo.double_transform(tab, t) == pytest.approx(curve.P(t), abs=1e-3)


def test_m0_legendre_degenerate(models):
    tab = thermo.legendre(thermo.pressure_curve(models["M0"], SMALL_GRID))
    assert tab.E(-1.0) == pytest.approx(0.0, abs=1e-9)
    assert tab.E(-0.5) is None
    assert tab.rows == []


def test_mrank1_legendre_at_zero(mrank1_curve):
    tab = thermo.legendre(mrank1_curve)
    assert tab.E(0.0) == pytest.approx(0.0, abs=1e-9)
    assert tab.dim_lower(0.0) is None  # open interval excludes the endpoint
    assert tab.alpha_2 == pytest.approx(thermo.phase_transition_report(mrank1_curve).D_minus)


@pytest.mark.parametrize("name,weights", [("M2", "proxy"), ("M2", "geo"), ("MRANK1", "proxy")])
@pytest.mark.parametrize("t", [-2.0, 0.0, 0.7, 3.0])
def test_equilibrium_variational(models, name, weights, t):
    chk = thermo.equilibrium_check(models[name], t, EstimatorConfig(weights=weights))
    assert chk.residual < 1e-10


def test_nested_m2(models):
    rep = thermo.nested_pressure_convergence(models["M2"], (1, 2, 4), np.array([0.0]))
    assert rep.values[:, 0] == pytest.approx([0.0, math.log(2), math.log(2)], abs=1e-10)
    assert rep.monotone and rep.reaches_full


def test_nested_mrank1(models):
    grid = np.linspace(-2, 3, 11)
    rep = thermo.nested_pressure_convergence(models["MRANK1"], (1, 2, 3), grid)
    assert rep.monotone and rep.reaches_full
    assert all(rep.plateau)


def test_nested_identity_stage(models):
    grid = np.linspace(-2, 2, 5)
    rep = thermo.nested_pressure_convergence(models["M2"], (3,), grid)
    assert np.array_equal(rep.values[0], rep.full)


@given(seed=st.integers(0, 2 ** 31 - 1))
def test_block_factorisation_matches_full_matrix(seed):
    from lyapspec.models import get_model
    bs = thermo.block_system(get_model("MRANK1"), 12)
    e = np.random.default_rng(seed).normal(scale=3.0, size=len(bs.words))
    assert bs.log_rho(e) == pytest.approx(thermo.log_spectral_radius(bs.adjacency, e), abs=1e-10)
