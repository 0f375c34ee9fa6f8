import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lyapspec import coding
from lyapspec.errors import CodingError, PreconditionError
from lyapspec.models import get_model

U = 0.5


@pytest.fixture(scope="module")
def cat():
    return get_model("CAT")


@pytest.fixture(scope="module")
def seed(cat):
    return coding.two_orbit_seed(cat)


@pytest.fixture(scope="module")
def env(cat, seed):
    return coding.build_envelope(cat, seed, U, samples=200, rng_seed=0)


def test_constants_inequalities_strict(env):
    c = env.constants
    assert c.C * math.exp(-c.gamma * c.N1) < 0.5
    assert c.epsilon < c.Delta / (2 * (1 + c.beta ** 2 * c.kappa ** 2))
    assert c.epsilon * (1 + 2 * c.beta ** 2 * c.kappa ** 2) < c.Delta
    assert all(c.inequalities().values())
    assert c.beta == 1.05 and c.N0 > max(c.N1, c.N2)


def test_kappa_explicit(cat, env):
    # orthonormal eigenbasis: each eigen-projection has norm 1 in the adapted L1 norm
    assert cat.kappa == 1.0
    assert env.constants.kappa_measured <= cat.kappa + 1e-9


def test_contraction_constants(cat, env):
    assert env.constants.gamma == pytest.approx(math.log(cat.lam), rel=0.1)


def test_delta_zero_rejected(cat, seed, env):
    cs = env.cross_section
    rid = cs.locate(seed.point((0, 0)))
    off = cs.coords(rid, seed.point((0, 0)))
    rects = list(cs.rectangles)
    rects[rid] = dataclasses.replace(rects[rid], h_u=abs(off[0]))
    with pytest.raises(CodingError, match="Delta"):
        coding.choose_constants(cat, seed, U, coding.CrossSection(cat, rects))


def test_cross_section_geometry(cat, seed, env):
    cs = env.cross_section
    assert cs.return_time == 1.0
    assert cs.max_diameter() <= coding.DEFAULT_ALPHA_RECT
    assert all(cs.locate(seed.point(r)) is not None for r in seed.samples())
    assert min(cs.margin(seed.point(r)) for r in seed.samples()) == pytest.approx(env.constants.Delta)


def test_first_return(cat, env, rng):
    cs = env.cross_section
    x = np.asarray(cs.rectangles[0].center)
    y, tau, rid = coding.first_return(cat, cs, x)
    assert tau == 1.0 and np.allclose(y, cat.map(x, 1))
    # just inside the unstable edge of the fixed-point box: expansion pushes the image out
    r = cs.rectangles[cs.locate(np.zeros(2))]
    near_edge = np.mod(np.asarray(r.center) + 0.99 * r.h_u * cat.e_u, 1.0)
    assert cs.locate(near_edge) == r.id
    assert coding.first_return(cat, cs, near_edge)[2] == "exited"
    # images that land outside every rectangle are tagged rather than dropped
    exited = 0
    for _ in range(200):
        z = rng.uniform(0, 1, 2)
        exited += coding.first_return(cat, cs, z)[2] == "exited"
    assert exited > 0


def test_bracket_commutation(cat, rng):
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(0, 1, 2)
        y = np.mod(x + rng.uniform(-0.01, 0.01, 2), 1)
        worst = max(worst, coding.bracket_commutation_residual(cat, x, y))
    assert worst < 1e-10


def test_rectangles_bracket_closed(cat, env, rng):
    cs = env.cross_section
    for r in cs.rectangles:
        c = np.asarray(r.center)
        for _ in range(20):
            a = c + rng.uniform(-1, 1) * r.h_u * cat.e_u + rng.uniform(-1, 1) * r.h_s * cat.e_s
            b = c + rng.uniform(-1, 1) * r.h_u * cat.e_u + rng.uniform(-1, 1) * r.h_s * cat.e_s
            assert cs.locate(coding.section_bracket(cat, np.mod(a, 1), np.mod(b, 1))) == r.id


def test_refine(env, seed):
    cs = env.cross_section
    a0 = coding.refine(cs, seed, 0)
    assert len(a0) == len(cs.rectangles)
    diams = [coding.refine(cs, seed, n).max_diameter for n in range(0, 8)]
    assert all(b <= a + 1e-15 for a, b in zip(diams, diams[1:]))
    assert coding.refine(cs, seed, env.constants.N2).max_diameter < env.constants.epsilon


def test_envelope_report(env):
    assert env.ok, env.failures()
    rep = env.report
    assert rep["halving"]["worst_ratio"] <= 0.5
    assert rep["certificate"]["max_offset"] < rep["certificate"]["radius"]
    assert rep["injectivity"]["samples"] == 200
    assert rep["bracket_closure"]["pairs"] > 0
    assert env.to_dict()["alphabet_size"] == len(env.alphabet)


def test_periodic_code_is_seed_orbit(cat, seed, env):
    """The period-2 code maps to the orbit solving (A^2 - I) x = k."""
    alpha, graph = env.alphabet, env.graph
    W = 2 * env.constants.N0
    two = next(o for o in seed.periodic if o.period == 2)
    A2 = np.linalg.matrix_power(cat.matrix, 2).astype(float)
    oracle = None
    for k in ((i, j) for i in range(-3, 4) for j in range(-3, 4)):
        x = np.mod(np.linalg.solve(A2 - np.eye(2), np.array(k, dtype=float)), 1.0)
        if np.allclose(x, two.at(0), atol=1e-12):
            oracle = x
    assert oracle is not None
    ref = (seed.orbits.index(two), 0)
    code = coding.seed_code(alpha, graph, seed, ref, W)
    psi = coding.shadow_sequence(cat, seed, graph, alpha, code, env.constants, W).point
    assert coding.section_distance(cat, psi, oracle) < 1e-9


def test_constant_code_fixed_point(cat, seed, env):
    alpha, graph = env.alphabet, env.graph
    W = 2 * env.constants.N0
    code = coding.seed_code(alpha, graph, seed, (0, 0), W)
    assert len(set(code.window(-W, W))) == 1
    psi = coding.shadow_sequence(cat, seed, graph, alpha, code, env.constants, W).point
    assert coding.section_distance(cat, psi, np.zeros(2)) < 1e-9


def test_injectivity_on_differing_codes(cat, seed, env):
    W = 2 * env.constants.N0
    pts = {}
    for code, r in env.samples:
        pts.setdefault(code.window(-W, W), r.point)
    keys = list(pts)
    for a, b in zip(keys, keys[1:]):
        assert coding.section_distance(cat, pts[a], pts[b]) > 0


@settings(max_examples=15, deadline=None)
@given(s=st.integers(0, 2 ** 31 - 1))
def test_shadow_certificate_property(cat, seed, env, s):
    rng = np.random.default_rng(s)
    code = coding.random_code(env.graph, rng)
    W = 2 * env.constants.N0
    r = coding.shadow_sequence(cat, seed, env.graph, env.alphabet, code, env.constants, W)
    assert r.halving_ok and r.certificate_ok and r.in_rectangles
    assert coding.recode(cat, env.alphabet, r.point, W) == code.window(-W, W)


def test_splice_requires_common_symbol(env, rng):
    codes = [coding.random_code(env.graph, rng) for _ in range(30)]
    by = {}
    for c in codes:
        by.setdefault(c.symbol_at(0), []).append(c)
    a = codes[0]
    other = next(c for c in codes if c.symbol_at(0) != a.symbol_at(0))
    with pytest.raises(PreconditionError):
        coding.splice(a, other, 4)


def test_shrunk_U_reports_containment_failure(cat, seed):
    small = coding.build_envelope(cat, seed, 1e-9, samples=8, rng_seed=1)
    assert small.failures() == ["envelope_in_U"]
    assert small.report["envelope_in_U"]["witness"] is not None


def test_alphabet_stable_under_rerun(cat, seed, env):
    again = coding.build_envelope(cat, seed, U, samples=8, rng_seed=0)
    assert len(again.alphabet) == len(env.alphabet)
    assert again.alphabet.keys == env.alphabet.keys
    assert again.constants == env.constants


def test_seed_spec_parsing(cat):
    s = coding.seed_from_spec(cat, {"orbits": [{"point": ["0", "0"], "period": 1},
                                               {"point": ["4/5", "3/5"], "period": 2}]})
    assert len(s.orbits) == 4
    with pytest.raises(PreconditionError):
        coding.seed_from_spec(cat, {"orbits": [], "bogus": 1})
    with pytest.raises(PreconditionError, match="period"):
        coding.seed_from_spec(cat, {"orbits": [{"point": ["0.1", "0.2"], "period": 1}]})
