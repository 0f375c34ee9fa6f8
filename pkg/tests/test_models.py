import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lyapspec.errors import CrossModelError, ModelError, WindowExhausted
from lyapspec.models import (CATALOG, get_model, load_model_file, make_markov_model, model_from_dict,
                             resolve_model, validate_model)

MARKOV = ("M0", "MFLAT", "M2", "MRANK1")
seeds = st.integers(0, 2 ** 31 - 1)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_validates(name):
    assert validate_model(get_model(name), seed=3)["ok"]


def test_make_markov_model_examples():
    m0 = make_markov_model(["H"], [[1]], {"H": 1}, {"H": -1})
    assert not m0.has_flat_loop
    r1 = make_markov_model(["F", "H"], [[1, 1], [1, 1]], {"F": 1, "H": 1}, {"F": 0, "H": -1})
    assert r1.has_flat_loop
    with pytest.raises(ModelError, match="reducible"):
        make_markov_model(["A", "B"], [[1, 0], [0, 1]], [1, 1], [-1, -1])
    with pytest.raises(ModelError):
        make_markov_model(["A"], [[1]], [0.0], [-1])
    with pytest.raises(ModelError):
        make_markov_model(["A"], [[1]], [1.0], [0.5])


def test_model_file_roundtrip(tmp_path):
    m2 = get_model("M2")
    path = tmp_path / "m.json"
    path.write_text(json.dumps(m2.to_dict()))
    m = load_model_file(path)
    assert np.array_equal(m.curvatures, m2.curvatures) and np.array_equal(m.adjacency, m2.adjacency)
    assert resolve_model(str(path)).name == m.name
    with pytest.raises(ModelError):
        model_from_dict({**m2.to_dict(), "bogus": 1})
    with pytest.raises(ModelError):
        resolve_model(str(tmp_path / "missing.json"))


def test_m0_phase_advance(models):
    m = models["M0"]
    p = m.periodic_point("H", tau=0.25)
    q = m.flow(p, 5.0)
    assert q.tau == pytest.approx(0.25, abs=1e-12)
    assert m.flow(p, 0.0) == p


def test_flat_loop_stays_flat(models):
    m = models["MRANK1"]
    p = m.periodic_point("F", tau=0.3)
    for t in (0.5, 3.7, -11.2, 40.0):
        assert m.curvature_at(m.flow(p, t)) == 0.0


def test_window_exhaustion(models, rng):
    m = models["M2"]
    p = m.random_point(rng, width=4)
    with pytest.raises(WindowExhausted) as exc:
        m.flow(p, 50.0)
    assert exc.value.details["required_width"] > 4


def test_cross_model_distance(models, rng):
    with pytest.raises(CrossModelError):
        models["M2"].distance(models["M0"].random_point(rng), models["M2"].random_point(rng))


@pytest.mark.parametrize("name", MARKOV + ("CAT",))
@given(seed=seeds, s=st.floats(-20, 20), t=st.floats(-20, 20))
def test_flow_group_property(name, seed, s, t):
    m = get_model(name)
    if name == "CAT":
        # lam^n amplifies the rounding of the intermediate point
        s, t = s * 0.4, t * 0.4
    p = m.random_point(np.random.default_rng(seed))
    assert m.distance(m.flow(p, s + t), m.flow(m.flow(p, s), t)) < 1e-9


@pytest.mark.parametrize("name", MARKOV + ("CAT",))
@given(seed=seeds, t=st.floats(-10, 10))
def test_reverse_identities(name, seed, t):
    m = get_model(name)
    p = m.random_point(np.random.default_rng(seed))
    assert m.distance(m.reverse(m.reverse(p)), p) < 1e-12
    assert m.distance(m.flow(m.reverse(p), t), m.reverse(m.flow(p, -t))) < 1e-9


@given(seed=seeds)
def test_reverse_keeps_curvature_m2(seed):
    m = get_model("M2")
    rng = np.random.default_rng(seed)
    p = m.flow(m.random_point(rng), float(rng.uniform(0.01, 0.99)))
    if 1e-6 < p.tau < m.roofs[p.symbol_at(p.center)] - 1e-6:
        assert m.curvature_at(m.reverse(p)) == m.curvature_at(p)


@pytest.mark.parametrize("name", MARKOV + ("CAT",))
@given(seed=seeds)
def test_distance_metric_axioms(name, seed):
    m = get_model(name)
    rng = np.random.default_rng(seed)
    p, q, r = (m.random_point(rng) for _ in range(3))
    assert m.distance(p, p) == 0.0
    assert m.distance(p, q) == m.distance(q, p)
    assert m.distance(p, r) <= m.distance(p, q) + m.distance(q, r) + 1e-12


def test_markov_curvature_constant_on_dwell(models):
    m = models["M2"]
    p = m.periodic_point("AB")
    ks = [m.curvature_at(m.flow(p, t)) for t in np.linspace(0.0, 0.999, 50)]
    assert set(ks) == {-1.0}


def test_cat_unstable_growth(models):
    m = models["CAT"]
    x = np.array([0.2, 0.3])
    eps = 1e-7
    p, q = m.point(x), m.point(x + eps * m.e_u)
    d0 = m.distance(p, q)
    d1 = m.distance(m.flow(p, 1.0), m.flow(q, 1.0))
    assert d1 / d0 == pytest.approx(m.lam, rel=1e-6)
    assert m.lam == pytest.approx((3 + math.sqrt(5)) / 2, rel=1e-15)


def test_cat_bracket_lps(models, rng):
    m = models["CAT"]
    for _ in range(50):
        x = rng.uniform(0, 1, 2)
        y = np.mod(x + rng.uniform(-1e-3, 1e-3, 2), 1)
        w1, w2 = m.point(x), m.point(y)
        b = m.bracket(w1, w2)
        d = m.distance(w1, w2)
        assert m.distance(b, w1) <= m.kappa * d + 1e-12
        assert m.distance(b, w2) <= m.kappa * d + 1e-12


def test_surface_roundtrip_and_conservation(models, rng):
    m = models["SURF"]
    for t in (1.0, 2.0, 5.0):
        p = m.random_point(rng)
        assert m.distance(m.flow(m.flow(p, t), -t), p) < 1e-8
        assert m.distance(m.reverse(m.flow(m.reverse(m.flow(p, t)), t)), p) < 1e-8
    for _ in range(2):
        p = m.random_point(rng)
        d = m.drift(p, 100.0)
        assert d["clairaut"] < 1e-8 and d["speed"] < 1e-8
