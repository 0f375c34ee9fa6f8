"""Symbolic coding of a hyperbolic set around a finite seed, on the linear toy flow.

The section is ``s = 0`` with return map ``F = A`` and return time 1. Points
of the section are written in eigen-coordinates ``(a, b)`` (unstable,
stable) relative to a reference point; the section metric is the adapted
norm at height 0, ``lam**-0.5 |a| + lam**0.5 |b|``. Rectangles are
eigen-aligned boxes, so the bracket ``[x, y] = (a_y, b_x)`` keeps them
closed.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import CodingError, PreconditionError
from .models import LinearToyFlow

BETA = 1.05
PSI_TOL = 1e-12
PSI_MAX_ITER = 60
DEFAULT_ALPHA_RECT = 0.3
DEFAULT_SAMPLE_RANGE = 40
_SHIFTS = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)


# --------------------------------------------------------------------------
# seed
# --------------------------------------------------------------------------


def _to_float_point(p) -> np.ndarray:
    return np.array([float(Fraction(str(c))) if isinstance(c, str) else float(c) for c in p])


@dataclass(frozen=True)
class PeriodicSeed:
    label: str
    points: tuple  # section points of the orbit, in order

    @property
    def period(self) -> int:
        return len(self.points)

    def at(self, j: int) -> np.ndarray:
        return np.asarray(self.points[j % self.period])


@dataclass(frozen=True)
class ConnectingSeed:
    """Orbit leaving ``src`` along its unstable leaf and arriving at ``dst`` along a stable leaf."""

    label: str
    src: PeriodicSeed
    dst: PeriodicSeed
    t: float  # q = src(0) + t e_u
    s: float  # q = dst(0) + s e_s  (mod 1)
    e_u: tuple
    e_s: tuple
    lam: float

    def at(self, j: int) -> np.ndarray:
        if j <= 0:
            x = self.src.at(j) + self.lam ** j * self.t * np.asarray(self.e_u)
        else:
            x = self.dst.at(j) + self.lam ** (-j) * self.s * np.asarray(self.e_s)
        return np.mod(x, 1.0)


def periodic_seed(model: LinearToyFlow, point, period: int, label: str | None = None) -> PeriodicSeed:
    x = np.mod(_to_float_point(point), 1.0)
    pts = [x]
    for _ in range(period - 1):
        pts.append(model.map(pts[-1], 1))
    back = model.map(pts[-1], 1)
    d = back - x
    if np.max(np.abs(d - np.round(d))) > 1e-9:
        raise PreconditionError(f"point {list(point)} does not have period {period}")
    return PeriodicSeed(label or f"P{period}@{x[0]:.4g},{x[1]:.4g}", tuple(tuple(p) for p in pts))


def connecting_orbit(model: LinearToyFlow, src: PeriodicSeed, dst: PeriodicSeed, search: int = 3) -> ConnectingSeed:
    """Shortest transverse intersection of W^u(src(0)) with W^s(dst(0))."""
    best = None
    rng = range(-search, search + 1)
    for n1 in rng:
        for n2 in rng:
            d = np.asarray(dst.at(0)) + np.array([n1, n2]) - np.asarray(src.at(0))
            t, s_neg = model.eig(d)
            s = -s_neg
            if abs(t) < 1e-12:
                continue
            cost = abs(t) + abs(s)
            if best is None or cost < best[0]:
                best = (cost, t, s)
    if best is None:
        raise CodingError("no connecting orbit found")
    _, t, s = best
    return ConnectingSeed(f"{src.label}->{dst.label}", src, dst, float(t), float(s),
                          tuple(model.e_u), tuple(model.e_s), model.lam)


@dataclass
class Seed:
    orbits: list
    sample_range: int = DEFAULT_SAMPLE_RANGE

    def samples(self):
        """``(orbit index, j)`` for every sampled seed point, periodic orbits first."""
        out = []
        for k, o in enumerate(self.orbits):
            if isinstance(o, PeriodicSeed):
                out.extend((k, j) for j in range(o.period))
        for k, o in enumerate(self.orbits):
            if isinstance(o, ConnectingSeed):
                out.extend((k, j) for j in range(-self.sample_range, self.sample_range + 1))
        return out

    def point(self, ref) -> np.ndarray:
        k, j = ref
        return np.asarray(self.orbits[k].at(j), dtype=float)

    @property
    def periodic(self):
        return [o for o in self.orbits if isinstance(o, PeriodicSeed)]


def two_orbit_seed(model: LinearToyFlow, connect: bool = True, sample_range: int = DEFAULT_SAMPLE_RANGE) -> Seed:
    """Fixed point 0 and the period-2 orbit through (4/5, 3/5), with connecting orbits both ways."""
    fixed = periodic_seed(model, ["0", "0"], 1, "fix")
    two = periodic_seed(model, ["4/5", "3/5"], 2, "per2")
    orbits = [fixed, two]
    if connect:
        orbits += [connecting_orbit(model, fixed, two), connecting_orbit(model, two, fixed)]
    return Seed(orbits, sample_range)


def seed_from_spec(model: LinearToyFlow, spec: dict) -> Seed:
    allowed = {"orbits", "connect", "sample_range"}
    unknown = set(spec) - allowed
    if unknown:
        raise PreconditionError(f"unknown seed keys: {sorted(unknown)}")
    per = []
    for i, o in enumerate(spec.get("orbits", [])):
        extra = set(o) - {"point", "period", "label"}
        if extra:
            raise PreconditionError(f"unknown keys in seed orbit {i}: {sorted(extra)}")
        per.append(periodic_seed(model, o["point"], int(o["period"]), o.get("label")))
    if not per:
        raise PreconditionError("seed needs at least one periodic orbit")
    orbits = list(per)
    if spec.get("connect", True):
        for a in per:
            for b in per:
                if a is not b:
                    orbits.append(connecting_orbit(model, a, b))
    return Seed(orbits, int(spec.get("sample_range", DEFAULT_SAMPLE_RANGE)))


# --------------------------------------------------------------------------
# rectangles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SuRectangle:
    id: int
    center: tuple
    h_u: float
    h_s: float
    section: int = 0
    bracket_closed: bool = True

    def diameter(self, lam: float) -> float:
        return 2 * self.h_u * lam ** -0.5 + 2 * self.h_s * lam ** 0.5


@dataclass
class CrossSection:
    model: LinearToyFlow = field(repr=False)
    rectangles: list
    return_time: float = 1.0

    def __post_init__(self):
        self._refresh()

    def _refresh(self):
        self._centers = np.array([r.center for r in self.rectangles], dtype=float).reshape(-1, 2)
        self._h = np.array([(r.h_u, r.h_s) for r in self.rectangles], dtype=float).reshape(-1, 2)

    def coords_all(self, x) -> np.ndarray:
        """Eigen-coordinates of ``x`` relative to every rectangle center (shortest adapted lift)."""
        lam = self.model.lam
        d = np.asarray(x, dtype=float)[None, :] - self._centers
        d -= np.round(d)
        cand = d[:, None, :] + _SHIFTS[None, :, :]
        ab = cand @ self.model.basis_inv.T
        norms = lam ** -0.5 * np.abs(ab[..., 0]) + lam ** 0.5 * np.abs(ab[..., 1])
        k = np.argmin(norms, axis=1)
        return ab[np.arange(len(k)), k]

    def coords(self, rid: int, x) -> np.ndarray:
        return self.coords_all(x)[rid]

    def locate(self, x):
        ab = np.abs(self.coords_all(x))
        inside = np.flatnonzero(np.all(ab <= self._h, axis=1))
        return int(inside[0]) if inside.size else None

    def margin(self, x) -> float:
        """Adapted distance from x to the union of rectangle boundaries."""
        lam = self.model.lam
        over = np.abs(self.coords_all(x)) - self._h
        scale = np.array([lam ** -0.5, lam ** 0.5])
        inside = np.all(over <= 0, axis=1)
        d_in = np.min(-over * scale, axis=1)
        d_out = np.sum(np.maximum(over, 0) * scale, axis=1)
        return float(np.min(np.where(inside, d_in, d_out)))

    def max_diameter(self) -> float:
        return max(r.diameter(self.model.lam) for r in self.rectangles)


def _boxes_disjoint(model, r1: SuRectangle, r2: SuRectangle, gap: float = 0.0) -> bool:
    _, vec = model.torus_offset(r1.center, r2.center, 0.0)
    a, b = model.eig(vec)
    return abs(a) > r1.h_u + r2.h_u + gap or abs(b) > r1.h_s + r2.h_s + gap


def build_cross_section(model: LinearToyFlow, seed: Seed, alpha_rect: float = DEFAULT_ALPHA_RECT) -> CrossSection:
    """Boxes around the periodic seed points, plus one box per seed point left uncovered."""
    if not isinstance(model, LinearToyFlow):
        raise PreconditionError("the geometric coding backend is the linear toy flow")
    lam = model.lam
    h_cap = alpha_rect / (2 * (lam ** -0.5 + lam ** 0.5))
    refs = seed.samples()
    pts = [seed.point(r) for r in refs]
    centers = []
    for o in seed.periodic:
        for j in range(o.period):
            c = tuple(float(v) for v in o.at(j))
            if c not in centers:
                centers.append(c)
    for h0 in np.linspace(h_cap, h_cap / 8, 15):
        rects = [SuRectangle(i, c, h0, h0) for i, c in enumerate(centers)]
        if not all(_boxes_disjoint(model, a, b, h0 / 4) for i, a in enumerate(rects) for b in rects[i + 1:]):
            continue
        cs = CrossSection(model, rects)
        margin_min = 0.1 * h0 * lam ** -0.5
        if any(cs.margin(x) < margin_min for x in pts):
            continue
        # uncovered points get their own boxes, shrunk until disjoint and clear of other points
        ok = True
        for x in pts:
            if cs.locate(x) is not None:
                continue
            h = h0
            while h > h0 / 64:
                cand = SuRectangle(len(cs.rectangles), tuple(float(v) for v in x), h, h)
                trial = CrossSection(model, cs.rectangles + [cand])
                clear = all(_boxes_disjoint(model, cand, r, h / 4) for r in cs.rectangles)
                if clear and all(trial.margin(y) >= 0.1 * h * lam ** -0.5 for y in pts):
                    cs = trial
                    break
                h *= 0.7
            else:
                ok = False
                break
        if ok and all(cs.locate(x) is not None for x in pts):
            _verify_rectangles(cs, alpha_rect)
            return cs
    raise CodingError("could not place disjoint rectangles around the seed; lower alpha_rect or change the seed")


def _verify_rectangles(cs: CrossSection, alpha_rect: float):
    model = cs.model
    rects = cs.rectangles
    for i, a in enumerate(rects):
        for b in rects[i + 1:]:
            if not _boxes_disjoint(model, a, b):
                raise CodingError(f"rectangles {a.id} and {b.id} overlap")
        if a.diameter(model.lam) > alpha_rect * (1 + 1e-12):
            raise CodingError(f"rectangle {a.id} exceeds diameter {alpha_rect}")
    if cs.return_time > 1.0:
        raise CodingError("return time exceeds 1; use denser sections")


def first_return(model: LinearToyFlow, cs: CrossSection, x):
    """``(F x, return time, rectangle id or 'exited')``."""
    y = model.map(np.asarray(x, dtype=float), 1)
    rid = cs.locate(y)
    return y, cs.return_time, ("exited" if rid is None else rid)


def section_bracket(model: LinearToyFlow, x, y) -> np.ndarray:
    """Unstable leaf of x meets stable leaf of y: ``x + a e_u`` with a the unstable offset to y."""
    _, vec = model.torus_offset(x, y, 0.0)
    a, _ = model.eig(vec)
    return np.mod(np.asarray(x, dtype=float) + a * model.e_u, 1.0)


def section_distance(model: LinearToyFlow, x, y) -> float:
    return model.torus_offset(x, y, 0.0)[0]


def bracket_commutation_residual(model: LinearToyFlow, x, y) -> float:
    lhs = model.map(section_bracket(model, x, y), 1)
    rhs = section_bracket(model, model.map(x, 1), model.map(y, 1))
    return section_distance(model, lhs, rhs)


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CodingConstants:
    delta: float
    beta: float
    kappa: float
    kappa_measured: float
    gamma: float
    C: float
    Delta: float
    epsilon: float
    N0: int
    N1: int
    N2: int

    def inequalities(self) -> dict:
        return {
            "C*exp(-gamma*N1) < 1/2": self.C * math.exp(-self.gamma * self.N1) < 0.5,
            "epsilon < Delta/(2(1+beta^2 kappa^2))": self.epsilon < self.Delta / (2 * (1 + self.beta ** 2 * self.kappa ** 2)),
            "epsilon(1+2 beta^2 kappa^2) < Delta": self.epsilon * (1 + 2 * self.beta ** 2 * self.kappa ** 2) < self.Delta,
        }

    @property
    def shadow_radius(self) -> float:
        return self.epsilon * (1 + 2 * self.beta ** 2 * self.kappa ** 2)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def measure_contraction(model: LinearToyFlow, rng, pairs: int = 50, steps: int = 10, size: float = 1e-3):
    """Fit ``d(F^n v, F^n w) <= C exp(-gamma n) d(v, w)`` on stable-related pairs."""
    ns = np.arange(steps + 1)
    logs = []
    for _ in range(pairs):
        v = rng.uniform(0, 1, 2)
        w = np.mod(v + size * rng.uniform(0.2, 1.0) * model.e_s, 1.0)
        d0 = section_distance(model, v, w)
        logs.append([math.log(section_distance(model, model.map(v, n), model.map(w, n)) / d0) for n in ns])
    logs = np.array(logs)
    gamma = -float(np.polyfit(np.tile(ns, pairs), logs.ravel(), 1)[0])
    C = float(np.max(np.exp(logs + gamma * ns[None, :])))
    return gamma, C


def measure_kappa(model: LinearToyFlow, cs: CrossSection, rng, samples: int = 200) -> float:
    """Largest ratio ``d([x, y], x) / d(x, y)`` or ``d([x, y], y) / d(x, y)`` inside rectangles."""
    worst = 0.0
    for _ in range(samples):
        r = cs.rectangles[int(rng.integers(len(cs.rectangles)))]
        x, y = (np.mod(np.asarray(r.center) + model.from_eig(rng.uniform(-r.h_u, r.h_u), rng.uniform(-r.h_s, r.h_s)), 1.0)
                for _ in range(2))
        d = section_distance(model, x, y)
        if d == 0:
            continue
        z = section_bracket(model, x, y)
        worst = max(worst, section_distance(model, z, x) / d, section_distance(model, z, y) / d)
    return worst


def choose_constants(model: LinearToyFlow, seed: Seed, U: float | None = None, cs: CrossSection | None = None,
                     alpha_rect: float = DEFAULT_ALPHA_RECT, rng_seed: int = 0, beta: float = BETA) -> CodingConstants:
    """Measure Delta, kappa, gamma and C on the built rectangles, then derive epsilon, N1, N2 and N0."""
    if cs is None:
        cs = build_cross_section(model, seed, alpha_rect)
    rng = np.random.default_rng(rng_seed)
    Delta = min(cs.margin(seed.point(r)) for r in seed.samples())
    if Delta <= 0:
        raise CodingError("seed touches a rectangle boundary (Delta = 0); adjust the rectangles", Delta=Delta)
    kappa = model.kappa
    kappa_measured = measure_kappa(model, cs, rng)
    if kappa_measured > kappa + 1e-9:
        raise CodingError(f"measured bracket constant {kappa_measured} exceeds {kappa}")
    gamma, C = measure_contraction(model, rng)
    epsilon = 0.9 * Delta / (2 * (1 + beta ** 2 * kappa ** 2))
    N1 = 1
    while C * math.exp(-gamma * N1) >= 0.5:
        N1 += 1
    N2 = 0
    while refine(cs, seed, N2).max_diameter >= epsilon:
        N2 += 1
        if N2 > 64:
            raise CodingError("refined rectangles do not shrink below epsilon")
    N0 = max(N1, N2) + 1
    delta = epsilon / (4 * kappa ** 2)
    return CodingConstants(delta, beta, kappa, kappa_measured, gamma, C, Delta, epsilon, N0, N1, N2)


# --------------------------------------------------------------------------
# refinement
# --------------------------------------------------------------------------


@dataclass
class Alphabet:
    N: int
    keys: list  # itineraries (rectangle ids for j = -N..N)
    anchors: list  # seed refs
    boxes: np.ndarray  # (a_lo, a_hi, b_lo, b_hi) relative to the anchor
    model: LinearToyFlow = field(repr=False)
    cs: CrossSection = field(repr=False)
    index: dict = field(default_factory=dict, repr=False)

    @property
    def diameters(self) -> np.ndarray:
        lam = self.model.lam
        return (self.boxes[:, 1] - self.boxes[:, 0]) * lam ** -0.5 + (self.boxes[:, 3] - self.boxes[:, 2]) * lam ** 0.5

    @property
    def max_diameter(self) -> float:
        return float(np.max(self.diameters)) if len(self.keys) else 0.0

    def itinerary(self, x):
        y = self.model.map(np.asarray(x, dtype=float), -self.N)
        out = []
        for _ in range(2 * self.N + 1):
            out.append(self.cs.locate(y))
            y = self.model.map(y, 1)
        return tuple(out)

    def symbol_of(self, x):
        """Alphabet index of the element containing x, or None."""
        return self.index.get(self.itinerary(x))

    def __len__(self):
        return len(self.keys)


def _seed_itinerary(cs: CrossSection, seed: Seed, ref, N: int):
    k, j = ref
    return tuple(cs.locate(seed.orbits[k].at(j + i)) for i in range(-N, N + 1))


def refine(cs: CrossSection, seed: Seed, N: int) -> Alphabet:
    """Nonempty ``D = intersection of F^-j R^j`` over |j| <= N that meet the seed."""
    if N < 0:
        raise PreconditionError("N must be nonnegative")
    model = cs.model
    lam = model.lam
    keys, anchors = [], []
    for ref in seed.samples():
        key = _seed_itinerary(cs, seed, ref, N)
        if None in key:
            raise CodingError(f"seed point {ref} leaves the rectangles within {N} steps")
        if key not in keys:
            keys.append(key)
            anchors.append(ref)
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    keys = [keys[i] for i in order]
    anchors = [anchors[i] for i in order]
    boxes = np.empty((len(keys), 4))
    for n, (key, ref) in enumerate(zip(keys, anchors)):
        k, j0 = ref
        a_lo, a_hi, b_lo, b_hi = -math.inf, math.inf, -math.inf, math.inf
        for i, rid in zip(range(-N, N + 1), key):
            r = cs.rectangles[rid]
            p, q = cs.coords(rid, seed.orbits[k].at(j0 + i))
            a_lo = max(a_lo, (-r.h_u - p) / lam ** i)
            a_hi = min(a_hi, (r.h_u - p) / lam ** i)
            b_lo = max(b_lo, (-r.h_s - q) * lam ** i)
            b_hi = min(b_hi, (r.h_s - q) * lam ** i)
        boxes[n] = (a_lo, a_hi, b_lo, b_hi)
    alpha = Alphabet(N, keys, anchors, boxes, model, cs)
    alpha.index = {k: i for i, k in enumerate(keys)}
    return alpha


# --------------------------------------------------------------------------
# admissible sequences and the shadowing map
# --------------------------------------------------------------------------


@dataclass
class TransitionGraph:
    nodes: list  # alphabet indices kept after SCC restriction
    edges: dict  # node -> sorted successors
    witness: dict  # (a, b) -> seed ref
    cycles: list  # tail cycles from periodic seed orbits

    def adjacency(self, size: int) -> np.ndarray:
        m = np.zeros((size, size), dtype=np.int64)
        for a, succ in self.edges.items():
            for b in succ:
                m[a, b] = 1
        return m


def transition_graph(alpha: Alphabet, seed: Seed) -> TransitionGraph:
    n = len(alpha)
    edges = {}
    witness = {}
    sample_range = seed.sample_range
    for ref in seed.samples():
        k, j = ref
        if isinstance(seed.orbits[k], ConnectingSeed) and j == sample_range:
            continue
        a = alpha.index[_seed_itinerary(alpha.cs, seed, ref, alpha.N)]
        b = alpha.index[_seed_itinerary(alpha.cs, seed, (k, j + 1), alpha.N)]
        edges.setdefault(a, set()).add(b)
        witness.setdefault((a, b), ref)
    adj = np.zeros((n, n), dtype=np.int64)
    for a, succ in edges.items():
        for b in succ:
            adj[a, b] = 1
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    # keep the largest strongly connected class with at least one edge
    best, best_size = None, -1
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        if adj[np.ix_(members, members)].sum() == 0:
            continue
        if len(members) > best_size:
            best, best_size = c, len(members)
    keep = set(int(i) for i in np.flatnonzero(labels == best))
    edges = {a: sorted(b for b in succ if b in keep) for a, succ in edges.items() if a in keep}
    witness = {e: w for e, w in witness.items() if e[0] in keep and e[1] in keep}
    cycles = []
    for o_idx, o in enumerate(seed.orbits):
        if isinstance(o, PeriodicSeed):
            cyc = tuple(alpha.index[_seed_itinerary(alpha.cs, seed, (o_idx, j), alpha.N)] for j in range(o.period))
            if all(c in keep for c in cyc):
                cycles.append(cyc)
    return TransitionGraph(sorted(keep), edges, witness, cycles)


@dataclass(frozen=True)
class AdmissibleSequence:
    """Bi-infinite code: ``left_cycle`` repeated, then ``symbols``, then ``right_cycle`` repeated."""

    symbols: tuple
    center: int
    left_cycle: tuple
    right_cycle: tuple

    def symbol_at(self, i: int) -> int:
        k = self.center + i
        n = len(self.symbols)
        if 0 <= k < n:
            return self.symbols[k]
        if k < 0:
            p = len(self.left_cycle)
            return self.left_cycle[(p - 1 - (-1 - k)) % p]
        p = len(self.right_cycle)
        return self.right_cycle[(k - n) % p]

    def window(self, lo: int, hi: int) -> tuple:
        return tuple(self.symbol_at(i) for i in range(lo, hi + 1))


def witness_point(seed: Seed, graph: TransitionGraph, code: AdmissibleSequence, i: int) -> np.ndarray:
    e = (code.symbol_at(i), code.symbol_at(i + 1))
    ref = graph.witness.get(e)
    if ref is None:
        raise CodingError(f"no witness for transition {e} at index {i}", index=i)
    return seed.point(ref)


def check_admissible(graph: TransitionGraph, code: AdmissibleSequence, radius: int):
    for i in range(-radius, radius):
        if (code.symbol_at(i), code.symbol_at(i + 1)) not in graph.witness:
            raise CodingError(f"code is not admissible at index {i}", index=i)


def _bfs(graph: TransitionGraph, start: int, goal: int):
    prev = {start: None}
    q = deque([start])
    while q:
        a = q.popleft()
        for b in graph.edges.get(a, []):
            if b not in prev:
                prev[b] = a
                if b == goal:
                    path = [b]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return path[::-1]
                q.append(b)
    return None


def random_code(graph: TransitionGraph, rng, length: int = 12) -> AdmissibleSequence:
    left = graph.cycles[int(rng.integers(len(graph.cycles)))]
    right = graph.cycles[int(rng.integers(len(graph.cycles)))]
    cur = left[-1]
    mid = []
    for _ in range(length):
        succ = graph.edges[cur]
        cur = succ[int(rng.integers(len(succ)))]
        mid.append(cur)
    path = _bfs(graph, cur, right[0])
    mid.extend(path[1:-1])
    if not mid:
        mid = [left[0]] if graph.witness.get((left[-1], left[0])) else [right[0]]
    if (mid[-1], right[0]) not in graph.witness:
        tail = _bfs(graph, mid[-1], right[0])
        mid.extend(tail[1:-1])
    return AdmissibleSequence(tuple(mid), len(mid) // 2, tuple(left), tuple(right))


def periodic_code(cycle, phase: int = 0) -> AdmissibleSequence:
    cyc = tuple(cycle)
    p = len(cyc)
    rot = cyc[phase % p:] + cyc[:phase % p]
    return AdmissibleSequence(rot, 0, rot, rot)


def splice(a: AdmissibleSequence, b: AdmissibleSequence, radius: int) -> AdmissibleSequence:
    """Past of a (indices <= 0) joined to the future of b (indices >= 0); requires a_0 = b_0."""
    if a.symbol_at(0) != b.symbol_at(0):
        raise PreconditionError("splice needs equal symbols at index 0")
    lp, rp = len(a.left_cycle), len(b.right_cycle)
    # a window long enough that both stored windows are exhausted and the tails are periodic
    far = radius + len(a.symbols) + len(b.symbols) + lp + rp
    syms = a.window(-far, 0) + b.window(1, far)
    left = tuple(a.symbol_at(-far - lp + k) for k in range(lp))
    right = tuple(b.symbol_at(far + 1 + k) for k in range(rp))
    return AdmissibleSequence(syms, far, left, right)


@dataclass
class ShadowReport:
    point: np.ndarray
    iterations_forward: int
    iterations_backward: int
    halving_ok: bool
    worst_halving_ratio: float
    certificate_ok: bool
    max_offset: float
    in_rectangles: bool
    window: tuple


def shadow_sequence(model: LinearToyFlow, seed: Seed, graph: TransitionGraph, alpha: Alphabet,
                    code: AdmissibleSequence, constants: CodingConstants, window: int | None = None) -> ShadowReport:
    """Forward ``w_n`` and backward ``v_n`` bracket recursions at stride N0; ``psi = [v, w]``."""
    N0 = constants.N0
    eps = constants.epsilon
    lam = model.lam
    W = window if window is not None else 2 * N0
    check_admissible(graph, code, max(W, N0) + 1)
    u0 = witness_point(seed, graph, code, 0)
    worst = 0.0

    def halving(n, size):
        # d(G^{-j+1} w_{n-1}, G^{-j} w_n) for j = 0..n, in the adapted norm
        nonlocal worst
        for j in range(n + 1):
            d = lam ** (-j * N0) * size
            ratio = d / (eps / 2 ** j)
            worst = max(worst, ratio)
            if ratio >= 1.0:
                raise CodingError(f"Cauchy step {n} fails to halve at level {j}; N0 too small", step=n, level=j)

    # forward: unstable coordinate of psi from the future
    a_sum, w = 0.0, u0
    nf = 0
    for n in range(1, PSI_MAX_ITER + 1):
        g = model.map(w, N0)
        un = witness_point(seed, graph, code, n * N0)
        _, vec = model.torus_offset(g, un, 0.0)
        alpha_n = model.eig(vec)[0]
        halving(n, lam ** -0.5 * abs(alpha_n))
        w = np.mod(g + alpha_n * model.e_u, 1.0)
        a_sum += lam ** (-n * N0) * alpha_n
        nf = n
        if lam ** (-n * N0) * abs(alpha_n) * lam ** -0.5 < PSI_TOL:
            break
    # backward: stable coordinate of psi from the past
    b_sum, v = 0.0, u0
    nb = 0
    for n in range(1, PSI_MAX_ITER + 1):
        g = model.map(v, -N0)
        un = witness_point(seed, graph, code, -n * N0)
        _, vec = model.torus_offset(g, un, 0.0)
        beta_n = model.eig(vec)[1]
        halving(n, lam ** 0.5 * abs(beta_n))
        v = np.mod(g + beta_n * model.e_s, 1.0)
        b_sum += lam ** (-n * N0) * beta_n
        nb = n
        if lam ** (-n * N0) * abs(beta_n) * lam ** 0.5 < PSI_TOL:
            break
    psi = np.mod(u0 + a_sum * model.e_u + b_sum * model.e_s, 1.0)
    cert_ok, max_off, in_rect = certify(model, seed, graph, alpha, code, psi, constants, W)
    return ShadowReport(psi, nf, nb, True, worst, cert_ok, max_off, in_rect, (-W, W))


def certify(model, seed, graph, alpha, code, psi, constants, W):
    """Offsets ``e_i = F^i psi - u_i`` from ``e_{i+1} = A e_i + (F u_i - u_{i+1})``."""
    lam = model.lam
    u = {i: witness_point(seed, graph, code, i) for i in range(-W, W + 1)}
    _, e0 = model.torus_offset(u[0], psi, 0.0)
    eu, es = model.eig(e0)
    offs = {0: (eu, es)}
    cu, cs_ = eu, es
    for i in range(0, W):
        _, g = model.torus_offset(u[i + 1], model.map(u[i], 1), 0.0)
        gu, gs = model.eig(g)
        cu, cs_ = lam * cu + gu, cs_ / lam + gs
        offs[i + 1] = (cu, cs_)
    cu, cs_ = eu, es
    for i in range(0, -W, -1):
        _, g = model.torus_offset(u[i], model.map(u[i - 1], 1), 0.0)
        gu, gs = model.eig(g)
        cu, cs_ = (cu - gu) / lam, (cs_ - gs) * lam
        offs[i - 1] = (cu, cs_)
    radius = constants.shadow_radius
    max_off = max(lam ** -0.5 * abs(a) + lam ** 0.5 * abs(b) for a, b in offs.values())
    in_rect = True
    for i, (a, b) in offs.items():
        x = np.mod(u[i] + model.from_eig(a, b), 1.0)
        rid = alpha.keys[code.symbol_at(i)][alpha.N]
        r = alpha.cs.rectangles[rid]
        p, q = alpha.cs.coords(rid, x)
        if abs(p) > r.h_u + 1e-12 or abs(q) > r.h_s + 1e-12:
            in_rect = False
    return max_off < radius, max_off, in_rect


def recode(model: LinearToyFlow, alpha: Alphabet, psi, W: int) -> tuple:
    return tuple(alpha.symbol_of(model.map(psi, i)) for i in range(-W, W + 1))


# --------------------------------------------------------------------------
# envelope
# --------------------------------------------------------------------------


@dataclass
class CodedSet:
    constants: CodingConstants
    cross_section: CrossSection = field(repr=False)
    alphabet: Alphabet = field(repr=False)
    graph: TransitionGraph = field(repr=False)
    samples: list = field(repr=False)
    U: float = 0.0
    report: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v["ok"] for v in self.report.values())

    def failures(self):
        return [k for k, v in self.report.items() if not v["ok"]]

    def to_dict(self) -> dict:
        g = self.graph
        return {
            "constants": self.constants.to_dict(),
            "U": self.U,
            "rectangles": [{"id": r.id, "center": list(r.center), "h_u": r.h_u, "h_s": r.h_s}
                           for r in self.cross_section.rectangles],
            "alphabet": [{"id": i, "itinerary": list(k), "diameter": float(d)}
                         for i, (k, d) in enumerate(zip(self.alphabet.keys, self.alphabet.diameters))],
            "alphabet_size": len(self.alphabet),
            "graph": {"nodes": g.nodes, "edges": {str(a): b for a, b in sorted(g.edges.items())}},
            "entropy": graph_entropy(g, len(self.alphabet)),
            "report": self.report,
            "ok": self.ok,
        }


def graph_entropy(graph: TransitionGraph, size: int) -> float:
    adj = graph.adjacency(size)
    rho = float(np.max(np.abs(np.linalg.eigvals(adj.astype(float))))) if adj.any() else 0.0
    return math.log(rho) if rho > 0 else -math.inf


def _seed_min_distance(model, seed_pts: np.ndarray, x) -> float:
    """Section distance from x to the nearest of ``seed_pts`` (points closer than 1/4 are exact)."""
    lam = model.lam
    d = np.asarray(x, dtype=float)[None, :] - seed_pts
    d -= np.round(d)
    cand = d[:, None, :] + _SHIFTS[None, :, :]
    ab = cand @ model.basis_inv.T
    norms = lam ** -0.5 * np.abs(ab[..., 0]) + lam ** 0.5 * np.abs(ab[..., 1])
    return float(np.min(norms))


def build_envelope(model: LinearToyFlow, seed: Seed, U: float, constants: CodingConstants | None = None,
                   samples: int = 200, rng_seed: int = 0, alpha_rect: float = DEFAULT_ALPHA_RECT,
                   code_length: int = 12) -> CodedSet:
    """Code, shadow and verify; failures are reported per property with a witness."""
    cs = build_cross_section(model, seed, alpha_rect)
    constants = constants or choose_constants(model, seed, U, cs, alpha_rect, rng_seed)
    N0 = constants.N0
    W = 2 * N0
    alpha = refine(cs, seed, 2 * N0)
    graph = transition_graph(alpha, seed)
    rng = np.random.default_rng(rng_seed)
    report = {}
    ineq = constants.inequalities()
    report["constants"] = {"ok": all(ineq.values()), "detail": {k: bool(v) for k, v in ineq.items()}}

    codes = [random_code(graph, rng, code_length) for _ in range(samples)]
    results, failures = [], {"certificate": None, "halving": None, "recode": None, "rectangles": None}
    for idx, code in enumerate(codes):
        try:
            r = shadow_sequence(model, seed, graph, alpha, code, constants, W)
        except CodingError as exc:
            failures["halving"] = failures["halving"] or {"sample": idx, "error": exc.one_line()}
            results.append(None)
            continue
        results.append(r)
        if not r.certificate_ok and failures["certificate"] is None:
            failures["certificate"] = {"sample": idx, "max_offset": r.max_offset}
        if not r.in_rectangles and failures["rectangles"] is None:
            failures["rectangles"] = {"sample": idx}
        if recode(model, alpha, r.point, W) != code.window(-W, W) and failures["recode"] is None:
            failures["recode"] = {"sample": idx}
    good = [r for r in results if r is not None]
    report["halving"] = {"ok": failures["halving"] is None and len(good) == samples,
                         "worst_ratio": max((r.worst_halving_ratio for r in good), default=None),
                         "witness": failures["halving"]}
    report["certificate"] = {"ok": failures["certificate"] is None and len(good) == samples,
                             "radius": constants.shadow_radius,
                             "max_offset": max((r.max_offset for r in good), default=None),
                             "witness": failures["certificate"]}
    report["in_rectangles"] = {"ok": failures["rectangles"] is None and len(good) == samples,
                               "witness": failures["rectangles"]}
    report["injectivity"] = {"ok": failures["recode"] is None and len(good) == samples,
                             "samples": len(good), "witness": failures["recode"]}

    # seed sequences are mapped to themselves
    worst_seed, seed_witness = 0.0, None
    for o_idx, o in enumerate(seed.orbits):
        refs = [(o_idx, j) for j in (range(o.period) if isinstance(o, PeriodicSeed) else range(-3, 4))]
        for ref in refs:
            code = seed_code(alpha, graph, seed, ref, W)
            try:
                psi = shadow_sequence(model, seed, graph, alpha, code, constants, W).point
            except CodingError as exc:
                seed_witness = {"ref": list(ref), "error": exc.one_line()}
                worst_seed = math.inf
                continue
            d = section_distance(model, psi, seed.point(ref))
            if d > worst_seed:
                worst_seed = d
                if d > 1e-9:
                    seed_witness = {"ref": list(ref), "distance": d}
    report["seed_in_envelope"] = {"ok": worst_seed <= 1e-9, "max_distance": worst_seed, "witness": seed_witness}

    # envelope inside U
    seed_pts = np.array([seed.point(r) for r in seed.samples()])
    worst_u, u_witness = 0.0, None
    for idx, r in enumerate(good):
        for i in range(-W, W + 1):
            d = _seed_min_distance(model, seed_pts, model.map(r.point, i))
            if d > worst_u:
                worst_u = d
                if d >= U:
                    u_witness = u_witness or {"sample": idx, "iterate": i, "distance": d}
    report["envelope_in_U"] = {"ok": worst_u < U, "max_distance": worst_u, "U": U, "witness": u_witness}

    # bracket closure: [psi(a), psi(b)] = psi([a, b]) when a_0 = b_0
    worst_b, b_witness, tested = 0.0, None, 0
    by_symbol = {}
    for idx, (code, r) in enumerate(zip(codes, results)):
        if r is not None:
            by_symbol.setdefault(code.symbol_at(0), []).append(idx)
    for sym, idxs in sorted(by_symbol.items()):
        for i1, i2 in zip(idxs, idxs[1:]):
            sp = splice(codes[i1], codes[i2], W)
            psi_s = shadow_sequence(model, seed, graph, alpha, sp, constants, W).point
            br = section_bracket(model, results[i1].point, results[i2].point)
            d = section_distance(model, br, psi_s)
            tested += 1
            if d > worst_b:
                worst_b = d
                if d > 1e-9:
                    b_witness = {"samples": [i1, i2], "distance": d}
    report["bracket_closure"] = {"ok": worst_b <= 1e-9 and tested > 0, "pairs": tested, "max_residual": worst_b,
                                 "witness": b_witness}

    adj = graph.adjacency(len(alpha))
    sub = adj[np.ix_(graph.nodes, graph.nodes)]
    ncomp, _ = connected_components(sub, directed=True, connection="strong")
    report["transitive"] = {"ok": ncomp == 1, "nodes": len(graph.nodes), "components": int(ncomp)}

    return CodedSet(constants, cs, alpha, graph, [(c, r) for c, r in zip(codes, results)], U, report)


def seed_code(alpha: Alphabet, graph: TransitionGraph, seed: Seed, ref, W: int) -> AdmissibleSequence:
    """Code of a seed point: its own itinerary, with the periodic orbits' codes as tails."""
    k, j = ref
    o = seed.orbits[k]
    if isinstance(o, PeriodicSeed):
        cyc = tuple(alpha.index[_seed_itinerary(alpha.cs, seed, (k, j + i), alpha.N)] for i in range(o.period))
        return periodic_code(cyc)
    far = seed.sample_range
    syms = tuple(alpha.index[_seed_itinerary(alpha.cs, seed, (k, i), alpha.N)] for i in range(-far, far + 1))
    src = [seed.orbits.index(o.src)]
    dst = [seed.orbits.index(o.dst)]
    lp = o.src.period
    rp = o.dst.period
    left = tuple(alpha.index[_seed_itinerary(alpha.cs, seed, (src[0], -far - lp + i), alpha.N)] for i in range(lp))
    right = tuple(alpha.index[_seed_itinerary(alpha.cs, seed, (dst[0], far + 1 + i), alpha.N)] for i in range(rp))
    return AdmissibleSequence(syms, far + j, left, right)
