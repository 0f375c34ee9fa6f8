"""Periodic orbits, monodromy exponents and shadowing of orbit chains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import jacobi
from .errors import CycleCapError, ModelError, PreconditionError, ShadowingError
from .models import CatPoint, LinearToyFlow, MarkovCurvatureFlow

DEFAULT_CYCLE_CAP = 200_000
PARABOLIC_TOL = 1e-12
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class PeriodicOrbit:
    model: str
    word: tuple
    label: str
    period: float
    monodromy: tuple  # ((a, b), (c, d))
    chi: float
    mean_curvature: float
    parabolic: bool
    multiplicity: int  # number of distinct rotations (periodic points on the section)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.monodromy)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    @property
    def det_defect(self) -> float:
        """|det - 1| relative to the rounding scale of ad - bc."""
        m = self.matrix
        return abs(self.det - 1.0) / max(1.0, 0.5 * float(np.sum(m * m)))

    @property
    def trace(self) -> float:
        return self.monodromy[0][0] + self.monodromy[1][1]

    @property
    def log_rho(self) -> float:
        return self.chi * self.period


def monodromy(model: MarkovCurvatureFlow, word) -> np.ndarray:
    """Ordered product of per-symbol Jacobi blocks, first symbol applied first."""
    m = np.eye(2)
    for s in word:
        m = jacobi.block(model.roofs[s], model.curvatures[s]) @ m
    return m


def spectral_log(m: np.ndarray) -> tuple[float, bool]:
    """``(log rho, parabolic)`` for a 2x2 matrix of determinant one."""
    tr = abs(m[0, 0] + m[1, 1])
    if tr <= 2.0 + PARABOLIC_TOL:
        return 0.0, True
    # larger root of x^2 - tr x + 1, written to avoid cancellation
    return math.log(0.5 * (tr + math.sqrt((tr - 2.0) * (tr + 2.0)))), False


def periodic_orbit(model: MarkovCurvatureFlow, word) -> PeriodicOrbit:
    w = model.parse_word(word)
    if not w or not model.admissible(w, cyclic=True):
        raise ModelError(f"word {word!r} is not a closed admissible cycle")
    m = monodromy(model, w)
    period = float(sum(model.roofs[s] for s in w))
    log_rho, parabolic = spectral_log(m)
    mean_k = sum(model.roofs[s] * model.curvatures[s] for s in w) / period
    rotations = len({w[i:] + w[:i] for i in range(len(w))})
    return PeriodicOrbit(model.name, w, model.word_string(w), period,
                         tuple(map(tuple, m.tolist())), log_rho / period, mean_k, parabolic, rotations)


def _necklaces(adj: np.ndarray, n: int):
    """Cyclically admissible words of length n that are minimal among their rotations."""
    k = adj.shape[0]
    succ = [[j for j in range(k) if adj[i, j]] for i in range(k)]
    word = [0] * n

    def minimal(w):
        return all(w <= w[i:] + w[:i] for i in range(1, n))

    def rec(pos):
        if pos == n:
            if adj[word[-1], word[0]]:
                t = tuple(word)
                if minimal(t):
                    yield t
            return
        for j in succ[word[pos - 1]]:
            # a necklace never has a symbol smaller than its first
            if j < word[0]:
                continue
            word[pos] = j
            yield from rec(pos + 1)

    for first in range(k):
        word[0] = first
        yield from rec(1)


def enumerate_cycles(model: MarkovCurvatureFlow, max_len: int, cap: int = DEFAULT_CYCLE_CAP):
    """All cycles of length 1..max_len up to rotation, sorted by length then word."""
    if not isinstance(model, MarkovCurvatureFlow):
        raise PreconditionError("cycle enumeration needs a Markov model")
    if max_len < 1:
        raise PreconditionError("max_len must be at least 1")
    out = []
    for n in range(1, max_len + 1):
        for w in _necklaces(model.adjacency, n):
            out.append(periodic_orbit(model, w))
            if len(out) > cap:
                raise CycleCapError(
                    f"more than {cap} cycles up to length {max_len}; increase the cycle cap or lower max_len",
                    cap=cap)
    out.sort(key=lambda o: (len(o.word), o.word))
    return out


@dataclass(frozen=True)
class BoundReport:
    label: str
    chi: float
    bound: float
    slack: float
    equality: bool
    ok: bool


def chi_bound_check(orbit: PeriodicOrbit) -> BoundReport:
    """chi <= sqrt(-mean curvature) for a closed orbit."""
    bound = math.sqrt(max(-orbit.mean_curvature, 0.0))
    slack = bound - orbit.chi
    return BoundReport(orbit.label, orbit.chi, bound, slack, abs(slack) <= BOUND_SLACK, slack >= -BOUND_SLACK)


def _flat_hyperbolic_pair(model: MarkovCurvatureFlow):
    adj = model.adjacency
    for f in range(model.size):
        if not (model.flat[f] and adj[f, f]):
            continue
        for h in range(model.size):
            if not model.flat[h] and adj[f, h] and adj[h, f]:
                return f, h
    return None


def small_exponent_orbits(model: MarkovCurvatureFlow, epsilon: float | None = None, n_max: int = 64):
    """Cycles F^n H, n = 1..n_max, with the comparison bound 2*sqrt(1/(n+1)).

    With ``epsilon`` the list stops at the first orbit whose exponent is below it.
    Returns a list of (n, orbit, bound).
    """
    if not isinstance(model, MarkovCurvatureFlow):
        raise PreconditionError("small-exponent orbits need a Markov model")
    pair = _flat_hyperbolic_pair(model)
    if pair is None:
        raise PreconditionError(f"model {model.name} has no flat loop attached to a hyperbolic symbol")
    f, h = pair
    out = []
    for n in range(1, n_max + 1):
        orb = periodic_orbit(model, (f,) * n + (h,))
        out.append((n, orb, 2.0 * math.sqrt(1.0 / (n + 1))))
        if epsilon is not None and orb.chi < epsilon:
            break
    return out


def loglog_slope(ns, chis) -> float:
    """Least-squares slope of log chi against log n."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(chis, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def exponent_endpoint_orbits(model: MarkovCurvatureFlow, max_len: int):
    """``(chi_min, chi_max)`` over non-parabolic cycles up to ``max_len``."""
    if max_len < 1:
        raise PreconditionError("max_len must be at least 1")
    chis = [o.chi for o in enumerate_cycles(model, max_len) if not o.parabolic]
    if not chis:
        raise PreconditionError("no hyperbolic cycles in range")
    return min(chis), max(chis)


# --------------------------------------------------------------------------
# shadowing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitChain:
    """Chain of orbit segments ``(point, duration)``; ``periodic`` closes it up."""

    segments: tuple
    periodic: bool = False
    T: float = 1.0
    eta: float = 1.0


@dataclass
class ShadowResult:
    point: object
    times: list
    error: float
    bound: float
    gaps: list
    delta: float
    periodic: bool
    period: float | None = None
    certificates: list = field(default_factory=list)


def shadow_delta(model, epsilon: float) -> float:
    kappa = model.kappa if isinstance(model, LinearToyFlow) else 1.0
    return epsilon / (4.0 * kappa ** 2)


def _certify(model, chain: OrbitChain, points):
    certs = [jacobi.reg_membership(model, p, chain.T, chain.eta) for p in points]
    for i, c in enumerate(certs):
        if not c.member:
            raise PreconditionError(
                f"segment {i} endpoint is not in Reg_T(eta): lambda_T={c.lambda_T_value:.6g} < {chain.eta}")
    return certs


def shadow_chain(model, chain: OrbitChain, epsilon: float, certify: bool = True) -> ShadowResult:
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    if not chain.segments:
        raise PreconditionError("chain is empty")
    if isinstance(model, MarkovCurvatureFlow):
        return _shadow_markov(model, chain, epsilon, certify)
    if isinstance(model, LinearToyFlow):
        return _shadow_cat(model, chain, epsilon, certify)
    raise PreconditionError(f"shadowing is not available for model kind {model.kind}")


def _shadow_markov(model, chain, epsilon, certify):
    """Segments are admissible words; the shadow is their concatenation."""
    words = [model.parse_word(w) for w, *_ in chain.segments]
    m = len(words)
    junctions = range(m if chain.periodic else m - 1)
    for i in junctions:
        a, b = words[i][-1], words[(i + 1) % m][0]
        if not model.adjacency[a, b]:
            raise ShadowingError(f"junction {i}: {model.alphabet[a]} -> {model.alphabet[b]} is not admissible",
                                 junction=i)
    for i, w in enumerate(words):
        if not model.admissible(w):
            raise ShadowingError(f"segment {i} is not an admissible word", junction=i)
    full = tuple(s for w in words for s in w)
    if chain.periodic:
        shadow = model.periodic_point(full)
    else:
        shadow = model.point(full)
    certs = _certify(model, chain, [model.periodic_point(w) if model.admissible(w, cyclic=True)
                                    else model.point(w) for w in words]) if certify else []
    times, clock, pos = [], 0.0, 0
    mismatch = 0
    for w in words:
        times.append(clock)
        clock += sum(model.roofs[s] for s in w)
        mismatch += sum(full[pos + j] != s for j, s in enumerate(w))
        pos += len(w)
    return ShadowResult(shadow, times, float(mismatch), 0.0, [0.0] * len(junctions), shadow_delta(model, epsilon),
                        chain.periodic, clock if chain.periodic else None, certs)


def _shadow_cat(model: LinearToyFlow, chain, epsilon, certify):
    """Section pseudo-orbit corrected by the bounded solution of the linear offset recursion."""
    pts, durs = [], []
    for p, n in chain.segments:
        if not isinstance(p, CatPoint) or p.s != 0.0:
            raise PreconditionError("CAT chain segments must start on the section s = 0")
        if int(n) != n or n < 1:
            raise PreconditionError("CAT segment durations must be positive integers")
        pts.append(np.asarray(p.x))
        durs.append(int(n))
    m = len(pts)
    delta = shadow_delta(model, epsilon)
    # pseudo-orbit on the section and its junction jumps (lifted short vectors)
    ys, jumps, gaps = [], [], []
    for i in range(m):
        y = pts[i]
        for _ in range(durs[i]):
            ys.append(y)
            jumps.append(np.zeros(2))
            y = model.map(y, 1)
        last = i == m - 1
        if last and not chain.periodic:
            ys.append(y)
            break
        nxt = pts[(i + 1) % m]
        gap, vec = model.torus_offset(y, nxt, 0.0)
        gaps.append(gap)
        jumps[-1] = vec
        if gap >= delta:
            raise ShadowingError(f"junction {i}: gap {gap:.3g} exceeds delta {delta:.3g}", junction=i)
    N = len(ys) if chain.periodic else len(ys) - 1
    lam = model.lam
    du = np.array([model.eig(d)[0] for d in jumps[:N]])
    ds = np.array([model.eig(d)[1] for d in jumps[:N]])
    # offsets e_k with z_k = y_k + e_k a true orbit: e_{k+1} = A e_k - d_k
    eu = np.zeros(N + 1)
    es = np.zeros(N + 1)
    if chain.periodic:
        scale = 1.0 / (1.0 - lam ** (-N))
        for k in range(N):
            eu[k] = scale * sum(lam ** (-(j + 1)) * du[(k + j) % N] for j in range(N))
            es[k] = -scale * sum(lam ** (-(j - 1)) * ds[(k - j) % N] for j in range(1, N + 1))
        eu[N], es[N] = eu[0], es[0]
    else:
        for k in range(N - 1, -1, -1):
            eu[k] = (eu[k + 1] + du[k]) / lam
        for k in range(N):
            es[k + 1] = es[k] / lam - ds[k]
    z0 = ys[0] + model.from_eig(eu[0], es[0])
    shadow = model.point(z0, 0.0)
    times = list(np.cumsum([0] + durs[:-1]).astype(float))
    # measured sup-error along each block
    err = 0.0
    k = 0
    for i in range(m):
        v = model.point(pts[i], 0.0)
        for j in range(durs[i]):
            err = max(err, model.distance(model.flow(shadow, k), model.flow(v, j)))
            k += 1
    tau = min(durs)
    q = lam ** (-tau)
    bound = model.kappa * (max(gaps) if gaps else 0.0) * (1.0 + 2.0 * q / (1.0 - q))
    certs = _certify(model, chain, [model.point(p, 0.0) for p in pts]) if certify else []
    return ShadowResult(shadow, times, err, bound, gaps, delta, chain.periodic,
                        float(N) if chain.periodic else None, certs)


def random_cat_chain(model: LinearToyFlow, rng, segments: int, gap: float, min_len: int = 2,
                     max_len: int = 6, periodic: bool = False) -> OrbitChain:
    """Pseudo-orbit with junction gaps of adapted size at most ``gap``.

    Open chains perturb each junction by an offset of size exactly ``gap``.
    Periodic chains perturb the points of an exact periodic orbit so that
    every junction, including the closing one, stays below ``gap``.
    """
    lens = [int(rng.integers(min_len, max_len + 1)) for _ in range(segments)]

    def offset(size):
        cu, cs = rng.uniform(-1, 1, 2)
        norm = model.lam ** -0.5 * abs(cu) + model.lam ** 0.5 * abs(cs)
        return model.from_eig(cu, cs) * (size / norm)

    if not periodic:
        pts = [rng.uniform(0, 1, 2)]
        for n in lens[:-1]:
            pts.append(np.mod(model.map(pts[-1], n) + offset(gap), 1.0))
    else:
        N = sum(lens)
        AN = np.linalg.matrix_power(model.matrix, N).astype(float)
        k = rng.integers(-3, 4, 2).astype(float)
        x = np.mod(np.linalg.solve(AN - np.eye(2), k), 1.0)
        starts = np.cumsum([0] + lens[:-1])
        pts = [np.mod(model.map(x, int(s)) + offset(0.5 * gap * model.lam ** (-n)), 1.0)
               for s, n in zip(starts, lens)]
    segs = tuple((model.point(p, 0.0), n) for p, n in zip(pts, lens))
    return OrbitChain(segs, periodic)
