"""Flow models and the standard catalog.

Three kinds of model are provided:

* ``MarkovCurvatureFlow``: a suspension of a subshift of finite type whose
  symbols carry a dwell time (roof) and a constant curvature ``K = -a**2``.
* ``SurfaceOfRevolution``: geodesics on a warped surface
  ``dr**2 + f(r)**2 dtheta**2`` with ``f = c0 + c1*cosh(a r) + c2*r**2``.
* ``LinearToyFlow``: the suspension of the cat map ``[[2,1],[1,1]]``.

All curvatures are nonpositive, so every along-orbit algorithm downstream
only ever consumes ``K`` sampled along orbits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import connected_components

from .errors import CrossModelError, IntegratorError, ModelError, WindowExhausted

SNAP = 1e-12
DEFAULT_WIDTH = 256


# --------------------------------------------------------------------------
# Markov curvature suspensions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovPoint:
    """A point of a Markov suspension.

    ``symbols`` is a finite window of symbol indices; ``center`` indexes the
    symbol currently being traversed and ``tau`` is the elapsed dwell time in
    it. Optional periodic continuations extend the window to the left/right:
    index ``-1-j`` reads ``left_cycle[(p-1-j) % p]`` and index ``L+j`` reads
    ``right_cycle[j % p]``.
    """

    model: str
    symbols: tuple
    center: int
    tau: float
    left_cycle: tuple | None = None
    right_cycle: tuple | None = None

    def available(self, index: int) -> bool:
        if index < 0:
            return self.left_cycle is not None
        if index >= len(self.symbols):
            return self.right_cycle is not None
        return True

    def symbol_at(self, index: int) -> int:
        n = len(self.symbols)
        if 0 <= index < n:
            return self.symbols[index]
        if index < 0 and self.left_cycle is not None:
            p = len(self.left_cycle)
            return self.left_cycle[(p - 1 - (-1 - index)) % p]
        if index >= n and self.right_cycle is not None:
            return self.right_cycle[(index - n) % len(self.right_cycle)]
        raise WindowExhausted(
            f"symbol index {index} outside stored window [0, {n}) with no continuation",
            required_width=_required_width(self, index),
        )

    def relative_sequence(self, radius: int) -> np.ndarray:
        """Symbols at offsets -radius..radius from the center; -1 if unavailable."""
        idx = self.center + np.arange(-radius, radius + 1)
        n = len(self.symbols)
        out = np.full(idx.shape, -1, dtype=np.int64)
        inside = (idx >= 0) & (idx < n)
        out[inside] = np.asarray(self.symbols, dtype=np.int64)[idx[inside]]
        if self.left_cycle is not None:
            m = idx < 0
            p = len(self.left_cycle)
            out[m] = np.asarray(self.left_cycle, dtype=np.int64)[(p + idx[m]) % p]
        if self.right_cycle is not None:
            m = idx >= n
            out[m] = np.asarray(self.right_cycle, dtype=np.int64)[(idx[m] - n) % len(self.right_cycle)]
        return out


def _required_width(p: MarkovPoint, index: int) -> int:
    left = p.center
    right = len(p.symbols) - 1 - p.center
    need = abs(index - p.center)
    return max(need, left, right) + 1


class MarkovCurvatureFlow:
    """Suspension flow over a topological Markov chain with constant curvature per symbol."""

    kind = "markov-curvature"

    def __init__(self, name, alphabet, adjacency, roofs, curvatures, description=""):
        self.name = str(name)
        self.description = description
        self.alphabet = tuple(str(s) for s in alphabet)
        n = len(self.alphabet)
        if n < 1:
            raise ModelError("alphabet must contain at least one symbol")
        if len(set(self.alphabet)) != n:
            raise ModelError("alphabet symbols must be distinct")
        adj = np.asarray(adjacency, dtype=np.int64)
        if adj.shape != (n, n) or not np.isin(adj, (0, 1)).all():
            raise ModelError(f"adjacency must be a 0/1 matrix of shape ({n}, {n})")
        self.adjacency = adj
        self.adjacency.setflags(write=False)
        self.roofs = _per_symbol(roofs, self.alphabet, "roofs")
        self.curvatures = _per_symbol(curvatures, self.alphabet, "curvatures")
        for s, r in zip(self.alphabet, self.roofs):
            if not (r > 0 and math.isfinite(r)):
                raise ModelError(f"roof of symbol {s!r} must be positive, got {r}")
        for s, k in zip(self.alphabet, self.curvatures):
            if not math.isfinite(k) or k > 0:
                raise ModelError(f"curvature of symbol {s!r} must be <= 0, got {k}")
        ncomp, _ = connected_components(adj, directed=True, connection="strong")
        if ncomp != 1 or adj.sum() == 0:
            raise ModelError("adjacency is reducible (graph is not strongly connected)")
        self.rates = tuple(math.sqrt(-k) for k in self.curvatures)
        self.flat = tuple(k == 0.0 for k in self.curvatures)

    # -- structure ---------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.alphabet)

    @property
    def k_max(self) -> float:
        return max(self.rates)

    @property
    def has_flat_loop(self) -> bool:
        flat = [i for i, f in enumerate(self.flat) if f]
        if not flat:
            return False
        sub = self.adjacency[np.ix_(flat, flat)]
        if np.any(np.diag(sub)):
            return True
        ncomp, labels = connected_components(sub, directed=True, connection="strong")
        return any(np.sum(labels == c) > 1 for c in range(ncomp))

    def index(self, symbol) -> int:
        if isinstance(symbol, (int, np.integer)):
            if not 0 <= symbol < self.size:
                raise ModelError(f"symbol index {symbol} out of range")
            return int(symbol)
        try:
            return self.alphabet.index(str(symbol))
        except ValueError:
            raise ModelError(f"unknown symbol {symbol!r} for model {self.name}") from None

    def parse_word(self, word) -> tuple:
        """Accept a string of one-character symbols or a sequence of names/indices."""
        if isinstance(word, str):
            if all(len(s) == 1 for s in self.alphabet):
                items = list(word)
            else:
                items = word.split()
        else:
            items = list(word)
        return tuple(self.index(s) for s in items)

    def word_string(self, word) -> str:
        sep = "" if all(len(s) == 1 for s in self.alphabet) else " "
        return sep.join(self.alphabet[i] for i in word)

    def admissible(self, word, cyclic=False) -> bool:
        w = list(word)
        pairs = list(zip(w, w[1:]))
        if cyclic and w:
            pairs.append((w[-1], w[0]))
        return all(self.adjacency[a, b] for a, b in pairs)

    # -- points ------------------------------------------------------------

    def point(self, symbols, center=0, tau=0.0, left_cycle=None, right_cycle=None) -> MarkovPoint:
        syms = self.parse_word(symbols)
        lc = self.parse_word(left_cycle) if left_cycle is not None else None
        rc = self.parse_word(right_cycle) if right_cycle is not None else None
        if not syms:
            raise ModelError("point window must be nonempty")
        if not 0 <= center < len(syms):
            raise ModelError("center must index the stored window")
        if not self.admissible(syms):
            raise ModelError("point window is not an admissible word")
        if lc is not None and not (self.admissible(lc, cyclic=True) and self.adjacency[lc[-1], syms[0]]):
            raise ModelError("left continuation is not admissible")
        if rc is not None and not (self.admissible(rc, cyclic=True) and self.adjacency[syms[-1], rc[0]]):
            raise ModelError("right continuation is not admissible")
        r = self.roofs[syms[center]]
        if not 0.0 <= tau < r:
            raise ModelError(f"phase tau={tau} outside [0, {r})")
        return MarkovPoint(self.name, syms, int(center), float(tau), lc, rc)

    def periodic_point(self, word, offset=0, tau=0.0) -> MarkovPoint:
        """Point on the periodic orbit of ``word``, at symbol ``offset`` of the word."""
        w = self.parse_word(word)
        if not w or not self.admissible(w, cyclic=True):
            raise ModelError(f"word {word!r} is not a closed admissible cycle")
        return self.point(w, center=offset % len(w), tau=tau, left_cycle=w, right_cycle=w)

    def random_point(self, rng, width=DEFAULT_WIDTH) -> MarkovPoint:
        """Random admissible window of ``2*width+1`` symbols with uniform phase."""
        succ = [np.flatnonzero(self.adjacency[i]) for i in range(self.size)]
        cur = int(rng.integers(self.size))
        seq = [cur]
        for _ in range(2 * width):
            cur = int(rng.choice(succ[cur]))
            seq.append(cur)
        tau = float(rng.uniform(0.0, self.roofs[seq[width]]))
        return self.point(seq, center=width, tau=tau)

    def _check(self, p):
        if not isinstance(p, MarkovPoint) or p.model != self.name:
            raise CrossModelError(f"point does not belong to model {self.name}")

    # -- dynamics ----------------------------------------------------------

    def _roof_at(self, p: MarkovPoint, index: int) -> float:
        return self.roofs[p.symbol_at(index)]

    def flow(self, p: MarkovPoint, t: float) -> MarkovPoint:
        self._check(p)
        if not math.isfinite(t):
            raise ModelError("flow time must be finite")
        if t == 0:
            return p
        c, tau = p.center, p.tau + t
        while tau >= self._roof_at(p, c) - SNAP:
            tau -= self._roof_at(p, c)
            c += 1
            tau = max(tau, 0.0)
        while tau < 0:
            c -= 1
            r = self._roof_at(p, c)
            tau += r
            if r - tau < SNAP:
                c += 1
                tau = 0.0
        return MarkovPoint(p.model, p.symbols, c, tau, p.left_cycle, p.right_cycle)

    def reverse(self, p: MarkovPoint) -> MarkovPoint:
        self._check(p)
        n = len(p.symbols)
        syms = tuple(reversed(p.symbols))
        lc = tuple(reversed(p.right_cycle)) if p.right_cycle is not None else None
        rc = tuple(reversed(p.left_cycle)) if p.left_cycle is not None else None
        if p.tau == 0.0:
            center = n - p.center
            tau = 0.0
        else:
            center = n - 1 - p.center
            tau = self._roof_at(p, p.center) - p.tau
        q = MarkovPoint(p.model, syms, center, tau, lc, rc)
        if not (0 <= center < n):
            # boundary point at the window edge: the previous symbol lives in the continuation
            q.symbol_at(center)
        if tau >= self._roof_at(q, center) - SNAP:
            q = MarkovPoint(p.model, syms, center + 1, 0.0, lc, rc)
        return q

    def curvature_at(self, p: MarkovPoint) -> float:
        self._check(p)
        return self.curvatures[p.symbol_at(p.center)]

    def segments(self, p: MarkovPoint, t0: float, t1: float):
        """Constant-curvature pieces ``(duration, K)`` covering ``[t0, t1]`` of the orbit of p."""
        self._check(p)
        if t1 < t0:
            raise ModelError("segments requires t0 <= t1")
        q = self.flow(p, t0)
        c, tau = q.center, q.tau
        remaining = t1 - t0
        out = []
        while remaining > 0:
            s = q.symbol_at(c)
            piece = min(self.roofs[s] - tau, remaining)
            out.append((piece, self.curvatures[s]))
            remaining -= piece
            c += 1
            tau = 0.0
        return out

    def span(self, p: MarkovPoint):
        """Time available before/after p inside the stored window (inf with continuation)."""
        self._check(p)
        if p.left_cycle is not None:
            past = math.inf
        else:
            past = p.tau + sum(self.roofs[p.symbols[i]] for i in range(0, p.center))
        if p.right_cycle is not None:
            future = math.inf
        else:
            future = sum(self.roofs[p.symbols[i]] for i in range(p.center, len(p.symbols))) - p.tau
        return past, future

    def flat_before(self, p: MarkovPoint, t: float) -> bool:
        """True when the curvature vanishes identically on ``(-inf, t]`` along the orbit of p."""
        self._check(p)
        q = self.flow(p, t)
        if p.left_cycle is not None:
            if not all(self.flat[s] for s in p.left_cycle):
                return False
        elif not all(self.flat):
            return False
        top = min(q.center, len(p.symbols) - 1)
        return all(self.flat[p.symbols[i]] for i in range(0, top + 1))

    # -- metric ------------------------------------------------------------

    def _rho(self, x: MarkovPoint, y: MarkovPoint, radius: int) -> float:
        sx = x.relative_sequence(radius)
        sy = y.relative_sequence(radius)
        offsets = np.abs(np.arange(-radius, radius + 1))
        both = (sx >= 0) & (sy >= 0)
        diff = both & (sx != sy)
        weight = 0.0
        if diff.any():
            n = int(offsets[diff].min())
            r = max(self.roofs[sx[radius]], self.roofs[sy[radius]])
            weight = r * 2.0 ** (-n)
        return abs(x.tau - y.tau) + weight

    def _events(self, p: MarkovPoint):
        out = []
        c, t = p.center, self._roof_at(p, p.center) - p.tau
        while t <= 1.0:
            out.append(t)
            c += 1
            t += self._roof_at(p, c)
        return out

    def distance(self, p: MarkovPoint, q: MarkovPoint) -> float:
        """Sup over ``t in [0, 1]`` of ``|tau_x - tau_y| + max(roof) * 2**-n``.

        ``n`` is the first offset from the center where the symbol sequences
        disagree; the footpoint distance is constant between symbol crossings,
        so the sup is a max over t=0 and the crossing times.
        """
        self._check(p)
        self._check(q)
        radius = _comparison_radius(p, q)
        times = sorted({0.0, *self._events(p), *self._events(q)})
        return max(self._rho(self.flow(p, t), self.flow(q, t), radius) for t in times)

    def to_dict(self):
        return {
            "kind": self.kind,
            "name": self.name,
            "description": self.description,
            "alphabet": list(self.alphabet),
            "adjacency": self.adjacency.tolist(),
            "roofs": dict(zip(self.alphabet, self.roofs)),
            "curvatures": dict(zip(self.alphabet, self.curvatures)),
        }


def _comparison_radius(p: MarkovPoint, q: MarkovPoint) -> int:
    cyc = [len(c) for c in (p.left_cycle, p.right_cycle, q.left_cycle, q.right_cycle) if c]
    extra = math.lcm(*cyc) if cyc else 0
    return max(len(p.symbols), len(q.symbols)) + min(extra, 4096) + 2


def _per_symbol(values, alphabet, label):
    if isinstance(values, dict):
        missing = [s for s in alphabet if s not in values]
        extra = [k for k in values if k not in alphabet]
        if missing or extra:
            raise ModelError(f"{label} keys must match the alphabet (missing {missing}, extra {extra})")
        return tuple(float(values[s]) for s in alphabet)
    vals = tuple(float(v) for v in values)
    if len(vals) != len(alphabet):
        raise ModelError(f"{label} needs one value per symbol")
    return vals


def make_markov_model(alphabet, adjacency, roofs, curvatures, name="custom", description=""):
    """Validated Markov curvature model (raises ModelError on bad input)."""
    return MarkovCurvatureFlow(name, alphabet, adjacency, roofs, curvatures, description)


# --------------------------------------------------------------------------
# Surface of revolution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SurfacePoint:
    model: str
    r: float
    theta: float
    rdot: float
    thetadot: float


class SurfaceOfRevolution:
    """Warped metric ``dr^2 + f(r)^2 dtheta^2`` with ``f = c0 + c1 cosh(a r) + c2 r^2``.

    Gaussian curvature is ``K = -f''/f``; the constructor checks ``f > 0``
    and ``K <= 0`` on a sample grid of the declared domain.
    """

    kind = "surface-of-revolution"

    def __init__(self, name="SURF", c0=0.5, c1=0.5, c2=0.0, a=1.0, domain=(-8.0, 8.0),
                 rtol=1e-10, atol=1e-12, description=""):
        self.name = name
        self.description = description
        self.c0, self.c1, self.c2, self.a = float(c0), float(c1), float(c2), float(a)
        self.domain = (float(domain[0]), float(domain[1]))
        self.rtol, self.atol = rtol, atol
        grid = np.linspace(*self.domain, 2001)
        fv = self.f(grid)
        if not np.all(fv > 0):
            raise ModelError("profile f must be positive on the declared domain")
        if not np.all(self.K(grid) <= 1e-14):
            raise ModelError("curvature -f''/f must be <= 0 on the declared domain")

    def f(self, r):
        return self.c0 + self.c1 * np.cosh(self.a * r) + self.c2 * r * r

    def fp(self, r):
        return self.c1 * self.a * np.sinh(self.a * r) + 2.0 * self.c2 * r

    def fpp(self, r):
        return self.c1 * self.a * self.a * np.cosh(self.a * r) + 2.0 * self.c2

    def K(self, r):
        return -self.fpp(r) / self.f(r)

    def point(self, r, theta=0.0, angle=0.0) -> SurfacePoint:
        """Unit vector at ``(r, theta)`` making ``angle`` with the meridian direction."""
        return SurfacePoint(self.name, float(r), float(theta), math.cos(angle),
                            math.sin(angle) / float(self.f(r)))

    def random_point(self, rng) -> SurfacePoint:
        lo, hi = self.domain
        r = rng.uniform(lo / 4, hi / 4)
        return self.point(r, rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi))

    def _check(self, p):
        if not isinstance(p, SurfacePoint) or p.model != self.name:
            raise CrossModelError(f"point does not belong to model {self.name}")

    def _rhs(self, _t, y):
        r, _theta, rd, thd, J, Jp = y
        f, fp = self.f(r), self.fp(r)
        return [rd, thd, f * fp * thd * thd, -2.0 * fp / f * rd * thd, Jp, -self.K(r) * J]

    def integrate(self, p: SurfacePoint, t: float, J=0.0, Jp=0.0, dense=False):
        """Geodesic plus scalar Jacobi equation; returns scipy's solution object."""
        self._check(p)
        y0 = [p.r, p.theta, p.rdot, p.thetadot, J, Jp]
        # thetadot decays like 1/f^2 on escaping geodesics, so it gets a purely relative tolerance
        atol = [self.atol, self.atol, self.atol, 0.0, self.atol, self.atol]
        sol = solve_ivp(self._rhs, (0.0, t), y0, method="DOP853", rtol=self.rtol,
                        atol=atol, dense_output=dense)
        if sol.status < 0:
            err = float("nan")
            raise IntegratorError(f"geodesic integration failed: {sol.message}; achieved error {err}")
        return sol

    def flow(self, p: SurfacePoint, t: float) -> SurfacePoint:
        self._check(p)
        if not math.isfinite(t):
            raise ModelError("flow time must be finite")
        if t == 0:
            return p
        y = self.integrate(p, t).y[:, -1]
        return SurfacePoint(self.name, *map(float, y[:4]))

    def reverse(self, p: SurfacePoint) -> SurfacePoint:
        self._check(p)
        return SurfacePoint(self.name, p.r, p.theta, -p.rdot, -p.thetadot)

    def curvature_at(self, p: SurfacePoint) -> float:
        self._check(p)
        return float(self.K(p.r))

    def clairaut(self, p: SurfacePoint) -> float:
        return float(self.f(p.r)) ** 2 * p.thetadot

    def speed(self, p: SurfacePoint) -> float:
        return math.sqrt(p.rdot ** 2 + (float(self.f(p.r)) * p.thetadot) ** 2)

    def drift(self, p: SurfacePoint, t: float, samples=201):
        """Max deviation of speed and Clairaut constant along the geodesic of length t."""
        sol = self.integrate(p, t, dense=True)
        ts = np.linspace(0, t, samples)
        r, _th, rd, thd = sol.sol(ts)[:4]
        f = self.f(r)
        c0 = self.clairaut(p)
        return {
            "speed": float(np.max(np.abs(np.sqrt(rd ** 2 + (f * thd) ** 2) - 1.0))),
            "clairaut": float(np.max(np.abs(f * f * thd - c0))),
        }

    def distance(self, p: SurfacePoint, q: SurfacePoint, samples=17) -> float:
        """Max over a unit window of the chart distance ``sqrt(dr^2 + (f(rbar) dtheta)^2)``."""
        self._check(p)
        self._check(q)
        ts = np.linspace(0.0, 1.0, samples)
        a = self.integrate(p, 1.0, dense=True).sol(ts)
        b = self.integrate(q, 1.0, dense=True).sol(ts)
        dr = a[0] - b[0]
        dth = np.angle(np.exp(1j * (a[1] - b[1])))
        rbar = 0.5 * (a[0] + b[0])
        return float(np.max(np.hypot(dr, self.f(rbar) * dth)))

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "description": self.description,
                "profile": {"c0": self.c0, "c1": self.c1, "c2": self.c2, "a": self.a},
                "domain": list(self.domain)}


# --------------------------------------------------------------------------
# Cat-map suspension
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CatPoint:
    model: str
    x: tuple
    s: float


CAT_MATRIX = np.array([[2, 1], [1, 1]], dtype=np.int64)
CAT_INVERSE = np.array([[1, -1], [-1, 2]], dtype=np.int64)
# integer involution conjugating the map to its inverse
CAT_FLIP = np.array([[1, 0], [-1, -1]], dtype=np.int64)


class LinearToyFlow:
    """Suspension of the torus automorphism ``[[2,1],[1,1]]`` with unit roof.

    The footpoint distance uses an adapted norm in eigen-coordinates,
    ``|v|_h = lam**(h-1/2) |v_u| + lam**(1/2-h) |v_s|`` evaluated at the
    mean height of the two points, plus ``PHASE_WEIGHT * |ds|``. The map is
    an isometry between heights h and h-1, so the quotient distance is a
    genuine metric and unstable offsets grow exactly like ``lam**t``.
    """

    kind = "linear-toy"
    PHASE_WEIGHT = 8.0
    WINDOW_SAMPLES = 17

    def __init__(self, name="CAT", description=""):
        self.name = name
        self.description = description
        self.matrix = CAT_MATRIX
        self.lam = (3.0 + math.sqrt(5.0)) / 2.0
        self.rate = math.log(self.lam)
        self.curvature = -self.rate ** 2
        vals, vecs = np.linalg.eigh(self.matrix.astype(float))
        order = np.argsort(vals)[::-1]
        vecs = vecs[:, order]
        self.e_u = vecs[:, 0] * np.sign(vecs[0, 0])
        self.e_s = vecs[:, 1] * np.sign(vecs[0, 1])
        self.basis = np.column_stack([self.e_u, self.e_s])
        self.basis_inv = np.linalg.inv(self.basis)
        k = np.arange(-7, 8)
        self._lattice = np.array([(i, j) for i in k for j in k], dtype=float)

    # -- coordinates -------------------------------------------------------

    def eig(self, v):
        """Eigen-coordinates ``(v_u, v_s)`` of a displacement."""
        return self.basis_inv @ np.asarray(v, dtype=float)

    def from_eig(self, a, b):
        return a * self.e_u + b * self.e_s

    def adapted_norm(self, v, h):
        cu, cs = self.eig(v)
        return self.lam ** (h - 0.5) * abs(cu) + self.lam ** (0.5 - h) * abs(cs)

    def torus_offset(self, x, y, h=0.5):
        """Shortest lift of ``y - x`` in the adapted norm at height h; returns (norm, vector)."""
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        d = d - np.round(d)
        cand = d[None, :] + self._lattice
        coords = cand @ self.basis_inv.T
        norms = self.lam ** (h - 0.5) * np.abs(coords[:, 0]) + self.lam ** (0.5 - h) * np.abs(coords[:, 1])
        i = int(np.argmin(norms))
        return float(norms[i]), cand[i]

    def map(self, x, n=1):
        """Apply the torus map n times (n may be negative)."""
        x = np.asarray(x, dtype=float)
        m = self.matrix if n >= 0 else CAT_INVERSE
        for _ in range(abs(int(n))):
            x = np.mod(m @ x, 1.0)
        return x

    # -- points ------------------------------------------------------------

    def point(self, x, s=0.0) -> CatPoint:
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        if not 0.0 <= s < 1.0:
            raise ModelError("height s must lie in [0, 1)")
        return CatPoint(self.name, (float(x[0]), float(x[1])), float(s))

    def random_point(self, rng) -> CatPoint:
        return self.point(rng.uniform(0, 1, 2), float(rng.uniform(0, 1)))

    def _check(self, p):
        if not isinstance(p, CatPoint) or p.model != self.name:
            raise CrossModelError(f"point does not belong to model {self.name}")

    def flow(self, p: CatPoint, t: float) -> CatPoint:
        self._check(p)
        if not math.isfinite(t):
            raise ModelError("flow time must be finite")
        if t == 0:
            return p
        s = p.s + t
        n = math.floor(s)
        s -= n
        if s > 1.0 - SNAP:
            s, n = 0.0, n + 1
        x = self.map(p.x, n)
        return CatPoint(self.name, (float(x[0]), float(x[1])), float(s))

    def reverse(self, p: CatPoint) -> CatPoint:
        self._check(p)
        if p.s == 0.0:
            x = np.mod(CAT_FLIP @ self.map(p.x, -1), 1.0)
            return CatPoint(self.name, (float(x[0]), float(x[1])), 0.0)
        x = np.mod(CAT_FLIP @ np.asarray(p.x), 1.0)
        s = 1.0 - p.s
        if s > 1.0 - SNAP:
            return self.flow(CatPoint(self.name, (float(x[0]), float(x[1])), 0.0), 0.0)
        return CatPoint(self.name, (float(x[0]), float(x[1])), s)

    def curvature_at(self, p: CatPoint) -> float:
        self._check(p)
        return self.curvature

    def segments(self, p: CatPoint, t0: float, t1: float):
        if t1 < t0:
            raise ModelError("segments requires t0 <= t1")
        return [(t1 - t0, self.curvature)] if t1 > t0 else []

    def span(self, p):
        return math.inf, math.inf

    def flat_before(self, p, t) -> bool:
        return False

    def _excursion(self, c, slack_sign, h):
        """Cheapest horizontal step of eigen-size c taken at height h pushed outward by g >= 0."""
        W2 = 2.0 * self.PHASE_WEIGHT
        base = c * self.lam ** (slack_sign * (h - 0.5))
        # pushing by g scales the step cost by lam^-g and costs 2W g of vertical travel
        interior = base * self.rate > W2
        g = np.where(interior, np.log(np.maximum(base * self.rate / W2, 1.0)) / self.rate, 0.0)
        return W2 * g + base * self.lam ** (-g)

    def rho(self, p: CatPoint, q: CatPoint) -> float:
        """Footpoint metric, truncated at 1.

        Path metric on the cover: vertical travel costs PHASE_WEIGHT per unit height,
        the unstable step is taken at the lowest visited height and the stable step at
        the highest, each priced by the adapted norm there. Deck maps preserve it.
        """
        if (q.s, q.x) < (p.s, p.x):
            p, q = q, p  # bitwise symmetry
        best = 1.0
        for k in (-1, 0, 1):
            hq = q.s + k
            lo, hi = min(p.s, hq), max(p.s, hq)
            vert = self.PHASE_WEIGHT * (hi - lo)
            if vert >= best:
                continue
            d = np.asarray(self.map(q.x, -k), dtype=float) - np.asarray(p.x, dtype=float)
            d = d - np.round(d)
            coords = (d[None, :] + self._lattice) @ self.basis_inv.T
            cost = vert + self._excursion(np.abs(coords[:, 0]), 1.0, lo) + self._excursion(np.abs(coords[:, 1]), -1.0, hi)
            best = min(best, float(np.min(cost)))
        return best

    def distance(self, p: CatPoint, q: CatPoint) -> float:
        """Max of the footpoint distance over a fixed grid of the unit window."""
        self._check(p)
        self._check(q)
        ts = np.linspace(0.0, 1.0, self.WINDOW_SAMPLES)
        return max(self.rho(self.flow(p, t), self.flow(q, t)) for t in ts)

    # -- local product structure -------------------------------------------

    def bracket(self, w1: CatPoint, w2: CatPoint) -> CatPoint:
        """Intersection of the unstable leaf of w1 with the center-stable leaf of w2."""
        self._check(w1)
        self._check(w2)
        best = None
        for k in (-1, 0, 1):
            y = self.map(w2.x, -k)
            h = 0.5 * (w1.s + w2.s + k)
            norm, vec = self.torus_offset(w1.x, y, h)
            cost = self.PHASE_WEIGHT * abs(w1.s - w2.s - k) + norm
            if best is None or cost < best[0]:
                best = (cost, vec)
        cu, _ = self.eig(best[1])
        return self.point(np.asarray(w1.x) + cu * self.e_u, w1.s)

    @property
    def kappa(self) -> float:
        """Bracket constant in the adapted norm: both eigen-projections have norm 1."""
        pu = np.outer(self.e_u, self.e_u)
        ps = np.outer(self.e_s, self.e_s)
        # operator norm of a projection in the adapted (eigen-L1) norm
        def op(pm):
            cols = [self.eig(pm @ self.from_eig(1, 0)), self.eig(pm @ self.from_eig(0, 1))]
            return max(abs(c[0]) + abs(c[1]) for c in cols)
        return round(max(op(pu), op(ps)), 12)

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "description": self.description,
                "matrix": self.matrix.tolist()}


# --------------------------------------------------------------------------
# Catalog and model files
# --------------------------------------------------------------------------


def _m0():
    return make_markov_model(["H"], [[1]], {"H": 1.0}, {"H": -1.0}, "M0",
                             "one symbol, K = -1, roof 1")


def _mflat():
    return make_markov_model(["F"], [[1]], {"F": 1.0}, {"F": 0.0}, "MFLAT",
                             "one flat symbol, roof 1")


def _m2():
    return make_markov_model(["A", "B"], [[1, 1], [1, 1]], {"A": 1.0, "B": 1.0},
                             {"A": -1.0, "B": -4.0}, "M2", "full 2-shift, K = -1 and -4")


def _mrank1():
    return make_markov_model(["F", "H"], [[1, 1], [1, 1]], {"F": 1.0, "H": 1.0},
                             {"F": 0.0, "H": -1.0}, "MRANK1", "full 2-shift with a flat symbol")


def _cat():
    return LinearToyFlow("CAT", "suspension of [[2,1],[1,1]], roof 1")


def _surf():
    return SurfaceOfRevolution("SURF", c0=0.5, c1=0.5, c2=0.0, a=1.0,
                               description="f(r) = 0.5 + 0.5 cosh r")


CATALOG = {"M0": _m0, "MFLAT": _mflat, "M2": _m2, "MRANK1": _mrank1, "CAT": _cat, "SURF": _surf}
_CACHE: dict = {}


def get_model(name: str):
    """Catalog model by name (cached; models are immutable)."""
    if name not in CATALOG:
        raise ModelError(f"unknown model {name!r}; catalog has {sorted(CATALOG)}")
    if name not in _CACHE:
        _CACHE[name] = CATALOG[name]()
    return _CACHE[name]


MODEL_KEYS = {
    "markov-curvature": {"kind", "name", "description", "alphabet", "adjacency", "roofs", "curvatures"},
    "surface-of-revolution": {"kind", "name", "description", "profile", "domain"},
    "linear-toy": {"kind", "name", "description", "matrix"},
}


def model_from_dict(d: dict):
    """Build a model from its JSON description (see README for the grammar)."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ModelError("model description must be an object with a 'kind' key")
    kind = d["kind"]
    if kind not in MODEL_KEYS:
        raise ModelError(f"unknown model kind {kind!r}")
    extra = set(d) - MODEL_KEYS[kind]
    if extra:
        raise ModelError(f"unknown model keys {sorted(extra)}")
    name = d.get("name", "custom")
    desc = d.get("description", "")
    if kind == "markov-curvature":
        for key in ("alphabet", "adjacency", "roofs", "curvatures"):
            if key not in d:
                raise ModelError(f"missing model key {key!r}")
        return make_markov_model(d["alphabet"], d["adjacency"], d["roofs"], d["curvatures"], name, desc)
    if kind == "surface-of-revolution":
        prof = d.get("profile", {})
        bad = set(prof) - {"c0", "c1", "c2", "a"}
        if bad:
            raise ModelError(f"unknown profile keys {sorted(bad)}")
        return SurfaceOfRevolution(name, domain=tuple(d.get("domain", (-8.0, 8.0))), description=desc,
                                   **{k: float(v) for k, v in prof.items()})
    if d.get("matrix", CAT_MATRIX.tolist()) != CAT_MATRIX.tolist():
        raise ModelError("linear-toy models support only the matrix [[2,1],[1,1]]")
    return LinearToyFlow(name, desc)


def load_model_file(path) -> object:
    path = Path(path)
    if not path.exists():
        raise ModelError(f"model file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file {path} is not valid JSON: {exc}") from None
    return model_from_dict(data)


def resolve_model(ref):
    """A catalog name, a path to a model file, or an already-built model."""
    if isinstance(ref, (MarkovCurvatureFlow, SurfaceOfRevolution, LinearToyFlow)):
        return ref
    if isinstance(ref, dict):
        return model_from_dict(ref)
    if isinstance(ref, str) and ref in CATALOG:
        return get_model(ref)
    return load_model_file(ref)


def validate_model(model, seed=0, samples=20) -> dict:
    """Sampled structural checks; returns a report with a boolean ``ok``."""
    rng = np.random.default_rng(seed)
    checks = {}
    if isinstance(model, MarkovCurvatureFlow):
        pts = [model.random_point(rng, width=16) for _ in range(samples)]
        checks["curvature_nonpositive"] = all(k <= 0 for k in model.curvatures)
        checks["flat_loop"] = model.has_flat_loop
    elif isinstance(model, LinearToyFlow):
        pts = [model.random_point(rng) for _ in range(samples)]
        checks["curvature_nonpositive"] = model.curvature <= 0
    else:
        pts = [model.random_point(rng) for _ in range(min(samples, 4))]
        checks["curvature_nonpositive"] = True
    flow_err = 0.0
    rev_err = 0.0
    for p in pts:
        s, t = float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))
        flow_err = max(flow_err, model.distance(model.flow(p, s + t), model.flow(model.flow(p, s), t)))
        rev_err = max(rev_err, model.distance(model.reverse(model.reverse(p)), p))
    checks["flow_property"] = flow_err < 1e-8
    checks["reverse_involution"] = rev_err < 1e-8
    return {"model": model.name, "kind": model.kind, "ok": all(bool(v) for k, v in checks.items()
                                                              if k != "flat_loop"),
            "checks": {k: bool(v) for k, v in checks.items()},
            "flow_error": flow_err, "reverse_error": rev_err}


def flow(model, point, t):
    return model.flow(point, t)


def reverse(model, point):
    return model.reverse(point)


def distance(model, p, q):
    return model.distance(p, q)


def curvature_at(model, point):
    return model.curvature_at(point)
