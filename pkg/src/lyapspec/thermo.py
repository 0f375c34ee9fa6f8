"""Pressure, Legendre transforms and spectra for Markov curvature models.

Two estimators:

* ``oracle``: the suspension pressure of a locally constant potential is the
  unique P with spectral radius ``rho(A * exp(w - P r)) = 1``. For the
  geometric potential the model is re-coded as an induced system whose
  blocks are one hyperbolic symbol followed by a run of flat symbols; each
  block carries ``-log rho`` of its own monodromy. Zero-weight flat loops
  contribute their entropy as a floor, which is what produces the plateau.
* ``orbit-sum``: ``(1/T) log`` of the sum of ``exp(t * integral)`` over
  periodic points with period in ``(T - dT, T]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import BracketError, ConvexityError, CycleCapError, EstimatorError, PreconditionError
from .models import MarkovCurvatureFlow
from .orbits import enumerate_cycles, monodromy, spectral_log

BISECT_TOL = 1e-12
DEFAULT_N_MAX = 64
DEFAULT_GRID = tuple(np.linspace(-6.0, 4.0, 81))
PLATEAU_TOL = 0.02
DIFF_STEP = 1e-4
BLOCK_CAP = 20_000


# --------------------------------------------------------------------------
# spectral radius oracle
# --------------------------------------------------------------------------


def log_spectral_radius(adj: np.ndarray, exponents: np.ndarray, right=None) -> float:
    """``log rho(adj * exp(exponents)[None, :])`` without overflow (-inf for nilpotent).

    With ``right`` the matrix is ``(adj * exp(exponents)) @ right`` instead.
    """
    mask = adj > 0
    if not mask.any():
        return -math.inf
    shift = float(np.max(exponents[np.any(mask, axis=0)]))
    mat = np.where(mask, np.exp(exponents - shift)[None, :], 0.0)
    if right is not None:
        mat = mat @ right
    rho = float(np.max(np.abs(np.linalg.eigvals(mat))))
    if rho <= 0.0:
        return -math.inf
    return math.log(rho) + shift


def _bracket(weights, roofs):
    w = np.abs(np.asarray(weights, dtype=float))
    r = np.asarray(roofs, dtype=float)
    width = float(np.max(w / r)) + math.log(len(r)) / float(np.min(r)) + 1.0
    return -width, width


def solve_pressure(adj, weights, roofs, bracket=None, tol=BISECT_TOL) -> float:
    """Unique P with ``rho(adj * exp(weights - P roofs)) = 1``.

    The log spectral radius is strictly decreasing in P, so Brent's method on
    a sign-changing bracket converges to the same root bisection would.
    """
    adj = np.asarray(adj)
    w = np.asarray(weights, dtype=float)
    r = np.asarray(roofs, dtype=float)
    lo, hi = bracket if bracket is not None else _bracket(w, r)

    def f(P):
        return log_spectral_radius(adj, w - P * r)

    if f(lo) == -math.inf:
        return -math.inf
    if not (f(lo) >= 0.0 >= f(hi)):
        raise BracketError(f"pressure bracket [{lo}, {hi}] does not change sign", lo=lo, hi=hi)
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    return float(brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps))


def _weights_vector(model: MarkovCurvatureFlow, symbol_weights) -> np.ndarray:
    if isinstance(symbol_weights, dict):
        return np.array([float(symbol_weights[s]) for s in model.alphabet])
    w = np.asarray(symbol_weights, dtype=float)
    if w.shape != (model.size,):
        raise PreconditionError("one weight per symbol is required")
    return w


def suspension_pressure_oracle(model: MarkovCurvatureFlow, symbol_weights, adjacency=None) -> float:
    w = _weights_vector(model, symbol_weights)
    if not np.all(np.isfinite(w)):
        raise PreconditionError("weights must be finite")
    adj = model.adjacency if adjacency is None else np.asarray(adjacency)
    return solve_pressure(adj, w, model.roofs)


def proxy_rates(model: MarkovCurvatureFlow) -> np.ndarray:
    """Per-symbol integral of the potential when every symbol is read at its own exponent."""
    return np.array([-a * r for a, r in zip(model.rates, model.roofs)])


# --------------------------------------------------------------------------
# induced block system for the geometric potential
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSystem:
    words: tuple
    adjacency: np.ndarray = field(repr=False)
    costs: np.ndarray = field(repr=False)  # integral of phi^geo per block
    roofs: np.ndarray = field(repr=False)
    flat_adjacency: np.ndarray = field(repr=False)
    flat_roofs: np.ndarray = field(repr=False)
    first: np.ndarray = field(repr=False, default=None)  # one-hot first symbol per block
    last: np.ndarray = field(repr=False, default=None)
    symbol_adjacency: np.ndarray = field(repr=False, default=None)

    def log_rho(self, exponents: np.ndarray) -> float:
        """``log rho(adjacency * exp(exponents))`` through the alphabet-sized factorisation.

        Block transitions depend only on (last symbol, first symbol), so the
        block matrix is P A Q and shares its nonzero spectrum with A (Q P).
        """
        if not len(self.words):
            return -math.inf
        shift = float(np.max(exponents))
        g = self.first.T @ (np.exp(exponents - shift)[:, None] * self.last)
        return log_spectral_radius(self.symbol_adjacency, np.zeros(len(g)), g) + shift


def block_system(model: MarkovCurvatureFlow, n_max: int = DEFAULT_N_MAX, adjacency=None) -> BlockSystem:
    adj = model.adjacency if adjacency is None else np.asarray(adjacency)
    return _block_system(model, n_max, adj.tobytes(), adj.shape)


@lru_cache(maxsize=64)
def _block_system(model, n_max, adj_bytes, shape):
    adj = np.frombuffer(adj_bytes, dtype=np.int64).reshape(shape)
    hyper = [i for i in range(model.size) if not model.flat[i]]
    flats = [i for i in range(model.size) if model.flat[i]]
    words = []
    for h in hyper:
        stack = [(h,)]
        while stack:
            w = stack.pop()
            words.append(w)
            if len(words) > BLOCK_CAP:
                raise CycleCapError(f"more than {BLOCK_CAP} blocks; lower n_max", cap=BLOCK_CAP)
            if len(w) - 1 < n_max:
                for f in reversed(flats):
                    if adj[w[-1], f]:
                        stack.append(w + (f,))
    words.sort(key=lambda w: (w[0], len(w), w))
    n = len(words)
    badj = np.zeros((n, n), dtype=np.int64)
    for i, a in enumerate(words):
        for j, b in enumerate(words):
            badj[i, j] = adj[a[-1], b[0]]
    costs = np.array([-spectral_log(monodromy(model, w))[0] for w in words])
    roofs = np.array([sum(model.roofs[s] for s in w) for w in words])
    fadj = adj[np.ix_(flats, flats)] if flats else np.zeros((0, 0), dtype=np.int64)
    froofs = np.array([model.roofs[s] for s in flats])
    first = np.zeros((n, model.size))
    last = np.zeros((n, model.size))
    for i, w in enumerate(words):
        first[i, w[0]] = 1.0
        last[i, w[-1]] = 1.0
    return BlockSystem(tuple(words), badj, costs, roofs, fadj, froofs, first, last, adj.astype(np.int64))


def geometric_pressure_oracle(model: MarkovCurvatureFlow, t: float, n_max: int = DEFAULT_N_MAX,
                              adjacency=None, bracket=None) -> float:
    """Pressure of t * phi^geo: max of the flat-loop floor and the induced block pressure."""
    bs = block_system(model, n_max, adjacency)
    p_flat = -math.inf
    if bs.flat_roofs.size:
        p_flat = solve_pressure(bs.flat_adjacency, np.zeros(bs.flat_roofs.size), bs.flat_roofs,
                                bracket=bracket)
    if not bs.words:
        return p_flat
    w = t * bs.costs
    br = bracket if bracket is not None else _bracket(w, bs.roofs)
    lo, hi = br
    if p_flat > -math.inf:
        # the floor wins whenever the induced pressure does not exceed it
        if bs.log_rho(w - p_flat * bs.roofs) < 0.0:
            return p_flat
        lo = max(lo, p_flat)
    p_ind = _solve_blocks(bs, w, lo, hi)
    return max(p_flat, p_ind)


def _solve_blocks(bs: BlockSystem, w: np.ndarray, lo: float, hi: float, tol: float = BISECT_TOL) -> float:
    def f(P):
        return bs.log_rho(w - P * bs.roofs)

    flo, fhi = f(lo), f(hi)
    if flo == -math.inf:
        return -math.inf
    if not (flo >= 0.0 >= fhi):
        raise BracketError(f"pressure bracket [{lo}, {hi}] does not change sign", lo=lo, hi=hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    return float(brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps))


# --------------------------------------------------------------------------
# estimator configuration and evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorConfig:
    method: str = "oracle"  # oracle | orbit-sum
    weights: object = "geo"  # geo | proxy | {symbol: value per unit t}
    T: float = 12.0
    delta_T: float = 1.0
    n_max: int = DEFAULT_N_MAX
    plateau_tol: float = PLATEAU_TOL
    diff_step: float = DIFF_STEP

    def __post_init__(self):
        if self.method not in ("oracle", "orbit-sum"):
            raise PreconditionError(f"unknown estimator method {self.method!r}")
        if not (self.weights in ("geo", "proxy") or isinstance(self.weights, dict)):
            raise PreconditionError("weights must be 'geo', 'proxy' or a per-symbol mapping")

    @property
    def tolerance(self) -> float:
        return 1e-10 if self.method == "oracle" else 0.05

    def to_dict(self):
        w = self.weights if not isinstance(self.weights, dict) else dict(sorted(self.weights.items()))
        return {"method": self.method, "weights": w, "T": self.T, "delta_T": self.delta_T,
                "n_max": self.n_max, "plateau_tol": self.plateau_tol, "diff_step": self.diff_step}


def _unit_weights(model, weights) -> np.ndarray | None:
    if weights == "geo":
        return None
    if weights == "proxy":
        return proxy_rates(model)
    return _weights_vector(model, weights)


@lru_cache(maxsize=32)
def _cycles_upto(model, max_len):
    return enumerate_cycles(model, max_len)


@dataclass(frozen=True)
class OrbitSumResult:
    value: float
    count: int


def pressure_orbit_sum(model: MarkovCurvatureFlow, t: float, T: float = 12.0, delta_T: float = 1.0,
                       weights="geo") -> OrbitSumResult:
    """``(1/T) log`` sum over periodic points with period in (T - delta_T, T]."""
    if not isinstance(model, MarkovCurvatureFlow):
        raise PreconditionError("orbit sums need a Markov model")
    if T <= 0 or delta_T <= 0:
        raise PreconditionError("T and delta_T must be positive")
    unit = _unit_weights(model, weights)
    max_len = int(math.floor(T / min(model.roofs) + 1e-9))
    terms = []
    count = 0
    for orb in _cycles_upto(model, max_len):
        if not (T - delta_T < orb.period <= T + 1e-12):
            continue
        integral = -orb.log_rho if unit is None else float(sum(unit[s] for s in orb.word))
        terms.append(math.log(orb.multiplicity) + t * integral)
        count += orb.multiplicity
    if not terms:
        raise EstimatorError(f"no periodic orbits with period in ({T - delta_T}, {T}]; increase delta_T",
                             T=T, delta_T=delta_T)
    arr = np.array(terms)
    m = float(arr.max())
    return OrbitSumResult((m + math.log(float(np.sum(np.exp(arr - m))))) / T, count)


def pressure_evaluator(model: MarkovCurvatureFlow, config: EstimatorConfig, adjacency=None):
    """Callable t -> P(t) for the configured estimator."""
    if not isinstance(model, MarkovCurvatureFlow):
        raise PreconditionError("pressure needs a Markov model")
    if config.method == "orbit-sum":
        if adjacency is not None:
            raise PreconditionError("subgraph restriction is oracle-only")
        return lambda t: pressure_orbit_sum(model, t, config.T, config.delta_T, config.weights).value
    unit = _unit_weights(model, config.weights)
    if unit is None:
        return lambda t: geometric_pressure_oracle(model, t, config.n_max, adjacency)
    return lambda t: suspension_pressure_oracle(model, t * unit, adjacency)


# --------------------------------------------------------------------------
# pressure curves
# --------------------------------------------------------------------------


@dataclass
class PressureCurve:
    model: str
    t_grid: np.ndarray
    P_values: np.ndarray
    D_plus: np.ndarray
    D_minus: np.ndarray
    t_c: float | None
    method: str
    params: dict
    tolerance: float
    monotone_ok: bool
    convex_ok: bool
    errors: dict = field(default_factory=dict)
    evaluator: object = field(default=None, repr=False)
    plateau_value: float | None = None

    def P(self, t: float) -> float:
        if self.evaluator is None:
            return float(np.interp(t, self.t_grid, self.P_values))
        return float(self.evaluator(t))


def one_sided(evaluator, t: float, h: float) -> tuple[float, float]:
    """Three-point backward and forward difference quotients ``(D-, D+)``."""
    p0 = evaluator(t)
    dm = (3 * p0 - 4 * evaluator(t - h) + evaluator(t - 2 * h)) / (2 * h)
    dp = (-3 * p0 + 4 * evaluator(t + h) - evaluator(t + 2 * h)) / (2 * h)
    return dm, dp


def _convexity_ok(t, P, tol) -> bool:
    n = len(t)
    for i in range(n):
        for j in range(i + 2, n, 2):
            k = (i + j) // 2
            if abs(t[k] - 0.5 * (t[i] + t[j])) > 1e-9 * max(1.0, abs(t[k])):
                continue
            if P[k] > 0.5 * (P[i] + P[j]) + 2 * tol:
                return False
    return True


def pressure_curve(model: MarkovCurvatureFlow, t_grid=DEFAULT_GRID, config: EstimatorConfig | None = None,
                   adjacency=None) -> PressureCurve:
    config = config or EstimatorConfig()
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0 or np.any(np.diff(t) <= 0):
        raise PreconditionError("t_grid must be nonempty and strictly increasing")
    ev = pressure_evaluator(model, config, adjacency)
    P = np.full(t.size, np.nan)
    Dm = np.full(t.size, np.nan)
    Dp = np.full(t.size, np.nan)
    errors = {}
    for i, ti in enumerate(t):
        try:
            P[i] = ev(ti)
            Dm[i], Dp[i] = one_sided(ev, ti, config.diff_step)
        except Exception as exc:  # partial results are kept, failures recorded per grid point
            errors[float(ti)] = getattr(exc, "one_line", lambda: str(exc))()
    tol = config.tolerance
    ok = ~np.isnan(P)
    monotone = bool(np.all(np.diff(P[ok]) <= 2 * tol))
    convex = _convexity_ok(t[ok], P[ok], tol)
    curve = PressureCurve(model.name, t, P, Dp, Dm, None, config.method, config.to_dict(), tol,
                          monotone, convex, errors, ev)
    has_floor = adjacency is None and model.has_flat_loop or (
        adjacency is not None and _subgraph_has_flat_loop(model, adjacency))
    if has_floor and ok.all():
        _detect_plateau(curve, config)
    return curve


def _subgraph_has_flat_loop(model, adjacency) -> bool:
    adj = np.asarray(adjacency)
    flats = [i for i in range(model.size) if model.flat[i]]
    if not flats:
        return False
    sub = adj[np.ix_(flats, flats)]
    return log_spectral_radius(sub, np.zeros(len(flats))) > -math.inf


def _detect_plateau(curve: PressureCurve, config: EstimatorConfig):
    t, P = curve.t_grid, curve.P_values
    inside = np.abs(P) < config.plateau_tol
    # first index from which every later grid value is on the plateau
    idx = None
    for i in range(len(t)):
        if inside[i:].all() and np.all(np.diff(P[i:]) <= 2 * curve.tolerance):
            idx = i
            break
    if idx is None:
        return
    ev = curve.evaluator
    level = float(P[-1])
    curve.plateau_value = level
    if curve.method == "oracle" and idx > 0:
        # refine the onset: smallest t at which P has reached the floor value
        lo, hi = float(t[idx - 1]), float(t[idx])
        if ev(lo) <= level + 1e-13:
            curve.t_c = float(t[idx])
            return
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if ev(mid) <= level + 1e-13:
                hi = mid
            else:
                lo = mid
        curve.t_c = hi
    else:
        curve.t_c = float(t[idx])


# --------------------------------------------------------------------------
# phase transition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseTransitionReport:
    detected: bool
    t_c: float | None
    D_minus: float | None
    D_plus: float | None
    kink: float | None
    noise: float | None
    message: str


def phase_transition_report(curve: PressureCurve) -> PhaseTransitionReport:
    if curve.t_c is None:
        return PhaseTransitionReport(False, None, None, None, None, None, "no phase transition")
    ev = curve.evaluator
    h = float(curve.params.get("diff_step", DIFF_STEP))
    dm, dp = one_sided(ev, curve.t_c, h)
    dm2, dp2 = one_sided(ev, curve.t_c, h / 2)
    noise = abs(dm - dm2) + abs(dp - dp2)
    kink = dp - dm
    detected = bool(kink > 5 * noise and kink > 0)
    msg = "plateau onset with kink" if detected else "plateau onset without detectable kink"
    return PhaseTransitionReport(detected, curve.t_c, dm, dp, kink, noise, msg)


# --------------------------------------------------------------------------
# Legendre transform and spectrum
# --------------------------------------------------------------------------

UNATTAINED = None


@dataclass
class SpectrumTable:
    alphas: np.ndarray
    E_values: np.ndarray
    argmins: np.ndarray
    alpha_1: float
    alpha_2: float | None
    alpha_max: float
    rows: list
    curve: PressureCurve = field(repr=False)
    concave_ok: bool = True

    def attained(self, alpha: float) -> bool:
        return self.alpha_1 - 1e-6 <= alpha <= self.alpha_max + 1e-6

    def E(self, alpha: float):
        """Legendre value at any alpha; ``None`` marks an unattained slope."""
        if not self.attained(alpha):
            return UNATTAINED
        return legendre_value(self.curve, alpha)[0]

    def dim_lower(self, alpha: float):
        e = self.E(alpha)
        if e is None or not (self.alpha_1 < alpha < 0):
            return UNATTAINED
        return 1.0 + 2.0 * e / (-alpha)


def legendre_value(curve: PressureCurve, alpha: float) -> tuple[float, float]:
    """``min_t P(t) - t alpha`` with ties toward the smallest t, refined between grid nodes."""
    t, P = curve.t_grid, curve.P_values
    vals = P - t * alpha
    i = int(np.argmin(vals))
    best, arg = float(vals[i]), float(t[i])
    if curve.evaluator is not None and 0 < i < len(t) - 1:
        res = minimize_scalar(lambda s: curve.evaluator(s) - s * alpha, bounds=(t[i - 1], t[i + 1]),
                              method="bounded", options={"xatol": 1e-10})
        if res.fun < best - 1e-14:
            best, arg = float(res.fun), float(res.x)
    return best, arg


def legendre(curve: PressureCurve, n_alpha: int = 401) -> SpectrumTable:
    if not curve.convex_ok:
        raise ConvexityError("pressure curve fails the midpoint convexity gate")
    D = np.concatenate([curve.D_minus, curve.D_plus])
    D = D[np.isfinite(D)]
    alpha_1 = float(curve.D_plus[0])
    alpha_max = float(np.max(D)) if curve.t_c is None else 0.0
    alpha_max = max(alpha_max, alpha_1)
    if alpha_max - alpha_1 <= 1e-6:
        alpha_1 = alpha_max = 0.5 * (alpha_1 + alpha_max)
    alpha_2 = float(one_sided(curve.evaluator, curve.t_c, DIFF_STEP)[0]) if curve.t_c is not None else None
    width = alpha_max - alpha_1
    if width <= 1e-6:  # below difference-quotient noise: a single slope
        alphas = np.array([0.5 * (alpha_1 + alpha_max)])
    else:
        alphas = np.linspace(alpha_1 + 0.02 * width, alpha_max - 0.02 * width, n_alpha)
    E = np.empty_like(alphas)
    arg = np.empty_like(alphas)
    for k, a in enumerate(alphas):
        E[k], arg[k] = legendre_value(curve, a)
    concave = True
    if alphas.size >= 3:
        second = E[:-2] - 2 * E[1:-1] + E[2:]
        concave = bool(np.all(second <= 1e-8))
    rows = []
    for a, e, s in zip(alphas, E, arg):
        if alpha_1 < a < 0:
            rows.append({"alpha": float(a), "E": float(e), "argmin_t": float(s),
                         "dim_lower": 1.0 + 2.0 * float(e) / (-float(a))})
    return SpectrumTable(alphas, E, arg, alpha_1, alpha_2, alpha_max, rows, curve, concave)


def double_transform(table: SpectrumTable, t: float) -> float:
    """``max_alpha E(alpha) + t alpha`` over the alpha grid."""
    return float(np.max(table.E_values + t * table.alphas))


# --------------------------------------------------------------------------
# equilibrium cross-check
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EquilibriumCheck:
    t: float
    pressure: float
    entropy: float
    alpha: float
    residual: float


def equilibrium_check(model: MarkovCurvatureFlow, t: float, config: EstimatorConfig | None = None) -> EquilibriumCheck:
    """Entropy and exponent of the equilibrium Markov measure; checks P = h + t * alpha.

    On the plateau the equilibrium state is the flat-loop measure (h = 0,
    alpha = 0 for a single loop of length one).
    """
    config = config or EstimatorConfig()
    unit = _unit_weights(model, config.weights)
    if unit is None:
        P = geometric_pressure_oracle(model, t, config.n_max)
        bs = block_system(model, config.n_max)
        adj, c, r = bs.adjacency, bs.costs, bs.roofs
        if bs.flat_roofs.size:
            p_flat = solve_pressure(bs.flat_adjacency, np.zeros(bs.flat_roofs.size), bs.flat_roofs)
            if P == p_flat:
                adj, c, r = bs.flat_adjacency, np.zeros(bs.flat_roofs.size), bs.flat_roofs
    else:
        P = suspension_pressure_oracle(model, t * unit)
        adj, c, r = model.adjacency, unit, np.asarray(model.roofs)
    mat = np.where(adj > 0, np.exp(t * c - P * r)[None, :], 0.0)
    vals, right = np.linalg.eig(mat)
    k = int(np.argmax(vals.real))
    v = np.abs(right[:, k].real)
    valsl, left = np.linalg.eig(mat.T)
    u = np.abs(left[:, int(np.argmax(valsl.real))].real)
    rho = vals[k].real
    pi = u * v / np.sum(u * v)
    trans = mat * v[None, :] / (rho * v[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(trans > 0, np.log(np.where(trans > 0, trans, 1.0)), 0.0)
    h_base = -float(np.sum(pi[:, None] * trans * logs))
    mean_r = float(np.sum(pi * r))
    alpha = float(np.sum(pi * c)) / mean_r
    h = h_base / mean_r
    return EquilibriumCheck(t, P, h, alpha, abs(P - (h + t * alpha)))


# --------------------------------------------------------------------------
# nested sub-systems
# --------------------------------------------------------------------------


def cycle_subgraph(model: MarkovCurvatureFlow, cap: int) -> np.ndarray:
    """Edges used by some cycle of length at most ``cap``."""
    sub = np.zeros_like(model.adjacency)
    for orb in _cycles_upto(model, cap):
        w = orb.word
        for a, b in zip(w, w[1:] + w[:1]):
            sub[a, b] = 1
    return sub


@dataclass
class NestedReport:
    caps: tuple
    t_grid: np.ndarray
    values: np.ndarray  # shape (len(caps), len(t_grid))
    full: np.ndarray
    monotone: bool
    reaches_full: bool
    plateau: list


def nested_pressure_convergence(model: MarkovCurvatureFlow, caps, t_grid=DEFAULT_GRID,
                                config: EstimatorConfig | None = None) -> NestedReport:
    config = config or EstimatorConfig()
    if config.method != "oracle":
        raise PreconditionError("nested convergence uses the oracle estimator")
    caps = tuple(int(c) for c in caps)
    if not caps or any(b <= a for a, b in zip(caps, caps[1:])):
        raise PreconditionError("caps must be strictly increasing")
    t = np.asarray(t_grid, dtype=float)
    subs = [cycle_subgraph(model, c) for c in caps]
    if not subs[0].any():
        raise PreconditionError(f"no cycles of length <= {caps[0]}")
    values = np.array([[pressure_evaluator(model, config, s)(ti) for ti in t] for s in subs])
    full = np.array([pressure_evaluator(model, config)(ti) for ti in t])
    monotone = bool(np.all(np.diff(values, axis=0) >= 0.0)) and bool(np.all(values[-1] <= full))
    reaches = bool(np.all(np.abs(values[-1] - full) <= 1e-9))
    plateau = [_subgraph_has_flat_loop(model, s) for s in subs]
    return NestedReport(caps, t, values, full, monotone, reaches, plateau)
