"""Jacobi fields and Riccati solutions along orbits.

On piecewise-constant-curvature models (Markov suspensions and the cat
suspension) every piece is propagated by its closed-form 2x2 block; on a
surface of revolution the Jacobi equation is integrated together with the
geodesic. Pairs are renormalised by powers of two after every piece and the
exponent is kept in ``logscale`` (natural log units), so the true field is
``(J, Jp) * exp(logscale)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConjugatePointError, PreconditionError, WindowExhausted
from .models import SurfaceOfRevolution

LN2 = math.log(2.0)
MAX_PIECE = 16.0  # max a*dt per closed-form block before renormalising


@dataclass(frozen=True)
class JacobiPair:
    J: float
    Jp: float
    logscale: float = 0.0

    def __post_init__(self):
        if self.J == 0.0 and self.Jp == 0.0:
            raise ValueError("a Jacobi pair cannot be (0, 0)")

    def normalized(self) -> "JacobiPair":
        m = max(abs(self.J), abs(self.Jp))
        _, e = math.frexp(m)
        return JacobiPair(math.ldexp(self.J, -e), math.ldexp(self.Jp, -e), self.logscale + e * LN2)

    def log_abs_J(self) -> float:
        return math.log(abs(self.J)) + self.logscale

    def slope(self) -> float:
        return self.Jp / self.J

    def true_values(self):
        s = math.exp(self.logscale)
        return self.J * s, self.Jp * s


def wronskian(p: JacobiPair, q: JacobiPair) -> float:
    return (p.J * q.Jp - p.Jp * q.J) * math.exp(p.logscale + q.logscale)


def block(dt: float, K: float) -> np.ndarray:
    """Transfer matrix of ``J'' + K J = 0`` over time dt (dt may be negative)."""
    if K == 0.0:
        return np.array([[1.0, dt], [0.0, 1.0]])
    a = math.sqrt(-K)
    c, s = math.cosh(a * dt), math.sinh(a * dt)
    return np.array([[c, s / a], [a * s, c]])


def _apply(pair: JacobiPair, dt: float, K: float) -> JacobiPair:
    a = math.sqrt(-K) if K else 0.0
    pieces = max(1, math.ceil(abs(a * dt) / MAX_PIECE))
    h = dt / pieces
    m = block(h, K)
    J, Jp, ls = pair.J, pair.Jp, pair.logscale
    for _ in range(pieces):
        J, Jp = m[0, 0] * J + m[0, 1] * Jp, m[1, 0] * J + m[1, 1] * Jp
        pair = JacobiPair(J, Jp, ls).normalized()
        J, Jp, ls = pair.J, pair.Jp, pair.logscale
    return pair


def _is_surface(model) -> bool:
    return isinstance(model, SurfaceOfRevolution)


def propagate_jacobi(model, point, pair: JacobiPair, t: float) -> JacobiPair:
    """Propagate ``pair`` (given at ``point``) along the orbit for time t (either sign)."""
    if t == 0:
        return pair.normalized()
    if _is_surface(model):
        if t < 0:
            start = model.flow(point, t)
            # integrate backward by reversing time on the joint system
            sol = model.integrate(point, t, J=pair.J, Jp=pair.Jp)
            del start
        else:
            sol = model.integrate(point, t, J=pair.J, Jp=pair.Jp)
        J, Jp = sol.y[4, -1], sol.y[5, -1]
        return JacobiPair(float(J), float(Jp), pair.logscale).normalized()
    if t > 0:
        for dt, K in model.segments(point, 0.0, t):
            pair = _apply(pair, dt, K)
        return pair
    for dt, K in reversed(model.segments(point, t, 0.0)):
        pair = _apply(pair, -dt, K)
    return pair


def _walk(model, point, t_start: float, pair: JacobiPair, times):
    """Propagate from ``t_start`` forward, returning the pair at each of ``times`` (sorted, >= t_start)."""
    times = list(times)
    out = []
    if not times:
        return out
    if _is_surface(model):
        start = model.flow(point, t_start)
        span = times[-1] - t_start
        if span == 0:
            return [pair.normalized() for _ in times]
        sol = model.integrate(start, span, J=pair.J, Jp=pair.Jp, dense=True)
        vals = sol.sol(np.asarray(times) - t_start)
        return [JacobiPair(float(j), float(jp), pair.logscale).normalized() for j, jp in zip(vals[4], vals[5])]
    clock = t_start
    i = 0
    while i < len(times) and times[i] <= clock:
        out.append(pair)
        i += 1
    for dt, K in model.segments(point, t_start, times[-1]):
        end = clock + dt
        while i < len(times) and times[i] <= end:
            pair = _apply(pair, times[i] - clock, K)
            clock = times[i]
            out.append(pair)
            i += 1
        if end > clock:
            pair = _apply(pair, end - clock, K)
            clock = end
    while i < len(times):
        out.append(pair)
        i += 1
    return out


def _crossing_in_piece(J0, Jp0, dt, K):
    """Smallest s in (0, dt] with J(s) = 0, for a piece of constant curvature (dt > 0)."""
    if K == 0.0:
        if Jp0 != 0.0:
            s = -J0 / Jp0
            if 0.0 < s <= dt:
                return s
        return None
    a = math.sqrt(-K)
    if Jp0 == 0.0:
        return None
    x = -a * J0 / Jp0
    if -1.0 < x < 1.0:
        s = math.atanh(x) / a
        if 0.0 < s <= dt:
            return s
    return None


def riccati_solve(model, point, u0: float, t: float) -> float:
    """``u = J'/J`` at time t for the solution with ``u(0) = u0``.

    Raises ConjugatePointError at the first time where J vanishes.
    """
    if not math.isfinite(u0):
        raise PreconditionError("initial slope must be finite")
    if t == 0:
        return float(u0)
    pair = JacobiPair(1.0, float(u0))
    sign = 1.0 if t > 0 else -1.0
    if _is_surface(model):
        sol = model.integrate(point, t, J=1.0, Jp=float(u0), dense=True)
        ts = np.linspace(0.0, t, 2001)
        J = sol.sol(ts)[4]
        idx = np.flatnonzero(np.sign(J[1:]) != np.sign(J[:-1]))
        if idx.size:
            raise ConjugatePointError("Jacobi field vanishes (conjugate point)", float(ts[idx[0] + 1]))
        return float(sol.y[5, -1] / sol.y[4, -1])
    segs = model.segments(point, 0.0, t) if t > 0 else list(reversed(model.segments(point, t, 0.0)))
    elapsed = 0.0
    for dt, K in segs:
        # backward time: J(-s) solves the same equation with slope negated
        s = _crossing_in_piece(pair.J, sign * pair.Jp, dt, K)
        if s is not None:
            raise ConjugatePointError("Jacobi field vanishes (conjugate point)", sign * (elapsed + s))
        pair = _apply(pair, sign * dt, K)
        elapsed += dt
    return pair.slope()


# --------------------------------------------------------------------------
# horocycle curvatures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureEstimate:
    value: float
    residual: float
    horizon: float
    converged: bool
    history: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class HorocycleCurvatures:
    k_u: float
    k_s: float
    lam: float
    residual: float
    horizon: float
    residual_u: float = 0.0
    residual_s: float = 0.0

    @property
    def lambda_(self):
        return self.lam


TOL = 1e-9
T_MAX = 2.0 ** 14


def _unstable_at_horizon(model, point, T: float) -> float:
    start = JacobiPair(1.0, 0.0) if model.flat_before(point, -T) else JacobiPair(0.0, 1.0)
    return propagate_jacobi(model, model.flow(point, -T) if _is_surface(model) else point,
                            start, T).slope() if _is_surface(model) else \
        _walk(model, point, -T, start, [0.0])[0].slope()


def unstable_curvature(model, point, T: float = 1.0, tol: float = TOL, T_max: float = T_MAX) -> CurvatureEstimate:
    """k^u = J'(0)/J(0) for the field vanishing at time -T, with T doubled to convergence.

    A past that is flat for all time has the parallel field as its unstable
    limit, so k^u is exactly 0 there.
    """
    if T <= 0:
        raise PreconditionError("horizon T must be positive")
    past, _ = model.span(point)
    if model.flat_before(point, 0.0):
        return CurvatureEstimate(0.0, 0.0, math.inf, True, ((math.inf, 0.0),))
    limit = min(T_max, past)
    T = min(T, limit)
    prev = _unstable_at_horizon(model, point, T)
    history = [(T, prev)]
    residual = math.inf
    while True:
        T2 = min(2 * T, limit)
        if T2 <= T:
            break
        cur = _unstable_at_horizon(model, point, T2)
        history.append((T2, cur))
        residual = abs(cur - prev)
        T, prev = T2, cur
        if residual < tol:
            return CurvatureEstimate(cur, residual, T, True, tuple(history))
    return CurvatureEstimate(prev, residual, T, False, tuple(history))


def stable_curvature(model, point, T: float = 1.0, tol: float = TOL, T_max: float = T_MAX) -> CurvatureEstimate:
    return unstable_curvature(model, model.reverse(point), T, tol, T_max)


def horocycle_curvatures(model, point, T: float = 1.0, tol: float = TOL, T_max: float = T_MAX) -> HorocycleCurvatures:
    u = unstable_curvature(model, point, T, tol, T_max)
    s = stable_curvature(model, point, T, tol, T_max)
    return HorocycleCurvatures(u.value, s.value, min(u.value, s.value), max(u.residual, s.residual),
                               min(u.horizon, s.horizon), u.residual, s.residual)


def geometric_potential(model, point, T: float = 1.0, tol: float = TOL) -> float:
    return -unstable_curvature(model, point, T, tol).value


# --------------------------------------------------------------------------
# profiles along orbits
# --------------------------------------------------------------------------

DEFAULT_HORIZON = 64.0


def _unstable_walk(model, point, times, horizon):
    """Unstable pairs at sorted ``times`` from a single burn-in of length ``horizon``."""
    t0 = times[0]
    past, _ = model.span(point)
    H = min(horizon, past + t0)
    if H <= 0:
        raise WindowExhausted("no stored past before the first requested time", required_width=0)
    start_t = t0 - H
    start = JacobiPair(1.0, 0.0) if model.flat_before(point, start_t) else JacobiPair(0.0, 1.0)
    return _walk(model, point, start_t, start, times), H


def curvature_profile(model, point, times, horizon: float = DEFAULT_HORIZON):
    """``(k_u, k_s)`` arrays at the given times along the orbit of ``point``.

    The unstable field is pushed once from ``min(times) - horizon`` and read
    at every requested time; the stable field is the unstable field of the
    reversed orbit.
    """
    times = np.asarray(times, dtype=float)
    order = np.argsort(times)
    ts = times[order]
    pairs_u, _ = _unstable_walk(model, point, list(ts), horizon)
    rev = model.reverse(point)
    rts = list(-ts[::-1])
    pairs_s, _ = _unstable_walk(model, rev, rts, horizon)
    ku = np.empty_like(ts)
    ks = np.empty_like(ts)
    ku[:] = [p.slope() for p in pairs_u]
    ks[:] = [p.slope() for p in pairs_s][::-1]
    out_u = np.empty_like(ku)
    out_s = np.empty_like(ks)
    out_u[order] = ku
    out_s[order] = ks
    return out_u, out_s


def lambda_profile(model, point, times, horizon: float = DEFAULT_HORIZON):
    ku, ks = curvature_profile(model, point, times, horizon)
    return np.minimum(ku, ks)


def _min_roof(model) -> float:
    roofs = getattr(model, "roofs", None)
    return min(roofs) if roofs else 1.0


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float
    step: float


def lambda_T(model, point, T: float, step: float | None = None,
             horizon: float = DEFAULT_HORIZON) -> QuadratureResult:
    """Composite midpoint rule for the integral of lambda over [-T, T]."""
    if T <= 0:
        raise PreconditionError("T must be positive")
    h = step if step is not None else _min_roof(model) / 8.0
    n = max(1, math.ceil(2 * T / h))
    h = 2 * T / n
    coarse = -T + (np.arange(n) + 0.5) * h
    fine = -T + (np.arange(2 * n) + 0.5) * (h / 2)
    lam = lambda_profile(model, point, np.concatenate([coarse, fine]), horizon)
    q1 = h * float(np.sum(lam[:n]))
    q2 = (h / 2) * float(np.sum(lam[n:]))
    return QuadratureResult(q1, abs(q2 - q1) / 3.0, h)


def lyapunov_forward(model, point, T: float, horizon: float | None = None) -> float:
    """``(1/T) (log J^u(T) - log J^u(0))`` for the unstable field."""
    if T <= 0:
        raise PreconditionError("T must be positive")
    if horizon is None:
        est = unstable_curvature(model, point)
        horizon = est.horizon if math.isfinite(est.horizon) else DEFAULT_HORIZON
    pairs, _ = _unstable_walk(model, point, [0.0, T], horizon)
    return (pairs[1].log_abs_J() - pairs[0].log_abs_J()) / T


def lyapunov_backward(model, point, T: float, horizon: float | None = None) -> float:
    return lyapunov_forward(model, model.reverse(point), T, horizon)


def unstable_log_field(model, point, times, horizon: float = DEFAULT_HORIZON) -> np.ndarray:
    """``log J^u`` at the given sorted times (common additive constant)."""
    pairs, _ = _unstable_walk(model, point, list(times), horizon)
    return np.array([p.log_abs_J() for p in pairs])


# --------------------------------------------------------------------------
# regularity and contraction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityCertificate:
    T: float
    eta: float
    lambda_T_value: float
    member: bool


def reg_membership(model, point, T: float, eta: float, step: float | None = None) -> RegularityCertificate:
    if T <= 0 or eta <= 0:
        raise PreconditionError("T and eta must be positive")
    q = lambda_T(model, point, T, step)
    return RegularityCertificate(T, eta, q.value, bool(q.value >= eta))


def k_max(model) -> float:
    if hasattr(model, "rates"):
        return max(model.rates)
    if hasattr(model, "rate"):
        return model.rate
    grid = np.linspace(*model.domain, 4001)
    return float(np.sqrt(np.max(-model.K(grid))))


@dataclass(frozen=True)
class ContractionReport:
    T: float
    eta: float
    duration: float
    C: float
    measured_slope: float
    bound_slope: float
    margin: float
    violations: int
    min_lambda_T: float
    samples: int


def contraction_check(model, point, T: float, eta: float, duration: float,
                      horizon: float = DEFAULT_HORIZON, step: float | None = None) -> ContractionReport:
    """Check ``J^s(t) <= C J^s(0) exp(-eta t / (2T))`` along an orbit that stays in Reg_T(eta)."""
    if T <= 0 or eta <= 0 or duration <= 0:
        raise PreconditionError("T, eta and duration must be positive")
    h = step if step is not None else _min_roof(model) / 8.0
    m = max(1, math.ceil(2 * T / h))
    h = 2 * T / m
    n_dur = max(1, math.ceil(duration / h))
    nodes = -T + (np.arange(n_dur + 2 * m) + 0.5) * h
    lam = lambda_profile(model, point, nodes, horizon)
    window = np.convolve(lam, np.ones(m), mode="valid") * h
    sample_t = np.arange(n_dur + 1) * h
    lam_T = window[: n_dur + 1]
    bad = np.flatnonzero(lam_T < eta)
    if bad.size:
        raise PreconditionError(
            f"orbit leaves Reg_T(eta) at t={sample_t[bad[0]]:.6g} (lambda_T={lam_T[bad[0]]:.6g} < {eta})",
            exit_time=float(sample_t[bad[0]]))
    rev = model.reverse(point)
    rev_times = -sample_t[::-1]
    logJ = unstable_log_field(model, rev, rev_times, horizon)[::-1]
    ratio = logJ - logJ[0]
    logC = 2 * T * k_max(model)
    bound = logC - eta * sample_t / (2 * T)
    slack = bound - ratio
    slope = float(np.polyfit(sample_t, ratio, 1)[0]) if sample_t.size > 1 else 0.0
    return ContractionReport(T, eta, float(sample_t[-1]), math.exp(logC), slope, -eta / (2 * T),
                             float(slack.min()), int(np.sum(slack < 0)), float(lam_T.min()), int(sample_t.size))


def wronskian_drift(model, point, t: float) -> dict:
    """Wronskian conservation measured two ways.

    ``forward_pair``: the pairs (1,0) and (0,1) pushed forward together;
    reported as drift relative to the product of their norms, which is the
    floating-point conditioning of the determinant.
    ``split``: (0,1) pushed forward and its perpendicular at time t pulled
    back; both directions are numerically stable, so the absolute relative
    drift is meaningful for long times.
    """
    p = propagate_jacobi(model, point, JacobiPair(1.0, 0.0), t)
    q = propagate_jacobi(model, point, JacobiPair(0.0, 1.0), t)
    w = wronskian(p, q)
    scale = math.hypot(p.J, p.Jp) * math.hypot(q.J, q.Jp) * math.exp(p.logscale + q.logscale)
    end = model.flow(point, t)
    r = JacobiPair(-q.Jp, q.J, -q.logscale)
    r0 = propagate_jacobi(model, end, r, -t)
    w_end = wronskian(q, r)
    w_start = wronskian(JacobiPair(0.0, 1.0), r0)
    return {"forward_pair": w, "forward_relative": abs(w - 1.0) / max(scale, 1.0),
            "split_relative": abs(w_start / w_end - 1.0)}
