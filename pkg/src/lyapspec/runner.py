"""Operations and acceptance batteries behind the command line."""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, coding, jacobi, orbits, thermo
from .config import ExperimentConfig, dumps, fmt
from .errors import ConfigError, LyapspecError, UsageError
from .models import (CATALOG, LinearToyFlow, MarkovCurvatureFlow, SurfaceOfRevolution, get_model,
                     resolve_model, validate_model)

SUITES = ("validate-models", "riccati", "orbits", "pressure", "spectrum", "coding", "all")


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in r))
    return "\n".join(lines) + "\n"


def series_text(xs, ys) -> str:
    """Headerless two-column series for external plotting."""
    return "".join(f"{fmt(x)} {fmt(y)}\n" for x, y in zip(xs, ys))


# --------------------------------------------------------------------------
# point specifications
# --------------------------------------------------------------------------


def parse_point(model, spec: dict, rng):
    spec = dict(spec)
    spec.pop("id", None)
    if spec.get("random"):
        return model.random_point(rng)
    if isinstance(model, MarkovCurvatureFlow):
        if "word" in spec:
            return model.periodic_point(spec["word"], int(spec.get("offset", 0)), float(spec.get("tau", 0.0)))
        return model.point(spec["symbols"], int(spec.get("center", 0)), float(spec.get("tau", 0.0)),
                           spec.get("left_cycle"), spec.get("right_cycle"))
    if isinstance(model, LinearToyFlow):
        return model.point(spec["x"], float(spec.get("s", 0.0)))
    return model.point(float(spec["r"]), float(spec.get("theta", 0.0)), float(spec.get("angle", 0.0)))


def _points(model, params, rng):
    if "points" in params:
        out = []
        for i, spec in enumerate(params["points"]):
            out.append((str(spec.get("id", i)), parse_point(model, spec, rng)))
        return out
    n = int(params.get("samples", 8))
    return [(str(i), model.random_point(rng)) for i in range(n)]


# --------------------------------------------------------------------------
# operations: each returns (outputs {name: text}, checks {name: bool})
# --------------------------------------------------------------------------


def op_validate(model, params, rng, cfg):
    rep = validate_model(model, seed=cfg.seed, samples=int(params.get("samples", 20)))
    return {"report.json": dumps(rep)}, {"valid": rep["ok"]}


def op_riccati(model, params, rng, cfg):
    T = float(params.get("T", 1.0))
    chi_T = float(params.get("chi_T", 10.0))
    rows = []
    for pid, p in _points(model, params, rng):
        h = jacobi.horocycle_curvatures(model, p)
        lt = jacobi.lambda_T(model, p, T).value if not isinstance(model, SurfaceOfRevolution) else float("nan")
        chi = jacobi.lyapunov_forward(model, p, chi_T)
        rows.append([pid, h.k_u, h.k_s, h.lam, lt, chi, h.residual_u, h.residual_s])
    header = ["point_id", "k_u", "k_s", "lambda", "lambda_T", "chi_forward", "residual_u", "residual_s"]
    checks = {"nonnegative": all(r[1] >= -1e-12 and r[2] >= -1e-12 for r in rows)}
    return {"riccati.csv": csv_text(header, rows)}, checks


def op_lyapunov(model, params, rng, cfg):
    T = float(params.get("T", 10.0))
    rows = []
    for pid, p in _points(model, params, rng):
        rows.append([pid, T, jacobi.lyapunov_forward(model, p, T), jacobi.lyapunov_backward(model, p, T)])
    return {"lyapunov.csv": csv_text(["point_id", "T", "chi_forward", "chi_backward"], rows)}, {}


def op_orbits(model, params, rng, cfg):
    max_len = int(params.get("max_len", 8))
    cyc = orbits.enumerate_cycles(model, max_len, int(params.get("cap", orbits.DEFAULT_CYCLE_CAP)))
    rows = []
    for o in cyc:
        b = orbits.chi_bound_check(o)
        rows.append([o.label, o.period, o.chi, o.mean_curvature, b.slack])
    checks = {"chi_bound": all(r[4] >= -orbits.BOUND_SLACK for r in rows),
              "det_one": all(o.det_defect < 1e-10 for o in cyc)}
    if params.get("emit", "csv") == "json":
        data = [{"cycle_word": r[0], "period": r[1], "chi": r[2], "mean_curvature": r[3], "bound_slack": r[4]}
                for r in rows]
        return {"orbits.json": dumps(data)}, checks
    return {"orbits.csv": csv_text(["cycle_word", "period", "chi", "mean_curvature", "bound_slack"], rows)}, checks


def _estimator(params) -> thermo.EstimatorConfig:
    keys = {"method", "weights", "T", "delta_T", "n_max", "plateau_tol", "diff_step"}
    return thermo.EstimatorConfig(**{k: params[k] for k in keys if k in params})


def _grid(params):
    g = params.get("t_grid")
    if g is None:
        return np.array(thermo.DEFAULT_GRID)
    if isinstance(g, dict):
        return np.linspace(float(g["start"]), float(g["stop"]), int(g["num"]))
    return np.asarray(g, dtype=float)


def op_pressure(model, params, rng, cfg):
    curve = thermo.pressure_curve(model, _grid(params), _estimator(params))
    rep = thermo.phase_transition_report(curve)
    rows = list(zip(curve.t_grid, curve.P_values, curve.D_minus, curve.D_plus))
    alpha_1 = float(curve.D_plus[0])
    report = {"model": model.name, "t_c": curve.t_c, "alpha_1": alpha_1, "alpha_2": rep.D_minus,
              "kink": rep.detected, "kink_magnitude": rep.kink, "monotone": curve.monotone_ok,
              "convex": curve.convex_ok, "errors": curve.errors, "estimator": curve.params}
    out = {"pressure.csv": csv_text(["t", "P", "D_minus", "D_plus"], rows),
           "pressure.dat": series_text(curve.t_grid, curve.P_values),
           "report.json": dumps(report)}
    return out, {"monotone": curve.monotone_ok, "convex": curve.convex_ok, "estimator": not curve.errors}


def op_spectrum(model, params, rng, cfg):
    curve = thermo.pressure_curve(model, _grid(params), _estimator(params))
    table = thermo.legendre(curve, int(params.get("n_alpha", 401)))
    rows = [[r["alpha"], r["E"], r["argmin_t"], r["dim_lower"]] for r in table.rows]
    report = {"model": model.name, "alpha_1": table.alpha_1, "alpha_2": table.alpha_2,
              "alpha_max": table.alpha_max, "t_c": curve.t_c, "rows": len(rows), "concave": table.concave_ok}
    out = {"spectrum.csv": csv_text(["alpha", "E", "argmin_t", "dim_lower"], rows),
           "spectrum.dat": series_text([r[0] for r in rows], [r[1] for r in rows]),
           "report.json": dumps(report)}
    return out, {"concave": table.concave_ok, "estimator": not curve.errors}


def op_coding(model, params, rng, cfg):
    if not isinstance(model, LinearToyFlow):
        raise UsageError("coding build needs the linear toy model (CAT)")
    if "seed_file" in params:
        import json
        path = Path(params["seed_file"])
        if not path.exists():
            raise ConfigError(f"seed file not found: {path}")
        seed = coding.seed_from_spec(model, json.loads(path.read_text()))
    elif "seed_spec" in params:
        seed = coding.seed_from_spec(model, params["seed_spec"])
    else:
        seed = coding.two_orbit_seed(model)
    env = coding.build_envelope(model, seed, float(params.get("U", 0.5)), samples=int(params.get("samples", 200)),
                                rng_seed=cfg.seed, alpha_rect=float(params.get("alpha_rect", coding.DEFAULT_ALPHA_RECT)))
    rows = []
    for i, (code, r) in enumerate(env.samples):
        if r is None:
            continue
        rows.append([str(i), " ".join(map(str, code.window(-2, 2))), r.point[0], r.point[1], r.max_offset,
                     r.worst_halving_ratio])
    out = {"envelope.json": dumps(env.to_dict()),
           "shadow_samples.csv": csv_text(["sample", "code_window", "x", "y", "max_offset", "halving_ratio"], rows)}
    return out, {k: v["ok"] for k, v in env.report.items()}


OPS = {"validate": op_validate, "riccati": op_riccati, "lyapunov": op_lyapunov, "orbits": op_orbits,
       "pressure": op_pressure, "spectrum": op_spectrum, "coding": op_coding}


# --------------------------------------------------------------------------
# run records
# --------------------------------------------------------------------------


@dataclass
class RunRecord:
    config_hash: str
    versions: dict
    wall_time: float
    outputs: dict  # file name -> sha256
    checks: dict
    error: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None and all(self.checks.values())

    def persistent(self) -> dict:
        """Everything except wall time, so records of identical runs are byte-identical."""
        return {"config_hash": self.config_hash, "versions": self.versions, "outputs": self.outputs,
                "checks": self.checks, "error": self.error, "ok": self.ok}


def versions() -> dict:
    import scipy
    return {"lyapspec": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _write(outdir: Path, files: dict) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, text in sorted(files.items()):
        (outdir / name).write_text(text)
        manifest[name] = hashlib.sha256(text.encode()).hexdigest()
    return manifest


def run(cfg: ExperimentConfig) -> RunRecord:
    """Execute one configured operation and write its outputs plus ``record.json``."""
    if cfg.operation == "suite":
        return run_suite(cfg.params.get("name", "all"), cfg)
    if cfg.model is None:
        raise UsageError("a model is required")
    model = resolve_model(cfg.model)  # fails before any computation
    op = OPS[cfg.operation]
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    outdir = Path(cfg.out)
    error = None
    try:
        files, checks = op(model, cfg.params, rng, cfg)
    except LyapspecError as exc:
        files, checks, error = {}, {}, exc.one_line()
    files["config.json"] = cfg.to_json()
    manifest = _write(outdir, files)
    rec = RunRecord(cfg.hash(), versions(), time.perf_counter() - t0, manifest,
                    {k: bool(v) for k, v in checks.items()}, error)
    (outdir / "record.json").write_text(dumps(rec.persistent()))
    return rec


# --------------------------------------------------------------------------
# acceptance batteries
# --------------------------------------------------------------------------


def _battery_validate(rng, p):
    res = {}
    for name in sorted(CATALOG):
        res[f"validate:{name}"] = validate_model(get_model(name), seed=int(rng.integers(2 ** 31)))["ok"]
    return res, {}


def _battery_riccati(rng, p):
    M0, MF, R, M2 = (get_model(n) for n in ("M0", "MFLAT", "MRANK1", "M2"))
    x0 = M0.random_point(rng)
    res = {}
    errs = []
    for t in (1.0, 5.0, 20.0):
        pr = jacobi.propagate_jacobi(M0, x0, jacobi.JacobiPair(0.0, 1.0), t)
        J = pr.J * math.exp(pr.logscale)
        errs.append(abs(J - math.sinh(t)) / math.sinh(t))
    res["sinh_closed_form"] = max(errs) < 1e-10
    w = jacobi.wronskian_drift(M0, x0, 100.0)
    res["wronskian"] = w["split_relative"] < 1e-10 and w["forward_relative"] < 1e-10
    res["k_u_M0"] = abs(jacobi.unstable_curvature(M0, x0, T=20.0).value - 1.0) < 1e-8
    res["k_u_MFLAT"] = jacobi.unstable_curvature(MF, MF.random_point(rng)).value == 0.0
    worst = 0.0
    for word in ("HF", "HFF", "HHF", "HFFFF"):
        w = R.parse_word(word)
        vals, vecs = np.linalg.eig(orbits.monodromy(R, w))
        v = vecs[:, int(np.argmax(np.abs(vals)))]
        worst = max(worst, abs(jacobi.unstable_curvature(R, R.periodic_point(word)).value - v[1] / v[0]))
    res["k_u_MRANK1_eigenvector"] = worst < 1e-8
    res["lambda_T_M0"] = abs(jacobi.lambda_T(M0, x0, 2.0).value - 4.0) < 1e-8
    rep = jacobi.contraction_check(M0, x0, 1.0, 2.0, 10.0)
    res["contraction_M0"] = rep.violations == 0 and abs(rep.measured_slope + 1.0) < 1e-8
    n_orb = int(p_get(p, "contraction_orbits", 100))
    bad = 0
    for _ in range(n_orb):
        rep = jacobi.contraction_check(M2, M2.random_point(rng, width=128), 1.0, 2.0, 50.0)
        bad += rep.violations
    res["contraction_M2"] = bad == 0
    return res, {}


def p_get(p, key, default):
    return p.get(key, default) if isinstance(p, dict) else default


def _battery_orbits(rng, p):
    res = {}
    for name in ("M2", "MRANK1"):
        cyc = orbits.enumerate_cycles(get_model(name), 12)
        res[f"chi_bound:{name}"] = all(orbits.chi_bound_check(o).ok for o in cyc)
        res[f"det_one:{name}"] = all(o.det_defect < 1e-10 for o in cyc)
    se = orbits.small_exponent_orbits(get_model("MRANK1"))
    chis = [o.chi for _, o, _ in se]
    res["small_exponent_decreasing"] = all(a > b for a, b in zip(chis, chis[1:])) and chis[-1] < 0.2
    M2 = get_model("M2")
    r = orbits.shadow_chain(M2, orbits.OrbitChain((("AB", 2), ("BBA", 3)), periodic=True), 0.1)
    res["markov_shadow_exact"] = r.error == 0.0
    cat = get_model("CAT")
    ok = True
    for i in range(int(p_get(p, "cat_chains", 20))):
        ch = orbits.random_cat_chain(cat, rng, 4, 1e-4, periodic=bool(i % 2))
        sr = orbits.shadow_chain(cat, ch, 1.0)
        ok &= sr.error <= sr.bound
    res["cat_shadow_bound"] = ok
    return res, {}


def _battery_pressure(rng, p):
    res = {}
    M2, R = get_model("M2"), get_model("MRANK1")
    unit = thermo.proxy_rates(M2)
    diffs = [abs(thermo.pressure_orbit_sum(M2, t, 12, 1, "proxy").value
                 - thermo.suspension_pressure_oracle(M2, t * unit)) for t in np.linspace(-4, 4, 17)]
    res["orbit_sum_vs_oracle"] = max(diffs) < 0.05
    c = thermo.pressure_curve(R)
    rep = thermo.phase_transition_report(c)
    plateau = c.t_c is not None and float(np.max(np.abs(c.P_values[c.t_grid >= c.t_c]))) < 0.02
    res["MRANK1_gates"] = c.monotone_ok and c.convex_ok
    res["MRANK1_plateau_kink"] = plateau and rep.detected and rep.D_minus <= -0.1 and rep.D_plus == 0.0
    res["M2_no_plateau"] = thermo.pressure_curve(M2).t_c is None
    nested = thermo.nested_pressure_convergence(M2, (1, 2, 4), np.linspace(-4, 4, 9))
    res["nested_M2"] = nested.monotone and nested.reaches_full
    return res, {"t_c": c.t_c, "alpha_2": rep.D_minus}


def _battery_spectrum(rng, p):
    M2 = get_model("M2")
    curve = thermo.pressure_curve(M2, config=thermo.EstimatorConfig(weights="proxy"))
    table = thermo.legendre(curve)
    res = {"E_minus_1.5": abs(table.E(-1.5) - math.log(2)) < 1e-3,
           "dim_lower_minus_1.5": abs(table.dim_lower(-1.5) - (1 + 2 * math.log(2) / 1.5)) < 2e-3}
    lo, hi = table.alphas[0], table.alphas[-1]
    inner = [t for t, d in zip(curve.t_grid, curve.D_plus) if lo < d < hi]
    res["double_transform"] = max(abs(thermo.double_transform(table, t) - curve.P(t)) for t in inner) < 1e-3
    return res, {}


def _battery_coding(rng, p):
    cat = get_model("CAT")
    env = coding.build_envelope(cat, coding.two_orbit_seed(cat), 0.5, samples=int(p_get(p, "samples", 200)),
                                rng_seed=int(rng.integers(2 ** 31)))
    return {f"coding:{k}": v["ok"] for k, v in env.report.items()}, {"alphabet": len(env.alphabet),
                                                                      "N0": env.constants.N0}


BATTERIES = {"validate-models": _battery_validate, "riccati": _battery_riccati, "orbits": _battery_orbits,
             "pressure": _battery_pressure, "spectrum": _battery_spectrum, "coding": _battery_coding}


def run_suite(name: str, cfg: ExperimentConfig) -> RunRecord:
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; expected one of {list(SUITES)}")
    if cfg.model is not None:
        resolve_model(cfg.model)  # a missing model file is reported before any computation
    names = list(BATTERIES) if name == "all" else [name]
    t0 = time.perf_counter()
    outdir = Path(cfg.out)
    checks, info, errors = {}, {}, {}
    files = {}
    for i, b in enumerate(names):
        rng = np.random.default_rng([cfg.seed, i])
        try:
            res, extra = BATTERIES[b](rng, cfg.params.get(b, {}))
        except LyapspecError as exc:
            res, extra = {}, {}
            errors[b] = exc.one_line()
        checks.update({f"{b}/{k}": bool(v) for k, v in res.items()})
        info[b] = extra
        files[f"{b}.json"] = dumps({"checks": res, "info": extra, "error": errors.get(b)})
    failed = sorted(k for k, v in checks.items() if not v)
    summary = {"suite": name, "checks": checks, "failed": failed, "errors": errors,
               "ok": not failed and not errors}
    files["summary.json"] = dumps(summary)
    files["config.json"] = cfg.to_json()
    manifest = _write(outdir, files)
    err = "; ".join(f"{k}: {v}" for k, v in sorted(errors.items())) or None
    rec = RunRecord(cfg.hash(), versions(), time.perf_counter() - t0, manifest, checks, err, summary)
    (outdir / "record.json").write_text(dumps(rec.persistent()))
    return rec
