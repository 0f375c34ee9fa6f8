import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lyapspec.cli import main
from lyapspec.config import ExperimentConfig, dumps, fmt
from lyapspec.errors import ConfigError
from lyapspec.runner import run

json_scalars = st.one_of(st.integers(-10 ** 6, 10 ** 6), st.floats(allow_nan=False, allow_infinity=False),
                         st.text(max_size=8), st.booleans(), st.none())
params = st.dictionaries(st.text(min_size=1, max_size=6), st.one_of(json_scalars, st.lists(json_scalars, max_size=4)),
                         max_size=4)


@given(p=params, seed=st.integers(0, 2 ** 31), model=st.sampled_from(["M0", "M2", None]))
def test_config_roundtrip_bytes(p, seed, model):
    cfg = ExperimentConfig(model=model, operation="pressure", params=p, seed=seed)
    text = cfg.to_json()
    assert ExperimentConfig.from_json(text).to_json() == text
    assert ExperimentConfig.from_json(text).hash() == cfg.hash()


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="colour"):
        ExperimentConfig.from_dict({"model": "M0", "colour": 1})
    with pytest.raises(ConfigError, match="operation"):
        ExperimentConfig(operation="plot")


@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrip(x):
    assert float(fmt(x)) == x


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def test_m0_pressure_linear(tmp_path):
    rec = run(ExperimentConfig(model="M0", operation="pressure", out=str(tmp_path)))
    assert rec.ok
    header, rows = read_csv(tmp_path / "pressure.csv")
    assert header == ["t", "P", "D_minus", "D_plus"]
    for r in rows:
        assert float(r[1]) == pytest.approx(-float(r[0]), abs=1e-12)
    dat = (tmp_path / "pressure.dat").read_text().splitlines()
    assert len(dat) == len(rows) and all(len(line.split()) == 2 for line in dat)
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["t_c"] is None and rep["kink"] is False


def test_identical_config_identical_hashes(tmp_path):
    cfg = ExperimentConfig(model="M2", operation="riccati", params={"samples": 4}, seed=3, out=str(tmp_path / "a"))
    first = run(cfg)
    snap = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}
    second = run(cfg)
    assert first.outputs == second.outputs
    assert snap == {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}
    for name, digest in first.outputs.items():
        assert hashlib.sha256((tmp_path / "a" / name).read_bytes()).hexdigest() == digest


def test_riccati_batch_points(tmp_path):
    cfg = {"model": "MRANK1", "operation": "riccati", "out": str(tmp_path),
           "params": {"points": [{"id": "flat", "word": "F", "tau": 0.5}, {"id": "hf", "word": "HF"}]}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["riccati", "--config", str(tmp_path / "c.json")]) == 0
    header, rows = read_csv(tmp_path / "riccati.csv")
    assert header[:6] == ["point_id", "k_u", "k_s", "lambda", "lambda_T", "chi_forward"]
    flat = dict(zip(header, rows[0]))
    assert flat["point_id"] == "flat" and float(flat["lambda"]) == 0.0


def test_orbits_emit_json(tmp_path):
    assert main(["orbits", "--model", "M2", "--max-len", "4", "--emit", "json", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "orbits.json").read_text())
    assert len(data) == 2 + 3 + 4 + 6  # binary necklaces, repeats included
    assert set(data[0]) == {"cycle_word", "period", "chi", "mean_curvature", "bound_slack"}


def test_spectrum_cli(tmp_path):
    assert main(["spectrum", "--model", "M2", "--param", "weights=\"proxy\"", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "spectrum.csv")
    assert header == ["alpha", "E", "argmin_t", "dim_lower"]
    assert all(float(r[0]) < 0 for r in rows)


def test_coding_build_cli(tmp_path):
    seed = {"orbits": [{"point": ["0", "0"], "period": 1}, {"point": ["4/5", "3/5"], "period": 2}]}
    (tmp_path / "seed.json").write_text(json.dumps(seed))
    code = main(["coding", "build", "--seed-file", str(tmp_path / "seed.json"), "--U", "0.5",
                 "--param", "samples=6", "--out", str(tmp_path / "o")])
    assert code == 0
    env = json.loads((tmp_path / "o" / "envelope.json").read_text())
    assert {"alphabet", "graph", "constants", "report"} <= set(env)
    header, rows = read_csv(tmp_path / "o" / "shadow_samples.csv")
    assert len(rows) == 6


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "lyapspec", *args], capture_output=True, text=True, cwd=cwd)


@pytest.mark.parametrize("args", [
    ["riccati", "--model", "NOPE"],
    ["riccati", "--model", "/does/not/exist.json"],
    ["suite", "bogus"],
    ["pressure", "--config", "/missing.json"],
    ["coding", "build", "--model", "M2"],
    ["frobnicate"],
])
def test_failure_paths_single_line(tmp_path, args):
    res = run_cli(*args, "--out", str(tmp_path / "o")) if args[0] != "frobnicate" else run_cli(*args)
    assert res.returncode != 0
    lines = res.stderr.strip().splitlines()
    assert len(lines) == 1
    code, _, _ = lines[0].partition(":")
    assert code.isupper() and " " not in code


def test_suite_missing_model_fails_first(tmp_path):
    res = run_cli("suite", "all", "--model", str(tmp_path / "m.json"), "--out", str(tmp_path / "o"))
    assert res.returncode != 0
    assert res.stderr.startswith("MODEL")
    assert not (tmp_path / "o").exists()


def test_downstream_error_in_record(tmp_path):
    # orbit-sum window with no periodic orbits: estimator error lands in the record, exit is nonzero
    cfg = {"model": "M2", "operation": "pressure", "out": str(tmp_path),
           "params": {"method": "orbit-sum", "T": 10.5, "delta_T": 0.25, "t_grid": [0.0, 1.0]}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    res = run_cli("pressure", "--config", str(tmp_path / "c.json"))
    assert res.returncode != 0 and res.stderr.startswith("CHECK_FAILED")
    rec = json.loads((tmp_path / "record.json").read_text())
    assert rec["ok"] is False and rec["checks"]["estimator"] is False
    rep = json.loads((tmp_path / "report.json").read_text())
    assert "ESTIMATOR" in json.dumps(rep["errors"])


def test_suite_riccati_passes(tmp_path):
    assert main(["suite", "riccati", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["ok"] and summary["failed"] == []


def test_dumps_stable():
    assert dumps({"b": np.float64(0.1), "a": [1, np.int64(2)]}) == dumps({"a": [1, 2], "b": 0.1})
