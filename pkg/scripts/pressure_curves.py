"""Pressure curves and multifractal spectra for M2 and MRANK1."""

import argparse
import json
from pathlib import Path

from lyapspec.config import ExperimentConfig
from lyapspec.runner import run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/thermo")
    ap.add_argument("--num", type=int, default=81)
    args = ap.parse_args()
    grid = {"start": -6.0, "stop": 4.0, "num": args.num}
    for model in ("M2", "MRANK1"):
        for op in ("pressure", "spectrum"):
            out = Path(args.out) / model / op
            rec = run(ExperimentConfig(model=model, operation=op, params={"t_grid": grid}, out=str(out)))
            report = json.loads((out / "report.json").read_text())
            keys = ("t_c", "kink") if op == "pressure" else ("alpha_1", "alpha_2", "alpha_max")
            print(model, op, "ok" if rec.ok else "FAILED", {k: report.get(k) for k in keys})


if __name__ == "__main__":
    main()
