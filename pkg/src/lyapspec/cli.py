"""Command line entry point."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ExperimentConfig
from .errors import LyapspecError, UsageError
from .runner import SUITES, run

SUBCOMMANDS = {"riccati", "lyapunov", "orbits", "pressure", "spectrum"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--model", help="catalog name or model JSON file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                        help="override one params entry (value parsed as JSON when possible)")

    p = _Parser(prog="lyapspec", description="Curvature, orbit and pressure experiments on model flows.")
    sub = p.add_subparsers(dest="command", required=True)
    m = sub.add_parser("model", parents=[common], help="model utilities")
    m.add_argument("action", choices=["validate"])
    for name in sorted(SUBCOMMANDS):
        sp = sub.add_parser(name, parents=[common])
        if name == "orbits":
            sp.add_argument("--emit", choices=["csv", "json"])
            sp.add_argument("--max-len", type=int)
    c = sub.add_parser("coding", parents=[common], help="symbolic coding")
    c.add_argument("action", choices=["build"])
    c.add_argument("--seed-file", help="seed specification JSON")
    c.add_argument("--U", type=float, help="neighbourhood radius")
    c.add_argument("--alpha-rect", type=float, help="rectangle diameter bound")
    s = sub.add_parser("suite", parents=[common], help="acceptance batteries")
    s.add_argument("name", choices=SUITES)
    return p


def _param(text: str):
    if "=" not in text:
        raise UsageError(f"--param expects KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    op = {"model": "validate", "coding": "coding"}.get(args.command, args.command)
    params = dict(cfg.params)
    params.update(dict(_param(t) for t in args.param))
    if getattr(args, "emit", None):
        params["emit"] = args.emit
    for attr, key in (("seed_file", "seed_file"), ("max_len", "max_len"), ("U", "U"), ("alpha_rect", "alpha_rect")):
        if getattr(args, attr, None) is not None:
            params[key] = getattr(args, attr)
    if args.command == "suite":
        params["name"] = args.name
    model = args.model or cfg.model
    if args.command == "coding" and model is None:
        model = "CAT"
    return cfg.replace(operation=op, params=params, model=model, seed=args.seed, out=args.out)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        rec = run(cfg)
    except LyapspecError as exc:
        print(exc.one_line(), file=sys.stderr)
        return 2
    if rec.error:
        print(rec.error, file=sys.stderr)
        return 1
    failed = sorted(k for k, v in rec.checks.items() if not v)
    if failed:
        print(f"CHECK_FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"ok: {len(rec.checks)} checks in {rec.wall_time:.2f}s, outputs in {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
