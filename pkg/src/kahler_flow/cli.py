"""Command-line entry point.

Exit codes: 0 success, 1 verdict failure or property violation, 2 config
error, 3 curvature hypothesis violated, 4 positivity or NaN failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import config as cfgmod
from . import proptest, runner
from .snapshot import atomic_write

log = logging.getLogger("kahler_flow")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration file")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--seed", type=_u64, help="random seed (overrides the config)")
    common.add_argument("--force", action="store_true", help="run even if the curvature hypothesis fails")
    common.add_argument("--svg", action="store_true", help="write plots/*.svg charts")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kahler-flow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="integrate the flow and write a verdict")
    sub.add_parser("resume", parents=[common], help="continue a run from its latest snapshot")
    p = sub.add_parser("proptest", parents=[common], help="randomised inequality suites")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--dims", type=int, nargs="+", default=[1, 2, 3], choices=[1, 2, 3])
    p.add_argument("--suite", nargs="+", default=list(proptest.SUITES), choices=proptest.SUITES)
    p.add_argument("--plant", action="store_true", help="plant a tensor that breaks a symmetry")
    p = sub.add_parser("refine", parents=[common], help="convergence study on N, 2N, 4N")
    p.add_argument("--rungs", type=int, default=3)
    p.add_argument("--t-probe", type=float, default=1.0)
    p = sub.add_parser("oracle", parents=[common], help="curvature report for the initial metric")
    p.add_argument("--s", type=float, nargs="+", default=[0.0, 0.15, 0.3, 0.45, 0.6, 0.75])
    return parser


def _load_config(args, *, required: bool = True) -> cfgmod.RunConfig | None:
    if args.config is None:
        if required:
            raise cfgmod.ConfigError("--config is required")
        return None
    cfg = cfgmod.load(args.config)
    changes = {}
    if args.out is not None:
        changes["out"] = str(args.out)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.force:
        changes["force"] = True
    return cfg.replace(**changes) if changes else cfg


def _report_run(result: runner.RunResult) -> None:
    if result.report is not None:
        sys.stdout.write(result.report.text())


def cmd_run(args) -> int:
    cfg = _load_config(args)
    result = runner.run(cfg, cfg.out, svg=args.svg)
    _report_run(result)
    return result.code


def cmd_resume(args) -> int:
    cfg = _load_config(args, required=False)
    out = args.out or (Path(cfg.out) if cfg else None)
    if out is None:
        raise cfgmod.ConfigError("resume needs --out or --config")
    if cfg is None:
        cfg = cfgmod.load(Path(out) / "config.echo")
        changes = {k: v for k, v in (("seed", args.seed), ("force", args.force or None)) if v is not None}
        cfg = cfg.replace(out=str(out), **changes)
    result = runner.resume(out, cfg, svg=args.svg)
    _report_run(result)
    return result.code


def cmd_proptest(args) -> int:
    if args.samples < 0:
        raise cfgmod.ConfigError("--samples must be nonnegative")
    seed = args.seed if args.seed is not None else 0
    results = proptest.run_suites(seed, args.samples, tuple(args.dims), tuple(args.suite), plant=args.plant)
    for r in results:
        print(r.line())
    if args.samples == 0:
        print("vacuous=true")
    failed = any(r.failures for r in results)
    if failed:
        out = args.out or Path(".")
        out.mkdir(parents=True, exist_ok=True)
        path = out / "proptest_replay.json"
        atomic_write(path, proptest.replay_document(results, seed, args.samples))
        print(f"replay={path}")
    return runner.EXIT_VERDICT if failed else runner.EXIT_OK


def cmd_refine(args) -> int:
    cfg = _load_config(args)
    code, text, _, _ = runner.refine(cfg, args.rungs, t_probe=args.t_probe, out=cfg.out)
    sys.stdout.write(text)
    return code


def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    code, text = runner.oracle(cfg, args.s)
    sys.stdout.write(text)
    return code


COMMANDS = {
    "run": cmd_run,
    "resume": cmd_resume,
    "proptest": cmd_proptest,
    "refine": cmd_refine,
    "oracle": cmd_oracle,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return runner.EXIT_CONFIG if exc.code else runner.EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        log.error("config error: %s", exc)
        return runner.EXIT_CONFIG
    except runner.RunFailure as exc:
        log.error("%s", exc)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
