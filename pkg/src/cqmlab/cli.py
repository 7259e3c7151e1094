"""Command line front end.

    cqmlab run <config> [--n INT] [--seed INT] [--noise zero|white|nelson] [--out DIR]
    cqmlab check <run-dir>
    cqmlab plot-data <run-dir>

Exit codes: 0 all checks pass, 1 a check failed, 2 bad configuration,
3 escape-rate abort, 4 missing artifacts or filesystem error. The worker
count comes from the CQMLAB_WORKERS environment variable only.
"""

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .runner import (
    EXIT_ARTIFACTS,
    EXIT_CONFIG,
    ArtifactError,
    apply_overrides,
    check_run,
    emit_plot_data,
    run_scenario,
)
from .trajectories import NOISE_MODELS


def _parser():
    p = argparse.ArgumentParser(prog="cqmlab", description="Quantum trajectory ensembles and consistency checks")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a scenario configuration")
    run.add_argument("config", type=Path)
    run.add_argument("--n", type=int, help="number of trajectories")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--noise", choices=sorted(NOISE_MODELS))
    run.add_argument("--out", type=Path, help="output directory")
    chk = sub.add_parser("check", help="re-evaluate the report of a finished run")
    chk.add_argument("run_dir", type=Path)
    plot = sub.add_parser("plot-data", help="write plot-ready column files for a finished run")
    plot.add_argument("run_dir", type=Path)
    return p


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"cannot read {args.config}: {exc}")
        return EXIT_ARTIFACTS
    try:
        cfg = parse_config(text)
        cfg, overrides = apply_overrides(cfg, args.n, args.seed, args.noise, args.out)
    except ConfigError as exc:
        _err(f"{args.config}: {exc}")
        return EXIT_CONFIG
    result = run_scenario(cfg, overrides=overrides)
    if result.message:
        print(result.message, file=sys.stdout if result.exit_code <= 1 else sys.stderr)
    print(f"artifacts in {result.out_dir} (exit {result.exit_code})")
    return result.exit_code


def cmd_check(args) -> int:
    try:
        result = check_run(args.run_dir)
    except (ArtifactError, ConfigError, OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_ARTIFACTS
    print(result.message)
    return result.exit_code


def cmd_plot(args) -> int:
    try:
        manifest = emit_plot_data(args.run_dir)
    except (ArtifactError, ConfigError, OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_ARTIFACTS
    print(f"wrote {len(manifest['files'])} files to {Path(args.run_dir) / 'plot'}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "check": cmd_check, "plot-data": cmd_plot}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
