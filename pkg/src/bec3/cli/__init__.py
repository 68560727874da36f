"""Command-line entry point: ``bec3 <command> --config <path>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..errors import Bec3Error, ConfigError
from .config import COMMANDS, RunConfig, load_config, parse_config

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2

__all__ = ["main", "run", "load_config", "parse_config", "RunConfig"]


def run(cfg: RunConfig, out: Optional[Path] = None) -> dict:
    """Execute a validated config and write its artifacts; returns the JSON record."""
    from .commands import COMMANDS as dispatch

    out = Path(out if out is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return dispatch[cfg.command](cfg, out)


def _error_record(exc: BaseException, code: int) -> dict:
    return {
        "error": type(exc).__name__,
        "message": str(exc),
        "location": getattr(exc, "location", None),
        "exit_code": code,
    }


def _emit_error(exc, code, out):
    record = _error_record(exc, code)
    text = json.dumps(record, indent=2, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="bec3", description="Three-body scattering, GP and Bogoliubov toolkit")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=False, help="TOML run configuration")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, help="overrides output.seed")
    parser.add_argument("--workers", type=int, help="overrides workers")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    overrides = {"command": args.command}
    if args.out is not None:
        overrides["output.directory"] = args.out
    if args.seed is not None:
        overrides["output.seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    try:
        if args.config is None:
            if args.command != "verify":
                raise ConfigError(f"command {args.command!r} needs --config", location="--config")
            data = {}
            for key, value in overrides.items():
                node = data
                *parents, leaf = key.split(".")
                for p in parents:
                    node = node.setdefault(p, {})
                node[leaf] = value
            cfg = parse_config(data, "<defaults>")
        else:
            cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        return _emit_error(exc, EXIT_CONFIG, args.out)

    try:
        record = run(cfg)
    except ConfigError as exc:
        return _emit_error(exc, EXIT_CONFIG, cfg.output.directory)
    except (Bec3Error, ArithmeticError, MemoryError, OSError) as exc:
        return _emit_error(exc, EXIT_SOLVER, cfg.output.directory)
    if cfg.command == "verify" and not record["passed"]:
        failed = [c["name"] for c in record["checks"] if not c["passed"]]
        print(f"verify: failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"bec3 {cfg.command}: wrote artifacts to {cfg.output.directory}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
