"""
AirReComp Simulator - Command-Line Entry Point

Runs one experiment family per invocation and writes its CSV table.

Usage:
    python -m app.main <command> [--config FILE] [--seed N] [--trials N]
                       [--out PATH] [--full-scale] [--workers N] [--log-level LEVEL]

Commands: mse-sweep, baseline-compare, train, select-m, sigma-sweep, bound-validate.

On failure a single JSON object {"error": <category>, "detail": <message>} is
printed to stderr and the process exits with the category's nonzero code.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from app.commands.experiment_commands import COMMANDS, run_experiment
from app.core.config import settings
from app.core.errors import EXIT_CODES, ConfigError, SimulationError
from app.models.experiment import load_experiment_config

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airrecomp",
        description=f"{settings.APP_NAME}: federated learning over an analog multiple-access channel with retransmissions",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="Experiment family to run")
    parser.add_argument("--config", help="JSON or TOML experiment file")
    parser.add_argument("--seed", type=int, help="Master seed (required here or in the config file)")
    parser.add_argument("--trials", type=int, help="Trials per cell / seeds per M")
    parser.add_argument("--out", help="Output CSV path (stdout when omitted)")
    parser.add_argument("--full-scale", action="store_true", default=None, help="Use full-size defaults")
    parser.add_argument("--workers", type=int, help=f"Worker processes (default {settings.WORKERS})")
    parser.add_argument("--log-level", help=f"Logging level (default {settings.LOG_LEVEL})")
    return parser


def configure_logging(level: Optional[str]) -> None:
    """
    Configure root logging on stderr.

    Raises:
        ConfigError: If the level is not a logging level name
    """
    name = (level or settings.LOG_LEVEL).upper()
    if name not in getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))():
        raise ConfigError(f"--log-level must be a logging level name, got {level!r}")
    logging.basicConfig(
        level=name,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def report_error(category: str, detail: str) -> int:
    sys.stderr.write(json.dumps({"error": category, "detail": detail}) + "\n")
    return EXIT_CODES.get(category, 1)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the experiment and map failures to exit codes.

    Returns:
        int: 0 on success, the error category's exit code otherwise
    """
    args = build_parser().parse_args(argv)

    try:
        configure_logging(args.log_level)
        if args.workers is not None:
            if args.workers < 1:
                return report_error("config", f"--workers must be >= 1, got {args.workers}")
            settings.WORKERS = args.workers
        config = load_experiment_config(
            args.config,
            {
                "kind": args.command,
                "seed": args.seed,
                "trials": args.trials,
                "output": args.out,
                "full_scale": args.full_scale,
            },
        )
        run_experiment(config)
        return 0

    except SimulationError as e:
        logger.error(f"{e.category} error: {str(e)}")
        return report_error(e.category, str(e))

    except Exception as e:
        logger.exception(f"Unexpected error: {str(e)}")
        return report_error("internal", str(e))


if __name__ == "__main__":
    sys.exit(main())
