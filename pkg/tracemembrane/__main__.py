"""Command line interface running reconstruction and membrane studies.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

import argparse
from collections.abc import Sequence
import logging
from pathlib import Path
from typing import Final

from tracemembrane import ConfigError, StudyConfig, StudyKind, TraceMembraneError, __version__
from tracemembrane.analysis import StudyReport
from tracemembrane.export import write_error_report
from tracemembrane.study import load_config, resolve_output_dir, run_study, validate_config
from tracemembrane.test_data import study_config, study_names

# subcommand: (default packaged study, accepted study kinds)
COMMANDS: Final[dict[str, tuple[str, tuple[StudyKind, ...]]]] = {
    "reconstruct": ("geometry", ("reconstruct",)),
    "solve": ("solve", ("solve",)),
    "convergence": ("p2p2", ("convergence", "gamma-optimize")),
    "gamma": ("gamma_sweep", ("gamma-sweep", "gamma-optimize")),
}

CONSOLE_FORMAT: Final[str] = "%(levelname)s: %(message)s"
# file logs keep the pipeline stage (tracemembrane.study, .reconstruct, ...)
FILE_FORMAT: Final[str] = "%(asctime)s %(levelname)-7s [%(name)s] %(message)s"

logging.basicConfig(format=CONSOLE_FORMAT, level=logging.INFO)
logger: logging.Logger = logging.getLogger(__package__)


def select_config(args: argparse.Namespace) -> StudyConfig:
    """Load the study configuration of a subcommand.

    A --config file takes precedence over a packaged --study; without either
    the default study of the subcommand is used.

    Raises:
        ConfigError: unreadable config or a study kind the command cannot run.

    """
    default_study, kinds = COMMANDS[args.command]
    if args.config:
        config: StudyConfig = load_config(Path(args.config))
    else:
        try:
            config = study_config(args.study or default_study)
        except KeyError as exc:
            raise ConfigError(
                f"unknown study '{args.study}', available: {', '.join(study_names())}"
            ) from exc
    config.setdefault("kind", kinds[0])
    if config["kind"] not in kinds:
        raise ConfigError(
            f"'{args.command}' runs {' or '.join(kinds)} studies, got '{config['kind']}'"
        )
    return validate_config(config)


def log_report(report: StudyReport) -> None:
    """Log the per-level results and the written files."""
    for row in report.rows:
        logger.info(
            "k=%i h=%.4f N=%i: %s%s",
            row.k,
            row.h,
            row.n_nodes,
            ", ".join(f"{name}={value:.4e}" for name, value in row.errors.items()),
            f", gamma={row.gamma}" if row.gamma else "",
        )
    for path in report.files:
        logger.info("wrote %s", path)


def setup_logging(args: argparse.Namespace) -> None:
    """Set the level of all pipeline loggers and attach the optional run log.

    The run log is rewritten per invocation and names the emitting module,
    so root finding and solver messages can be told apart with -v.
    """
    loglevel: Final[int] = logging.DEBUG if args.verbose else logging.INFO

    if args.logfile:
        file_handler = logging.FileHandler(args.logfile, mode="w", encoding="UTF-8")
        file_handler.setLevel(loglevel)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        logger.addHandler(file_handler)

    logger.setLevel(loglevel)
    logger.info("tracemembrane %s, %s study", __version__, args.command)


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser with one subcommand per study type."""
    parser = argparse.ArgumentParser(
        description="Reconstruct level-set surfaces on tetrahedral meshes and solve the stabilized membrane problem."
    )
    parser.add_argument("-l", "--logfile", type=str, help="Path to the log file")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Enable debug logging"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", type=str, help="JSON study configuration")
    common.add_argument(
        "-s", "--study", type=str, help=f"packaged study: {', '.join(study_names())}"
    )
    common.add_argument("-o", "--out", type=Path, help="output directory")

    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("reconstruct", "geometric and normal error of the reconstructed surface"),
        ("solve", "solve the membrane once per level, optionally with VTK output"),
        ("convergence", "stress error over the refinement levels"),
        ("gamma", "sweep or optimize the ghost penalty factors"),
    ):
        commands.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv: Sequence[str] | None = None) -> None:
    """Entry point for the tracemembrane command."""
    args: argparse.Namespace = build_parser().parse_args(argv)
    setup_logging(args)

    config: StudyConfig = {}
    try:
        config = select_config(args)
        report: StudyReport = run_study(config, args.out)
    except TraceMembraneError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        path: Path = write_error_report(resolve_output_dir(config, args.out), exc)
        logger.info("error report written to %s", path)
        raise SystemExit(1) from exc
    log_report(report)
    logger.info("done.")


if __name__ == "__main__":
    main()  # pragma: no cover
