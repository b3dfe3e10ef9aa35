"""
Command-Line Front End
Subcommands steady, gap, evolve, wigner, conserved and zeno-compare; each
reads a run configuration, evaluates every sweep point and writes one table
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
import logging
import sys
import time

from api.output import write_diagnostics, write_table
from api.tasks import TaskResult, router
from config import settings
from models.run_config import TASKS, RunConfig, load_config
from modules.errors import CatArrayError, ConfigError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

TASK_HELP = {
    "steady": "steady-state DFS coefficients and purity",
    "gap": "dissipative gap of the Liouvillian",
    "evolve": "time trajectories of the cat populations",
    "wigner": "line or plane slices of the joint Wigner function",
    "conserved": "conserved quantities and the parity defect",
    "zeno-compare": "distance between full and Zeno steady states"
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catarray",
        description=f"{settings.APP_NAME} {settings.VERSION}: multi-mode cat states in dissipative arrays"
    )
    subparsers = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sub = subparsers.add_parser(task, help=TASK_HELP[task])
        sub.add_argument("--config", required=True, help="Run configuration (flat key = value file)")
        sub.add_argument("--out", help="Output file (default: OUTPUT_DIR/<task>.<format>)")
        sub.add_argument("--format", choices=["csv", "json"], help="Output format (default: csv)")
        sub.add_argument("--jobs", type=int, help="Sweep points evaluated concurrently")
        sub.add_argument("--kernel-tol", type=float, help="Relative kernel tolerance")
        sub.add_argument("--verbose", action="store_true", help="Log progress at INFO level")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {"task": args.task}
    if args.out:
        overrides["output.path"] = args.out
    if args.format:
        overrides["output.format"] = args.format
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.kernel_tol is not None:
        overrides["tolerance.kernel_tol"] = args.kernel_tol
    return overrides


def run(config: RunConfig) -> TaskResult:
    """
    Evaluate every sweep point of a validated configuration.

    Points run concurrently up to config.jobs; rows keep sweep order.
    """
    handler = router.handler(config.task)
    points = config.sweep_points()
    start = time.perf_counter()
    logger.info(f"Running {config.task} over {len(points)} point(s) with {config.jobs} job(s)")

    if config.jobs == 1:
        blocks = [handler(config, point) for point in points]
    else:
        with ThreadPoolExecutor(max_workers=config.jobs) as executor:
            futures = [executor.submit(handler, config, point) for point in points]
            blocks = [future.result() for future in futures]

    rows = [row for block in blocks for row in block]
    summary = router.summarize(config.task, config, rows)
    logger.info(f"✓ {config.task} finished: {len(rows)} rows in {time.perf_counter() - start:.1f}s")
    return TaskResult(rows, summary)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.INFO)

    try:
        config = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"Config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    output_path = config.output_path()
    try:
        result = run(config)
        write_table(config, output_path, result.rows, result.summary)
    except ConfigError as exc:
        print(f"Config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CatArrayError as exc:
        logger.error(f"{config.task} failed: {exc}")
        path = write_diagnostics(output_path, exc, config)
        print(f"Numerical failure: {exc} (diagnostics in {path})", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK
