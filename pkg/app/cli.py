"""Command-line front end: solve-trp, solve-sched, oracle, gen and bench."""
import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from app.api.models import RunConfig
from app.core.config import settings
from app.core.errors import InfeasibleError, LatencyPtasError, NotFoundError
from app.core.logging import setup_logging
from app.formats import Command, GeneratorKind, OutputFormat
from app.services import solve_service
from app.services.bench_service import BenchRunner, build_cells, max_ratio, render_table
from app.services.generators import generate
from app.services.instances import parse_instance, serialize_instance

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_NOT_FOUND = 0, 1, 2


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--eps", nargs="+", default=None, help="accuracy; bench accepts several values")
    common.add_argument("--K", type=int, default=None, help="slots per window (default: theory value)")
    common.add_argument("--portals", type=int, default=None, help="portals per dissection side")
    common.add_argument("--retries", type=int, default=None, help="random shifts for the euclid solver")
    common.add_argument("--seed", type=int, default=None, help="seed (falls back to LATENCY_PTAS_SEED)")
    common.add_argument("--oracle", action="store_true", help="also run the exact solver and report the ratio")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.PLAIN.value)
    common.add_argument("--time-limit", type=float, default=None, help="seconds per bench cell")
    common.add_argument("--mem-limit", type=int, default=None, help="DP state / guess cap")
    common.add_argument("--workers", type=int, default=None, help="concurrent bench cells")
    common.add_argument("--timing", action="store_true", help="fill the wall_time column")
    common.add_argument("--scale", action="store_true", help="round distances to a polynomial range first")
    common.add_argument("--log-level", default=settings.LOG_LEVEL)
    common.add_argument("-o", "--output", default=None, help="write the report here instead of stdout")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="latency-ptas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command in (Command.SOLVE_TRP, Command.SOLVE_SCHED, Command.ORACLE):
        p = sub.add_parser(command.value, parents=[common])
        p.add_argument("paths", nargs=1, metavar="instance")

    gen = sub.add_parser(Command.GEN.value, parents=[common])
    gen.add_argument("generator", choices=[g.value for g in GeneratorKind])
    for name in ("n", "k", "max-weight", "span", "max-p", "max-w"):
        gen.add_argument(f"--{name}", type=int, default=None)

    bench = sub.add_parser(Command.BENCH.value, parents=[common])
    bench.add_argument("--suite", required=True)
    bench.add_argument("--seeds", type=int, default=1)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if v is not None and k != "log_level"}
    return RunConfig(**values)


def _read_instance(path: str):
    return parse_instance(Path(path).read_text())


def execute(config: RunConfig) -> Tuple[int, str]:
    """Run one command; returns (exit status, report document)."""
    eps = config.eps[0]
    if config.command == Command.SOLVE_TRP:
        report = solve_service.solve_trp(
            _read_instance(config.paths[0]), eps, config.K, config.portals, config.retries, config.seed,
            config.oracle, config.mem_limit, config.scale,
        )
        return EXIT_OK, report.render()
    if config.command == Command.SOLVE_SCHED:
        report = solve_service.solve_sched(_read_instance(config.paths[0]), eps, config.K, config.oracle,
                                           config.mem_limit)
        return EXIT_OK, report.render()
    if config.command == Command.ORACLE:
        return EXIT_OK, solve_service.run_oracle(_read_instance(config.paths[0])).render()
    if config.command == Command.GEN:
        inst = generate(config.generator, config.seed, **config.generator_params)
        return EXIT_OK, serialize_instance(inst)

    cells = build_cells(config.suite, config.eps, config.seeds, config.seed, config.K, config.retries,
                        config.portals, config.mem_limit)
    runner = BenchRunner(workers=config.workers, time_limit=config.time_limit, timing=config.timing)
    frame = asyncio.run(runner.run(cells))
    logger.info("✓ bench %s: max ratio %s", config.suite, max_ratio(frame))
    document = render_table(frame, config.format)
    statuses = frame["status"]
    if statuses.str.startswith("error").any():
        return EXIT_ERROR, document
    if (statuses != "ok").any():
        return EXIT_NOT_FOUND, document
    return EXIT_OK, document


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = config_from_args(args)
    except ValidationError as exc:
        messages: List[str] = [f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in exc.errors()]
        print("error: " + "; ".join(messages), file=sys.stderr)
        return EXIT_ERROR
    try:
        status, document = execute(config)
    except (InfeasibleError, NotFoundError) as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except (LatencyPtasError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if config.output:
        Path(config.output).write_text(document)
    else:
        sys.stdout.write(document)
    return status
