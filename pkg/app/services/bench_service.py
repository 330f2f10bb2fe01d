"""Benchmark grids: generator x eps x seed, joined with exact oracle values."""
import asyncio
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from app.core.errors import InfeasibleError, LatencyPtasError, NotFoundError, ParameterError
from app.formats import REPORT_COLUMNS, GeneratorKind, OutputFormat
from app.services import oracles
from app.services.generators import generate
from app.services.instances import merge_coincident, schedule_objective, tour_objective
from app.services.sched_core import SCHED_RESTART, sched_approx, sched_expectation_report
from app.services.trp_core import choose_parameters, expectation_report, solver_for_instance, trp_approx

logger = logging.getLogger(__name__)

BENCH_COLUMNS = REPORT_COLUMNS + ["status"]


@dataclass(frozen=True)
class BenchCell:
    suite: str
    generator: GeneratorKind
    eps: Fraction
    seed: int
    params: Tuple[Tuple[str, int], ...] = ()
    K: Optional[int] = None
    retries: Optional[int] = None
    portals: Optional[int] = None
    state_cap: Optional[int] = None

    @property
    def name(self) -> str:
        args = "-".join(f"{k}{v}" for k, v in self.params)
        return f"{self.generator.value}-{args}-s{self.seed}"


@dataclass(frozen=True)
class Suite:
    generator: GeneratorKind
    sizes: Tuple[Tuple[Tuple[str, int], ...], ...]
    mode: str = "solve"
    default_eps: Tuple[Fraction, ...] = (Fraction(1),)


SUITES: Dict[str, Suite] = {
    "tree-small": Suite(GeneratorKind.RANDOM_TREE, tuple((("n", n), ("max_weight", 4)) for n in (3, 4, 5))),
    "euclid-small": Suite(GeneratorKind.RANDOM_EUCLID, tuple((("n", n), ("span", 16)) for n in (2, 3))),
    "matrix-small": Suite(GeneratorKind.RANDOM_MATRIX, tuple((("n", n), ("max_weight", 6)) for n in (2, 3))),
    "sched-small": Suite(GeneratorKind.RANDOM_SCHED, tuple((("n", n), ("max_p", 3), ("max_w", 3)) for n in (2, 3))),
    "line-hard": Suite(GeneratorKind.LINE_HARD, ((("k", 2),), (("k", 3),))),
    "expectation-tree": Suite(GeneratorKind.RANDOM_TREE, tuple((("n", n), ("max_weight", 8)) for n in (4, 6, 8)),
                              mode="expectation"),
    "expectation-sched": Suite(GeneratorKind.RANDOM_SCHED, tuple((("n", n), ("max_p", 4), ("max_w", 3)) for n in (3, 5)),
                               mode="expectation"),
}


def build_cells(suite: str, eps_values: Sequence[Fraction] = (), seeds: int = 1, seed: int = 0,
                K: Optional[int] = None, retries: Optional[int] = None, portals: Optional[int] = None,
                state_cap: Optional[int] = None) -> List[BenchCell]:
    """Grid cells in report order: size, then eps, then seed."""
    if suite not in SUITES:
        raise ParameterError(f"unknown suite '{suite}', expected one of {sorted(SUITES)}")
    if seeds < 1:
        raise ParameterError("seeds must be at least 1")
    catalogue = SUITES[suite]
    eps_values = tuple(Fraction(e) for e in eps_values) or catalogue.default_eps
    return [
        BenchCell(suite, catalogue.generator, eps, s, params, K, retries, portals, state_cap)
        for params in catalogue.sizes
        for eps in eps_values
        for s in range(seed, seed + seeds)
    ]


def _fmt(value: Optional[Fraction]) -> str:
    if value is None:
        return ""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{float(value):.6f}"


def _ratio(realized: Optional[Fraction], oracle_value: Optional[Fraction]) -> str:
    if realized is None or oracle_value is None:
        return ""
    if oracle_value == 0:
        return "1.000000" if realized == 0 else ""
    return f"{float(Fraction(realized) / oracle_value):.6f}"


def _solve_cell(cell: BenchCell) -> Dict[str, str]:
    inst = generate(cell.generator, cell.seed, **dict(cell.params))
    mode = SUITES[cell.suite].mode
    row = {"instance": cell.name, "n": str(inst.n), "eps": _fmt(cell.eps), "status": "ok"}

    if cell.generator == GeneratorKind.RANDOM_SCHED:
        _, K = choose_parameters(cell.eps, cell.K, SCHED_RESTART)
        optimum, schedule = oracles.oracle_sched(inst)
        if mode == "expectation":
            report = sched_expectation_report(inst, schedule, cell.eps, K)
            bound, realized = (1 + cell.eps) * optimum, report.mean
        else:
            result = sched_approx(inst, cell.eps, K, cell.state_cap)
            realized, _ = schedule_objective(inst, result.pseudo)
            bound = result.bound
    else:
        _, K = choose_parameters(cell.eps, cell.K)
        work = merge_coincident(inst)
        optimum, tour = oracles.oracle_trp(work)
        if mode == "expectation":
            report = expectation_report(work, tour, cell.eps, K)
            bound, realized = (1 + cell.eps) * optimum, report.mean
        else:
            solver = solver_for_instance(work, cell.eps, K, cell.retries, cell.seed, cell.portals, cell.state_cap)
            result = trp_approx(work, cell.eps, solver, K)
            realized, _ = tour_objective(result.instance, result.pseudo)
            bound = result.bound
    row.update(K=str(K), oracle=_fmt(optimum), bound=_fmt(bound), realized=_fmt(realized),
               ratio=_ratio(realized, optimum))
    return row


def run_cell(cell: BenchCell, timing: bool = False) -> Dict[str, str]:
    """One grid cell as a report row; solver failures become a status, not an exception."""
    started = time.perf_counter()
    try:
        row = _solve_cell(cell)
    except (InfeasibleError, NotFoundError) as exc:
        logger.warning("✗ %s: %s", cell.name, exc)
        row = {"instance": cell.name, "eps": _fmt(cell.eps), "status": "not-found"}
    except LatencyPtasError as exc:
        logger.warning("✗ %s: %s", cell.name, exc)
        row = {"instance": cell.name, "eps": _fmt(cell.eps), "status": f"error: {exc}"}
    row["wall_time"] = f"{time.perf_counter() - started:.3f}" if timing else ""
    return {column: row.get(column, "") for column in BENCH_COLUMNS}


@dataclass
class BenchRunner:
    workers: int = 1
    time_limit: Optional[float] = None
    timing: bool = False
    _executor: Optional[ProcessPoolExecutor] = field(default=None, repr=False)

    async def _run_one(self, cell: BenchCell, gate: asyncio.Semaphore) -> Dict[str, str]:
        async with gate:
            logger.debug("→ bench cell %s", cell.name)
            loop = asyncio.get_running_loop()
            job = loop.run_in_executor(self._executor, run_cell, cell, self.timing)
            try:
                return await asyncio.wait_for(job, timeout=self.time_limit)
            except asyncio.TimeoutError:
                logger.warning("✗ %s: time limit of %ss reached", cell.name, self.time_limit)
                row = {"instance": cell.name, "eps": _fmt(cell.eps), "status": "timeout", "wall_time": ""}
                return {column: row.get(column, "") for column in BENCH_COLUMNS}

    async def run(self, cells: Sequence[BenchCell]) -> pd.DataFrame:
        """Run cells concurrently up to the worker cap; rows keep grid order."""
        gate = asyncio.Semaphore(max(1, self.workers))
        if self.workers > 1 or self.time_limit is not None:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        try:
            rows = await asyncio.gather(*(self._run_one(cell, gate) for cell in cells))
        finally:
            if self._executor is not None:
                self._executor.shutdown(cancel_futures=True)
                self._executor = None
        frame = pd.DataFrame(rows, columns=BENCH_COLUMNS)
        logger.info("✓ bench finished: %d cells, %d ok", len(frame), int((frame["status"] == "ok").sum()))
        return frame


def max_ratio(frame: pd.DataFrame) -> Optional[float]:
    ratios = pd.to_numeric(frame["ratio"], errors="coerce").dropna()
    return float(ratios.max()) if len(ratios) else None


def render_table(frame: pd.DataFrame, fmt: OutputFormat) -> str:
    """CSV is canonical; markdown and plain are views of the same frame."""
    fmt = OutputFormat(fmt)
    if fmt == OutputFormat.CSV:
        return frame.to_csv(index=False, lineterminator="\n")
    cells = frame.fillna("").astype(str)
    if fmt == OutputFormat.MD:
        lines = ["| " + " | ".join(cells.columns) + " |", "|" + "---|" * len(cells.columns)]
        lines += ["| " + " | ".join(row) + " |" for row in cells.itertuples(index=False)]
        return "\n".join(lines) + "\n"
    return cells.to_string(index=False) + "\n"
