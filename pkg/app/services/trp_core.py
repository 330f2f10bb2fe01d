"""Traveling repairman by reduction to segmented TSP.

Time is cut into geometrically growing windows. Every window gets the best
tour a segmented-TSP solver can find for each range of visit counts, and a
DP over cumulative counts stitches one tour per window into a pseudo tour.
All grid times are exact fractions.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Any, Dict, List, Optional, Protocol, Tuple, Union

from app.core.config import settings
from app.core.errors import BudgetExceededError, InfeasibleError, InvariantViolation, ParameterError
from app.formats import InstanceKind
from app.services.instances import (
    MetricInstance,
    PseudoTour,
    SchedInstance,
    SegTspInstance,
    Subtour,
    Tour,
    compact_pseudo_tour,
    empty_tour,
    lift_order,
    make_tour,
    merge_coincident,
    scale_and_round,
    tour_objective,
    truncate_tour,
    unit_completions,
)

logger = logging.getLogger(__name__)

DEFAULT_RESTART = 3


class SegTspSolver(Protocol):
    """Anything that finds a closed tour for a segmented-TSP instance.

    A returned tour meets every count n_h by alpha * l_h and has length at
    most alpha * l_K. None means no tour was found.
    """

    alpha: Fraction
    name: str

    def solve(self, inst: MetricInstance, seg: SegTspInstance) -> Optional[Tour]:
        ...


# --------------------------------------------------------------------------- #
# Parameters and grid
# --------------------------------------------------------------------------- #

def _min_power(delta: Fraction, target: Fraction) -> int:
    k, power = 0, Fraction(1)
    while power < target:
        power *= delta
        k += 1
    return k


def choose_parameters(
    eps: Fraction, K: Optional[int] = None, restart: Fraction = DEFAULT_RESTART
) -> Tuple[Fraction, int]:
    """Return (delta, K) with delta = 1 + eps.

    Without an explicit K the theory value max(ceil(3(1+eps)/eps^2), K_min)
    is used, where K_min is the least K with delta^K >= c/(c-2) for restart
    constant c. An explicit K is only checked against that window-fit bound.
    """
    eps, restart = Fraction(eps), Fraction(restart)
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if restart <= 2:
        raise ParameterError(f"restart constant must exceed 2, got {restart}")
    delta = 1 + eps
    fit = restart / (restart - 2)
    if K is None:
        return delta, max(math.ceil(3 * delta / (eps * eps)), _min_power(delta, fit))
    if K < 1 or delta ** K < fit:
        raise ParameterError(f"K={K} too small: delta^K = {delta ** K} < {fit}")
    return delta, K


def length_upper_bound(inst: Union[MetricInstance, SchedInstance]) -> int:
    if isinstance(inst, SchedInstance):
        return inst.total_processing
    if inst.kind == InstanceKind.TREE:
        return 2 * sum(w for _, _, w in inst.edges)
    if inst.n == 0:
        return 0
    return inst.n * inst.max_distance + max(inst.dist[0])


@dataclass(frozen=True)
class TimeGrid:
    eps: Fraction
    delta: Fraction
    K: int
    h0: int
    gamma: int
    restart: Fraction = Fraction(DEFAULT_RESTART)

    def A(self, i: int) -> Fraction:
        return self.delta ** ((i - 1) * self.K + self.h0)

    def t(self, i: int) -> Fraction:
        return self.restart * self.A(i - 1)

    def slot(self, i: int, h: int) -> Fraction:
        return self.delta ** h * self.t(i)

    def deadlines(self, i: int) -> Tuple[Fraction, ...]:
        """Offsets l_h = t_i^(h) - t_i for h = 1..K."""
        start = self.t(i)
        return tuple(self.slot(i, h) - start for h in range(1, self.K + 1))


def build_time_grid(
    inst: Union[MetricInstance, SchedInstance],
    eps: Fraction,
    K: int,
    h0: int,
    restart: Fraction = DEFAULT_RESTART,
) -> TimeGrid:
    delta, K = choose_parameters(eps, K, restart)
    if not 0 <= h0 < K:
        raise ParameterError(f"h0 must lie in 0..{K - 1}, got {h0}")
    upper = length_upper_bound(inst)
    grid = TimeGrid(Fraction(eps), delta, K, h0, 1, Fraction(restart))
    gamma = 1
    while grid.A(gamma) < upper:
        gamma += 1
    return TimeGrid(Fraction(eps), delta, K, h0, gamma, Fraction(restart))


# --------------------------------------------------------------------------- #
# Tour transformation
# --------------------------------------------------------------------------- #

def transform_tour(inst: MetricInstance, tour: Tour, grid: TimeGrid) -> PseudoTour:
    """Restart the tour at every t_i, following it for A_i and returning."""
    last = grid.gamma
    while grid.A(last) < tour.times[-1]:
        last += 1
    subtours = []
    for i in range(1, last + 1):
        prefix = [v for v, c in zip(tour.order[1:], tour.times[1:]) if c <= grid.A(i)]
        subtours.append(Subtour(grid.t(i), grid.t(i + 1), tuple(prefix)))
    return PseudoTour(tuple(subtours))


@dataclass(frozen=True)
class ExpectationReport:
    base: Fraction
    per_h0: Tuple[Fraction, ...]

    @property
    def mean(self) -> Fraction:
        return sum(self.per_h0, Fraction(0)) / len(self.per_h0)


def expectation_report(
    inst: MetricInstance, tour: Tour, eps: Fraction, K: Optional[int] = None, restart: Fraction = DEFAULT_RESTART
) -> ExpectationReport:
    """Transformed objective of `tour` for every h0 and their mean."""
    _, K = choose_parameters(eps, K, restart)
    base, _ = tour_objective(inst, tour)
    values = []
    for h0 in range(K):
        grid = build_time_grid(inst, eps, K, h0, restart)
        values.append(tour_objective(inst, transform_tour(inst, tour, grid))[0])
    return ExpectationReport(base, tuple(values))


def ci_completion_times(seg: SegTspInstance) -> List[Fraction]:
    out: List[Fraction] = []
    previous = 0
    for deadline, count in zip(seg.deadlines, seg.counts):
        out.extend([Fraction(deadline)] * (count - previous))
        previous = count
    return out


# --------------------------------------------------------------------------- #
# Subproblems and the combine DP
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SubproblemValue:
    value: Optional[Fraction]
    witness: Optional[Any] = None

    @property
    def finite(self) -> bool:
        return self.value is not None


INFINITE = SubproblemValue(None)


def count_vectors(m2: int, K: int) -> List[Tuple[int, ...]]:
    """All n_1 <= ... <= n_K = m2, lexicographic in (n_1, ..., n_{K-1})."""
    return [prefix + (m2,) for prefix in combinations_with_replacement(range(m2 + 1), K - 1)]


def solve_subproblem(
    inst: MetricInstance,
    grid: TimeGrid,
    i: int,
    m2: int,
    solver: SegTspSolver,
    cap: Optional[int] = None,
) -> Dict[int, SubproblemValue]:
    """Best window-i tour for every range (m1, m2] of completion positions.

    Each candidate tour is evaluated once and its completion sequence fills
    every m1 <= m2 at the same time.
    """
    cap = cap or settings.COMPOSITION_CAP
    result: Dict[int, SubproblemValue] = {m2: SubproblemValue(Fraction(0), empty_tour())}
    if m2 == 0:
        return result
    total = math.comb(m2 + grid.K - 1, grid.K - 1)
    if total > cap:
        raise BudgetExceededError("trp_core", "COMPOSITION_CAP", cap, f"window {i} needs {total} count vectors")
    offset = solver.alpha * grid.t(i)
    deadlines = grid.deadlines(i)
    for counts in count_vectors(m2, grid.K):
        tour = solver.solve(inst, SegTspInstance(deadlines, counts))
        if tour is None:
            continue
        tour = truncate_tour(inst, tour, m2)
        times = unit_completions(inst, tour)[:m2]
        if len(times) < m2:
            continue
        suffix = Fraction(0)
        for m1 in range(m2 - 1, -1, -1):
            suffix += offset + times[m1]
            best = result.get(m1)
            if best is None or suffix < best.value:
                result[m1] = SubproblemValue(suffix, tour)
    return result


@dataclass(frozen=True)
class CombinePlan:
    marks: Tuple[int, ...]
    value: Fraction
    window_values: Tuple[Fraction, ...]


SubproblemTable = Dict[int, Dict[int, Dict[int, SubproblemValue]]]


def combine_dp(table: SubproblemTable, gamma: int, units: int) -> CombinePlan:
    """Minimise the sum of window values over m_1 <= ... <= m_gamma = units."""
    best: List[Dict[int, Fraction]] = [{0: Fraction(0)}]
    choice: List[Dict[int, int]] = [{}]
    for k in range(1, gamma + 1):
        layer: Dict[int, Fraction] = {}
        arg: Dict[int, int] = {}
        targets = [units] if k == gamma else range(units + 1)
        for m2 in targets:
            for m1 in range(m2 + 1):
                if m1 not in best[k - 1]:
                    continue
                entry = table[k][m2].get(m1, INFINITE)
                if not entry.finite:
                    continue
                value = best[k - 1][m1] + entry.value
                if m2 not in layer or value < layer[m2]:
                    layer[m2], arg[m2] = value, m1
        best.append(layer)
        choice.append(arg)
    if units not in best[gamma]:
        raise InfeasibleError(f"no window plan covers all {units} units; the time grid is too short")
    marks = [units]
    for k in range(gamma, 1, -1):
        marks.append(choice[k][marks[-1]])
    marks.reverse()
    lows = [0] + marks[:-1]
    window_values = tuple(table[k + 1][marks[k]][lows[k]].value for k in range(gamma))
    return CombinePlan(tuple(marks), best[gamma][units], window_values)


# --------------------------------------------------------------------------- #
# Pipeline
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class WindowReport:
    index: int
    target: int
    value: Fraction


@dataclass(frozen=True)
class TrpResult:
    instance: MetricInstance
    grid: TimeGrid
    solver: str
    alpha: Fraction
    bound: Fraction
    realized: Fraction
    pseudo: PseudoTour
    compact: Tour
    windows: Tuple[WindowReport, ...]
    factor: Fraction = Fraction(1)
    per_h0: Tuple[Optional[Fraction], ...] = field(default_factory=tuple)
    # compact tour over the caller's identifiers and its latency there
    lifted: Optional[Tour] = None
    lifted_value: Optional[Fraction] = None

    @property
    def realized_original_units(self) -> Fraction:
        if self.factor == 1 or self.lifted_value is None:
            return self.realized
        return self.lifted_value


def _fill_table(inst: MetricInstance, grid: TimeGrid, solver: SegTspSolver, cap: Optional[int]) -> SubproblemTable:
    table: SubproblemTable = {}
    for i in range(1, grid.gamma + 1):
        logger.debug("→ solving window %d/%d (h0=%d)", i, grid.gamma, grid.h0)
        table[i] = {m2: solve_subproblem(inst, grid, i, m2, solver, cap) for m2 in range(inst.units + 1)}
    return table


def _assemble(inst: MetricInstance, grid: TimeGrid, solver: SegTspSolver, table: SubproblemTable,
              plan: CombinePlan) -> PseudoTour:
    subtours, low = [], 0
    for i, mark in enumerate(plan.marks, start=1):
        entry = table[i][mark][low]
        order = entry.witness.order[1:] if entry.witness else ()
        start, end = solver.alpha * grid.t(i), solver.alpha * grid.t(i + 1)
        length = make_tour(inst, order, closed=True).length
        if start + length > end:
            raise InvariantViolation(f"window {i} overruns: {start} + {length} > {end}")
        subtours.append(Subtour(start, end, tuple(order)))
        low = mark
    return PseudoTour(tuple(subtours))


def trp_approx(
    inst: MetricInstance,
    eps: Fraction,
    solver: SegTspSolver,
    K: Optional[int] = None,
    restart: Fraction = DEFAULT_RESTART,
    scale: bool = False,
    composition_cap: Optional[int] = None,
) -> TrpResult:
    """Run the window pipeline for every h0 and keep the best realized objective."""
    eps = Fraction(eps)
    _, K = choose_parameters(eps, K, restart)
    factor = Fraction(1)
    work = inst
    if scale:
        scaled = scale_and_round(inst, eps)
        work, factor = scaled.instance, scaled.factor
    work = merge_coincident(work)

    best: Optional[TrpResult] = None
    per_h0: List[Optional[Fraction]] = []
    for h0 in range(K):
        grid = build_time_grid(work, eps, K, h0, restart)
        if work.units == 0:
            pseudo = PseudoTour(())
            result = TrpResult(work, grid, solver.name, solver.alpha, Fraction(0), Fraction(0), pseudo,
                               make_tour(work, []), (), factor)
            per_h0.append(Fraction(0))
            best = best or result
            continue
        table = _fill_table(work, grid, solver, composition_cap)
        try:
            plan = combine_dp(table, grid.gamma, work.units)
        except InfeasibleError:
            logger.warning("✗ h0=%d: no plan covers every item", h0)
            per_h0.append(None)
            continue
        pseudo = _assemble(work, grid, solver, table, plan)
        realized, _ = tour_objective(work, pseudo)
        if realized > plan.value:
            raise InvariantViolation(f"realized objective {realized} exceeds DP bound {plan.value}")
        per_h0.append(realized)
        windows = tuple(WindowReport(i, m, v) for i, (m, v) in enumerate(zip(plan.marks, plan.window_values), 1))
        result = TrpResult(work, grid, solver.name, solver.alpha, plan.value, realized, pseudo,
                           compact_pseudo_tour(work, pseudo), windows, factor)
        logger.debug("✓ h0=%d bound=%s realized=%s", h0, plan.value, realized)
        if best is None or realized < best.realized:
            best = result
    if best is None:
        raise InfeasibleError("no h0 produced a covering plan")
    lifted = make_tour(inst, lift_order(best.instance, best.compact.order))
    lifted_value, _ = tour_objective(inst, lifted)
    logger.info("✓ trp_approx n=%d K=%d best h0=%d realized=%s", inst.n, K, best.grid.h0, best.realized)
    return replace(best, per_h0=tuple(per_h0), lifted=lifted, lifted_value=lifted_value)


def solver_for_instance(inst: MetricInstance, eps: Fraction, K: int, retries: Optional[int] = None,
                        seed: int = 0, portals: Optional[int] = None, state_cap: Optional[int] = None):
    """The segmented-TSP solver matching the instance's metric backend."""
    from app.services.oracles import ExactSegTspSolver
    from app.services.segtsp_euclid import EuclidSegTspSolver
    from app.services.segtsp_tree import TreeSegTspSolver

    if inst.kind == InstanceKind.TREE:
        return TreeSegTspSolver(state_cap=state_cap)
    if inst.kind == InstanceKind.EUCLID:
        return EuclidSegTspSolver(eps, K, retries=retries, seed=seed, portals=portals, state_cap=state_cap)
    return ExactSegTspSolver()
