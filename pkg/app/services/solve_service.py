"""Solve and oracle runs shared by the command line and the HTTP service."""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple, Union

from app.core.errors import InvalidInstanceError, InvariantViolation
from app.formats import SOLVE_REPORT_TEMPLATE, WINDOW_LINE_TEMPLATE, InstanceKind
from app.services import oracles
from app.services.instances import (
    MetricInstance,
    SchedInstance,
    lift_order,
    make_tour,
    merge_coincident,
    schedule_objective,
    serialize_schedule,
    serialize_tour,
    tour_objective,
)
from app.services.sched_core import SCHED_RESTART, sched_approx
from app.services.trp_core import WindowReport, choose_parameters, solver_for_instance, trp_approx

logger = logging.getLogger(__name__)

Instance = Union[MetricInstance, SchedInstance]


def kind_of(inst: Instance) -> InstanceKind:
    return InstanceKind.SCHED if isinstance(inst, SchedInstance) else inst.kind


@dataclass(frozen=True)
class SolveReport:
    kind: InstanceKind
    n: int
    eps: Fraction
    K: int
    h0: int
    gamma: int
    bound: Fraction
    realized: Fraction
    oracle: Optional[Fraction]
    windows: Tuple[WindowReport, ...]
    solution: str
    diagnostics: Tuple[str, ...] = ()

    @property
    def ratio(self) -> Optional[Fraction]:
        if self.oracle is None:
            return None
        if self.oracle == 0:
            return Fraction(1) if self.realized == 0 else None
        return self.realized / self.oracle

    def render(self) -> str:
        ratio = self.ratio
        text = SOLVE_REPORT_TEMPLATE.format(
            kind=self.kind.value, n=self.n, eps=self.eps, K=self.K, h0=self.h0, gamma=self.gamma,
            bound=self.bound, realized=self.realized,
            oracle="" if self.oracle is None else self.oracle,
            ratio="" if ratio is None else f"{float(ratio):.6f}",
        )
        text += "".join(WINDOW_LINE_TEMPLATE.format(index=w.index, target=w.target, value=w.value)
                        for w in self.windows)
        text += "".join(line + "\n" for line in self.diagnostics)
        return text + self.solution


@dataclass(frozen=True)
class OracleReport:
    kind: InstanceKind
    n: int
    value: Fraction
    solution: str

    def render(self) -> str:
        return f"kind: {self.kind.value}\nn: {self.n}\noptimum: {self.value}\n{self.solution}"


def solve_trp(inst: Instance, eps: Fraction, K: Optional[int] = None, portals: Optional[int] = None,
              retries: Optional[int] = None, seed: int = 0, with_oracle: bool = False,
              state_cap: Optional[int] = None, scale: bool = False) -> SolveReport:
    if isinstance(inst, SchedInstance):
        raise InvalidInstanceError("solve-trp needs a 'trp' instance, got a 'sched' document")
    eps = Fraction(eps)
    _, K = choose_parameters(eps, K)
    logger.info("→ solve-trp kind=%s n=%d eps=%s K=%d", inst.kind.value, inst.n, eps, K)
    solver = solver_for_instance(merge_coincident(inst), eps, K, retries, seed, portals, state_cap)
    result = trp_approx(inst, eps, solver, K, scale=scale)
    check, _ = tour_objective(result.instance, result.pseudo)
    if check != result.realized:
        raise InvariantViolation(f"re-evaluated objective {check} differs from reported {result.realized}")
    optimum = oracles.oracle_trp(merge_coincident(inst))[0] if with_oracle else None
    return SolveReport(
        kind=inst.kind, n=inst.n, eps=eps, K=K, h0=result.grid.h0, gamma=result.grid.gamma,
        bound=result.bound * result.factor, realized=result.realized_original_units, oracle=optimum,
        windows=result.windows, solution=serialize_tour(inst, result.lifted),
        diagnostics=(f"solver: {result.solver} alpha={result.alpha}",),
    )


def solve_sched(inst: Instance, eps: Fraction, K: Optional[int] = None, with_oracle: bool = False,
                guess_cap: Optional[int] = None) -> SolveReport:
    if not isinstance(inst, SchedInstance):
        raise InvalidInstanceError("solve-sched needs a 'sched' instance")
    eps = Fraction(eps)
    _, K = choose_parameters(eps, K, SCHED_RESTART)
    logger.info("→ solve-sched n=%d eps=%s K=%d", inst.n, eps, K)
    result = sched_approx(inst, eps, K, guess_cap)
    check, _ = schedule_objective(inst, result.pseudo)
    if check != result.realized:
        raise InvariantViolation(f"re-evaluated objective {check} differs from reported {result.realized}")
    optimum = oracles.oracle_sched(inst)[0] if with_oracle else None
    diagnostics = []
    for window, plan in zip(result.windows, result.plans):
        if plan is None:
            continue
        anchors = " ".join("-" if a is None else str(a) for a in plan.anchors)
        budgets = " ".join(f"{list(s)}@{h}={p}" for s, h, p in plan.realized) or "none"
        diagnostics.append(f"slots {window.index}: anchors {anchors} budgets {budgets}")
    return SolveReport(
        kind=InstanceKind.SCHED, n=inst.n, eps=eps, K=K, h0=result.grid.h0, gamma=result.grid.gamma,
        bound=result.bound, realized=result.realized, oracle=optimum, windows=result.windows,
        solution=serialize_schedule(inst, result.compact), diagnostics=tuple(diagnostics),
    )


def run_oracle(inst: Instance) -> OracleReport:
    if isinstance(inst, SchedInstance):
        value, schedule = oracles.oracle_sched(inst)
        return OracleReport(InstanceKind.SCHED, inst.n, value, serialize_schedule(inst, schedule))
    work = merge_coincident(inst)
    value, tour = oracles.oracle_trp(work)
    lifted = make_tour(inst, lift_order(work, tour.order))
    return OracleReport(inst.kind, inst.n, value, serialize_tour(inst, lifted))
