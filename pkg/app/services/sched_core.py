"""Single-machine scheduling with interval-order precedence, by time windows.

The reduction mirrors the repairman pipeline: a schedule is restarted at
every t_i = 3 A_{i-1}, each window gets the best subschedule found for every
range (w', w''] of completed weight, and a DP over cumulative weight stitches
one subschedule per window into a pseudo schedule.

Subschedules are built from guesses. Each window is split into K slots plus a
virtual slot for jobs left out, and a guess fixes the latest-starting job of
every slot, the slots of all large jobs, and the processing time each class
of small jobs spends per slot. The small jobs are then placed greedily in
Smith order.
"""
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.core.config import settings
from app.core.errors import BudgetExceededError, InfeasibleError, InvalidInstanceError, InvariantViolation, ParameterError
from app.services.instances import (
    PseudoSchedule,
    Run,
    SchedInstance,
    Schedule,
    compact_schedule,
    schedule_objective,
    validate_sched,
)
from app.services.trp_core import (
    INFINITE,
    ExpectationReport,
    SubproblemValue,
    TimeGrid,
    WindowReport,
    build_time_grid,
    choose_parameters,
    combine_dp,
)

logger = logging.getLogger(__name__)

SCHED_RESTART = 3


def precedence_from_intervals(inst: SchedInstance) -> nx.DiGraph:
    """j1 precedes j2 exactly when interval j1 ends before interval j2 starts."""
    endpoints = [x for job in inst.jobs for x in (job.l, job.r)]
    if len(set(endpoints)) != len(endpoints):
        raise InvalidInstanceError("interval endpoints must be pairwise distinct")
    graph = nx.DiGraph()
    graph.add_nodes_from(job.id for job in inst.jobs)
    graph.add_edges_from((a.id, b.id) for a in inst.jobs for b in inst.jobs if a.r < b.l)
    return graph


def build_slot_grid(inst: SchedInstance, eps: Fraction, K: int, h0: int) -> TimeGrid:
    return build_time_grid(inst, eps, K, h0, restart=SCHED_RESTART)


def large_threshold(eps: Fraction, K: int) -> Fraction:
    """f(eps) = eps^2 / 2^(K+1); a job is large in window i when p >= f(eps) t_i."""
    return Fraction(eps) ** 2 / 2 ** (K + 1)


# --------------------------------------------------------------------------- #
# Schedule transformation
# --------------------------------------------------------------------------- #

def transform_schedule(inst: SchedInstance, schedule: Schedule, grid: TimeGrid) -> PseudoSchedule:
    """Replay the part of `schedule` finished by A_i inside window i, from t_i on."""
    runs = sorted(schedule.runs, key=lambda r: (r.start, r.job))
    makespan = max((r.end for r in runs), default=Fraction(0))
    last = grid.gamma
    while grid.A(last) < makespan:
        last += 1
    windows = []
    for i in range(1, last + 1):
        start = grid.t(i)
        windows.append(tuple(Run(r.job, start + r.start, start + r.end) for r in runs if r.end <= grid.A(i)))
    return PseudoSchedule(tuple(windows))


def sched_expectation_report(inst: SchedInstance, schedule: Schedule, eps: Fraction,
                             K: Optional[int] = None) -> ExpectationReport:
    _, K = choose_parameters(eps, K, SCHED_RESTART)
    base, _ = schedule_objective(inst, schedule)
    values = []
    for h0 in range(K):
        grid = build_slot_grid(inst, eps, K, h0)
        values.append(schedule_objective(inst, transform_schedule(inst, schedule, grid))[0])
    return ExpectationReport(base, tuple(values))


def weight_profile(inst: SchedInstance, completions: Dict[int, Fraction]) -> List[Fraction]:
    """C^w for w = 1..W: the first time the completed weight reaches w."""
    profile: List[Fraction] = []
    done = 0
    for job_id in sorted(completions, key=lambda j: (completions[j], j)):
        done += inst.by_id[job_id].w
        profile.extend([completions[job_id]] * (done - len(profile)))
    return profile


def check_exchange_identity(inst: SchedInstance, completions: Dict[int, Fraction]) -> None:
    direct = sum((inst.by_id[j].w * c for j, c in completions.items()), Fraction(0))
    by_weight = sum(weight_profile(inst, completions), Fraction(0))
    if direct != by_weight:
        raise InvariantViolation(f"sum w_j C_j = {direct} but sum C^w = {by_weight}")


# --------------------------------------------------------------------------- #
# Slot sets
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SlotSets:
    anchors: Tuple[Optional[int], ...]
    sets: Dict[int, FrozenSet[int]]

    @property
    def K(self) -> int:
        return len(self.anchors) - 1


def compute_slot_sets(inst: SchedInstance, anchors: Sequence[Optional[int]],
                      prec: Optional[nx.DiGraph] = None) -> Optional[SlotSets]:
    """Largest allowed slot set per job for a guess of slot anchors.

    anchors[h - 1] is the job with the largest left endpoint among those
    completing in slot h, or None when the slot is guessed empty. The last
    entry is the virtual slot. Returns None for a contradictory guess.
    """
    prec = prec if prec is not None else precedence_from_intervals(inst)
    slots = range(1, len(anchors) + 1)
    placed = {job: h for h, job in enumerate(anchors, 1) if job is not None}
    if len(placed) != sum(job is not None for job in anchors):
        raise ParameterError("a job cannot anchor two slots")
    if any(placed[a] > placed[b] for a, b in prec.edges if a in placed and b in placed):
        return None

    sets: Dict[int, FrozenSet[int]] = {}
    for job in inst.jobs:
        if job.id in placed:
            sets[job.id] = frozenset({placed[job.id]})
            continue
        allowed = set(slots)
        for h, anchor in enumerate(anchors, 1):
            if anchor is None:
                allowed.discard(h)
                continue
            if prec.has_edge(job.id, anchor):
                allowed = {s for s in allowed if s <= h}
            if prec.has_edge(anchor, job.id):
                allowed = {s for s in allowed if s >= h}
            if job.l > inst.by_id[anchor].l:
                allowed.discard(h)
        if not allowed:
            return None
        sets[job.id] = frozenset(allowed)

    for a, b in prec.edges:
        if max(sets[a]) > min(sets[b]):
            raise InvariantViolation(f"slot sets break precedence {a} < {b}: {sorted(sets[a])} vs {sorted(sets[b])}")
    return SlotSets(tuple(anchors), sets)


# --------------------------------------------------------------------------- #
# Subschedules
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class FillPlan:
    threshold: Fraction
    anchors: Tuple[Optional[int], ...]
    large: Tuple[Tuple[int, int], ...]
    budgets: Tuple[Tuple[Tuple[int, ...], int, int], ...]
    realized: Tuple[Tuple[Tuple[int, ...], int, int], ...] = ()


@dataclass(frozen=True)
class Subschedule:
    runs: Tuple[Run, ...]
    plan: Optional[FillPlan] = None
    weight: int = 0


EMPTY_SUBSCHEDULE = Subschedule(())


def _fits(load: Sequence[int], room: Sequence[Fraction]) -> bool:
    """Work finishing by slot h stays within t_i^(h) - t_i for every real slot h."""
    running = 0
    for h, cap in enumerate(room, 1):
        running += load[h]
        if running > cap:
            return False
    return True


def _anchor_vectors(inst: SchedInstance, K: int, prec: nx.DiGraph,
                    room: Sequence[Fraction]) -> Iterator[Tuple[Optional[int], ...]]:
    """Distinct anchors for slots 1..K and the virtual slot, never behind a successor's slot."""
    load = [0] * (K + 2)
    chosen: List[Optional[int]] = []

    def walk(h: int) -> Iterator[Tuple[Optional[int], ...]]:
        if h == K + 2:
            yield tuple(chosen)
            return
        chosen.append(None)
        yield from walk(h + 1)
        chosen.pop()
        for job in inst.jobs:
            if job.id in chosen or any(a is not None and prec.has_edge(job.id, a) for a in chosen):
                continue
            load[h] += job.p
            if h > K or _fits(load, room):
                chosen.append(job.id)
                yield from walk(h + 1)
                chosen.pop()
            load[h] -= job.p

    yield from walk(1)


def _large_placements(inst: SchedInstance, jobs: Sequence[int], slot_sets: SlotSets, load: List[int],
                      room: Sequence[Fraction]) -> Iterator[Dict[int, int]]:
    """Slot of every large job inside its slot set, within slot capacity."""
    K = slot_sets.K
    placed: Dict[int, int] = {}

    def walk(k: int) -> Iterator[Dict[int, int]]:
        if k == len(jobs):
            yield dict(placed)
            return
        job = jobs[k]
        for s in sorted(slot_sets.sets[job]):
            load[s] += inst.by_id[job].p
            if s > K or _fits(load, room):
                placed[job] = s
                yield from walk(k + 1)
                del placed[job]
            load[s] -= inst.by_id[job].p

    yield from walk(0)
def _budget_vectors(classes: Sequence[Tuple[Tuple[int, ...], Tuple[int, ...]]], K: int, load: List[int],
                    room: Sequence[Fraction]) -> Iterator[Tuple[Tuple[Tuple[int, ...], int, int], ...]]:
    """P(S, h) for every small-job class S and real slot h in S.

    A class hands consecutive blocks of its Smith order to its real slots in
    slot order. Whatever is left goes to the virtual slot, which only a class
    allowed there may use.
    """
    budgets: List[Tuple[Tuple[int, ...], int, int]] = []

    def walk(c: int, h_index: int, rest: Tuple[int, ...]) -> Iterator[Tuple[Tuple[Tuple[int, ...], int, int], ...]]:
        if c == len(classes):
            yield tuple(sorted(budgets))
            return
        s = classes[c][0]
        slots = [h for h in s if h <= K]
        if h_index == len(slots):
            if rest and K + 1 not in s:
                return
            yield from walk(c + 1, 0, classes[c + 1][1] if c + 1 < len(classes) else ())
            return
        h = slots[h_index]
        taken = 0
        for cut in range(len(rest) + 1):
            if cut:
                taken += rest[cut - 1]
            load[h] += taken
            ok = _fits(load, room)
            if ok:
                if taken:
                    budgets.append((s, h, taken))
                yield from walk(c, h_index + 1, rest[cut:])
                if taken:
                    budgets.pop()
            load[h] -= taken
            if not ok:
                break

    yield from walk(0, 0, classes[0][1] if classes else ())


def _guesses(inst: SchedInstance, grid: TimeGrid, i: int, prec: nx.DiGraph, threshold: Fraction,
             cap: int) -> Iterator[Tuple[SlotSets, FillPlan]]:
    """Every (anchors, large-job slots, small-job budgets) guess for window i that fits its slots."""
    K = grid.K
    room = [grid.slot(i, h) - grid.t(i) for h in range(1, K + 1)]
    produced = 0
    for anchors in _anchor_vectors(inst, K, prec, room):
        slot_sets = compute_slot_sets(inst, anchors, prec)
        if slot_sets is None:
            continue
        load = [0] * (K + 2)
        fixed: Dict[int, int] = {}
        for h, job in enumerate(anchors, 1):
            if job is not None and inst.by_id[job].p >= threshold:
                fixed[job] = h
                load[h] += inst.by_id[job].p
        large = [j.id for j in inst.jobs if j.p >= threshold and j.id not in fixed]
        classes: Dict[Tuple[int, ...], List[int]] = {}
        for job in inst.jobs:
            if job.p < threshold:
                classes.setdefault(tuple(sorted(slot_sets.sets[job.id])), []).append(job.id)
        ordered = [
            (s, tuple(inst.by_id[j].p for j in sorted(members, key=lambda j: (-Fraction(inst.by_id[j].w, inst.by_id[j].p), j))))
            for s, members in sorted(classes.items())
        ]
        for placement in _large_placements(inst, large, slot_sets, load, room):
            slots = {**fixed, **placement}
            for job, s in placement.items():
                load[s] += inst.by_id[job].p
            placed = tuple(sorted((j, s) for j, s in slots.items() if s <= K))
            for budgets in _budget_vectors(ordered, K, load, room):
                produced += 1
                if produced > cap:
                    raise BudgetExceededError("sched_core", "GUESS_CAP", cap, f"window {i}, h0={grid.h0}")
                yield slot_sets, FillPlan(threshold, anchors, placed, budgets)
            for job, s in placement.items():
                load[s] -= inst.by_id[job].p


def _fill(inst: SchedInstance, slot_sets: SlotSets, plan: FillPlan, prec: nx.DiGraph,
          start: Fraction, slot_ends: Sequence[Fraction]) -> Optional[Tuple[Subschedule, List[int]]]:
    """Greedy placement for one guess; returns the subschedule and integer completion offsets."""
    K = slot_sets.K
    slot_of = dict(plan.large)
    classes: Dict[Tuple[int, ...], List[int]] = {}
    for job in inst.jobs:
        if job.p < plan.threshold:
            classes.setdefault(tuple(sorted(slot_sets.sets[job.id])), []).append(job.id)
    for members in classes.values():
        members.sort(key=lambda j: (-Fraction(inst.by_id[j].w, inst.by_id[j].p), j))
    need = {(s, h): p for s, h, p in plan.budgets}
    got: Dict[Tuple[Tuple[int, ...], int], int] = {}

    def ready(job_id: int, h: int) -> bool:
        return job_id not in slot_of and all(p in slot_of and slot_of[p] <= h for p in prec.predecessors(job_id))

    for h in range(1, K + 1):
        progress = True
        while progress:
            progress = False
            for s in sorted(classes, key=lambda s: (s[0], s[-1], s)):
                while got.get((s, h), 0) < need.get((s, h), 0):
                    pick = next((j for j in classes[s] if ready(j, h)), None)
                    if pick is None:
                        break
                    slot_of[pick] = h
                    got[(s, h)] = got.get((s, h), 0) + inst.by_id[pick].p
                    progress = True

    for (s, h), p in got.items():
        if p > need.get((s, h), 0) + plan.threshold:
            raise InvariantViolation(f"greedy overshoot in class {s} slot {h}: {p} > {need.get((s, h), 0)} + {plan.threshold}")
    for job_id, h in slot_of.items():
        if any(p not in slot_of or slot_of[p] > h for p in prec.predecessors(job_id)):
            return None

    runs, offsets, clock = [], [], 0
    for h in range(1, K + 1):
        for job in sorted((inst.by_id[j] for j, s in slot_of.items() if s == h), key=lambda j: (j.l, j.id)):
            runs.append(Run(job.id, start + clock, start + clock + job.p))
            clock += job.p
            offsets.append(clock)
        if start + clock > slot_ends[h - 1]:
            return None
    realized = tuple(sorted((s, h, p) for (s, h), p in got.items()))
    weight = sum(inst.by_id[r.job].w for r in runs)
    return Subschedule(tuple(runs), replace(plan, realized=realized), weight), offsets


def subschedule_table(inst: SchedInstance, grid: TimeGrid, i: int, prec: Optional[nx.DiGraph] = None,
                      cap: Optional[int] = None) -> Dict[int, Dict[int, SubproblemValue]]:
    """Best subschedule of window i for every w' <= w'' <= W, from one enumeration.

    Each candidate's weight profile fills every (w', w'') it covers; on ties
    the first candidate found is kept.
    """
    prec = prec if prec is not None else precedence_from_intervals(inst)
    cap = cap or settings.GUESS_CAP
    W = inst.total_weight
    alpha = 1 + grid.eps
    start = alpha * grid.t(i)
    slot_ends = [alpha * grid.slot(i, h) for h in range(1, grid.K + 1)]
    threshold = large_threshold(grid.eps, grid.K) * grid.t(i)

    best = np.full((W + 1, W + 1), np.iinfo(np.int64).max, dtype=np.int64)
    arg = np.full((W + 1, W + 1), -1, dtype=np.int64)
    lower = np.tril(np.ones((W + 1, W + 1), dtype=bool))
    candidates: List[Subschedule] = []
    guesses, seen_runs = 0, set()
    for slot_sets, plan in _guesses(inst, grid, i, prec, threshold, cap):
        guesses += 1
        filled = _fill(inst, slot_sets, plan, prec, start, slot_ends)
        if filled is None:
            continue
        sub, offsets = filled
        if sub.runs in seen_runs or sub.weight == 0:
            continue
        seen_runs.add(sub.runs)

        weights = np.array([inst.by_id[r.job].w for r in sub.runs], dtype=np.int64)
        ends = np.array(offsets, dtype=np.int64)
        reach = np.searchsorted(np.cumsum(weights), np.arange(1, sub.weight + 1), side="left")
        profile = ends[reach]
        if int(profile.sum()) != int((weights * ends).sum()):
            raise InvariantViolation(f"window {i}: weight profile disagrees with sum w_j C_j")
        prefix = np.concatenate(([0], np.cumsum(profile)))
        size = sub.weight + 1
        values = prefix[:, None] - prefix[None, :]
        better = (values < best[:size, :size]) & lower[:size, :size]
        best[:size, :size][better] = values[better]
        arg[:size, :size][better] = len(candidates)
        candidates.append(sub)

    table: Dict[int, Dict[int, SubproblemValue]] = {}
    for w2 in range(W + 1):
        row = {w2: SubproblemValue(Fraction(0), EMPTY_SUBSCHEDULE)}
        for w1 in range(w2):
            if arg[w2, w1] >= 0:
                row[w1] = SubproblemValue((w2 - w1) * start + int(best[w2, w1]), candidates[arg[w2, w1]])
        table[w2] = row
    logger.debug("→ window %d (h0=%d): %d guesses, %d candidates", i, grid.h0, guesses, len(candidates))
    return table


def solve_subschedule(inst: SchedInstance, grid: TimeGrid, i: int, w2: int,
                      cap: Optional[int] = None) -> Dict[int, SubproblemValue]:
    """Value and witness for every w' <= w2; infinite where no guess completes w2."""
    if not 1 <= i <= grid.gamma:
        raise ParameterError(f"window index must lie in 1..{grid.gamma}, got {i}")
    if not 0 <= w2 <= inst.total_weight:
        raise ParameterError(f"target weight must lie in 0..{inst.total_weight}, got {w2}")
    row = subschedule_table(inst, grid, i, cap=cap)[w2]
    return {w1: row.get(w1, INFINITE) for w1 in range(w2 + 1)}


# --------------------------------------------------------------------------- #
# Pipeline
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SchedResult:
    instance: SchedInstance
    grid: TimeGrid
    bound: Fraction
    realized: Fraction
    pseudo: PseudoSchedule
    compact: Schedule
    windows: Tuple[WindowReport, ...]
    plans: Tuple[Optional[FillPlan], ...]
    per_h0: Tuple[Optional[Fraction], ...] = field(default_factory=tuple)


def sched_approx(inst: SchedInstance, eps: Fraction, K: Optional[int] = None,
                 guess_cap: Optional[int] = None) -> SchedResult:
    """Run the window pipeline for every h0 and keep the best realized objective."""
    validate_sched(inst)
    eps = Fraction(eps)
    _, K = choose_parameters(eps, K, SCHED_RESTART)
    prec = precedence_from_intervals(inst)
    W = inst.total_weight

    best: Optional[SchedResult] = None
    per_h0: List[Optional[Fraction]] = []
    for h0 in range(K):
        grid = build_slot_grid(inst, eps, K, h0)
        table = {i: subschedule_table(inst, grid, i, prec, guess_cap) for i in range(1, grid.gamma + 1)}
        try:
            plan = combine_dp(table, grid.gamma, W)
        except InfeasibleError:
            logger.warning("✗ h0=%d: no plan completes the full weight", h0)
            per_h0.append(None)
            continue
        witnesses, low = [], 0
        for i, mark in enumerate(plan.marks, start=1):
            witnesses.append(table[i][mark][low].witness)
            low = mark
        pseudo = PseudoSchedule(tuple(w.runs for w in witnesses))
        realized, first = schedule_objective(inst, pseudo)
        check_exchange_identity(inst, first)
        if realized > plan.value:
            raise InvariantViolation(f"realized objective {realized} exceeds DP bound {plan.value}")
        compact = compact_schedule(inst, pseudo)
        compact_value, _ = schedule_objective(inst, compact)
        if compact_value > realized:
            raise InvariantViolation(f"compaction raised the objective: {compact_value} > {realized}")
        per_h0.append(realized)
        windows = tuple(WindowReport(i, m, v) for i, (m, v) in enumerate(zip(plan.marks, plan.window_values), 1))
        result = SchedResult(inst, grid, plan.value, realized, pseudo, compact, windows,
                             tuple(w.plan for w in witnesses))
        logger.debug("✓ h0=%d bound=%s realized=%s", h0, plan.value, realized)
        if best is None or realized < best.realized:
            best = result
    if best is None:
        raise InfeasibleError("no h0 produced a plan completing every job")
    logger.info("✓ sched_approx n=%d K=%d best h0=%d realized=%s", inst.n, K, best.grid.h0, best.realized)
    return replace(best, per_h0=tuple(per_h0))
