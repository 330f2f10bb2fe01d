"""Exact brute-force solvers. Every approximation result is checked against these."""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import BudgetExceededError, InvariantViolation
from app.services.instances import (
    MetricInstance,
    QuotaInstance,
    Run,
    SchedInstance,
    Schedule,
    SegTspInstance,
    Tour,
    make_tour,
    schedule_objective,
    tour_objective,
    unit_completions,
)

logger = logging.getLogger(__name__)


def _check_budget(name: str, n: int, cap: int) -> None:
    if n > cap:
        raise BudgetExceededError("oracles", name, cap, f"instance has n={n}")


# --------------------------------------------------------------------------- #
# Latency (subset DP)
# --------------------------------------------------------------------------- #

def oracle_trp(inst: MetricInstance) -> Tuple[Fraction, Tour]:
    """Minimum total latency by a backward DP over (visited set, last point).

    Leg (u, v) is charged d(u, v) times the number of items still unvisited
    before the leg, which sums to the total latency. Ties go to the smaller
    next point, so the reconstructed order is lexicographically first.
    """
    n = inst.n
    _check_budget("ORACLE_TRP_MAX_N", n, settings.ORACLE_TRP_MAX_N)
    if n == 0:
        return Fraction(0), make_tour(inst, [])
    dist = np.array(inst.dist, dtype=np.int64)[1:, 1:]
    start = np.array(inst.dist[0][1:], dtype=np.int64)
    weights = np.array([inst.weight(v) for v in inst.points], dtype=np.int64)
    units = int(weights.sum())
    full = (1 << n) - 1

    visited_weight = np.zeros(full + 1, dtype=np.int64)
    for mask in range(1, full + 1):
        low = (mask & -mask).bit_length() - 1
        visited_weight[mask] = visited_weight[mask & (mask - 1)] + weights[low]

    rest = np.zeros((full + 1, n), dtype=np.int64)
    for mask in range(full - 1, 0, -1):
        remaining = units - int(visited_weight[mask])
        best = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        for u in range(n):
            if not mask >> u & 1:
                np.minimum(best, remaining * dist[:, u] + rest[mask | 1 << u, u], out=best)
        rest[mask] = best

    def step_cost(mask: int, here: Optional[int], u: int) -> int:
        remaining = units - int(visited_weight[mask])
        leg = start[u] if here is None else dist[here, u]
        return int(remaining * leg + rest[mask | 1 << u, u])

    order, mask, here = [], 0, None
    value = min(step_cost(0, None, u) for u in range(n))
    while mask != full:
        target = min(step_cost(mask, here, u) for u in range(n) if not mask >> u & 1)
        u = next(u for u in range(n) if not mask >> u & 1 and step_cost(mask, here, u) == target)
        order.append(u + 1)
        mask |= 1 << u
        here = u
    tour = make_tour(inst, order)
    total, _ = tour_objective(inst, tour)
    if total != value:
        raise InvariantViolation(f"latency DP value {value} != tour objective {total}")
    logger.debug("✓ oracle_trp n=%d value=%s", n, value)
    return Fraction(value), tour


# --------------------------------------------------------------------------- #
# Segmented TSP (ordered-subset enumeration)
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SegTspResult:
    feasible: bool
    tour: Optional[Tour] = None


def _feasible_sequences(inst: MetricInstance, seg: SegTspInstance) -> Iterator[Tuple[int, ...]]:
    """Visit sequences meeting every (deadline, count) pair, in lexicographic preorder."""
    deadlines = [Fraction(x) for x in seg.deadlines]
    limit = deadlines[-1]
    d = inst.dist

    def counts_ok(counts: Sequence[int]) -> bool:
        return all(c >= need for c, need in zip(counts, seg.counts))

    def walk(seq: List[int], used: int, time: int, counts: List[int]) -> Iterator[Tuple[int, ...]]:
        last = seq[-1] if seq else 0
        if time + d[last][0] > limit:
            return
        # a deadline already passed can no longer gain visits
        if any(time > dl and c < need for dl, c, need in zip(deadlines, counts, seg.counts)):
            return
        if counts_ok(counts):
            yield tuple(seq)
        for v in inst.points:
            if used >> v & 1:
                continue
            arrive = time + d[last][v]
            if arrive + d[v][0] > limit:
                continue
            bumped = [c + (inst.weight(v) if arrive <= dl else 0) for c, dl in zip(counts, deadlines)]
            seq.append(v)
            yield from walk(seq, used | 1 << v, arrive, bumped)
            seq.pop()

    yield from walk([], 0, 0, [0] * seg.K)


def oracle_segtsp(inst: MetricInstance, seg: SegTspInstance) -> SegTspResult:
    _check_budget("ORACLE_SEGTSP_MAX_N", inst.n, settings.ORACLE_SEGTSP_MAX_N)
    for seq in _feasible_sequences(inst, seg):
        return SegTspResult(True, make_tour(inst, seq, closed=True))
    return SegTspResult(False)


def oracle_sub_objective(inst: MetricInstance, seg: SegTspInstance, first: int, last: int) -> Optional[Fraction]:
    """Smallest sum of the (first+1)-th..last-th item completions over feasible tours."""
    _check_budget("ORACLE_SEGTSP_MAX_N", inst.n, settings.ORACLE_SEGTSP_MAX_N)
    best: Optional[Fraction] = None
    for seq in _feasible_sequences(inst, seg):
        times = unit_completions(inst, make_tour(inst, seq, closed=True))
        if len(times) < last:
            continue
        value = Fraction(sum(times[first:last]))
        if best is None or value < best:
            best = value
    return best


def oracle_quota(inst: MetricInstance, quota: QuotaInstance) -> SegTspResult:
    """Closed tour whose consecutive portions hold exactly the quotas within their budgets.

    Portions are cut at visits, as in `portion_lengths`.
    """
    _check_budget("ORACLE_SEGTSP_MAX_N", inst.n, settings.ORACLE_SEGTSP_MAX_N)
    budgets = [Fraction(b) for b in quota.budgets]
    targets = list(np.cumsum(quota.quotas, dtype=int))
    total, last_h = targets[-1], quota.K - 1
    d = inst.dist

    def advance(h: int, seen: int) -> int:
        while h < last_h and targets[h] == seen:
            h += 1
        return h

    def walk(seq: List[int], used: int, time: int, seen: int, h: int, start: int) -> Optional[Tuple[int, ...]]:
        last = seq[-1] if seq else 0
        if seen == total:
            return tuple(seq) if time + d[last][0] - start <= budgets[last_h] else None
        for v in inst.points:
            if used >> v & 1:
                continue
            arrive, now = time + d[last][v], seen + inst.weight(v)
            if arrive - start > budgets[h] or now > total or (h < last_h and now > targets[h]):
                continue
            next_h, next_start = h, start
            if h < last_h and now == targets[h]:
                next_h, next_start = advance(h, now), arrive
            seq.append(v)
            found = walk(seq, used | 1 << v, arrive, now, next_h, next_start)
            seq.pop()
            if found is not None:
                return found
        return None

    seq = walk([], 0, 0, 0, advance(0, 0), 0)
    if seq is None:
        return SegTspResult(False)
    return SegTspResult(True, make_tour(inst, seq, closed=True))


class ExactSegTspSolver:
    """Segmented-TSP solver backed by enumeration; usable on any metric with n <= 9."""

    alpha = Fraction(1)
    name = "exact"

    def solve(self, inst: MetricInstance, seg: SegTspInstance) -> Optional[Tour]:
        return oracle_segtsp(inst, seg).tour


# --------------------------------------------------------------------------- #
# Scheduling (DP over ideals)
# --------------------------------------------------------------------------- #

def oracle_sched(inst: SchedInstance) -> Tuple[Fraction, Schedule]:
    """Minimum sum of weighted completions over precedence-closed job sets.

    The DP runs backwards from the full set so the forward reconstruction can
    prefer the earliest job in id order on ties.
    """
    n = inst.n
    _check_budget("ORACLE_SCHED_MAX_N", n, settings.ORACLE_SCHED_MAX_N)
    jobs = inst.jobs
    preds = [0] * n
    for a in range(n):
        for b in range(n):
            if jobs[a].r < jobs[b].l:
                preds[b] |= 1 << a
    p = [j.p for j in jobs]
    w = [j.w for j in jobs]
    full = (1 << n) - 1

    load = [0] * (full + 1)
    for mask in range(1, full + 1):
        low = (mask & -mask).bit_length() - 1
        load[mask] = load[mask & (mask - 1)] + p[low]

    def available(mask: int) -> List[int]:
        return [j for j in range(n) if not mask >> j & 1 and (preds[j] & ~mask) == 0]

    go = {full: 0}
    for mask in range(full - 1, -1, -1):
        if any(mask >> j & 1 and preds[j] & ~mask for j in range(n)):
            continue
        go[mask] = min(w[j] * (load[mask] + p[j]) + go[mask | 1 << j] for j in available(mask))

    runs, mask, clock = [], 0, 0
    while mask != full:
        j = next(
            j for j in available(mask)
            if w[j] * (load[mask] + p[j]) + go[mask | 1 << j] == go[mask]
        )
        runs.append(Run(jobs[j].id, Fraction(clock), Fraction(clock + p[j])))
        clock += p[j]
        mask |= 1 << j
    schedule = Schedule(tuple(runs))
    total, _ = schedule_objective(inst, schedule)
    if total != go[0]:
        raise InvariantViolation(f"ideal DP value {go[0]} != schedule objective {total}")
    logger.debug("✓ oracle_sched n=%d value=%s", n, total)
    return Fraction(go[0]), schedule
