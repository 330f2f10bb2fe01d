"""Domain types shared by every solver: metric and scheduling instances, tours,
pseudo tours, schedules, the line-oriented text formats and the objective
evaluators that all reported numbers are re-validated against."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx

from app.core.errors import InstanceFormatError, InvalidInstanceError
from app.formats import HEADERS, InstanceKind

logger = logging.getLogger(__name__)

Number = Union[int, Fraction]
ORIGIN = 0


def ceil_euclid(dx: int, dy: int) -> int:
    """Euclidean length rounded up, computed on the exact squared distance."""
    sq = dx * dx + dy * dy
    root = math.isqrt(sq)
    return root if root * root == sq else root + 1


# --------------------------------------------------------------------------- #
# Metric instances
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class MetricInstance:
    """Points 0..n with 0 the origin, under one of three metric backends.

    `members[v]` lists the original identifiers merged into point v; when it is
    None every point stands for itself. Items merged into the origin are served
    at time 0 and never count towards visit targets.
    """
    kind: InstanceKind
    n: int
    matrix: Optional[Tuple[Tuple[int, ...], ...]] = None
    edges: Optional[Tuple[Tuple[int, int, int], ...]] = None
    coords: Optional[Tuple[Tuple[int, int], ...]] = None
    members: Optional[Tuple[Tuple[int, ...], ...]] = field(default=None, compare=True)

    @cached_property
    def dist(self) -> Tuple[Tuple[int, ...], ...]:
        if self.kind == InstanceKind.MATRIX:
            return self.matrix
        if self.kind == InstanceKind.EUCLID:
            pts = self.coords
            return tuple(
                tuple(ceil_euclid(pts[u][0] - pts[v][0], pts[u][1] - pts[v][1]) for v in range(self.n + 1))
                for u in range(self.n + 1)
            )
        graph = self.tree_graph
        lengths = dict(nx.all_pairs_dijkstra_path_length(graph, weight="weight"))
        return tuple(tuple(int(lengths[u][v]) for v in range(self.n + 1)) for u in range(self.n + 1))

    @cached_property
    def tree_graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n + 1))
        for u, v, w in self.edges or ():
            graph.add_edge(u, v, weight=w)
        return graph

    @cached_property
    def tree_parents(self) -> Dict[int, int]:
        """Parent of every non-root vertex with the origin as root."""
        return {child: parent for parent, child in nx.bfs_edges(self.tree_graph, ORIGIN)}

    def distance(self, u: int, v: int) -> int:
        if not (0 <= u <= self.n and 0 <= v <= self.n):
            raise InvalidInstanceError(f"unknown point identifier in distance({u}, {v})")
        return self.dist[u][v]

    def weight(self, v: int) -> int:
        """Number of items point v stands for (0 for the origin itself)."""
        if self.members is None:
            return 0 if v == ORIGIN else 1
        return len(self.members[v]) - 1 if v == ORIGIN else len(self.members[v])

    @property
    def points(self) -> range:
        return range(1, self.n + 1)

    @cached_property
    def units(self) -> int:
        return sum(self.weight(v) for v in self.points)

    @cached_property
    def max_distance(self) -> int:
        return max((max(row) for row in self.dist), default=0)


def matrix_instance(rows: Sequence[Sequence[int]]) -> MetricInstance:
    inst = MetricInstance(InstanceKind.MATRIX, len(rows) - 1, matrix=tuple(tuple(int(x) for x in r) for r in rows))
    validate_metric(inst)
    return inst


def tree_instance(n_points: int, edges: Iterable[Tuple[int, int, int]]) -> MetricInstance:
    """Tree over vertices 0..n_points rooted at the origin 0."""
    canon = tuple(sorted((min(u, v), max(u, v), int(w)) for u, v, w in edges))
    inst = MetricInstance(InstanceKind.TREE, n_points, edges=canon)
    validate_metric(inst)
    return inst


def euclid_instance(origin: Tuple[int, int], points: Sequence[Tuple[int, int]]) -> MetricInstance:
    coords = (tuple(origin),) + tuple(tuple(p) for p in points)
    inst = MetricInstance(InstanceKind.EUCLID, len(points), coords=tuple((int(x), int(y)) for x, y in coords))
    validate_metric(inst)
    return inst


def validate_metric(inst: MetricInstance, line_of_row: Optional[Sequence[int]] = None) -> None:
    def where(u: int) -> Optional[int]:
        return line_of_row[u] if line_of_row else None

    if inst.n < 0:
        raise InvalidInstanceError("point count must be non-negative")
    if inst.kind == InstanceKind.MATRIX:
        d = inst.matrix
        size = inst.n + 1
        if len(d) != size or any(len(row) != size for row in d):
            raise InvalidInstanceError(f"matrix must be {size}x{size}")
        for u in range(size):
            if d[u][u] != 0:
                raise InstanceFormatError(f"d({u},{u}) must be 0", where(u))
            for v in range(size):
                if d[u][v] < 0:
                    raise InstanceFormatError(f"negative distance d({u},{v})", where(u))
                if d[u][v] != d[v][u]:
                    raise InstanceFormatError(f"asymmetric matrix: d({u},{v}) != d({v},{u})", where(u))
        for u in range(size):
            for v in range(size):
                for w in range(size):
                    if d[u][w] > d[u][v] + d[v][w]:
                        raise InstanceFormatError(
                            f"triangle inequality violated: d({u},{w})={d[u][w]} > d({u},{v})+d({v},{w})",
                            where(u),
                        )
    elif inst.kind == InstanceKind.TREE:
        edges = inst.edges or ()
        if any(w < 0 for _, _, w in edges):
            raise InvalidInstanceError("tree edge weights must be non-negative integers")
        if any(not (0 <= u <= inst.n and 0 <= v <= inst.n) for u, v, _ in edges):
            raise InvalidInstanceError("tree edge references an unknown vertex")
        if not nx.is_tree(inst.tree_graph):
            raise InvalidInstanceError("edge list does not form a tree over all vertices")
    elif inst.kind == InstanceKind.EUCLID:
        if len(set(inst.coords)) != len(inst.coords):
            raise InvalidInstanceError("euclid coordinates must be pairwise distinct")
    else:
        raise InvalidInstanceError(f"not a metric kind: {inst.kind}")


def merge_coincident(inst: MetricInstance) -> MetricInstance:
    """Contract zero-distance groups into their smallest identifier."""
    d = inst.dist
    parent = list(range(inst.n + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u in range(inst.n + 1):
        for v in range(u + 1, inst.n + 1):
            if d[u][v] == 0:
                ru, rv = find(u), find(v)
                if ru != rv:
                    parent[max(ru, rv)] = min(ru, rv)
    reps = sorted({find(v) for v in range(inst.n + 1)})
    if len(reps) == inst.n + 1:
        return inst
    index = {r: i for i, r in enumerate(reps)}
    old_members = inst.members or tuple((v,) for v in range(inst.n + 1))
    grouped: List[List[int]] = [[] for _ in reps]
    for v in range(inst.n + 1):
        grouped[index[find(v)]].extend(old_members[v])
    members = tuple(tuple(sorted(g)) for g in grouped)
    n_new = len(reps) - 1
    logger.debug("merged %d coincident points into %d representatives", inst.n + 1, len(reps))
    if inst.kind == InstanceKind.MATRIX:
        matrix = tuple(tuple(d[a][b] for b in reps) for a in reps)
        return MetricInstance(InstanceKind.MATRIX, n_new, matrix=matrix, members=members)
    if inst.kind == InstanceKind.EUCLID:
        coords = tuple(inst.coords[r] for r in reps)
        return MetricInstance(InstanceKind.EUCLID, n_new, coords=coords, members=members)
    edges = []
    for u, v, w in inst.edges:
        a, b = index[find(u)], index[find(v)]
        if a != b:
            edges.append((min(a, b), max(a, b), w))
    return MetricInstance(InstanceKind.TREE, n_new, edges=tuple(sorted(edges)), members=members)


def lift_order(inst: MetricInstance, order: Sequence[int]) -> List[int]:
    """Original identifiers behind a visit order on a merged instance.

    Items merged into the origin come first.
    """
    if inst.members is None:
        return [v for v in order if v != ORIGIN]
    lifted = [m for m in inst.members[ORIGIN] if m != ORIGIN]
    for v in order:
        if v != ORIGIN:
            lifted.extend(inst.members[v])
    return lifted


# --------------------------------------------------------------------------- #
# Scheduling instances
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Job:
    id: int
    p: int
    w: int
    l: int
    r: int


@dataclass(frozen=True)
class SchedInstance:
    jobs: Tuple[Job, ...]

    @property
    def n(self) -> int:
        return len(self.jobs)

    @cached_property
    def by_id(self) -> Dict[int, Job]:
        return {j.id: j for j in self.jobs}

    @cached_property
    def total_weight(self) -> int:
        return sum(j.w for j in self.jobs)

    @cached_property
    def total_processing(self) -> int:
        return sum(j.p for j in self.jobs)


def sched_instance(jobs: Iterable[Job], line_of_job: Optional[Dict[int, int]] = None) -> SchedInstance:
    inst = SchedInstance(tuple(sorted(jobs, key=lambda j: j.id)))
    validate_sched(inst, line_of_job)
    return inst


def validate_sched(inst: SchedInstance, line_of_job: Optional[Dict[int, int]] = None) -> None:
    n = inst.n
    ids = [j.id for j in inst.jobs]
    if len(set(ids)) != len(ids):
        raise InvalidInstanceError("duplicate job identifier")
    seen: Dict[int, int] = {}
    for job in inst.jobs:
        line = line_of_job.get(job.id) if line_of_job else None
        if job.p < 1 or job.w < 1:
            raise InstanceFormatError(f"job {job.id}: p and w must be positive", line)
        if job.p > n * n or job.w > n * n:
            raise InstanceFormatError(
                f"job {job.id}: p and w must lie in [1, n^2]={n * n}; apply the weight/processing "
                f"normalization reduction before solving",
                line,
            )
        if job.l > job.r:
            raise InstanceFormatError(f"job {job.id}: interval [{job.l},{job.r}] is empty", line)
        for point in (job.l, job.r):
            if point in seen:
                raise InstanceFormatError(
                    f"job {job.id}: interval endpoint {point} duplicates an endpoint of job {seen[point]}", line
                )
            seen[point] = job.id


# --------------------------------------------------------------------------- #
# Tours and pseudo tours
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Tour:
    """Visit order starting at the origin with first-visit times.

    `length` is the last arrival for an open path and includes the return leg
    when `closed` is set.
    """
    order: Tuple[int, ...]
    times: Tuple[Number, ...]
    length: Number
    closed: bool = False


def make_tour(inst: MetricInstance, visits: Sequence[int], closed: bool = False) -> Tour:
    order = (ORIGIN,) + tuple(v for v in visits if v != ORIGIN)
    times: List[Number] = [0]
    for a, b in zip(order, order[1:]):
        times.append(times[-1] + inst.distance(a, b))
    length = times[-1] + (inst.distance(order[-1], ORIGIN) if closed else 0)
    return Tour(order, tuple(times), length, closed)


def empty_tour() -> Tour:
    return Tour((ORIGIN,), (0,), 0, True)


def unit_completions(inst: MetricInstance, tour: Tour) -> List[Number]:
    """Completion time of every item in visit order, repeated by multiplicity."""
    out: List[Number] = []
    for v, t in zip(tour.order[1:], tour.times[1:]):
        out.extend([t] * inst.weight(v))
    return out


def truncate_tour(inst: MetricInstance, tour: Tour, items: int) -> Tour:
    """Closed tour over the shortest visit prefix covering `items` items."""
    taken, visits = 0, []
    for v in tour.order[1:]:
        if taken >= items:
            break
        visits.append(v)
        taken += inst.weight(v)
    return make_tour(inst, visits, closed=True)


@dataclass(frozen=True)
class Subtour:
    start: Fraction
    deadline: Optional[Fraction]
    order: Tuple[int, ...]


@dataclass(frozen=True)
class PseudoTour:
    subtours: Tuple[Subtour, ...]


def tour_objective(inst: MetricInstance, tour: Union[Tour, PseudoTour]) -> Tuple[Fraction, Dict[int, Fraction]]:
    """Total latency and per-point first-visit times.

    Items merged into a point are charged at that point's first visit.
    """
    first: Dict[int, Fraction] = {}
    if isinstance(tour, Tour):
        if tour.order[0] != ORIGIN:
            raise InvalidInstanceError("tour must start at the origin")
        recomputed = make_tour(inst, tour.order[1:], tour.closed)
        if tuple(Fraction(t) for t in recomputed.times) != tuple(Fraction(t) for t in tour.times):
            raise InvalidInstanceError("tour completion times do not match consecutive distances")
        for v, t in zip(tour.order, tour.times):
            first.setdefault(v, Fraction(t))
    else:
        previous_end = Fraction(0)
        for index, sub in enumerate(tour.subtours):
            start = Fraction(sub.start)
            if start < previous_end:
                raise InvalidInstanceError(f"subtour {index + 1} starts before the previous one returned")
            walk = make_tour(inst, sub.order, closed=True)
            end = start + walk.length
            if sub.deadline is not None and end > sub.deadline:
                raise InvalidInstanceError(
                    f"subtour {index + 1} overruns its window: ends at {end} > {sub.deadline}"
                )
            for v, t in zip(walk.order[1:], walk.times[1:]):
                if v not in first or start + t < first[v]:
                    first[v] = start + t
            previous_end = end
    first.pop(ORIGIN, None)
    missing = [v for v in inst.points if v not in first]
    if missing:
        raise InvalidInstanceError(f"unvisited points: {missing}")
    total = sum((inst.weight(v) * first[v] for v in inst.points), Fraction(0))
    return total, first


def compact_pseudo_tour(inst: MetricInstance, pseudo: PseudoTour) -> Tour:
    """Simple tour visiting points in order of their first appearance."""
    _, first = tour_objective(inst, pseudo)
    order = sorted(first, key=lambda v: (first[v], v))
    return make_tour(inst, order)


# --------------------------------------------------------------------------- #
# Segmented TSP instances
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SegTspInstance:
    deadlines: Tuple[Fraction, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        if not self.deadlines or len(self.deadlines) != len(self.counts):
            raise InvalidInstanceError("segmented TSP needs K >= 1 matching deadlines and counts")
        if any(a > b for a, b in zip(self.deadlines, self.deadlines[1:])):
            raise InvalidInstanceError("deadlines must be non-decreasing")
        if any(a > b for a, b in zip(self.counts, self.counts[1:])) or self.counts[0] < 0:
            raise InvalidInstanceError("counts must be non-negative and non-decreasing")

    @property
    def K(self) -> int:
        return len(self.deadlines)


@dataclass(frozen=True)
class QuotaInstance:
    budgets: Tuple[Fraction, ...]
    quotas: Tuple[int, ...]

    def __post_init__(self):
        if not self.budgets or len(self.budgets) != len(self.quotas):
            raise InvalidInstanceError("quota instance needs K >= 1 matching budgets and quotas")
        if any(b < 0 for b in self.budgets) or any(q < 0 for q in self.quotas):
            raise InvalidInstanceError("budgets and quotas must be non-negative")

    @property
    def K(self) -> int:
        return len(self.budgets)

    @property
    def boundaries(self) -> Tuple[Fraction, ...]:
        out, acc = [], Fraction(0)
        for b in self.budgets:
            acc += b
            out.append(acc)
        return tuple(out)


def split_quotas(seg: SegTspInstance) -> QuotaInstance:
    budgets = tuple(Fraction(b) - Fraction(a) for a, b in zip((0,) + seg.deadlines[:-1], seg.deadlines))
    quotas = tuple(b - a for a, b in zip((0,) + seg.counts[:-1], seg.counts))
    return QuotaInstance(budgets, quotas)


def check_segtsp_tour(inst: MetricInstance, tour: Tour, seg: SegTspInstance) -> bool:
    if not tour.closed or Fraction(tour.length) > Fraction(seg.deadlines[-1]):
        return False
    for bound, need in zip(seg.deadlines, seg.counts):
        got = sum(inst.weight(v) for v, t in zip(tour.order[1:], tour.times[1:]) if t <= bound)
        if got < need:
            return False
    return True


def portion_lengths(inst: MetricInstance, tour: Tour, quotas: Sequence[int]) -> Optional[Tuple[Fraction, ...]]:
    """Cut a closed tour into consecutive portions holding exactly `quotas` items.

    Portion h runs from the last visit of portion h-1 (the origin for h = 1)
    to its own last visit; an empty portion has length zero and the last one
    also carries the return to the origin. None when the counts do not fit.
    """
    targets, acc = [], 0
    for q in quotas:
        acc += q
        targets.append(acc)
    last = len(quotas) - 1
    lengths: List[Fraction] = []
    seen, start, h = 0, Fraction(0), 0
    while h < last and seen == targets[h]:
        lengths.append(Fraction(0))
        h += 1
    for v, t in zip(tour.order[1:], tour.times[1:]):
        seen += inst.weight(v)
        if seen > targets[-1] or (h < last and seen > targets[h]):
            return None
        if h < last and seen == targets[h]:
            lengths.append(Fraction(t) - start)
            start = Fraction(t)
            h += 1
            while h < last and seen == targets[h]:
                lengths.append(Fraction(0))
                h += 1
    if seen != targets[-1]:
        return None
    lengths.append(Fraction(tour.length) - start)
    return tuple(lengths)


def check_quota_tour(inst: MetricInstance, tour: Tour, quota: QuotaInstance) -> bool:
    if not tour.closed:
        return False
    lengths = portion_lengths(inst, tour, quota.quotas)
    return lengths is not None and all(got <= budget for got, budget in zip(lengths, quota.budgets))


# --------------------------------------------------------------------------- #
# Schedules
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Run:
    job: int
    start: Fraction
    end: Fraction


@dataclass(frozen=True)
class Schedule:
    runs: Tuple[Run, ...]


@dataclass(frozen=True)
class PseudoSchedule:
    windows: Tuple[Tuple[Run, ...], ...]

    @property
    def runs(self) -> Tuple[Run, ...]:
        return tuple(r for window in self.windows for r in window)


def _check_runs(inst: SchedInstance, runs: Sequence[Run], label: str) -> None:
    for a, b in zip(runs, runs[1:]):
        if b.start < a.end:
            raise InvalidInstanceError(f"{label}: job {b.job} overlaps job {a.job}")
    for run in runs:
        job = inst.by_id.get(run.job)
        if job is None:
            raise InvalidInstanceError(f"{label}: unknown job {run.job}")
        if run.end - run.start != job.p:
            raise InvalidInstanceError(f"{label}: job {run.job} runs {run.end - run.start} != p={job.p}")


def _check_precedence(inst: SchedInstance, runs: Sequence[Run], label: str) -> None:
    """Every predecessor of a scheduled job completes before its first start."""
    first_start: Dict[int, Fraction] = {}
    first_end: Dict[int, Fraction] = {}
    for run in runs:
        first_start.setdefault(run.job, run.start)
        first_end.setdefault(run.job, run.end)
    for a in inst.jobs:
        for b in inst.jobs:
            if a.r < b.l and b.id in first_start:
                if a.id not in first_end or first_end[a.id] > first_start[b.id]:
                    raise InvalidInstanceError(f"{label}: precedence {a.id} < {b.id} violated")


def schedule_objective(
    inst: SchedInstance, schedule: Union[Schedule, PseudoSchedule]
) -> Tuple[Fraction, Dict[int, Fraction]]:
    """Weighted sum of first completions; validates overlap and precedence."""
    if isinstance(schedule, PseudoSchedule):
        for index, window in enumerate(schedule.windows):
            _check_runs(inst, window, f"window {index + 1}")
            _check_precedence(inst, window, f"window {index + 1}")
        runs = schedule.runs
    else:
        runs = schedule.runs
    runs = tuple(sorted(runs, key=lambda r: (r.start, r.job)))
    _check_runs(inst, runs, "schedule")
    _check_precedence(inst, runs, "schedule")
    first: Dict[int, Fraction] = {}
    for run in runs:
        first.setdefault(run.job, Fraction(run.end))
    missing = [j.id for j in inst.jobs if j.id not in first]
    if missing:
        raise InvalidInstanceError(f"unscheduled jobs: {missing}")
    total = sum((inst.by_id[j].w * c for j, c in first.items()), Fraction(0))
    return total, first


def compact_schedule(inst: SchedInstance, pseudo: PseudoSchedule) -> Schedule:
    """Drop repeated runs and shift first appearances left."""
    _, first = schedule_objective(inst, pseudo)
    order = sorted(first, key=lambda j: (first[j], j))
    runs, clock = [], Fraction(0)
    for job_id in order:
        p = inst.by_id[job_id].p
        runs.append(Run(job_id, clock, clock + p))
        clock += p
    return Schedule(tuple(runs))


# --------------------------------------------------------------------------- #
# Distance scaling
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class ScaledInstance:
    instance: MetricInstance
    factor: Fraction


def scale_and_round(inst: MetricInstance, eps: Fraction) -> ScaledInstance:
    """Bound all distances by B = ceil(4 n^2 / eps) by rounding scaled lengths up.

    Every distance times `factor` stays within a few multiples of `factor` of
    the original; matrix entries are only ever rounded up.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise InvalidInstanceError("eps must be positive")
    dmax = inst.max_distance
    if dmax == 0:
        raise InvalidInstanceError("degenerate instance: all distances are 0")
    n = max(inst.n, 1)
    bound = math.ceil(Fraction(4 * n * n) / eps)
    if dmax <= bound:
        return ScaledInstance(inst, Fraction(1))

    if inst.kind == InstanceKind.MATRIX:
        factor = Fraction(dmax, bound)
        rows = tuple(tuple(math.ceil(Fraction(x) / factor) for x in row) for row in inst.matrix)
        scaled = MetricInstance(InstanceKind.MATRIX, inst.n, matrix=rows, members=inst.members)
    elif inst.kind == InstanceKind.TREE:
        # round root depths up and re-derive edges; every path moves by < 2 units
        factor = Fraction(dmax, max(bound - 2, 1))
        depth = nx.single_source_dijkstra_path_length(inst.tree_graph, ORIGIN, weight="weight")
        scaled_depth = {v: math.ceil(Fraction(depth[v]) / factor) for v in depth}
        edges = []
        for u, v, _ in inst.edges:
            parent, child = (u, v) if inst.tree_parents.get(v) == u else (v, u)
            edges.append((u, v, scaled_depth[child] - scaled_depth[parent]))
        scaled = MetricInstance(InstanceKind.TREE, inst.n, edges=tuple(edges), members=inst.members)
    else:
        # coordinate rounding plus the ceiling moves a distance by < 3 units
        factor = Fraction(dmax, max(bound - 3, 1))
        half = Fraction(1, 2)
        coords = tuple(
            (math.floor(Fraction(x) / factor + half), math.floor(Fraction(y) / factor + half))
            for x, y in inst.coords
        )
        scaled = MetricInstance(InstanceKind.EUCLID, inst.n, coords=coords, members=inst.members)
    logger.debug("scaled distances by 1/%s (max %d -> %d)", factor, dmax, scaled.max_distance)
    return ScaledInstance(scaled, factor)


# --------------------------------------------------------------------------- #
# Text formats
# --------------------------------------------------------------------------- #

def _tokenized(text: str) -> List[Tuple[int, List[str]]]:
    lines = []
    for number, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((number, body.split()))
    return lines


def _ints(tokens: Sequence[str], count: int, line_no: int) -> List[int]:
    if len(tokens) != count:
        raise InstanceFormatError(f"expected {count} values, got {len(tokens)}", line_no)
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise InstanceFormatError(f"non-integer value in {' '.join(tokens)!r}", line_no)


def _expect(lines, index: int, keyword: str) -> Tuple[int, List[str]]:
    if index >= len(lines):
        raise InstanceFormatError(f"missing '{keyword}' line", lines[-1][0] if lines else None)
    line_no, tokens = lines[index]
    if tokens[0] != keyword:
        raise InstanceFormatError(f"expected '{keyword}', found '{tokens[0]}'", line_no)
    return line_no, tokens[1:]


def parse_instance(text: str) -> Union[MetricInstance, SchedInstance]:
    lines = _tokenized(text)
    if not lines:
        raise InstanceFormatError("empty document", None)
    header_no, header = lines[0]
    header_text = " ".join(header)
    kinds = {v: k for k, v in HEADERS.items()}
    if header_text not in kinds:
        raise InstanceFormatError(f"unknown header {header_text!r}", header_no)
    kind = kinds[header_text]
    n_line, n_tokens = _expect(lines, 1, "n")
    (count,) = _ints(n_tokens, 1, n_line)
    if count < 0:
        raise InstanceFormatError("count must be non-negative", n_line)
    body = lines[2:]

    if kind == InstanceKind.TREE:
        if count < 1:
            raise InstanceFormatError("a tree needs at least the root vertex", n_line)
        root_no, root_tokens = _expect(lines, 2, "root")
        (root,) = _ints(root_tokens, 1, root_no)
        if not 0 <= root < count:
            raise InstanceFormatError(f"root {root} outside 0..{count - 1}", root_no)
        relabel = {root: 0, 0: root}
        edges = []
        for line_no, tokens in lines[3:]:
            if tokens[0] != "edge":
                raise InstanceFormatError(f"expected 'edge', found '{tokens[0]}'", line_no)
            u, v, w = _ints(tokens[1:], 3, line_no)
            if not (0 <= u < count and 0 <= v < count):
                raise InstanceFormatError(f"edge endpoint outside 0..{count - 1}", line_no)
            if w < 0:
                raise InstanceFormatError("edge weight must be non-negative", line_no)
            edges.append((relabel.get(u, u), relabel.get(v, v), w))
        if len(edges) != count - 1:
            raise InstanceFormatError(f"a tree on {count} vertices needs {count - 1} edges", root_no)
        return tree_instance(count - 1, edges)

    if kind == InstanceKind.EUCLID:
        origin_no, origin_tokens = _expect(lines, 2, "origin")
        origin = tuple(_ints(origin_tokens, 2, origin_no))
        points, seen = [], {origin: origin_no}
        for line_no, tokens in lines[3:]:
            if tokens[0] != "point":
                raise InstanceFormatError(f"expected 'point', found '{tokens[0]}'", line_no)
            p = tuple(_ints(tokens[1:], 2, line_no))
            if p in seen:
                raise InstanceFormatError(f"point {p} coincides with line {seen[p]}", line_no)
            seen[p] = line_no
            points.append(p)
        if len(points) != count:
            raise InstanceFormatError(f"expected {count} points, got {len(points)}", n_line)
        return euclid_instance(origin, points)

    if kind == InstanceKind.MATRIX:
        rows, row_lines = [], []
        for line_no, tokens in body:
            if tokens[0] != "row":
                raise InstanceFormatError(f"expected 'row', found '{tokens[0]}'", line_no)
            rows.append(_ints(tokens[1:], count + 1, line_no))
            row_lines.append(line_no)
        if len(rows) != count + 1:
            raise InstanceFormatError(f"expected {count + 1} rows, got {len(rows)}", n_line)
        inst = MetricInstance(InstanceKind.MATRIX, count, matrix=tuple(tuple(r) for r in rows))
        validate_metric(inst, row_lines)
        return inst

    jobs, job_lines = [], {}
    for line_no, tokens in body:
        if tokens[0] != "job":
            raise InstanceFormatError(f"expected 'job', found '{tokens[0]}'", line_no)
        job_id, p, w, lo, hi = _ints(tokens[1:], 5, line_no)
        if job_id in job_lines:
            raise InstanceFormatError(f"duplicate job id {job_id}", line_no)
        if p < 1 or w < 1:
            raise InstanceFormatError(f"job {job_id}: p and w must be positive", line_no)
        jobs.append(Job(job_id, p, w, lo, hi))
        job_lines[job_id] = line_no
    if len(jobs) != count:
        raise InstanceFormatError(f"expected {count} jobs, got {len(jobs)}", n_line)
    return sched_instance(jobs, job_lines)


def serialize_instance(inst: Union[MetricInstance, SchedInstance]) -> str:
    if isinstance(inst, SchedInstance):
        lines = [HEADERS[InstanceKind.SCHED], f"n {inst.n}"]
        lines += [f"job {j.id} {j.p} {j.w} {j.l} {j.r}" for j in inst.jobs]
    elif inst.kind == InstanceKind.TREE:
        lines = [HEADERS[InstanceKind.TREE], f"n {inst.n + 1}", "root 0"]
        lines += [f"edge {u} {v} {w}" for u, v, w in inst.edges]
    elif inst.kind == InstanceKind.EUCLID:
        (ox, oy), points = inst.coords[0], inst.coords[1:]
        lines = [HEADERS[InstanceKind.EUCLID], f"n {inst.n}", f"origin {ox} {oy}"]
        lines += [f"point {x} {y}" for x, y in points]
    else:
        lines = [HEADERS[InstanceKind.MATRIX], f"n {inst.n}"]
        lines += ["row " + " ".join(str(x) for x in row) for row in inst.matrix]
    return "\n".join(lines) + "\n"


def serialize_tour(inst: MetricInstance, tour: Union[Tour, PseudoTour]) -> str:
    total, first = tour_objective(inst, tour)
    lines = [f"objective {total}"]
    lines += [f"visit {v} {first[v]}" for v in sorted(first, key=lambda v: (first[v], v))]
    return "\n".join(lines) + "\n"


def serialize_schedule(inst: SchedInstance, schedule: Union[Schedule, PseudoSchedule]) -> str:
    total, _ = schedule_objective(inst, schedule)
    lines = [f"objective {total}"]
    lines += [f"run {r.job} {r.start} {r.end}" for r in sorted(schedule.runs, key=lambda r: (r.start, r.job))]
    return "\n".join(lines) + "\n"
