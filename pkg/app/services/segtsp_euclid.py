"""Segmented TSP in the plane over a randomly shifted quadtree with portals.

Points are snapped to a grid tied to the first segment budget and a shifted
dissection is laid over them. A walk is cut into K stretches the way the tree
solver cuts it: stretch h runs from the last visit of stretch h-1 (the origin
for the first) to its own last visit, and the last one returns to the origin.

Bottom-up over the dissection, every square keeps the cell configurations its
part of the walk can take: per stretch, the fragments walked inside the
square paired up by their ends (the stretch start, the stretch end or a
crossing of the square boundary), the items each stretch visits there, and
the Pareto-best stretch lengths. A crossing carries the portals it can leave
through and what each costs; the portal is fixed once the crossing is paired
with another one. Between two portals of one square the walk runs straight.
The root keeps the configurations without crossings, so one shift answers every
count vector at once.
"""
import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import accumulate, product
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import BudgetExceededError, InfeasibleError, InvalidInstanceError, NotFoundError
from app.formats import InstanceKind
from app.services.instances import (
    MetricInstance,
    QuotaInstance,
    SegTspInstance,
    Tour,
    ceil_euclid,
    check_segtsp_tour,
    make_tour,
    portion_lengths,
    split_quotas,
)

logger = logging.getLogger(__name__)

Point = Tuple[int, int]

# fragment ends: the start or the end of the stretch, or a crossing given as
# (CROSS, ((portal, extra length), ...)) with the cheapest portal at 0
End = tuple
START: End = (0,)
END: End = (1,)
CROSS = 2

# what one stretch does at a point's cell
OFF, PASS, LEAVE, ARRIVE, STAY, RETURN, IDLE = range(7)


@dataclass(frozen=True)
class SnappedInstance:
    g: int
    origin: Point
    points: Tuple[Point, ...]
    members: Tuple[Tuple[int, ...], ...]
    weights: Tuple[int, ...]
    n: int
    member_weights: Tuple[Tuple[int, ...], ...] = ()

    @property
    def positions(self) -> Tuple[Point, ...]:
        return (self.origin,) + self.points


def snap_to_grid(inst: MetricInstance, quota: QuotaInstance, eps: Fraction) -> SnappedInstance:
    """Move every point to the centre of its grid cell and merge shared cells."""
    if inst.kind != InstanceKind.EUCLID:
        raise InvalidInstanceError("snap_to_grid needs a euclid instance")
    eps = Fraction(eps)
    lam1 = Fraction(quota.budgets[0])
    g = max(1, math.floor(eps * lam1 / (8 * (inst.n + 1))))
    if lam1 < g and quota.quotas[0] > 0:
        raise InfeasibleError(f"first segment budget {lam1} is below one grid step {g} but needs visits")

    def snap(p: Point) -> Point:
        return ((p[0] + g // 2) // g * g, (p[1] + g // 2) // g * g)

    cells: Dict[Point, List[int]] = {}
    for v in inst.points:
        cells.setdefault(snap(inst.coords[v]), []).append(v)
    ordered = sorted(cells.items(), key=lambda item: item[1][0])
    return SnappedInstance(
        g=g,
        origin=snap(inst.coords[0]),
        points=tuple(cell for cell, _ in ordered),
        members=tuple(tuple(vs) for _, vs in ordered),
        weights=tuple(sum(inst.weight(v) for v in vs) for _, vs in ordered),
        n=inst.n,
        member_weights=tuple(tuple(inst.weight(v) for v in vs) for _, vs in ordered),
    )


# --------------------------------------------------------------------------- #
# Dissection
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Site:
    """A distinct snapped position, in doubled coordinates."""
    position: Point
    point: Optional[int]
    origin: bool
    weights: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Square:
    """Dissection square in doubled coordinates.

    Sites sit on even coordinates and dissection lines on odd ones, so no
    site ever lies on a square boundary.
    """
    x0: int
    y0: int
    side: int
    children: Tuple["Square", ...] = ()
    site: Optional[int] = None
    portals: Tuple[Point, ...] = ()

    def contains(self, p: Point) -> bool:
        return self.x0 <= p[0] <= self.x0 + self.side and self.y0 <= p[1] <= self.y0 + self.side

    @property
    def empty(self) -> bool:
        return not self.children and self.site is None

    @property
    def depth(self) -> int:
        return 1 + max((c.depth for c in self.children), default=0)

    def postorder(self) -> List["Square"]:
        out, stack = [], [(self, False)]
        while stack:
            square, done = stack.pop()
            if done:
                out.append(square)
                continue
            stack.append((square, True))
            stack.extend((c, False) for c in reversed(square.children))
        return out


@dataclass(frozen=True)
class Dissection:
    shift: Point
    root: Square
    portals: int
    sites: Tuple[Site, ...] = ()

    @property
    def depth(self) -> int:
        return self.root.depth


def default_portals(n: int, eps: Fraction) -> int:
    return math.ceil(4 * math.log2(n + 2) / float(eps))


def _doubled(p: Point) -> Point:
    return (2 * p[0], 2 * p[1])


def _reach(p: Point, q: Point) -> int:
    """Straight length between two points given in doubled coordinates, rounded up."""
    return (ceil_euclid(p[0] - q[0], p[1] - q[1]) + 1) // 2


def _sites(snapped: SnappedInstance) -> Tuple[Site, ...]:
    spots: Dict[Point, List] = {_doubled(snapped.origin): [None, True]}
    for i, p in enumerate(snapped.points):
        spots.setdefault(_doubled(p), [None, False])[0] = i
    return tuple(
        Site(pos, point, origin, snapped.member_weights[point] if point is not None else ())
        for pos, (point, origin) in spots.items()
    )


def _side_portals(a: Point, b: Point, step: int) -> List[Point]:
    count = max(abs(b[0] - a[0]), abs(b[1] - a[1])) // step
    return [(a[0] + (b[0] - a[0]) * i // count, a[1] + (b[1] - a[1]) * i // count) for i in range(count + 1)]


def _portals(x0: int, y0: int, side: int, cell: int, spots: int, parent: Optional[Square]) -> Tuple[Point, ...]:
    """Equally spaced portals on every side; a side on the parent's boundary keeps the parent's."""
    step = max(side // spots, cell)
    corners = [(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)]
    out = set()
    for a, b in zip(corners, corners[1:] + corners[:1]):
        axis = 0 if a[0] == b[0] else 1
        start = (parent.x0, parent.y0)[axis] if parent is not None else None
        if parent is not None and a[axis] in (start, start + parent.side):
            low, high = sorted((a[1 - axis], b[1 - axis]))
            out.update(p for p in parent.portals if p[axis] == a[axis] and low <= p[1 - axis] <= high)
        else:
            out.update(_side_portals(a, b, step))
    return tuple(sorted(out))


def _quadtree(x0: int, y0: int, side: int, sites: Sequence[Tuple[Point, int]], cell: int, spots: int,
              parent: Optional[Square] = None) -> Square:
    shell = Square(x0, y0, side, portals=_portals(x0, y0, side, cell, spots, parent))
    if len(sites) <= 1 or side <= cell:
        return replace(shell, site=sites[0][1] if sites else None)
    half = side // 2
    quads = []
    for dx in (0, half):
        for dy in (0, half):
            inside = [s for s in sites
                      if x0 + dx < s[0][0] < x0 + dx + half and y0 + dy < s[0][1] < y0 + dy + half]
            quads.append(_quadtree(x0 + dx, y0 + dy, half, inside, cell, spots, shell))
    return replace(shell, children=tuple(quads))


def build_dissection(snapped: SnappedInstance, seed: int, eps: Fraction = Fraction(1),
                     portals: Optional[int] = None) -> Dissection:
    """Quadtree over a box of side at least twice the spread, shifted at random."""
    pts = snapped.positions
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    spread = max(max(xs) - min(xs), max(ys) - min(ys), snapped.g)
    side = snapped.g
    while side < 2 * spread:
        side *= 2
    rng = np.random.default_rng(seed)
    a, b = (int(v) for v in rng.integers(0, max(side // 2, 1), size=2))
    m = portals or default_portals(snapped.n, eps)
    spots = 1 << (m - 1).bit_length()
    sites = _sites(snapped)
    root = _quadtree(2 * (min(xs) - a) - 1, 2 * (min(ys) - b) - 1, 2 * side,
                     [(s.position, i) for i, s in enumerate(sites)], 2 * snapped.g, spots)
    return Dissection((a, b), root, m, sites)


# --------------------------------------------------------------------------- #
# Cell configurations
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class CellConfig:
    """The walk inside one square as its surroundings see it.

    fragments[h] lists the (end, end) pairs of every piece stretch h walks
    inside the square, counts[h] the items it visits there, and links holds
    (h, h') when stretch h' starts inside the square where stretch h ended
    (-1 standing for the origin).
    """
    fragments: Tuple[Tuple[Tuple[End, End], ...], ...]
    counts: Tuple[int, ...]
    links: Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class _Entry:
    lengths: Tuple[int, ...]
    # per stretch and fragment: (site, items) visits from its first end to its second
    paths: Tuple[Tuple[Tuple[Tuple[int, int], ...], ...], ...]


Table = Dict[CellConfig, List[_Entry]]


def _count_vectors(weights: Sequence[int], K: int) -> List[Tuple[int, ...]]:
    """Items per stretch a cell can hand out, every item to at most one stretch."""
    vectors = {(0,) * K}
    for w in weights:
        vectors |= {v[:h] + (v[h] + w,) + v[h + 1:] for v in vectors for h in range(K)}
    return sorted(vectors)


def _roles(origin: bool, counts: Sequence[int], K: int) -> Iterator[Tuple[Tuple[int, ...], Tuple[Tuple[int, int], ...]]]:
    """Role of every stretch at one cell, with the links the cell makes.

    A stretch ending at the cell holds its last visit there and the next busy
    stretch starts there; the stretches in between stay idle. The last
    stretch ends at the origin.
    """
    def walk(h, pending, roles, links):
        if h == K:
            if pending is None:
                yield tuple(roles), tuple(links)
            return
        last = h == K - 1
        home = last and origin
        ends_here = counts[h] >= (0 if home else 1) and (origin or not last)
        options = []
        if pending is None:
            if not home:
                if counts[h] == 0:
                    options.append((OFF, None))
                options.append((PASS, None))
            if ends_here:
                options.append((ARRIVE, None))
        else:
            if not last and counts[h] == 0:
                options.append((IDLE, None))
            if not home:
                options.append((LEAVE, (pending, h)))
            if ends_here:
                options.extend([(STAY, (pending, h)), (RETURN, (pending, h))])
        for role, link in options:
            if role == IDLE:
                nxt = pending
            elif role in (ARRIVE, STAY, RETURN) and not last:
                nxt = h
            else:
                nxt = None
            yield from walk(h + 1, nxt, roles + [role], links + [link] if link else links)

    yield from walk(0, -1 if origin else None, [], [])


def _role_pieces(role: int, cross: End, visit: tuple) -> List[Tuple[End, End, tuple]]:
    if role == PASS:
        return [(cross, cross, visit)]
    if role == LEAVE:
        return [(START, cross, visit)]
    if role == ARRIVE:
        return [(cross, END, visit)]
    if role == STAY:
        return [(START, END, visit)]
    if role == RETURN:
        return [(START, cross, ()), (cross, END, visit)]
    return []


def _canonical(pieces: Sequence[Tuple[End, End, tuple]]) -> Tuple[tuple, tuple]:
    flipped = [(b, a, visits[::-1]) if a > b else (a, b, visits) for a, b, visits in pieces]
    flipped.sort(key=lambda p: (p[0], p[1]))
    return tuple((a, b) for a, b, _ in flipped), tuple(v for _, _, v in flipped)


def _union(left: CellConfig, right: CellConfig) -> Optional[Tuple[CellConfig, List[List[int]]]]:
    links = left.links + right.links
    if len({a for a, _ in links}) < len(links) or len({b for _, b in links}) < len(links):
        return None
    fragments, orders = [], []
    for a, b in zip(left.fragments, right.fragments):
        both = a + b
        # a stretch closed inside one square has nothing left to join
        if len(both) > 1 and (START, END) in both:
            return None
        order = sorted(range(len(both)), key=both.__getitem__)
        fragments.append(tuple(both[i] for i in order))
        orders.append(order)
    counts = tuple(x + y for x, y in zip(left.counts, right.counts))
    return CellConfig(tuple(fragments), counts, tuple(sorted(links))), orders


def _trace(fragments, partner: Dict[tuple, tuple], leaving: Dict[tuple, End]) -> List[Tuple[End, End, tuple]]:
    """Chain paired fragments into (end, end, [(fragment, reversed), ...]) pieces."""
    pieces, used = [], set()
    for i, pair in enumerate(fragments):
        for s in (0, 1):
            if (i, s) in partner or (i, s) in used:
                continue
            seq, j, t = [], i, s
            while True:
                seq.append((j, t == 1))
                tail = (j, 1 - t)
                if tail not in partner:
                    break
                j, t = partner[tail]
            used.update({(i, s), tail})
            a = leaving.get((i, s), pair[s])
            b = leaving.get(tail, fragments[tail[0]][tail[1]])
            if a > b:
                a, b, seq = b, a, [(k, not rev) for k, rev in reversed(seq)]
            pieces.append((a, b, tuple(seq)))
    pieces.sort(key=lambda p: (p[0], p[1]))
    return pieces


def _follow(plan: tuple, paths: tuple) -> tuple:
    out = []
    for seq in plan:
        visits: List[Tuple[int, int]] = []
        for i, rev in seq:
            visits.extend(reversed(paths[i]) if rev else paths[i])
        out.append(tuple(visits))
    return tuple(out)


def chained(config: CellConfig) -> bool:
    """Busy stretches are single start-to-end fragments, each starting where the previous one ended."""
    busy = [h for h, frs in enumerate(config.fragments) if frs]
    if not busy or busy[-1] != len(config.fragments) - 1:
        return False
    if any(config.fragments[h] != ((START, END),) for h in busy):
        return False
    return config.links == tuple(zip([-1] + busy[:-1], busy))


class PortalDP:
    """Cell configurations of one shifted dissection, built bottom-up."""

    def __init__(self, dissection: Dissection, budgets: Sequence[Fraction], state_cap: int):
        self.dissection = dissection
        self.sites = dissection.sites
        self.budgets = tuple(Fraction(b) for b in budgets)
        self.K = len(self.budgets)
        self.state_cap = state_cap
        self.states = 0
        self._bridges: Dict[tuple, int] = {}
        self._exits: Dict[tuple, Tuple[End, int]] = {}
        self._plans: Dict[tuple, list] = {}

    def _count(self, added: int, square: Square) -> None:
        self.states += added
        if self.states > self.state_cap:
            raise BudgetExceededError(
                "segtsp_euclid", "STATE_CAP", self.state_cap,
                f"{self.K} stretches, at square ({square.x0}, {square.y0}) of side {square.side}",
            )

    def _fits(self, lengths: Sequence[int]) -> bool:
        return all(length <= budget for length, budget in zip(lengths, self.budgets))

    @staticmethod
    def _keep(table: Table, config: CellConfig, entry: _Entry) -> None:
        items = table.setdefault(config, [])
        if any(all(a <= b for a, b in zip(other.lengths, entry.lengths)) for other in items):
            return
        items[:] = [e for e in items if not all(a <= b for a, b in zip(entry.lengths, e.lengths))]
        items.append(entry)

    def _leaf(self, square: Square) -> Table:
        site = self.sites[square.site]
        reach = [(z, _reach(site.position, z)) for z in square.portals]
        low = min(c for _, c in reach)
        cross = (CROSS, tuple((z, c - low) for z, c in reach))
        table: Table = {}
        for counts in _count_vectors(site.weights, self.K):
            for roles, links in _roles(site.origin, counts, self.K):
                fragments, paths, lengths = [], [], []
                for h, role in enumerate(roles):
                    visit = ((square.site, counts[h]),) if counts[h] else ()
                    pieces = _role_pieces(role, cross, visit)
                    frs, walks = _canonical(pieces)
                    fragments.append(frs)
                    paths.append(walks)
                    lengths.append(low * sum((a[0] == CROSS) + (b[0] == CROSS) for a, b, _ in pieces))
                if self._fits(lengths):
                    self._keep(table, CellConfig(tuple(fragments), counts, links), _Entry(tuple(lengths), tuple(paths)))
        self._count(sum(len(v) for v in table.values()), square)
        return table

    def _bridge(self, square: Square, a: End, b: End) -> int:
        """Least extra length joining two crossings inside `square`."""
        key = (id(square), a, b) if a <= b else (id(square), b, a)
        if key not in self._bridges:
            self._bridges[key] = min(c + d + _reach(p, q) for p, c in a[1] for q, d in b[1])
        return self._bridges[key]

    def _exit(self, square: Square, a: End) -> Tuple[End, int]:
        """The crossing as seen from the portals of `square`, and the length that costs."""
        key = (id(square), a)
        if key not in self._exits:
            reach = {z: min(c + _reach(p, z) for p, c in a[1]) for z in square.portals}
            low = min(reach.values())
            self._exits[key] = ((CROSS, tuple(sorted((z, c - low) for z, c in reach.items()))), low)
        return self._exits[key]

    def _pairings(self, square: Square, fragments: tuple, exits: bool) -> List[Tuple[tuple, tuple, int]]:
        """Ways the crossings of one stretch pair up inside `square`.

        Every crossing of a child either leaves `square` or joins another
        crossing without closing a loop. Returns (fragments, plan, extra
        length), the cheapest plan per resulting fragment tuple.
        """
        key = (id(square), fragments, exits)
        if key in self._plans:
            return self._plans[key]
        slots = [(i, s) for i, pair in enumerate(fragments) for s in (0, 1) if pair[s][0] == CROSS]
        best: Dict[tuple, Tuple[tuple, int]] = {}

        def search(k, partner, leaving, labels, extra):
            while k < len(slots) and slots[k] in partner:
                k += 1
            if k == len(slots):
                pieces = _trace(fragments, partner, leaving)
                result = tuple((a, b) for a, b, _ in pieces)
                if len(result) > 1 and (START, END) in result:
                    return
                if result not in best or extra < best[result][1]:
                    best[result] = (tuple(seq for _, _, seq in pieces), extra)
                return
            slot = slots[k]
            i, s = slot
            end = fragments[i][s]
            if exits:
                leaving[slot], cost = self._exit(square, end)
                search(k + 1, partner, leaving, labels, extra + cost)
                del leaving[slot]
            for other in slots[k + 1:]:
                j, t = other
                if other in partner or labels[j] == labels[i]:
                    continue
                cost = self._bridge(square, end, fragments[j][t])
                partner[slot], partner[other] = other, slot
                merged = tuple(labels[i] if x == labels[j] else x for x in labels)
                search(k + 1, partner, leaving, merged, extra + cost)
                del partner[slot], partner[other]

        search(0, {}, {}, tuple(range(len(fragments))), 0)
        plans = [(result, plan, extra) for result, (plan, extra) in best.items()]
        self._plans[key] = plans
        return plans

    def _inner(self, square: Square, tables: Dict[int, Table]) -> Table:
        K = self.K
        zero = (0,) * K
        partial: Table = {CellConfig(((),) * K, zero, ()): [_Entry(zero, ((),) * K)]}
        for child in square.children:
            if child.empty:
                continue
            merged: Table = {}
            pairs = 0
            for left_config, lefts in partial.items():
                for right_config, rights in tables[id(child)].items():
                    joined = _union(left_config, right_config)
                    if joined is None:
                        continue
                    config, orders = joined
                    pairs += len(lefts) * len(rights)
                    for left in lefts:
                        for right in rights:
                            lengths = tuple(a + b for a, b in zip(left.lengths, right.lengths))
                            if not self._fits(lengths):
                                continue
                            paths = tuple(
                                tuple((lp + rp)[i] for i in order)
                                for lp, rp, order in zip(left.paths, right.paths, orders)
                            )
                            self._keep(merged, config, _Entry(lengths, paths))
            self._count(pairs, square)
            partial = merged

        exits = square is not self.dissection.root
        table: Table = {}
        for config, entries in partial.items():
            options = [self._pairings(square, frs, exits) for frs in config.fragments]
            if not all(options):
                continue
            for choice in product(*options):
                closed = CellConfig(tuple(result for result, _, _ in choice), config.counts, config.links)
                self._count(len(entries), square)
                for entry in entries:
                    lengths = tuple(length + extra for length, (_, _, extra) in zip(entry.lengths, choice))
                    if not self._fits(lengths):
                        continue
                    paths = tuple(_follow(plan, p) for (_, plan, _), p in zip(choice, entry.paths))
                    self._keep(table, closed, _Entry(lengths, paths))
        return table

    def run(self) -> Table:
        """Root configurations that close the walk, for every count vector."""
        root = self.dissection.root
        tables: Dict[int, Table] = {}
        for square in root.postorder():
            if square.empty:
                continue
            if square.children:
                tables[id(square)] = self._inner(square, tables)
                for child in square.children:
                    tables.pop(id(child), None)
            else:
                tables[id(square)] = self._leaf(square)
        return {config: entries for config, entries in tables[id(root)].items() if chained(config)}


# --------------------------------------------------------------------------- #
# Search
# --------------------------------------------------------------------------- #

def _split(weights: Sequence[int], counts: Sequence[int]) -> Optional[List[List[int]]]:
    """Hand out items so that group g weighs counts[g]; the rest stay unvisited."""
    groups: List[List[int]] = [[] for _ in counts]
    need = list(counts)

    def place(i: int) -> bool:
        if not any(need):
            return True
        if i == len(weights):
            return False
        for g in range(len(need)):
            if need[g] >= weights[i]:
                need[g] -= weights[i]
                groups[g].append(i)
                if place(i + 1):
                    return True
                need[g] += weights[i]
                groups[g].pop()
        return place(i + 1)

    return groups if place(0) else None


def lift_entry(snapped: SnappedInstance, sites: Sequence[Site], config: CellConfig, entry: _Entry) -> Optional[List[int]]:
    """Input points in the order the walk of a closed root configuration visits them."""
    events = [ev for h, frs in enumerate(config.fragments) if frs for ev in entry.paths[h][0]]
    wanted: Dict[int, List[int]] = {}
    for site, items in events:
        wanted.setdefault(site, []).append(items)
    groups: Dict[int, List[List[int]]] = {}
    for site, counts in wanted.items():
        point = sites[site].point
        split = _split(sites[site].weights, counts)
        if split is None:
            return None
        groups[site] = [[snapped.members[point][i] for i in group] for group in split]
    order: List[int] = []
    for site, _ in events:
        order.extend(groups[site].pop(0))
    return order


@dataclass(frozen=True)
class EuclidSearch:
    found: bool
    tour: Optional[Tour] = None
    lengths: Tuple[Fraction, ...] = ()


def slack_factor(K: int, eps: Fraction) -> Fraction:
    return 1 + 2 * K * Fraction(eps)


def lifted_tours(inst: MetricInstance, snapped: SnappedInstance, dissection: Dissection, table: Table,
                 accept: Callable[[Tuple[int, ...]], bool]) -> Iterator[Tour]:
    """Lifted tours of a root table whose counts pass `accept`, shortest first per configuration."""
    for config, entries in table.items():
        if not accept(config.counts):
            continue
        for entry in sorted(entries, key=lambda e: sum(e.lengths)):
            order = lift_entry(snapped, dissection.sites, config, entry)
            if order is not None:
                yield make_tour(inst, order, closed=True)


class ShiftRuns:
    """Root tables of one snapped instance over a seeded run of shifts, built on demand."""

    def __init__(self, snapped: SnappedInstance, budgets: Sequence[Fraction], eps: Fraction, seed: int,
                 retries: int, portals: Optional[int], state_cap: int):
        rng = np.random.default_rng(seed)
        self.seeds = [int(rng.integers(0, 2 ** 32)) for _ in range(retries)]
        self.snapped = snapped
        self.budgets = tuple(budgets)
        self.eps = Fraction(eps)
        self.portals = portals
        self.state_cap = state_cap
        self._tables: Dict[int, Tuple[Dissection, Table]] = {}

    def __len__(self) -> int:
        return len(self.seeds)

    def trial(self, t: int) -> Tuple[Dissection, Table]:
        if t not in self._tables:
            dissection = build_dissection(self.snapped, self.seeds[t], self.eps, self.portals)
            dp = PortalDP(dissection, self.budgets, self.state_cap)
            table = dp.run()
            logger.debug("→ euclid DP shift=%s depth=%d states=%d roots=%d",
                         dissection.shift, dissection.depth, dp.states, len(table))
            self._tables[t] = (dissection, table)
        return self._tables[t]

    def tours(self, inst: MetricInstance, t: int, accept: Callable[[Tuple[int, ...]], bool]) -> Iterator[Tour]:
        dissection, table = self.trial(t)
        return lifted_tours(inst, self.snapped, dissection, table, accept)


def _quota_tour(inst: MetricInstance, tours: Iterator[Tour], quota: QuotaInstance,
                budgets: Sequence[Fraction]) -> EuclidSearch:
    want = tuple(quota.quotas)
    for tour in tours:
        lengths = portion_lengths(inst, tour, want)
        if lengths is not None and all(got <= cap for got, cap in zip(lengths, budgets)):
            return EuclidSearch(True, tour, lengths)
    return EuclidSearch(False)


def solve_euclid_segtsp(inst: MetricInstance, snapped: SnappedInstance, quota: QuotaInstance,
                        dissection: Dissection, eps: Fraction, state_cap: Optional[int] = None) -> EuclidSearch:
    """One DP over a fixed dissection, lifted and re-checked on the input points."""
    budgets = tuple(slack_factor(quota.K, eps) * Fraction(b) for b in quota.budgets)
    table = PortalDP(dissection, budgets, state_cap or settings.STATE_CAP).run()
    want = tuple(quota.quotas)
    tours = lifted_tours(inst, snapped, dissection, table, lambda counts: counts == want)
    return _quota_tour(inst, tours, quota, budgets)


def solve_with_retries(inst: MetricInstance, quota: QuotaInstance, eps: Fraction, seed: int,
                       retries: Optional[int] = None, portals: Optional[int] = None,
                       state_cap: Optional[int] = None) -> EuclidSearch:
    """Try independent shifts until one of them yields a tour."""
    retries = retries or settings.RETRIES
    if retries < 1:
        raise InvalidInstanceError("retry count must be at least 1")
    snapped = snap_to_grid(inst, quota, eps)
    budgets = tuple(slack_factor(quota.K, eps) * Fraction(b) for b in quota.budgets)
    runs = ShiftRuns(snapped, budgets, eps, seed, retries, portals, state_cap or settings.STATE_CAP)
    want = tuple(quota.quotas)
    trials = []
    for t in range(retries):
        result = _quota_tour(inst, runs.tours(inst, t, lambda counts: counts == want), quota, budgets)
        shift = runs.trial(t)[0].shift
        trials.append(f"shift {shift}: {'found' if result.found else 'not found'}")
        if result.found:
            logger.debug("✓ euclid search succeeded on trial %d", t + 1)
            return result
    logger.warning("✗ euclid search failed on all %d shifts", retries)
    raise NotFoundError(f"no tour found in {retries} shifted dissections", trials)


class EuclidSegTspSolver:
    """Adapter exposing the planar DP as a segmented-TSP solver."""

    name = "euclid"

    def __init__(self, eps: Fraction, K: int, retries: Optional[int] = None, seed: int = 0,
                 portals: Optional[int] = None, state_cap: Optional[int] = None):
        self.eps = Fraction(eps)
        self.alpha = slack_factor(K, eps)
        self.retries = retries or settings.RETRIES
        self.seed = seed
        self.portals = portals
        self.state_cap = state_cap or settings.STATE_CAP
        self._cache: Dict[tuple, Optional[Tour]] = {}
        self._runs: Dict[tuple, ShiftRuns] = {}

    def _shift_runs(self, inst: MetricInstance, budgets: Tuple[Fraction, ...]) -> ShiftRuns:
        key = (inst, budgets)
        if key not in self._runs:
            snapped = snap_to_grid(inst, QuotaInstance(budgets, (0,) * len(budgets)), self.eps)
            scaled = tuple(self.alpha * b for b in budgets)
            self._runs[key] = ShiftRuns(snapped, scaled, self.eps, self.seed, self.retries,
                                        self.portals, self.state_cap)
        return self._runs[key]

    def solve(self, inst: MetricInstance, seg: SegTspInstance) -> Optional[Tour]:
        key = (inst, seg)
        if key not in self._cache:
            self._cache[key] = self._solve(inst, seg)
        return self._cache[key]

    def _solve(self, inst: MetricInstance, seg: SegTspInstance) -> Optional[Tour]:
        if seg.counts[-1] == 0:
            return make_tour(inst, [], closed=True)
        runs = self._shift_runs(inst, split_quotas(seg).budgets)
        scaled = SegTspInstance(tuple(self.alpha * Fraction(d) for d in seg.deadlines), seg.counts)

        def enough(counts: Tuple[int, ...]) -> bool:
            return all(have >= need for have, need in zip(accumulate(counts), seg.counts))

        for t in range(len(runs)):
            for tour in runs.tours(inst, t, enough):
                if check_segtsp_tour(inst, tour, scaled):
                    return tour
        return None
