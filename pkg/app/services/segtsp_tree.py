"""Exact segmented TSP on edge-weighted trees.

The tree is made binary with zero-weight edges so that only leaves carry
visits. A walk is cut into K stretches: stretch h starts where stretch h-1
ended (the root for the first) and ends at a leaf it visits, except the
last, which returns to the root. A stretch crosses every edge at most twice,
so the edge above a node sees one of six crossing codes per stretch.
Bottom-up, every node keeps the Pareto-best visit counts and stretch lengths
of its subtree for each code tuple; the root answers every count vector of a
run at once.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate, product
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import networkx as nx

from app.core.config import settings
from app.core.errors import BudgetExceededError, InvalidInstanceError
from app.formats import InstanceKind
from app.services.instances import (
    ORIGIN,
    MetricInstance,
    QuotaInstance,
    SegTspInstance,
    Tour,
    make_tour,
)
from app.services.oracles import SegTspResult

logger = logging.getLogger(__name__)

# crossing code of one stretch on the edge above a node. SEAL: the stretch
# never leaves the subtree (it closes inside it, or idles at a leaf).
OFF, SEAL, IN, OUT, DIP, BOUNCE = range(6)
CROSSINGS = (0, 0, 1, 1, 2, 2)

# state of one stretch over the children merged so far
NONE, SEALED, TOUCH0, TOUCH1 = range(4)
_MERGED = (NONE, SEALED, TOUCH1, TOUCH0, TOUCH0, TOUCH1)

Codes = Tuple[int, ...]
# (leaf node, stretch of the first visit, stretch that leaves it or None)
Visit = Tuple[int, int, Optional[int]]


@dataclass(frozen=True)
class BinaryTree:
    root: int
    children: Dict[int, Tuple[int, ...]]
    weight: Dict[int, int]
    leaves: Dict[int, int]
    depth: Dict[int, int] = field(default_factory=dict)

    def postorder(self) -> List[int]:
        out, stack = [], [(self.root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                out.append(node)
                continue
            stack.append((node, True))
            for child in reversed(self.children.get(node, ())):
                stack.append((child, False))
        return out

    def below(self) -> Dict[int, int]:
        """Total edge weight strictly inside every subtree."""
        out: Dict[int, int] = {}
        for node in self.postorder():
            out[node] = sum(out[c] + self.weight[c] for c in self.children.get(node, ()))
        return out

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_node(self.root)
        for node, kids in self.children.items():
            for child in kids:
                g.add_edge(node, child, weight=self.weight[child])
        return g


def binarize_tree(inst: MetricInstance) -> BinaryTree:
    """Rooted binary tree whose leaves are exactly the points to visit.

    Internal points get a pendant zero-weight leaf; nodes with more than two
    children get a chain of zero-weight auxiliary nodes.
    """
    if inst.kind != InstanceKind.TREE:
        raise InvalidInstanceError("binarize_tree needs a tree instance")
    kids: Dict[int, List[int]] = {v: [] for v in range(inst.n + 1)}
    for child, parent in sorted(inst.tree_parents.items()):
        kids[parent].append(child)
    edge_weight = {}
    for u, v, w in inst.edges:
        edge_weight[(u, v)] = edge_weight[(v, u)] = w

    children: Dict[int, Tuple[int, ...]] = {}
    weight: Dict[int, int] = {}
    leaves: Dict[int, int] = {}
    fresh = [inst.n + 1]

    def new_node() -> int:
        fresh[0] += 1
        return fresh[0] - 1

    def attach(node: int, items: List[Tuple[int, int]]) -> None:
        while len(items) > 2:
            aux = new_node()
            children[node] = (items[0][0], aux)
            weight[items[0][0]] = items[0][1]
            weight[aux] = 0
            node, items = aux, items[1:]
        children[node] = tuple(item for item, _ in items)
        for item, w in items:
            weight[item] = w

    for v in sorted(kids, reverse=True):
        if v != ORIGIN and not kids[v]:
            leaves[v] = v
    for v in range(inst.n + 1):
        if not kids[v]:
            continue
        items = [(c, edge_weight[(v, c)]) for c in kids[v]]
        if v != ORIGIN:
            pendant = new_node()
            leaves[pendant] = v
            items = [(pendant, 0)] + items
        attach(v, items)

    depth = {ORIGIN: 0}
    stack = [ORIGIN]
    while stack:
        node = stack.pop()
        for child in children.get(node, ()):
            depth[child] = depth[node] + weight[child]
            stack.append(child)
    return BinaryTree(ORIGIN, children, weight, leaves, depth)


def cover_order(graph: nx.Graph, start: int, end: int, targets: Sequence[int]) -> List[int]:
    """Targets in the order a shortest walk from `start` to `end` covering them meets them."""
    if not targets:
        return []
    wanted = set(targets)
    path = nx.shortest_path(graph, start, end)
    toward = dict(zip(path, path[1:]))
    order, seen, stack = [], set(), [start]
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        if node in wanted:
            order.append(node)
        ahead = toward.get(node)
        # the branch towards `end` is entered last
        if ahead is not None:
            stack.append(ahead)
        stack.extend(n for n in graph.neighbors(node) if n not in seen and n != ahead)
    return order


@dataclass(frozen=True)
class _Limits:
    """Integer caps one run checks against; tree lengths are integers."""
    prefix: Tuple[int, ...]
    stretch: Optional[Tuple[int, ...]] = None
    quotas: Optional[Tuple[int, ...]] = None

    @classmethod
    def from_deadlines(cls, seg: SegTspInstance) -> "_Limits":
        return cls(tuple(math.floor(Fraction(d)) for d in seg.deadlines))

    @classmethod
    def from_quota(cls, quota: QuotaInstance) -> "_Limits":
        return cls(
            tuple(math.floor(b) for b in quota.boundaries),
            tuple(math.floor(Fraction(b)) for b in quota.budgets),
            tuple(quota.quotas),
        )


@dataclass(frozen=True)
class _Entry:
    counts: Tuple[int, ...]
    lengths: Tuple[int, ...]
    parts: Tuple["_Entry", ...] = ()
    visit: Optional[Visit] = None


def _join(states: Tuple[int, ...], codes: Codes) -> Optional[Tuple[int, ...]]:
    out = []
    for x, code in zip(states, codes):
        y = _MERGED[code]
        if x == NONE or y == NONE:
            out.append(x if y == NONE else y)
        elif x == SEALED or y == SEALED or x == y == TOUCH1:
            return None
        else:
            out.append(TOUCH1 if TOUCH1 in (x, y) else TOUCH0)
    return tuple(out)


def _closings(states: Tuple[int, ...]) -> Iterator[Codes]:
    """Code tuples the edge above a node can carry for merged child states."""
    options, before = [], 0
    for x in states:
        inside = 1 if x in (SEALED, TOUCH1) else 0
        if x == NONE:
            if before:
                return iter(())
            options.append((OFF,))
        elif x == SEALED:
            if not before:
                return iter(())
            options.append((SEAL,))
        elif before != inside:
            options.append((IN,) if inside else (OUT,))
        elif inside:
            options.append((BOUNCE, SEAL))
        else:
            options.append((DIP,))
        before = inside
    # the last stretch ends at the root
    if before:
        return iter(())
    return product(*options)


def _pareto(items: List[Tuple[tuple, _Entry]]) -> List[_Entry]:
    items.sort(key=lambda item: (sum(item[0]), item[0]))
    kept: List[Tuple[tuple, _Entry]] = []
    for score, entry in items:
        if any(all(a <= b for a, b in zip(other, score)) for other, _ in kept):
            continue
        kept.append((score, entry))
    return [entry for _, entry in kept]


def _visits(entry: _Entry) -> List[Visit]:
    out, stack = [], [entry]
    while stack:
        current = stack.pop()
        if current.visit is not None:
            out.append(current.visit)
        stack.extend(current.parts)
    return out


class _StretchDP:
    """One bottom-up pass for fixed limits."""

    def __init__(self, inst: MetricInstance, tree: BinaryTree, limits: _Limits, state_cap: int):
        self.inst = inst
        self.tree = tree
        self.limits = limits
        self.K = len(limits.prefix)
        self.state_cap = state_cap
        self.below = tree.below()
        self.total = self.below[tree.root]
        self.tables: Dict[int, Dict[Codes, List[_Entry]]] = {}
        self.states = 0

    def _count(self, added: int, node: int) -> None:
        self.states += added
        if self.states > self.state_cap:
            raise BudgetExceededError(
                "segtsp_tree", "STATE_CAP", self.state_cap, f"{self.K} stretches, at node {node}"
            )

    def _leaf_options(self, mult: int) -> Iterator[Tuple[Codes, int, Optional[int]]]:
        K, quotas = self.K, self.limits.quotas
        yield (OFF,) * K, -1, None
        for first in range(K):
            if quotas is not None and quotas[first] < mult:
                continue
            codes = [OFF] * K
            codes[first] = DIP
            yield tuple(codes), first, None
            if first == K - 1:
                continue
            if quotas is None:
                departures = range(first + 1, K)
            else:
                # idle stretches hold no visits and the walk leaves with the next busy one
                departures = [next((h for h in range(first + 1, K - 1) if quotas[h]), K - 1)]
            for until in departures:
                codes = [OFF] * K
                codes[first] = IN
                for h in range(first + 1, until):
                    codes[h] = SEAL
                codes[until] = OUT
                yield tuple(codes), first, until

    def _settle(self, node: int, codes: Codes, entry: _Entry) -> Optional[Tuple[tuple, tuple]]:
        """(group, score) of an entry, or None when no walk through it can meet the limits."""
        limits = self.limits
        if limits.quotas is not None and any(c > q for c, q in zip(entry.counts, limits.quotas)):
            return None
        crossed = [h for h, code in enumerate(codes) if CROSSINGS[code]]
        first, last = (crossed[0], crossed[-1]) if crossed else (self.K, self.K)
        depth = self.tree.depth[node]
        outside = self.total - self.below[node]
        acc, score = 0, []
        for h, length in enumerate(entry.lengths):
            acc += length
            # the walk reaches the node by its first crossing and leaves after its last
            if acc + depth * ((first <= h) + (last <= h)) > limits.prefix[h]:
                return None
            if limits.stretch is None:
                score.append(max(0, acc + 2 * (h + 1) * outside - limits.prefix[h]))
            elif length > limits.stretch[h]:
                return None
            else:
                score.append(max(0, length + 2 * outside - limits.stretch[h]))
        if limits.stretch is not None:
            return entry.counts, tuple(score)
        return (), tuple(-c for c in accumulate(entry.counts)) + tuple(score)

    def _keep(self, node: int, candidates: List[Tuple[Codes, _Entry]]) -> Dict[Codes, List[_Entry]]:
        groups: Dict[tuple, List[Tuple[tuple, _Entry]]] = defaultdict(list)
        for codes, entry in candidates:
            settled = self._settle(node, codes, entry)
            if settled is not None:
                group, score = settled
                groups[(codes, group)].append((score, entry))
        table: Dict[Codes, List[_Entry]] = defaultdict(list)
        kept = 0
        for (codes, _), items in groups.items():
            best = _pareto(items)
            table[codes].extend(best)
            kept += len(best)
        self._count(kept, node)
        return dict(table)

    def _leaf(self, node: int) -> Dict[Codes, List[_Entry]]:
        mult = self.inst.weight(self.tree.leaves[node])
        zero = (0,) * self.K
        candidates = []
        for codes, first, until in self._leaf_options(mult):
            if first < 0:
                candidates.append((codes, _Entry(zero, zero)))
                continue
            counts = tuple(mult if h == first else 0 for h in range(self.K))
            candidates.append((codes, _Entry(counts, zero, visit=(node, first, until))))
        return self._keep(node, candidates)

    def _root_accepts(self, states: Tuple[int, ...]) -> bool:
        quotas = self.limits.quotas
        if quotas is None:
            return True
        # a busy portion ends at its own last visit
        return all(not quotas[h] or states[h] in (SEALED, TOUCH1) for h in range(self.K - 1))

    def _inner(self, node: int) -> Dict[Codes, List[_Entry]]:
        K, quotas = self.K, self.limits.quotas
        zero = (0,) * K
        partial: Dict[Tuple[int, ...], List[_Entry]] = {(NONE,) * K: [_Entry(zero, zero)]}
        for child in self.tree.children.get(node, ()):
            w = self.tree.weight[child]
            merged: Dict[Tuple[int, ...], List[_Entry]] = defaultdict(list)
            pairs = 0
            for states, items in partial.items():
                for codes, entries in self.tables[child].items():
                    joined = _join(states, codes)
                    if joined is None:
                        continue
                    lift = tuple(CROSSINGS[c] * w for c in codes)
                    for left in items:
                        for right in entries:
                            counts = tuple(a + b for a, b in zip(left.counts, right.counts))
                            if quotas is not None and any(c > q for c, q in zip(counts, quotas)):
                                continue
                            lengths = tuple(a + b + c for a, b, c in zip(left.lengths, right.lengths, lift))
                            merged[joined].append(_Entry(counts, lengths, left.parts + (right,)))
                            pairs += 1
            if pairs > self.state_cap:
                raise BudgetExceededError("segtsp_tree", "STATE_CAP", self.state_cap,
                                          f"{pairs} merged pairs at node {node}")
            partial = merged
        candidates: List[Tuple[Codes, _Entry]] = []
        if node == self.tree.root:
            for states, items in partial.items():
                if self._root_accepts(states):
                    candidates.extend(((), entry) for entry in items)
        else:
            for states, items in partial.items():
                for codes in _closings(states):
                    candidates.extend((codes, entry) for entry in items)
        return self._keep(node, candidates)

    def _everything_first(self) -> Optional[List[_Entry]]:
        """One depth-first tour of all points fits the first deadline: nothing to search."""
        if self.limits.stretch is not None or 2 * self.total > self.limits.prefix[0]:
            return None
        leaves = tuple(_Entry((), (), visit=(node, 0, None)) for node in sorted(self.tree.leaves))
        items = sum(self.inst.weight(p) for p in self.tree.leaves.values())
        rest = (0,) * (self.K - 1)
        return [_Entry((items,) + rest, (2 * self.total,) + rest, leaves)]

    def run(self) -> List[_Entry]:
        shortcut = self._everything_first()
        if shortcut is not None:
            return shortcut
        for node in self.tree.postorder():
            if node in self.tree.leaves:
                self.tables[node] = self._leaf(node)
            else:
                self.tables[node] = self._inner(node)
        roots = self.tables[self.tree.root].get((), [])
        return sorted(roots, key=lambda e: (sum(e.lengths), tuple(-c for c in e.counts)))


class TreeSegTspSolver:
    """Exact segmented-TSP solver for tree metrics."""

    alpha = Fraction(1)
    name = "tree"

    def __init__(self, state_cap: Optional[int] = None):
        self.state_cap = state_cap or settings.STATE_CAP
        self._trees: Dict[MetricInstance, BinaryTree] = {}
        self._runs: Dict[tuple, Tuple[BinaryTree, int, List[_Entry]]] = {}

    def _roots(self, inst: MetricInstance, limits: _Limits) -> Tuple[BinaryTree, int, List[_Entry]]:
        key = (inst, limits)
        if key not in self._runs:
            tree = self._trees.get(inst)
            if tree is None:
                tree = self._trees[inst] = binarize_tree(inst)
            dp = _StretchDP(inst, tree, limits, self.state_cap)
            roots = dp.run()
            self._runs[key] = (tree, dp.K, roots)
            logger.debug("✓ tree DP K=%d states=%d roots=%d", dp.K, dp.states, len(roots))
        return self._runs[key]

    @staticmethod
    def _witness(inst: MetricInstance, tree: BinaryTree, K: int, entry: _Entry) -> Tour:
        graph = tree.graph()
        visits = _visits(entry)
        ends: Dict[int, int] = {}
        for node, first, until in visits:
            for h in range(first, until if until is not None else first):
                ends[h] = node
        order, start = [], tree.root
        for h in range(K):
            end = ends.get(h, tree.root)
            targets = [node for node, first, _ in visits if first == h]
            order.extend(tree.leaves[node] for node in cover_order(graph, start, end, targets))
            start = end
        return make_tour(inst, order, closed=True)

    def solve(self, inst: MetricInstance, seg: SegTspInstance) -> Optional[Tour]:
        if seg.counts[-1] == 0:
            return make_tour(inst, [], closed=True)
        tree, K, roots = self._roots(inst, _Limits.from_deadlines(seg))
        for entry in roots:
            if all(have >= need for have, need in zip(accumulate(entry.counts), seg.counts)):
                return self._witness(inst, tree, K, entry)
        return None

    def solve_quota(self, inst: MetricInstance, quota: QuotaInstance) -> Optional[Tour]:
        if sum(quota.quotas) == 0:
            return make_tour(inst, [], closed=True)
        tree, K, roots = self._roots(inst, _Limits.from_quota(quota))
        for entry in roots:
            if entry.counts == tuple(quota.quotas):
                return self._witness(inst, tree, K, entry)
        return None


def solve_tree_segtsp(inst: MetricInstance, seg: SegTspInstance, state_cap: Optional[int] = None) -> SegTspResult:
    tour = TreeSegTspSolver(state_cap).solve(inst, seg)
    return SegTspResult(tour is not None, tour)


def solve_tree_quota(inst: MetricInstance, quota: QuotaInstance, state_cap: Optional[int] = None) -> SegTspResult:
    tour = TreeSegTspSolver(state_cap).solve_quota(inst, quota)
    return SegTspResult(tour is not None, tour)
