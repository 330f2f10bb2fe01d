"""Seeded instance generators used by the CLI `gen` command and the bench suites."""
import logging
from typing import Union

import networkx as nx
import numpy as np

from app.core.errors import ParameterError
from app.formats import GeneratorKind
from app.services.instances import (
    Job,
    MetricInstance,
    SchedInstance,
    euclid_instance,
    matrix_instance,
    sched_instance,
    tree_instance,
)

logger = logging.getLogger(__name__)


def line_hard(k: int) -> MetricInstance:
    """2^(k-i) points at coordinate (-2)^i for i = 1..k, as a weighted path.

    The origin sits at 0; copies at the same coordinate hang off their
    position vertex by zero-weight edges.
    """
    if k < 1:
        raise ParameterError("line-hard needs k >= 1")
    positions = sorted([0] + [(-2) ** i for i in range(1, k + 1)])
    vertex_of = {0: 0}
    next_id = 1
    for x in positions:
        if x != 0:
            vertex_of[x] = next_id
            next_id += 1
    edges = [(vertex_of[a], vertex_of[b], b - a) for a, b in zip(positions, positions[1:])]
    for i in range(1, k + 1):
        anchor = vertex_of[(-2) ** i]
        for _ in range(2 ** (k - i) - 1):
            edges.append((anchor, next_id, 0))
            next_id += 1
    return tree_instance(next_id - 1, edges)


def random_tree(n: int, seed: int, max_weight: int = 10) -> MetricInstance:
    """Each vertex v >= 1 hangs off a uniformly chosen earlier vertex."""
    _require(n >= 1 and max_weight >= 1, "random-tree needs n >= 1 and max_weight >= 1")
    rng = np.random.default_rng(seed)
    edges = [
        (int(rng.integers(0, v)), v, int(rng.integers(1, max_weight + 1)))
        for v in range(1, n + 1)
    ]
    return tree_instance(n, edges)


def random_euclid(n: int, seed: int, span: int = 0) -> MetricInstance:
    """n + 1 distinct integer points in [0, span)^2; the first is the origin."""
    span = span or max(10, 2 * n)
    _require(n >= 1 and span * span >= n + 1, "random-euclid needs n >= 1 and span^2 >= n + 1")
    rng = np.random.default_rng(seed)
    cells = rng.choice(span * span, size=n + 1, replace=False)
    coords = [(int(c) // span, int(c) % span) for c in cells]
    return euclid_instance(coords[0], coords[1:])


def random_matrix(n: int, seed: int, max_weight: int = 20) -> MetricInstance:
    """Shortest-path closure of uniformly random positive weights."""
    _require(n >= 1 and max_weight >= 1, "random-matrix needs n >= 1 and max_weight >= 1")
    rng = np.random.default_rng(seed)
    graph = nx.complete_graph(n + 1)
    for u, v in graph.edges:
        graph[u][v]["weight"] = int(rng.integers(1, max_weight + 1))
    closure = nx.floyd_warshall_numpy(graph, nodelist=range(n + 1), weight="weight")
    return matrix_instance(closure.astype(np.int64).tolist())


def random_sched(n: int, seed: int, max_p: int = 10, max_w: int = 10) -> SchedInstance:
    """Jobs on shuffled distinct endpoints with p, w capped by n^2."""
    _require(n >= 1 and max_p >= 1 and max_w >= 1, "random-sched needs n >= 1 and positive caps")
    rng = np.random.default_rng(seed)
    ends = rng.permutation(2 * n)
    p_cap, w_cap = min(max_p, n * n), min(max_w, n * n)
    jobs = []
    for j in range(n):
        lo, hi = sorted((int(ends[2 * j]), int(ends[2 * j + 1])))
        jobs.append(Job(j, int(rng.integers(1, p_cap + 1)), int(rng.integers(1, w_cap + 1)), lo, hi))
    return sched_instance(jobs)


def generate(kind: GeneratorKind, seed: int = 0, **params) -> Union[MetricInstance, SchedInstance]:
    kind = GeneratorKind(kind)
    params = {k: v for k, v in params.items() if v is not None}
    logger.debug("→ generating %s seed=%d params=%s", kind.value, seed, params)
    try:
        if kind == GeneratorKind.LINE_HARD:
            return line_hard(params.get("k", 2))
        n = params.pop("n", 6)
        if kind == GeneratorKind.RANDOM_TREE:
            return random_tree(n, seed, **params)
        if kind == GeneratorKind.RANDOM_EUCLID:
            return random_euclid(n, seed, **params)
        if kind == GeneratorKind.RANDOM_MATRIX:
            return random_matrix(n, seed, **params)
        return random_sched(n, seed, **params)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind.value}: {exc}")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ParameterError(message)
