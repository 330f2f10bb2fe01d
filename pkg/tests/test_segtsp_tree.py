from fractions import Fraction
from itertools import product

import pytest

from app.core.errors import BudgetExceededError, InvalidInstanceError
from app.services.generators import random_tree
from app.services.instances import (
    QuotaInstance,
    SegTspInstance,
    check_quota_tour,
    check_segtsp_tour,
)
from app.services.oracles import oracle_quota, oracle_segtsp
from app.services.segtsp_tree import (
    TreeSegTspSolver,
    binarize_tree,
    cover_order,
    solve_tree_quota,
    solve_tree_segtsp,
)


def _segtsp_grid(n):
    for l1, l2 in product(range(1, 9), range(1, 13)):
        if l1 > l2:
            continue
        for c1 in range(n + 1):
            for c2 in range(c1, n + 1):
                yield SegTspInstance((Fraction(l1), Fraction(l2)), (c1, c2))


def test_binarize_keeps_points_as_leaves(path012):
    tree = binarize_tree(path012)
    assert sorted(tree.leaves.values()) == [1, 2]
    assert all(len(kids) <= 2 for kids in tree.children.values())
    for leaf, point in tree.leaves.items():
        assert tree.depth[leaf] == path012.distance(0, point)


def test_binarize_rejects_other_metrics(e1):
    with pytest.raises(InvalidInstanceError):
        binarize_tree(e1)


@pytest.mark.parametrize("fixture", ["t1", "path012"])
def test_matches_enumeration_on_fixtures(fixture, request):
    inst = request.getfixturevalue(fixture)
    solver = TreeSegTspSolver()
    for seg in _segtsp_grid(inst.n):
        expected = oracle_segtsp(inst, seg).feasible
        tour = solver.solve(inst, seg)
        assert (tour is not None) == expected, seg
        if tour is not None:
            assert check_segtsp_tour(inst, tour, seg)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_enumeration_on_random_trees(seed):
    inst = random_tree(4, seed, max_weight=3)
    solver = TreeSegTspSolver()
    for deadlines, counts in [((4, 10), (1, 3)), ((6, 14), (2, 4)), ((3, 20), (1, 4)), ((2, 8), (0, 2))]:
        seg = SegTspInstance(tuple(Fraction(x) for x in deadlines), counts)
        tour = solver.solve(inst, seg)
        assert (tour is not None) == oracle_segtsp(inst, seg).feasible
        if tour is not None:
            assert check_segtsp_tour(inst, tour, seg)


def test_fractional_deadlines(t1):
    seg = SegTspInstance((Fraction(3, 2), Fraction(13, 2)), (1, 2))
    result = solve_tree_segtsp(t1, seg)
    assert result.feasible
    assert check_segtsp_tour(t1, result.tour, seg)


@pytest.mark.parametrize("quotas", [(1, 1), (2, 0), (0, 2), (0, 1)])
def test_quota_matches_enumeration(path012, quotas):
    quota = QuotaInstance((Fraction(1), Fraction(3)), quotas)
    result = solve_tree_quota(path012, quota)
    assert result.feasible == oracle_quota(path012, quota).feasible
    if result.feasible:
        assert check_quota_tour(path012, result.tour, quota)


def test_zero_counts_give_empty_tour(t1):
    tour = TreeSegTspSolver().solve(t1, SegTspInstance((Fraction(1),), (0,)))
    assert tour.order == (0,)
    assert tour.length == 0


def test_state_budget(t1):
    with pytest.raises(BudgetExceededError) as info:
        TreeSegTspSolver(state_cap=1).solve(t1, SegTspInstance((Fraction(3), Fraction(6)), (1, 2)))
    assert info.value.cap_name == "STATE_CAP"


@pytest.mark.parametrize("seed", [3, 4])
def test_quota_matches_enumeration_on_random_trees(seed):
    inst = random_tree(5, seed, max_weight=3)
    budgets = (Fraction(4), Fraction(6), Fraction(9))
    for quotas in [(1, 2, 2), (2, 0, 3), (0, 3, 1), (1, 1, 0), (2, 2, 1)]:
        quota = QuotaInstance(budgets, quotas)
        result = solve_tree_quota(inst, quota)
        assert result.feasible == oracle_quota(inst, quota).feasible, quotas
        if result.feasible:
            assert check_quota_tour(inst, result.tour, quota)


def test_one_run_answers_every_count_vector(t1):
    solver = TreeSegTspSolver()
    deadlines = (Fraction(1), Fraction(3), Fraction(6))
    answers = [solver.solve(t1, SegTspInstance(deadlines, counts)) is not None
               for counts in [(0, 1, 2), (1, 1, 2), (1, 2, 2), (0, 0, 1)]]
    assert answers == [True, True, False, True]
    assert len(solver._runs) == 1


def test_first_deadline_covering_everything(t1):
    seg = SegTspInstance((Fraction(6), Fraction(7)), (2, 2))
    tour = TreeSegTspSolver(state_cap=1).solve(t1, seg)
    assert check_segtsp_tour(t1, tour, seg)


@pytest.mark.parametrize("seed", [0, 1])
def test_eight_point_trees_stay_within_state_budget(seed):
    inst = random_tree(8, seed, max_weight=8)
    solver = TreeSegTspSolver()
    total = 2 * sum(w for _, _, w in inst.edges)
    deadlines = tuple(Fraction(total * k, 8) for k in (1, 2, 3, 4, 6, 8))
    for counts in [(1, 2, 3, 4, 6, 8), (0, 1, 3, 5, 7, 8), (2, 2, 4, 4, 8, 8)]:
        seg = SegTspInstance(deadlines, counts)
        tour = solver.solve(inst, seg)
        assert (tour is not None) == oracle_segtsp(inst, seg).feasible, counts
        if tour is not None:
            assert check_segtsp_tour(inst, tour, seg)
    assert len(solver._runs) == 1


def test_cover_order_visits_the_end_branch_last(path012):
    tree = binarize_tree(path012)
    graph = tree.graph()
    pendant = next(node for node, point in tree.leaves.items() if point == 1)
    assert cover_order(graph, 0, pendant, [2, pendant]) == [2, pendant]
    assert cover_order(graph, 2, 0, [pendant]) == [pendant]
    assert cover_order(graph, 0, 0, []) == []
