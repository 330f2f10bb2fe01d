from fractions import Fraction
from itertools import permutations

import pytest

from app.core.errors import BudgetExceededError, InstanceFormatError
from app.services.generators import line_hard, random_matrix, random_sched, random_tree
from app.services.instances import (
    QuotaInstance,
    SegTspInstance,
    check_quota_tour,
    check_segtsp_tour,
    make_tour,
    parse_instance,
    schedule_objective,
    tour_objective,
)
from app.services.oracles import (
    ExactSegTspSolver,
    oracle_quota,
    oracle_sched,
    oracle_segtsp,
    oracle_sub_objective,
    oracle_trp,
)


def test_tree_optimum(t1):
    value, tour = oracle_trp(t1)
    assert value == 5
    assert tour.order == (0, 1, 2)
    assert tour_objective(t1, tour)[0] == value


def test_euclid_optimum(e1):
    value, tour = oracle_trp(e1)
    assert value == 11
    assert tour.order == (0, 1, 2)


def test_line_hard_optimum_goes_left_first():
    inst = line_hard(2)
    value, tour = oracle_trp(inst)
    # two items at -2 then one at 4
    assert value == 2 + 2 + 8
    assert inst.distance(0, tour.order[1]) == 2


def test_trp_budget():
    with pytest.raises(BudgetExceededError) as info:
        oracle_trp(random_tree(16, seed=0))
    assert info.value.cap_name == "ORACLE_TRP_MAX_N"


def test_segtsp_feasible(path012):
    seg = SegTspInstance((Fraction(2), Fraction(4)), (1, 2))
    result = oracle_segtsp(path012, seg)
    assert result.feasible
    assert check_segtsp_tour(path012, result.tour, seg)


def test_segtsp_infeasible(path012):
    result = oracle_segtsp(path012, SegTspInstance((Fraction(1), Fraction(4)), (2, 2)))
    assert not result.feasible
    assert result.tour is None


def test_exact_solver_wraps_enumeration(path012):
    solver = ExactSegTspSolver()
    assert solver.alpha == 1
    tour = solver.solve(path012, SegTspInstance((Fraction(4),), (2,)))
    assert tour is not None and tour.length == 4


def test_quota(path012):
    quota = QuotaInstance((Fraction(1), Fraction(3)), (1, 1))
    result = oracle_quota(path012, quota)
    assert result.feasible
    assert check_quota_tour(path012, result.tour, quota)
    assert not oracle_quota(path012, QuotaInstance((Fraction(1), Fraction(3)), (2, 0))).feasible


def test_sub_objective(path012):
    seg = SegTspInstance((Fraction(4),), (2,))
    assert oracle_sub_objective(path012, seg, 0, 2) == 3
    assert oracle_sub_objective(path012, seg, 1, 2) == 2
    assert oracle_sub_objective(path012, SegTspInstance((Fraction(3),), (2,)), 0, 2) is None


def test_sched_optimum(s1):
    value, schedule = oracle_sched(s1)
    assert value == 8
    assert [r.job for r in schedule.runs] == [1, 2]
    assert schedule_objective(s1, schedule)[0] == 8


def test_sched_antichain_follows_smith_order():
    inst = parse_instance("sched\nn 3\njob 1 1 3 1 4\njob 2 1 2 2 5\njob 3 1 1 3 6\n")
    value, schedule = oracle_sched(inst)
    assert value == 3 * 1 + 2 * 2 + 1 * 3
    assert [r.job for r in schedule.runs] == [1, 2, 3]


def test_sched_precedence_beats_ratio():
    inst = parse_instance("sched\nn 2\njob 1 2 1 1 2\njob 2 1 4 3 4\n")
    value, schedule = oracle_sched(inst)
    assert value == 1 * 2 + 4 * 3
    assert schedule.runs[0].job == 1


@pytest.mark.parametrize("seed", range(5))
def test_trp_optimum_matches_permutation_search(seed):
    inst = random_matrix(4, seed)
    best = min(tour_objective(inst, make_tour(inst, order))[0] for order in permutations(inst.points))
    assert oracle_trp(inst)[0] == best


@pytest.mark.parametrize("seed", range(5))
def test_sched_optimum_matches_permutation_search(seed):
    inst = random_sched(5, seed)
    best = None
    for order in permutations(inst.jobs):
        if any(a.r < b.l for k, b in enumerate(order) for a in order[k + 1:]):
            continue
        clock, total = 0, 0
        for job in order:
            clock += job.p
            total += job.w * clock
        best = total if best is None else min(best, total)
    assert oracle_sched(inst)[0] == best


def test_single_heavy_job_needs_a_companion():
    with pytest.raises(InstanceFormatError, match="normalization"):
        parse_instance("sched\nn 1\njob 1 3 4 1 2\n")
    inst = parse_instance("sched\nn 2\njob 1 3 4 1 2\njob 2 1 1 3 4\n")
    value, schedule = oracle_sched(inst)
    assert value == 3 * 4 + 4 * 1
    assert schedule.runs[0].job == 1
