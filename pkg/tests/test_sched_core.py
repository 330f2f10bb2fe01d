from fractions import Fraction

import pytest

from app.core.errors import BudgetExceededError, InvalidInstanceError, ParameterError
from app.services.generators import random_sched
from app.services.instances import Job, SchedInstance, parse_instance, schedule_objective
from app.services.oracles import oracle_sched
from app.services.sched_core import (
    _budget_vectors,
    _guesses,
    build_slot_grid,
    check_exchange_identity,
    compute_slot_sets,
    large_threshold,
    precedence_from_intervals,
    sched_approx,
    sched_expectation_report,
    solve_subschedule,
    transform_schedule,
    weight_profile,
)

ANTICHAIN = "sched\nn 3\njob 1 1 3 1 4\njob 2 1 2 2 5\njob 3 1 1 3 6\n"
CHAIN = "sched\nn 3\njob 1 1 1 1 2\njob 2 1 1 3 4\njob 3 1 1 5 6\n"


@pytest.fixture
def antichain():
    return parse_instance(ANTICHAIN)


def test_precedence_from_intervals(s1, antichain):
    assert list(precedence_from_intervals(s1).edges) == [(1, 2)]
    assert not precedence_from_intervals(antichain).edges
    chain = precedence_from_intervals(parse_instance(CHAIN))
    assert chain.has_edge(1, 3)
    assert chain.number_of_edges() == 3


def test_precedence_rejects_shared_endpoint():
    inst = SchedInstance((Job(1, 1, 1, 1, 2), Job(2, 1, 1, 2, 3)))
    with pytest.raises(InvalidInstanceError):
        precedence_from_intervals(inst)


def test_large_threshold():
    assert large_threshold(Fraction(1), 6) == Fraction(1, 128)


def test_transform_schedule_s1(s1):
    _, schedule = oracle_sched(s1)
    grid = build_slot_grid(s1, Fraction(1), 6, 0)
    pseudo = transform_schedule(s1, schedule, grid)
    assert pseudo.windows[0] == ()
    total, first = schedule_objective(s1, pseudo)
    assert first == {1: 5, 2: 6}
    # a single h0 may exceed (1 + eps) * 8
    assert total == 17


def test_expectation_mean_within_one_plus_eps(s1, antichain):
    for inst in (s1, antichain):
        optimum, schedule = oracle_sched(inst)
        report = sched_expectation_report(inst, schedule, Fraction(1), 6)
        assert report.base == optimum
        assert report.mean <= 2 * optimum


def test_weight_profile_and_exchange_identity(s1):
    completions = {1: Fraction(2), 2: Fraction(3)}
    assert weight_profile(s1, completions) == [2, 3, 3]
    check_exchange_identity(s1, completions)


def test_slot_sets_for_anchored_chain(s1):
    sets = compute_slot_sets(s1, (1, 2, None))
    assert sets.K == 2
    assert sets.sets == {1: frozenset({1}), 2: frozenset({2})}


def test_slot_sets_reject_reversed_anchors(s1):
    assert compute_slot_sets(s1, (2, 1, None)) is None


def test_empty_slot_is_excluded(antichain):
    sets = compute_slot_sets(antichain, (None, 3, None))
    assert sets.sets[1] == frozenset({2})
    assert sets.sets[2] == frozenset({2})


def test_later_left_endpoint_skips_slot(antichain):
    sets = compute_slot_sets(antichain, (3, 1, None))
    assert 2 not in sets.sets[2]
    assert sets.sets[2] == frozenset({1})


def test_slot_sets_reject_repeated_anchor(s1):
    with pytest.raises(ParameterError):
        compute_slot_sets(s1, (1, 1, None))


def test_equal_weights_give_empty_subschedule(s1):
    grid = build_slot_grid(s1, Fraction(1), 6, 0)
    row = solve_subschedule(s1, grid, 1, 0)
    assert row[0].value == 0
    assert row[0].witness.runs == ()


def test_whole_instance_in_first_slot(s1):
    grid = build_slot_grid(s1, Fraction(1), 6, 0)
    row = solve_subschedule(s1, grid, 2, 3)
    # start (1 + eps) t_2 = 6, completions at offsets 2 and 3
    assert row[0].value == 3 * 6 + (2 + 3 + 3)
    assert row[1].value == 2 * 6 + (3 + 3)
    assert row[3].value == 0
    assert [r.job for r in row[0].witness.runs] == [1, 2]


def test_job_longer_than_window_is_infinite():
    inst = parse_instance("sched\nn 2\njob 1 4 1 1 2\njob 2 1 1 3 4\n")
    grid = build_slot_grid(inst, Fraction(1), 2, 0)
    row = solve_subschedule(inst, grid, 1, 1)
    assert not row[0].finite
    assert row[1].value == 0


def test_subschedule_parameter_checks(s1):
    grid = build_slot_grid(s1, Fraction(1), 6, 0)
    with pytest.raises(ParameterError):
        solve_subschedule(s1, grid, grid.gamma + 1, 1)
    with pytest.raises(ParameterError):
        solve_subschedule(s1, grid, 1, s1.total_weight + 1)


def test_sched_approx_s1(s1):
    result = sched_approx(s1, Fraction(1))
    assert 8 <= result.realized <= 64
    assert result.realized <= result.bound
    assert len(result.per_h0) == 6
    assert schedule_objective(s1, result.compact)[0] <= result.realized
    assert result.windows[-1].target == s1.total_weight


def test_sched_approx_antichain(antichain):
    result = sched_approx(antichain, Fraction(1))
    assert 10 <= result.realized <= 80
    compact, _ = schedule_objective(antichain, result.compact)
    assert compact >= 10


def test_sched_approx_explicit_K(s1):
    result = sched_approx(s1, Fraction(1), K=2)
    assert result.grid.K == 2
    assert result.realized <= result.bound


def test_guess_budget(s1):
    with pytest.raises(BudgetExceededError) as info:
        sched_approx(s1, Fraction(1), guess_cap=1)
    assert info.value.cap_name == "GUESS_CAP"


def test_budget_vectors_hand_out_smith_blocks():
    room = [Fraction(1), Fraction(5)]
    free = list(_budget_vectors([((1, 2, 3), (1, 1))], 2, [0] * 4, room))
    assert free == [
        (),
        (((1, 2, 3), 2, 1),),
        (((1, 2, 3), 2, 2),),
        (((1, 2, 3), 1, 1),),
        (((1, 2, 3), 1, 1), ((1, 2, 3), 2, 1)),
    ]
    forced = list(_budget_vectors([((1, 2), (1, 1))], 2, [0] * 4, room))
    assert forced == [(((1, 2), 2, 2),), (((1, 2), 1, 1), ((1, 2), 2, 1))]


@pytest.mark.parametrize("fixture", ["s1", "antichain"])
def test_guesses_respect_slot_sets_and_capacity(fixture, request):
    inst = request.getfixturevalue(fixture)
    grid = build_slot_grid(inst, Fraction(1), 2, 0)
    prec = precedence_from_intervals(inst)
    for i in range(1, grid.gamma + 1):
        threshold = large_threshold(grid.eps, grid.K) * grid.t(i)
        room = [grid.slot(i, h) - grid.t(i) for h in (1, 2)]
        count = 0
        for slot_sets, plan in _guesses(inst, grid, i, prec, threshold, 100_000):
            count += 1
            anchors = [a for a in plan.anchors if a is not None]
            assert len(set(anchors)) == len(anchors)
            load = [0, 0, 0]
            for job, h in plan.large:
                assert inst.by_id[job].p >= threshold
                assert h in slot_sets.sets[job]
                load[h] += inst.by_id[job].p
            for s, h, p in plan.budgets:
                assert h in s and h <= 2
                load[h] += p
            assert load[1] <= room[0] and load[1] + load[2] <= room[1]
        # leaving every job out always fits
        assert count >= 1


@pytest.mark.parametrize("n, seed", [(3, 0), (3, 1), (4, 2), (4, 3), (5, 4)])
def test_random_instances_within_ratio_eight(n, seed):
    inst = random_sched(n, seed, max_p=3, max_w=5)
    result = sched_approx(inst, Fraction(1), K=2)
    optimum, _ = oracle_sched(inst)
    compact, _ = schedule_objective(inst, result.compact)
    assert optimum <= compact <= result.realized <= result.bound
    assert compact <= 8 * optimum
