from fractions import Fraction

import numpy as np
import pytest

from app.core.errors import InstanceFormatError, InvalidInstanceError
from app.formats import InstanceKind
from app.services.generators import random_euclid, random_matrix, random_sched, random_tree
from app.services.instances import (
    PseudoSchedule,
    PseudoTour,
    QuotaInstance,
    Run,
    Schedule,
    SegTspInstance,
    Subtour,
    ceil_euclid,
    check_quota_tour,
    check_segtsp_tour,
    compact_pseudo_tour,
    compact_schedule,
    lift_order,
    make_tour,
    matrix_instance,
    merge_coincident,
    parse_instance,
    portion_lengths,
    scale_and_round,
    schedule_objective,
    serialize_instance,
    split_quotas,
    tour_objective,
    tree_instance,
    truncate_tour,
    unit_completions,
)
from tests.conftest import E1_TEXT, S1_TEXT, T1_TEXT


def test_parse_tree_fixture(t1):
    assert t1.kind == InstanceKind.TREE
    assert t1.n == 2
    assert t1.distance(0, 1) == 1
    assert t1.distance(0, 2) == 2
    assert t1.distance(1, 2) == 3


def test_parse_sched_fixture(s1):
    assert s1.n == 2
    j1, j2 = s1.by_id[1], s1.by_id[2]
    assert (j1.p, j1.w, j1.l, j1.r) == (2, 1, 1, 2)
    assert j1.r < j2.l


def test_tree_root_is_relabelled_to_origin():
    inst = parse_instance("trp tree\nn 3\nroot 2\nedge 2 1 4\nedge 1 0 1\n")
    # vertex 2 becomes the origin and the old origin takes label 2
    assert inst.distance(0, 1) == 4
    assert inst.distance(0, 2) == 5


@pytest.mark.parametrize("text", [T1_TEXT, E1_TEXT, S1_TEXT])
def test_serialize_is_canonical(text):
    assert serialize_instance(parse_instance(text)) == text


def test_matrix_parse_and_serialize():
    text = "trp matrix\nn 2\nrow 0 1 2\nrow 1 0 1\nrow 2 1 0\n"
    inst = parse_instance(text)
    assert inst.n == 2
    assert inst.distance(0, 2) == 2
    assert serialize_instance(inst) == text


def test_asymmetric_matrix_reports_line():
    with pytest.raises(InstanceFormatError) as info:
        parse_instance("trp matrix\nn 1\nrow 0 1\nrow 2 0\n")
    assert info.value.line_no == 3
    assert "asymmetric" in str(info.value)


def test_triangle_violation_reports_line():
    with pytest.raises(InstanceFormatError) as info:
        parse_instance("trp matrix\nn 2\nrow 0 1 5\nrow 1 0 1\nrow 5 1 0\n")
    assert "triangle" in str(info.value)
    assert info.value.line_no == 3


def test_duplicate_interval_endpoint_rejected():
    with pytest.raises(InstanceFormatError) as info:
        parse_instance("sched\nn 2\njob 1 1 1 1 2\njob 2 1 1 2 3\n")
    assert info.value.line_no == 4


def test_oversized_processing_time_cites_normalization():
    with pytest.raises(InstanceFormatError, match="normalization"):
        parse_instance("sched\nn 1\njob 1 2 1 1 2\n")


@pytest.mark.parametrize("text", [
    "",
    "trp graph\nn 1\n",
    "sched\nn 1\njob 1 0 1 1 2\n",
    "trp euclid\nn 1\norigin 0 0\npoint 0 0\n",
    "trp tree\nn 3\nroot 0\nedge 0 1 1\n",
])
def test_malformed_documents(text):
    with pytest.raises(InstanceFormatError):
        parse_instance(text)


def test_ceil_euclid():
    assert ceil_euclid(3, 4) == 5
    assert ceil_euclid(1, 1) == 2
    assert ceil_euclid(0, 0) == 0


def test_tour_objective_on_tree(t1):
    tour = make_tour(t1, [1, 2])
    assert tour.times == (0, 1, 4)
    total, first = tour_objective(t1, tour)
    assert total == 5
    assert first == {1: 1, 2: 4}


def test_closed_euclid_tour_length(e1):
    tour = make_tour(e1, [1, 2], closed=True)
    assert tour.length == 12
    assert tour_objective(e1, tour)[0] == 11


def test_tampered_tour_times_rejected(t1):
    tour = make_tour(t1, [1, 2])
    bad = type(tour)(tour.order, (0, 1, 3), tour.length)
    with pytest.raises(InvalidInstanceError):
        tour_objective(t1, bad)


def test_pseudo_tour_counts_first_visits(path012):
    pseudo = PseudoTour((
        Subtour(Fraction(3), Fraction(6), (1,)),
        Subtour(Fraction(6), Fraction(12), (1, 2)),
    ))
    total, first = tour_objective(path012, pseudo)
    assert first == {1: 4, 2: 8}
    assert total == 12
    compact = compact_pseudo_tour(path012, pseudo)
    assert compact.order == (0, 1, 2)
    assert tour_objective(path012, compact)[0] <= total


def test_pseudo_tour_window_overrun(path012):
    pseudo = PseudoTour((Subtour(Fraction(0), Fraction(3), (1, 2)),))
    with pytest.raises(InvalidInstanceError, match="overruns"):
        tour_objective(path012, pseudo)


def test_pseudo_tour_missing_point(path012):
    with pytest.raises(InvalidInstanceError, match="unvisited"):
        tour_objective(path012, PseudoTour((Subtour(Fraction(0), None, (1,)),)))


def test_merge_coincident_tree():
    inst = tree_instance(2, [(0, 1, 0), (0, 2, 3)])
    merged = merge_coincident(inst)
    assert merged.n == 1
    assert merged.members == ((0, 1), (2,))
    assert merged.weight(0) == 1
    assert merged.units == 1
    assert merged.distance(0, 1) == 3


def test_merge_coincident_keeps_multiplicity():
    inst = tree_instance(3, [(0, 1, 2), (1, 2, 0), (1, 3, 0)])
    merged = merge_coincident(inst)
    assert merged.n == 1
    assert merged.weight(1) == 3
    tour = make_tour(merged, [1])
    assert unit_completions(merged, tour) == [2, 2, 2]
    assert tour_objective(merged, tour)[0] == 6
    assert truncate_tour(merged, tour, 1).order == (0, 1)


def test_split_quotas():
    seg = SegTspInstance((Fraction(2), Fraction(5)), (1, 3))
    quota = split_quotas(seg)
    assert quota.budgets == (2, 3)
    assert quota.quotas == (1, 2)
    assert quota.boundaries == (2, 5)


def test_segtsp_and_quota_checks(t1):
    tour = make_tour(t1, [1, 2], closed=True)
    assert tour.length == 6
    assert check_segtsp_tour(t1, tour, SegTspInstance((Fraction(1), Fraction(6)), (1, 2)))
    assert not check_segtsp_tour(t1, tour, SegTspInstance((Fraction(1), Fraction(5)), (1, 2)))
    assert check_quota_tour(t1, tour, QuotaInstance((Fraction(1), Fraction(5)), (1, 1)))
    assert not check_quota_tour(t1, tour, QuotaInstance((Fraction(1), Fraction(5)), (0, 2)))


@pytest.mark.parametrize("quotas, expected", [
    ((1, 1), (1, 3)),
    ((0, 2), (0, 4)),
    ((2, 0), (2, 2)),
    ((0, 0, 2), (0, 0, 4)),
    ((1, 0), None),
    ((1, 2), None),
])
def test_portion_lengths(path012, quotas, expected):
    tour = make_tour(path012, [1, 2], closed=True)
    assert portion_lengths(path012, tour, quotas) == expected


def test_quota_check_cuts_at_visits(path012):
    tour = make_tour(path012, [1, 2], closed=True)
    # the second portion starts at point 1, not at the budget boundary
    assert check_quota_tour(path012, tour, QuotaInstance((Fraction(1), Fraction(3)), (1, 1)))
    assert not check_quota_tour(path012, tour, QuotaInstance((Fraction(2), Fraction(2)), (1, 1)))
    assert not check_quota_tour(path012, make_tour(path012, [1, 2]), QuotaInstance((Fraction(9), Fraction(9)), (1, 1)))


def test_invalid_segtsp_instances():
    with pytest.raises(InvalidInstanceError):
        SegTspInstance((Fraction(3), Fraction(2)), (1, 1))
    with pytest.raises(InvalidInstanceError):
        SegTspInstance((Fraction(3),), (2, 1))


def test_schedule_objective_s1(s1):
    schedule = Schedule((Run(1, Fraction(0), Fraction(2)), Run(2, Fraction(2), Fraction(3))))
    total, first = schedule_objective(s1, schedule)
    assert total == 8
    assert first == {1: 2, 2: 3}


def test_schedule_precedence_violation(s1):
    schedule = Schedule((Run(2, Fraction(0), Fraction(1)), Run(1, Fraction(1), Fraction(3))))
    with pytest.raises(InvalidInstanceError, match="precedence"):
        schedule_objective(s1, schedule)


def test_schedule_overlap(s1):
    schedule = Schedule((Run(1, Fraction(0), Fraction(2)), Run(2, Fraction(1), Fraction(2))))
    with pytest.raises(InvalidInstanceError, match="overlaps"):
        schedule_objective(s1, schedule)


def test_compact_schedule_never_worse(s1):
    pseudo = PseudoSchedule((
        (Run(1, Fraction(3), Fraction(5)),),
        (Run(1, Fraction(9), Fraction(11)), Run(2, Fraction(11), Fraction(12))),
    ))
    pseudo_total, _ = schedule_objective(s1, pseudo)
    compact = compact_schedule(s1, pseudo)
    assert schedule_objective(s1, compact)[0] == 8
    assert pseudo_total == 5 + 2 * 12


def test_scale_matrix():
    inst = matrix_instance([[0, 100], [100, 0]])
    scaled = scale_and_round(inst, Fraction(1))
    assert scaled.factor == 25
    assert scaled.instance.distance(0, 1) == 4


def test_scale_tree_moves_paths_by_less_than_two_units():
    inst = tree_instance(2, [(0, 1, 1000), (1, 2, 7)])
    scaled = scale_and_round(inst, Fraction(1))
    assert scaled.instance.max_distance <= 16
    for u in range(3):
        for v in range(3):
            drift = abs(scaled.factor * scaled.instance.distance(u, v) - inst.distance(u, v))
            assert drift < 2 * scaled.factor


def test_lift_order_restores_identifiers():
    inst = tree_instance(3, [(0, 1, 0), (0, 2, 2), (2, 3, 0)])
    merged = merge_coincident(inst)
    assert merged.n == 1
    assert lift_order(merged, (0, 1)) == [1, 2, 3]
    tour = make_tour(inst, lift_order(merged, (0, 1)))
    assert tour_objective(inst, tour)[0] == 0 + 2 + 2


def test_scale_small_instance_unchanged(t1):
    scaled = scale_and_round(t1, Fraction(1))
    assert scaled.factor == 1
    assert scaled.instance is t1


@pytest.mark.parametrize("seed", range(5))
def test_generated_documents_reparse_to_the_same_text(seed):
    for inst in (random_tree(4 + seed, seed), random_euclid(3 + seed, seed), random_matrix(3, seed),
                 random_sched(2 + seed, seed)):
        text = serialize_instance(inst)
        assert serialize_instance(parse_instance(text)) == text


@pytest.mark.parametrize("seed", range(4))
def test_scaled_tour_objective_stays_close(seed):
    inst = random_matrix(4, seed, max_weight=500)
    scaled = scale_and_round(inst, Fraction(1))
    rng = np.random.default_rng(seed)
    n = inst.n
    for _ in range(10):
        order = [int(v) + 1 for v in rng.permutation(n)]
        original, _ = tour_objective(inst, make_tour(inst, order))
        rounded, _ = tour_objective(scaled.instance, make_tour(scaled.instance, order))
        assert original <= scaled.factor * rounded <= original + n * n * scaled.factor


@pytest.mark.parametrize("seed", range(5))
def test_rounded_euclid_distances_keep_triangle_inequality(seed):
    inst = random_euclid(6, seed, span=9)
    d = inst.dist
    for u in range(inst.n + 1):
        for v in range(inst.n + 1):
            assert d[u][v] == ceil_euclid(inst.coords[u][0] - inst.coords[v][0], inst.coords[u][1] - inst.coords[v][1])
            for w in range(inst.n + 1):
                assert d[u][w] <= d[u][v] + d[v][w]
    # 1.41 + 1.41 against 2.83: nearest rounding would give 1 + 1 < 3
    assert ceil_euclid(1, 1) + ceil_euclid(1, 1) >= ceil_euclid(2, 2)
