from fractions import Fraction

import pytest

from app.core.errors import ParameterError
from app.formats import GeneratorKind, OutputFormat
from app.services.bench_service import (
    BENCH_COLUMNS,
    BenchCell,
    BenchRunner,
    build_cells,
    max_ratio,
    render_table,
    run_cell,
)


def _cell(suite, generator, **params):
    return BenchCell(suite, generator, Fraction(1), 0, tuple(params.items()))


def test_build_cells_order():
    cells = build_cells("tree-small", [Fraction(1), Fraction(1, 2)], seeds=2, seed=3)
    assert len(cells) == 3 * 2 * 2
    assert [c.seed for c in cells[:4]] == [3, 4, 3, 4]
    assert [c.eps for c in cells[:4]] == [1, 1, Fraction(1, 2), Fraction(1, 2)]
    assert cells[0].name == "random-tree-n3-max_weight4-s3"


def test_build_cells_default_eps():
    cells = build_cells("line-hard")
    assert [c.eps for c in cells] == [1, 1]


@pytest.mark.parametrize("suite, seeds", [("no-such-suite", 1), ("tree-small", 0)])
def test_build_cells_rejects(suite, seeds):
    with pytest.raises(ParameterError):
        build_cells(suite, seeds=seeds)


def test_tree_cell_row():
    row = run_cell(_cell("tree-small", GeneratorKind.RANDOM_TREE, n=2, max_weight=3))
    assert list(row) == BENCH_COLUMNS
    assert row["status"] == "ok"
    assert row["K"] == "6"
    assert row["wall_time"] == ""
    assert 1 <= float(row["ratio"]) <= 4


def test_sched_cell_row():
    row = run_cell(_cell("sched-small", GeneratorKind.RANDOM_SCHED, n=2, max_p=2, max_w=2))
    assert row["status"] == "ok"
    assert 1 <= float(row["ratio"]) <= 8


def test_expectation_cell_row():
    row = run_cell(_cell("expectation-tree", GeneratorKind.RANDOM_TREE, n=3, max_weight=4), timing=True)
    assert row["status"] == "ok"
    assert float(row["ratio"]) <= 2
    assert row["wall_time"] != ""


def test_bad_cell_becomes_error_row():
    row = run_cell(_cell("tree-small", GeneratorKind.RANDOM_TREE, n=0))
    assert row["status"].startswith("error:")
    assert row["ratio"] == ""


@pytest.mark.asyncio
async def test_runner_is_deterministic():
    cells = [
        _cell("tree-small", GeneratorKind.RANDOM_TREE, n=2, max_weight=3),
        _cell("matrix-small", GeneratorKind.RANDOM_MATRIX, n=2, max_weight=4),
    ]
    first = await BenchRunner().run(cells)
    second = await BenchRunner().run(cells)
    assert list(first.columns) == BENCH_COLUMNS
    assert list(first["instance"]) == [c.name for c in cells]
    assert render_table(first, OutputFormat.CSV) == render_table(second, OutputFormat.CSV)
    assert max_ratio(first) >= 1


@pytest.mark.asyncio
async def test_runner_with_worker_pool_keeps_grid_order():
    cells = [
        _cell("tree-small", GeneratorKind.RANDOM_TREE, n=2, max_weight=3),
        _cell("sched-small", GeneratorKind.RANDOM_SCHED, n=2, max_p=2, max_w=2),
    ]
    frame = await BenchRunner(workers=2, time_limit=120).run(cells)
    assert list(frame["instance"]) == [c.name for c in cells]
    assert set(frame["status"]) == {"ok"}


@pytest.mark.asyncio
async def test_render_formats():
    frame = await BenchRunner().run([_cell("tree-small", GeneratorKind.RANDOM_TREE, n=2, max_weight=3)])
    csv = render_table(frame, OutputFormat.CSV)
    assert csv.splitlines()[0] == ",".join(BENCH_COLUMNS)
    md = render_table(frame, "md")
    assert md.startswith("| instance | n | eps |")
    assert md.splitlines()[1].count("---") == len(BENCH_COLUMNS)
    plain = render_table(frame, OutputFormat.PLAIN)
    assert "instance" in plain.splitlines()[0]


def test_max_ratio_ignores_blank_cells():
    import pandas as pd

    frame = pd.DataFrame({"ratio": ["1.500000", "", "2.000000"]})
    assert max_ratio(frame) == 2.0
    assert max_ratio(pd.DataFrame({"ratio": [""]})) is None
