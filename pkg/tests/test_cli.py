import pytest

from app.cli import EXIT_ERROR, EXIT_OK, build_parser, config_from_args, main
from app.formats import Command
from app.services.instances import parse_instance

from tests.conftest import S1_TEXT, T1_TEXT


@pytest.fixture
def t1_file(tmp_path):
    path = tmp_path / "t1.txt"
    path.write_text(T1_TEXT)
    return path


def test_parser_builds_config(t1_file):
    config = config_from_args(build_parser().parse_args(["solve-trp", str(t1_file), "--eps", "1/2", "--oracle"]))
    assert config.command == Command.SOLVE_TRP
    assert config.paths == [str(t1_file)]
    assert str(config.eps[0]) == "1/2"
    assert config.oracle


def test_gen_then_oracle(tmp_path, capsys):
    out = tmp_path / "line.txt"
    assert main(["gen", "line-hard", "--k", "2", "-o", str(out)]) == EXIT_OK
    inst = parse_instance(out.read_text())
    assert inst.n == 3
    assert main(["oracle", str(out)]) == EXIT_OK
    assert "optimum: 12\n" in capsys.readouterr().out


def test_gen_is_seeded(capsys):
    main(["gen", "random-tree", "--n", "5", "--seed", "7"])
    first = capsys.readouterr().out
    main(["gen", "random-tree", "--n", "5", "--seed", "7"])
    assert capsys.readouterr().out == first
    assert first.startswith("trp tree\n")


def test_solve_trp_with_oracle(t1_file, capsys):
    assert main(["solve-trp", str(t1_file), "--oracle"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert "kind: tree" in lines
    assert "oracle: 5" in lines
    ratio = next(line for line in lines if line.startswith("ratio: "))
    assert float(ratio.split()[1]) >= 1
    assert any(line.startswith("window ") for line in lines)


def test_solve_sched_writes_output(tmp_path):
    src = tmp_path / "s1.txt"
    src.write_text(S1_TEXT)
    out = tmp_path / "report.txt"
    assert main(["solve-sched", str(src), "-o", str(out)]) == EXIT_OK
    assert out.read_text().startswith("kind: sched\n")


def test_missing_file_is_an_error(tmp_path, capsys):
    assert main(["oracle", str(tmp_path / "missing.txt")]) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_malformed_instance_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("trp tree\nn 2\nroot 0\nedge 0 1\n")
    assert main(["solve-trp", str(bad)]) == EXIT_ERROR
    assert "line 4" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["--eps", "0"],
    ["--eps", "1", "2"],
    ["--K", "1"],
    ["--retries", "0"],
])
def test_invalid_flags(t1_file, argv, capsys):
    assert main(["solve-trp", str(t1_file), *argv]) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_wrong_kind_for_command(t1_file, capsys):
    assert main(["solve-sched", str(t1_file)]) == EXIT_ERROR
    assert "sched" in capsys.readouterr().err


def test_bench_csv(capsys):
    assert main(["bench", "--suite", "matrix-small", "--K", "2", "--format", "csv"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("instance,n,eps,K,")
    assert len(lines) == 3
    assert all(line.endswith(",ok") for line in lines[1:])


def test_bench_unknown_suite(capsys):
    assert main(["bench", "--suite", "nope"]) == EXIT_ERROR
    assert "unknown suite" in capsys.readouterr().err
