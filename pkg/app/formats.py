from enum import Enum


class InstanceKind(str, Enum):
    MATRIX = "matrix"
    TREE = "tree"
    EUCLID = "euclid"
    SCHED = "sched"


class GeneratorKind(str, Enum):
    LINE_HARD = "line-hard"
    RANDOM_TREE = "random-tree"
    RANDOM_EUCLID = "random-euclid"
    RANDOM_MATRIX = "random-matrix"
    RANDOM_SCHED = "random-sched"


class OutputFormat(str, Enum):
    CSV = "csv"
    MD = "md"
    PLAIN = "plain"


class Command(str, Enum):
    SOLVE_TRP = "solve-trp"
    SOLVE_SCHED = "solve-sched"
    ORACLE = "oracle"
    GEN = "gen"
    BENCH = "bench"


# Bench report column order is part of the external interface.
REPORT_COLUMNS = [
    "instance", "n", "eps", "K", "oracle", "bound", "realized", "ratio", "wall_time",
]

# First-line headers of the instance documents.
HEADERS = {
    InstanceKind.TREE: "trp tree",
    InstanceKind.EUCLID: "trp euclid",
    InstanceKind.MATRIX: "trp matrix",
    InstanceKind.SCHED: "sched",
}

SOLVE_REPORT_TEMPLATE = """\
kind: {kind}
n: {n}
eps: {eps}
K: {K}
h0: {h0}
Gamma: {gamma}
bound: {bound}
realized: {realized}
oracle: {oracle}
ratio: {ratio}
"""

WINDOW_LINE_TEMPLATE = "window {index}: target {target} value {value}\n"
