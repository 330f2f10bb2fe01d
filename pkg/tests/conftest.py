from fractions import Fraction

import pytest

from app.services.instances import parse_instance

T1_TEXT = """trp tree
n 3
root 0
edge 0 1 1
edge 0 2 2
"""

E1_TEXT = """trp euclid
n 2
origin 0 0
point 3 0
point 0 4
"""

S1_TEXT = """sched
n 2
job 1 2 1 1 2
job 2 1 2 3 4
"""

PATH_TEXT = """trp tree
n 3
root 0
edge 0 1 1
edge 1 2 1
"""


@pytest.fixture
def t1():
    return parse_instance(T1_TEXT)


@pytest.fixture
def e1():
    return parse_instance(E1_TEXT)


@pytest.fixture
def s1():
    return parse_instance(S1_TEXT)


@pytest.fixture
def path012():
    return parse_instance(PATH_TEXT)


@pytest.fixture
def eps_one():
    return Fraction(1)
