import pytest

from symcrtl import dc_motor
from symcrtl.io import data_path, read_table_csv
from symcrtl.tsys import TransitionSystem

PUB_A = [[0.15, 0.525], [0.075, 0.45], [0.075, 0.375], [0.075, 0.3]]
PUB_B = [[0.0, 0.075], [0.0, 0.0], [0.0, -0.075]]
PUB_RA = [[0.1627, 0.5524], [0.0908, 0.2320], [0.0220, 0.2474], [0.0939, 0.5678]]
PUB_RB = [[-0.0002, 0.0862], [0.0002, -0.0862]]
UOPT = {"q1": ["a1"], "q2": ["a1"], "q3": ["a1"],
        "q4": ["a1", "a2"], "q5": ["a1", "a2"], "q6": ["a1", "a2"],
        "q7": ["a2", "a3"], "q8": ["a2", "a3"], "q9": ["a2", "a3"]}


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def report(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def to_ts(d):
    return TransitionSystem(d["states"], d["outputs"], d["A"], d["B"], d["transitions"])


@pytest.fixture
def motor():
    return dc_motor()


@pytest.fixture
def table1():
    return read_table_csv(data_path("table1.csv"))
