import numpy as np
import pytest

from bicoidsim.model import ModelParams, reference_params

_CRITERIA = []


class FixedStream:
    """Stand-in uniform stream returning preset values."""

    def __init__(self, values):
        self._values = list(values)
        self.drawn = 0

    def random(self):
        self.drawn += 1
        return self._values.pop(0)


@pytest.fixture
def fixed_stream():
    return FixedStream


@pytest.fixture
def params():
    return reference_params()


@pytest.fixture
def small_params():
    # reduced system with every timescale shortened
    return ModelParams(s0=5.0, n_compartments=10, h=5.0, D=3.0, t0=300.0, tau_p=600.0, tau_m=60.0)


@pytest.fixture
def record_criterion():
    def record(number, name, passed, detail=""):
        _CRITERIA.append((number, name, bool(passed), detail))
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name} {detail}".rstrip()
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_CRITERIA, key=lambda c: (c[0], c[1])):
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {name}" + (f" -- {detail}" if detail else "")
        )


def random_state(rng: np.random.Generator, n: int, high: int = 20) -> np.ndarray:
    counts = rng.integers(0, high, size=n)
    counts[rng.random(n) < 0.3] = 0
    return counts.astype(np.int64)
