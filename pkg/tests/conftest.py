import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from dynsample.config import from_dict

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def enumerate_inclusion(weights, k):
    """Exact marginal inclusion probabilities of sequential weighted draws.

    Walks every ordered sequence of k distinct items, multiplying the
    probability of each draw given the remaining weight.
    """
    w = [float(x) for x in weights]
    n = len(w)
    incl = [0.0] * n
    for seq in itertools.permutations(range(n), k):
        p = 1.0
        for pos, i in enumerate(seq):
            # summed fresh so an all-zero remainder is exactly 0.0
            remaining = sum(w[j] for j in range(n) if j not in seq[:pos])
            if remaining == 0:
                # only zero-weight items left: uniform among the rest
                p *= 1.0 / (n - pos)
            else:
                p *= w[i] / remaining
        for i in seq:
            incl[i] += p
    return np.array(incl)


def half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def size_recurrence(n, ratio="0.8", steps=1):
    """Active-pool sizes after repeated keep-the-top-fraction steps, in exact arithmetic."""
    r = Fraction(ratio)
    sizes = [n]
    for _ in range(steps):
        sizes.append(max(1, half_up(r * sizes[-1])))
    return sizes


def decay_config(**experiment):
    learner = experiment.pop("learner", {})
    sampler = experiment.pop("sampler", {})
    doc = {
        "experiment": {"seed": 0, "total_iterations": 10, **experiment},
        "sampler": sampler,
        "learner": {"kind": "decay", "n_examples": 100, **learner},
    }
    return from_dict(doc)


def softmax_config(**experiment):
    learner = experiment.pop("learner", {})
    sampler = experiment.pop("sampler", {})
    doc = {
        "experiment": {"seed": 0, "total_iterations": 5, **experiment},
        "sampler": sampler,
        "learner": {"kind": "softmax", "n_examples": 200, "n_holdout": 50, **learner},
    }
    return from_dict(doc)
