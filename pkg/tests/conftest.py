import math
import sys

import numpy as np
import pytest

from stargraph.model import EdgePotential, Problem, StarGraph

SQRT2 = math.sqrt(2.0)


def random_real_problem(rng, lengths=(1.0, SQRT2), order=2, bound=0.3):
    pots = [EdgePotential(rng.uniform(-bound, bound, order)) for _ in lengths]
    return Problem(StarGraph(lengths), tuple(pots))


def random_complex_problem(rng, lengths=(1.0, SQRT2), order=3, bound=0.3):
    pots = [EdgePotential(rng.uniform(-bound, bound, order) + 1j * rng.uniform(-bound, bound, order))
            for _ in lengths]
    return Problem(StarGraph(lengths), tuple(pots))


def random_disk(rng, n, radius):
    return radius * np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * np.pi * rng.uniform(0, 1, n))


def away_from_poles(z, lengths, rel=1e-3):
    """Boolean mask of points not within a relative band of any n*pi/l."""
    keep = np.ones(z.shape, bool)
    for l in lengths:
        n = np.round(np.abs(z.real) / (math.pi / l))
        w = n * math.pi / l
        keep &= (n == 0) | (np.abs(np.abs(z) - w) > rel * np.maximum(w, 1.0)) | (np.abs(z.imag) > 0.1)
    return keep


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
