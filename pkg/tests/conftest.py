import itertools

import numpy as np
import pytest

from lagsampler.model import QuboProblem


def random_qubo(rng, n, scale=10.0):
    a = rng.uniform(-scale, scale, (n, n))
    return QuboProblem((a + a.T) / 2)


def brute_energy(q, x):
    """Plain double loop, independent of the vectorized paths."""
    total = 0.0
    for i in range(len(x)):
        for j in range(len(x)):
            total += q[i][j] * x[i] * x[j]
    return total


def all_configs(n):
    return [np.array(bits) for bits in itertools.product((0, 1), repeat=n)]


def boltzmann_oracle(problem, beta):
    """Exact Boltzmann weights by explicit enumeration, lexicographic state order."""
    energies = np.array([brute_energy(problem.coeffs, x) + problem.offset for x in all_configs(problem.n)])
    w = np.exp(-beta * (energies - energies.min()))
    return w / w.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", []):
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
