import re

import numpy as np
import pytest

from qfidsus.core import CNOT, RX, RY, RZ, Circuit

# lines printed after the run by the acceptance module
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: (int(re.search(r"\d+", s).group()), s)):
            terminalreporter.write_line(line)


def random_circuit(rng, width=None, n_params=None, kinds=("RY", "RX", "RZ"), n_fixed=3):
    """Each parameter drives one rotation; CNOTs and fixed rotations between."""
    width = width or int(rng.integers(1, 4))
    n_params = n_params or int(rng.integers(1, 8))
    gates = []
    for p in rng.permutation(n_params):
        q = int(rng.integers(width))
        kind = kinds[int(rng.integers(len(kinds)))]
        gates.append({"RY": RY, "RX": RX, "RZ": RZ}[kind](q, int(p)))
        if width > 1 and rng.random() < 0.5:
            c = int(rng.integers(width - 1))
            gates.append(CNOT(c, c + 1) if rng.random() < 0.5 else CNOT(c + 1, c))
    for _ in range(n_fixed):
        q = int(rng.integers(width))
        gates.insert(int(rng.integers(len(gates) + 1)), RY(q, angle=float(rng.uniform(-3, 3))))
    return Circuit(width, tuple(gates), n_params)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
