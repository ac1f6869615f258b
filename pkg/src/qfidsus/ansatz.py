"""Real-amplitude variational circuits for the reduced TFIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CNOT, RY, Circuit, CircuitError, run


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    n_params: int
    layout: tuple[tuple, ...]

    def __post_init__(self):
        if self.n_params != 2**self.n_qubits - 1:
            raise CircuitError("a real ansatz on n qubits needs 2^n - 1 angles")
        for op in self.layout:
            if op[0] == "cx" and abs(op[1] - op[2]) != 1:
                raise CircuitError(f"CNOT{op[1:]} is not nearest-neighbour")
            if op[0] not in ("ry", "cx"):
                raise CircuitError(f"layout entry {op!r} is neither RY nor CNOT")

    def circuit(self) -> Circuit:
        gates = []
        for op in self.layout:
            if op[0] == "ry":
                gates.append(RY(op[1], op[2]))
            else:
                gates.append(CNOT(op[1], op[2]))
        return Circuit(self.n_qubits, tuple(gates), self.n_params)


# ("ry", qubit, parameter) / ("cx", control, target)
LAYOUTS = {
    2: AnsatzSpec(2, 3, (("ry", 0, 0), ("cx", 0, 1), ("ry", 0, 1), ("ry", 1, 2))),
    # Found by screening nearest-neighbour layouts with 7 RY / 5 CNOT for
    # fast plain gradient descent from zero angles on the 6-site problem.
    3: AnsatzSpec(
        3,
        7,
        (
            ("ry", 0, 0),
            ("ry", 1, 1),
            ("ry", 2, 2),
            ("cx", 0, 1),
            ("cx", 1, 2),
            ("ry", 0, 3),
            ("ry", 1, 4),
            ("ry", 2, 5),
            ("cx", 1, 2),
            ("cx", 1, 0),
            ("cx", 2, 1),
            ("ry", 1, 6),
        ),
    ),
}


def build_ansatz(n_qubits: int) -> Circuit:
    if n_qubits not in LAYOUTS:
        raise CircuitError(f"no ansatz for {n_qubits} qubits (supported: 2, 3)")
    return LAYOUTS[n_qubits].circuit()


def amplitudes_real_check(circuit: Circuit, params=None, *, samples: int = 100, seed: int = 0) -> bool:
    """True when every sampled output state has ``max |Im a| < 1e-10``.

    ``params`` adds one explicit point to the random sample.
    """
    rng = np.random.default_rng(seed)
    points = [rng.uniform(-np.pi, np.pi, circuit.n_params) for _ in range(samples)]
    if params is not None:
        points.append(np.asarray(params, dtype=float))
    for p in points:
        psi = run(circuit, p).data
        if np.max(np.abs(psi.imag)) >= 1e-10:
            return False
    return True
