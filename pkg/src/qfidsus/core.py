"""Statevector / density-matrix simulation of small parametrized circuits.

Qubit 0 is the most significant bit of a basis-state index, so the
computational state ``|q0 q1 ... q_{n-1}>`` has index ``int("q0q1...", 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from ._kernels import kernels

MAX_WIDTH = 7

ROTATIONS = ("RX", "RY", "RZ")
FIXED_1Q = ("H", "X")
GATE_ARITY = {
    "RX": 1,
    "RY": 1,
    "RZ": 1,
    "H": 1,
    "X": 1,
    "CNOT": 2,
    "SWAP": 2,
    "CRY": 2,
    "CSWAP": 3,
}
PARAMETRIC = ("RX", "RY", "RZ", "CRY")


class CircuitError(ValueError):
    """Malformed circuit, parameter vector or observable."""


@dataclass(frozen=True)
class Gate:
    """One gate.

    The rotation angle of a parametric gate is ``coeff * params[param] + angle``
    when ``param`` is set, otherwise the bound constant ``angle``.
    """

    kind: str
    qubits: tuple[int, ...]
    angle: float = 0.0
    param: int | None = None
    coeff: int = 1

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != GATE_ARITY[self.kind]:
            raise CircuitError(f"{self.kind} acts on {GATE_ARITY[self.kind]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"repeated qubit in {self.kind}{self.qubits}")
        if self.coeff not in (1, -1):
            raise CircuitError("symbolic angle coefficient must be +1 or -1")
        if self.param is not None and self.kind not in PARAMETRIC:
            raise CircuitError(f"{self.kind} takes no angle")

    @property
    def symbolic(self) -> bool:
        return self.param is not None

    def value(self, params: Sequence[float]) -> float:
        if self.param is None:
            return self.angle
        return self.coeff * params[self.param] + self.angle

    def bind(self, params: Sequence[float]) -> "Gate":
        if self.param is None:
            return self
        return Gate(self.kind, self.qubits, float(self.value(params)))

    def dagger(self) -> "Gate":
        if self.kind in PARAMETRIC:
            return Gate(self.kind, self.qubits, -self.angle, self.param, -self.coeff)
        return self


# convenience constructors ------------------------------------------------


def RY(q: int, param: int | None = None, angle: float = 0.0) -> Gate:
    return Gate("RY", (q,), angle, param)


def RX(q: int, param: int | None = None, angle: float = 0.0) -> Gate:
    return Gate("RX", (q,), angle, param)


def RZ(q: int, param: int | None = None, angle: float = 0.0) -> Gate:
    return Gate("RZ", (q,), angle, param)


def H(q: int) -> Gate:
    return Gate("H", (q,))


def X(q: int) -> Gate:
    return Gate("X", (q,))


def CNOT(c: int, t: int) -> Gate:
    return Gate("CNOT", (c, t))


def SWAP(a: int, b: int) -> Gate:
    return Gate("SWAP", (a, b))


def CSWAP(c: int, a: int, b: int) -> Gate:
    return Gate("CSWAP", (c, a, b))


def CRY(c: int, t: int, param: int | None = None, angle: float = 0.0) -> Gate:
    return Gate("CRY", (c, t), angle, param)


@dataclass(frozen=True)
class Circuit:
    width: int
    gates: tuple[Gate, ...] = ()
    n_params: int = 0

    def __post_init__(self):
        if self.width < 1:
            raise CircuitError("circuit width must be >= 1")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits) >= self.width or min(g.qubits) < 0:
                raise CircuitError(f"{g.kind}{g.qubits} outside width {self.width}")
            if g.param is not None and not 0 <= g.param < self.n_params:
                raise CircuitError(f"parameter index {g.param} >= n_params={self.n_params}")

    def __len__(self) -> int:
        return len(self.gates)

    def __hash__(self) -> int:
        # used as a cache key on every evaluation; gates tuples can be long
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.width, self.gates, self.n_params))
            object.__setattr__(self, "_hash", h)
        return h

    def bind(self, params: Sequence[float]) -> "Circuit":
        """Replace symbolic angles by numbers; the result has no parameters."""
        self.check_params(params)
        return Circuit(self.width, tuple(g.bind(params) for g in self.gates), 0)

    def dagger(self) -> "Circuit":
        return Circuit(self.width, tuple(g.dagger() for g in reversed(self.gates)), self.n_params)

    def then(self, other: "Circuit") -> "Circuit":
        """``other`` applied after ``self``; parameter spaces are shared."""
        if other.width != self.width:
            raise CircuitError("width mismatch")
        return Circuit(self.width, self.gates + other.gates, max(self.n_params, other.n_params))

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)

    def native_cnot_count(self) -> int:
        """Number of CNOTs after decomposition into the native gate set."""
        return sum(1 for op in _native_program(self) if op[0] == "CNOT")

    def check_params(self, params: Sequence[float]) -> None:
        if len(params) != self.n_params:
            raise CircuitError(f"expected {self.n_params} parameters, got {len(params)}")


def toffoli_network(c1: int, c2: int, t: int) -> list[Gate]:
    """Standard 6-CNOT Toffoli; T gates realised as RZ(pi/4) (global phase only)."""
    T = math.pi / 4
    return [
        H(t),
        CNOT(c2, t),
        RZ(t, angle=-T),
        CNOT(c1, t),
        RZ(t, angle=T),
        CNOT(c2, t),
        RZ(t, angle=-T),
        CNOT(c1, t),
        RZ(c2, angle=T),
        RZ(t, angle=T),
        H(t),
        CNOT(c1, c2),
        RZ(c1, angle=T),
        RZ(c2, angle=-T),
        CNOT(c1, c2),
    ]


@lru_cache(maxsize=4096)
def _native_program(circuit: Circuit) -> tuple[tuple, ...]:
    """Lower a circuit to (kind, qubits, param, coeff, angle, scale) ops over
    the native set {RX, RY, RZ, H, X, CNOT}."""
    ops: list[tuple] = []

    def emit(g: Gate, scale: float = 1.0, sign: int = 1):
        ops.append((g.kind, g.qubits, g.param, sign * g.coeff, sign * g.angle, scale))

    for g in circuit.gates:
        if g.kind in ROTATIONS or g.kind in FIXED_1Q or g.kind == "CNOT":
            emit(g)
        elif g.kind == "SWAP":
            a, b = g.qubits
            for h in (CNOT(a, b), CNOT(b, a), CNOT(a, b)):
                emit(h)
        elif g.kind == "CSWAP":
            c, a, b = g.qubits
            emit(CNOT(b, a))
            for h in toffoli_network(c, a, b):
                emit(h)
            emit(CNOT(b, a))
        elif g.kind == "CRY":
            c, t = g.qubits
            ry = Gate("RY", (t,), g.angle, g.param, g.coeff)
            emit(ry, 0.5)
            emit(CNOT(c, t))
            emit(ry, 0.5, -1)
            emit(CNOT(c, t))
        else:  # pragma: no cover - guarded by Gate validation
            raise CircuitError(g.kind)
    return tuple(ops)


_HAD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_PX = np.array([[0, 1], [1, 0]], dtype=complex)


def gate_matrix(kind: str, theta: float = 0.0) -> np.ndarray:
    if kind == "RY":
        c, s = math.cos(theta / 2), math.sin(theta / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RX":
        c, s = math.cos(theta / 2), math.sin(theta / 2)
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RZ":
        e = complex(math.cos(theta / 2), math.sin(theta / 2))
        return np.array([[e.conjugate(), 0], [0, e]], dtype=complex)
    if kind == "H":
        return _HAD
    if kind == "X":
        return _PX
    raise CircuitError(f"no 2x2 matrix for {kind}")


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PauliString:
    ops: str

    def __post_init__(self):
        if not self.ops or set(self.ops) - set("IXYZ"):
            raise CircuitError(f"bad Pauli string {self.ops!r}")

    @property
    def width(self) -> int:
        return len(self.ops)

    @classmethod
    def from_sites(cls, width: int, sites: dict[int, str]) -> "PauliString":
        ops = ["I"] * width
        for q, p in sites.items():
            ops[q] = p
        return cls("".join(ops))

    @property
    def is_identity(self) -> bool:
        return set(self.ops) == {"I"}

    def masks(self) -> tuple[int, int, int]:
        """(x-mask, z-mask, number of Y) in basis-index bit positions."""
        n = self.width
        x = z = ny = 0
        for q, p in enumerate(self.ops):
            bit = 1 << (n - 1 - q)
            if p in "XY":
                x |= bit
            if p in "ZY":
                z |= bit
            if p == "Y":
                ny += 1
        return x, z, ny

    def matrix(self) -> np.ndarray:
        single = {
            "I": np.eye(2),
            "X": np.array([[0, 1], [1, 0]]),
            "Y": np.array([[0, -1j], [1j, 0]]),
            "Z": np.diag([1, -1]),
        }
        out = np.array([[1.0 + 0j]])
        for p in self.ops:
            out = np.kron(out, single[p])
        return out

    def label(self) -> str:
        parts = [f"{p}({q})" for q, p in enumerate(self.ops) if p != "I"]
        return " ".join(parts) if parts else "I"

    def __str__(self) -> str:
        return self.ops


@dataclass(frozen=True)
class PauliTerm:
    coeff: float
    pauli: PauliString
    part: str = "H0"


@dataclass(frozen=True)
class PauliObservable:
    """Weighted sum of Pauli strings, each tagged as part of H0 or H1."""

    terms: tuple[PauliTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        widths = {t.pauli.width for t in self.terms}
        if len(widths) > 1:
            raise CircuitError("mixed widths in observable")
        seen = set()
        for t in self.terms:
            if not math.isfinite(t.coeff):
                raise CircuitError("non-finite coefficient")
            if t.part not in ("H0", "H1"):
                raise CircuitError(f"unknown partition {t.part!r}")
            key = (t.part, t.pauli.ops)
            if key in seen:
                raise CircuitError(f"duplicate term {t.pauli.ops} in {t.part}")
            seen.add(key)

    @classmethod
    def from_terms(cls, items: Iterable[tuple[float, str]], part: str = "H0") -> "PauliObservable":
        return cls(tuple(PauliTerm(float(c), PauliString(p), part) for c, p in items))

    @property
    def width(self) -> int:
        if not self.terms:
            raise CircuitError("empty observable has no width")
        return self.terms[0].pauli.width

    def __len__(self) -> int:
        return len(self.terms)

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash(self.terms)
            object.__setattr__(self, "_hash", h)
        return h

    def part(self, name: str) -> "PauliObservable":
        return PauliObservable(tuple(t for t in self.terms if t.part == name))

    def at(self, r: float) -> "PauliObservable":
        """H0 + r*H1 as a single-partition observable; equal strings merged."""
        merged: dict[str, float] = {}
        for t in self.terms:
            c = t.coeff * (r if t.part == "H1" else 1.0)
            merged[t.pauli.ops] = merged.get(t.pauli.ops, 0.0) + c
        return PauliObservable(tuple(PauliTerm(c, PauliString(p)) for p, c in merged.items() if c != 0.0))

    def __add__(self, other: "PauliObservable") -> "PauliObservable":
        return PauliObservable(self.terms + other.terms)

    def coeffs(self) -> np.ndarray:
        return np.array([t.coeff for t in self.terms])

    def mask_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _mask_arrays(tuple(t.pauli.ops for t in self.terms))

    def matrix(self, r: float | None = None) -> np.ndarray:
        obs = self if r is None else self.at(r)
        dim = 1 << obs.width
        out = np.zeros((dim, dim), dtype=complex)
        for t in obs.terms:
            out += t.coeff * t.pauli.matrix()
        return out


@lru_cache(maxsize=256)
def _mask_arrays(strings: tuple[str, ...]):
    m = [PauliString(s).masks() for s in strings]
    return (
        np.array([a for a, _, _ in m], dtype=np.int64),
        np.array([b for _, b, _ in m], dtype=np.int64),
        np.array([c for _, _, c in m], dtype=np.int64),
    )


# --------------------------------------------------------------------------
# states, noise, estimates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Symmetric depolarizing noise: with probability p the acted-on qubits are
    replaced by the maximally mixed state after each single-/two-qubit gate."""

    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        for p in (self.p1, self.p2):
            if not 0.0 <= p <= 1.0:
                raise CircuitError(f"depolarizing probability {p} outside [0, 1]")

    @property
    def noiseless(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0


NOISELESS = NoiseModel()
DEFAULT_NOISE = NoiseModel(2e-4, 8e-3)


@dataclass(frozen=True)
class Estimate:
    value: float
    variance: float = 0.0
    shots: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("negative variance")
        if self.shots == 0 and self.variance != 0:
            raise ValueError("analytic estimate (shots=0) must have zero variance")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class QuantumState:
    data: np.ndarray
    width: int

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    def density_matrix(self) -> np.ndarray:
        if self.kind == "mixed":
            return self.data
        return np.outer(self.data, self.data.conj())

    def term_expectations(self, obs: PauliObservable) -> np.ndarray:
        """``<P_k>`` for every term of ``obs`` (coefficients not applied)."""
        if obs.width != self.width:
            raise CircuitError(f"observable width {obs.width} != state width {self.width}")
        xm, zm, ny = obs.mask_arrays()
        if self.kind == "pure":
            return kernels.sv_pauli_expvals(self.data, xm, zm, ny)
        return kernels.dm_pauli_expvals(self.data, xm, zm, ny)

    def expectation(self, obs: PauliObservable) -> float:
        return float(obs.coeffs() @ self.term_expectations(obs))

    def probabilities(self) -> np.ndarray:
        if self.kind == "pure":
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()

    def check(self, tol: float = 1e-12) -> None:
        if self.kind == "pure":
            if abs(np.linalg.norm(self.data) - 1.0) > tol:
                raise AssertionError("state not normalised")
            return
        rho = self.data
        if abs(np.trace(rho) - 1.0) > tol:
            raise AssertionError("trace != 1")
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise AssertionError("density matrix not Hermitian")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
            raise AssertionError("density matrix not positive")


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------


def run(
    circuit: Circuit,
    params: Sequence[float] = (),
    noise: NoiseModel = NOISELESS,
    *,
    mixed: bool | None = None,
    check: bool = False,
) -> QuantumState:
    """Evolve ``|0...0>`` through ``circuit``.

    A pure state is returned for noiseless runs unless ``mixed=True``.  With
    ``check=True`` the normalisation/trace invariants are verified after every
    native gate.
    """
    circuit.check_params(params)
    n = circuit.width
    if n > MAX_WIDTH:
        raise CircuitError(f"width {n} exceeds the {MAX_WIDTH}-qubit limit")
    if mixed is None:
        mixed = not noise.noiseless
    elif not mixed and not noise.noiseless:
        raise CircuitError("noisy simulation requires the mixed representation")
    dim = 1 << n
    program = _native_program(circuit)
    if mixed:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        state = QuantumState(rho, n)
        p1, p2 = noise.p1, noise.p2
        for kind, qubits, param, coeff, angle, scale in program:
            if kind == "CNOT":
                kernels.dm_apply_cnot(rho, qubits[0], qubits[1], n)
                kernels.dm_depolarize_2q(rho, p2, qubits[0], qubits[1], n)
            else:
                theta = angle if param is None else coeff * params[param] + angle
                kernels.dm_apply_1q(rho, gate_matrix(kind, scale * theta), qubits[0], n)
                kernels.dm_depolarize_1q(rho, p1, qubits[0], n)
            if check:
                state.check()
        return state
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    state = QuantumState(psi, n)
    for kind, qubits, param, coeff, angle, scale in program:
        if kind == "CNOT":
            kernels.sv_apply_cnot(psi, qubits[0], qubits[1], n)
        else:
            theta = angle if param is None else coeff * params[param] + angle
            kernels.sv_apply_1q(psi, gate_matrix(kind, scale * theta), qubits[0], n)
        if check:
            state.check()
    return state


def measurement_rotation(pauli: PauliString) -> list[Gate]:
    """Gates mapping the eigenbasis of ``pauli`` onto the computational basis
    (X via H, Y via S^dagger then H; S^dagger as RZ(-pi/2))."""
    gates = []
    for q, p in enumerate(pauli.ops):
        if p == "X":
            gates.append(H(q))
        elif p == "Y":
            gates.extend([RZ(q, angle=-math.pi / 2), H(q)])
    return gates


def _check_width(circuit: Circuit, obs: PauliObservable) -> None:
    if obs.width != circuit.width:
        raise CircuitError(f"observable width {obs.width} != circuit width {circuit.width}")


def expectation_exact(
    circuit: Circuit, params: Sequence[float], obs: PauliObservable, noise: NoiseModel = NOISELESS
) -> float:
    _check_width(circuit, obs)
    return run(circuit, params, noise).expectation(obs)


def _as_rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def sample_pauli_terms(
    expvals: np.ndarray, identity: np.ndarray, shots: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Binomial readout of +/-1 outcomes, one independent sample per term.

    Returns per-term estimates and their variances ``(1 - v^2)/shots``.
    Identity terms are exact.
    """
    if shots < 1:
        raise CircuitError("shots must be >= 1")
    p_plus = np.clip(0.5 * (1.0 + np.asarray(expvals)), 0.0, 1.0)
    counts = rng.binomial(shots, p_plus)
    values = 2.0 * counts / shots - 1.0
    values = np.where(identity, 1.0, values)
    variances = np.where(identity, 0.0, (1.0 - values**2) / shots)
    return values, variances


def identity_mask(obs: PauliObservable) -> np.ndarray:
    return np.array([t.pauli.is_identity for t in obs.terms], dtype=bool)


def expectation_sampled(
    circuit: Circuit,
    params: Sequence[float],
    obs: PauliObservable,
    noise: NoiseModel = NOISELESS,
    shots: int = 8192,
    rng_seed=None,
) -> Estimate:
    _check_width(circuit, obs)
    if shots < 1:
        raise CircuitError("shots must be >= 1")
    expvals = run(circuit, params, noise).term_expectations(obs)
    values, variances = sample_pauli_terms(expvals, identity_mask(obs), shots, _as_rng(rng_seed))
    c = obs.coeffs()
    return Estimate(float(c @ values), float(c**2 @ variances), shots)


def sample_probability(p: float, shots: int, rng: np.random.Generator) -> Estimate:
    if shots < 1:
        raise CircuitError("shots must be >= 1")
    p = min(max(p, 0.0), 1.0)
    phat = rng.binomial(shots, p) / shots
    return Estimate(phat, phat * (1.0 - phat) / shots, shots)


def probability_all_zeros(
    circuit: Circuit,
    params: Sequence[float] = (),
    noise: NoiseModel = NOISELESS,
    shots: int = 0,
    rng_seed=None,
) -> Estimate:
    """Probability of reading ``0...0``; ``shots=0`` gives the exact value."""
    if shots < 0:
        raise CircuitError("shots must be >= 0")
    p = float(run(circuit, params, noise).probabilities()[0])
    if shots == 0:
        return Estimate(p)
    return sample_probability(p, shots, _as_rng(rng_seed))


def lower(circuit: Circuit) -> Circuit:
    """Rewrite a bound circuit over the native gate set {RX, RY, RZ, H, X, CNOT}."""
    if circuit.n_params:
        raise CircuitError("lower() needs a bound circuit")
    gates = []
    for kind, qubits, _, coeff, angle, scale in _native_program(circuit):
        if kind in ROTATIONS:
            gates.append(Gate(kind, qubits, scale * angle))
        else:
            gates.append(Gate(kind, qubits))
    return Circuit(circuit.width, tuple(gates), 0)


def relabel(circuit: Circuit, mapping: Sequence[int], width: int) -> Circuit:
    """Move qubit ``q`` to ``mapping[q]`` inside a register of ``width`` qubits."""
    if len(mapping) != circuit.width:
        raise CircuitError("mapping must cover every qubit")
    gates = tuple(
        Gate(g.kind, tuple(mapping[q] for q in g.qubits), g.angle, g.param, g.coeff) for g in circuit.gates
    )
    return Circuit(width, gates, circuit.n_params)


def run_batch(circuit: Circuit, param_rows: np.ndarray) -> np.ndarray:
    """Noiseless statevectors for many parameter vectors at once.

    Returns an array of shape ``(batch, 2**width)``.  Pure numpy; used where
    one circuit is evaluated at a whole stencil of shifted parameters.
    """
    rows = np.atleast_2d(np.asarray(param_rows, dtype=float))
    if rows.shape[1] != circuit.n_params:
        raise CircuitError(f"expected {circuit.n_params} parameters per row, got {rows.shape[1]}")
    n = circuit.width
    batch = rows.shape[0]
    psi = np.zeros((batch, 1 << n), dtype=complex)
    psi[:, 0] = 1.0
    for kind, qubits, param, coeff, angle, scale in _native_program(circuit):
        view = psi.reshape((batch,) + (2,) * n)
        if kind == "CNOT":
            c, t = qubits
            sel = [slice(None)] * (n + 1)
            sel[c + 1] = 1
            sub = view[tuple(sel)]
            ax = t if t < c else t - 1
            view[tuple(sel)] = np.flip(sub, axis=ax + 1).copy()
            continue
        q = qubits[0]
        if param is None:
            u = np.broadcast_to(gate_matrix(kind, scale * angle), (batch, 2, 2))
        else:
            thetas = scale * (coeff * rows[:, param] + angle)
            u = np.stack([gate_matrix(kind, t) for t in thetas])
        moved = np.moveaxis(view, q + 1, 1)
        out = np.einsum("bij,bj...->bi...", u, moved)
        psi = np.moveaxis(out, 1, q + 1).reshape(batch, 1 << n).copy()
    return psi
