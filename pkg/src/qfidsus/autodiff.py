"""Parameter-shift derivatives of circuit expectation values.

Two measurement kinds are supported everywhere: a :class:`PauliObservable`
(per-term expectation values, combined with the term coefficients) and
``ZEROS``, the probability of reading ``|0...0>``.

Estimators are plain strategy objects.  ``exact_values`` returns the exact
per-term numbers for a circuit (cached), ``sample`` turns them into
``(values, variances)``; ``evaluate`` does both.  Differentiation never
looks inside an estimator, so the same code serves exact, shot-sampled and
ZNE-mitigated evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    NOISELESS,
    Circuit,
    CircuitError,
    NoiseModel,
    PauliObservable,
    PauliTerm,
    identity_mask,
    run,
    sample_pauli_terms,
)

ZEROS = None  # measurement tag: probability of the all-zeros outcome
HALF_PI = math.pi / 2


def _lincomb(coeffs, values):
    """Sequential ``sum c_k * v_k`` from 0.0.

    Every linear recombination in the package goes through here, so two
    code paths that nest the same sums in the same order agree bit for bit.
    """
    acc = 0.0
    for c, v in zip(coeffs, values):
        acc = acc + c * v
    return acc


def measurement_coeffs(measurement) -> np.ndarray:
    if measurement is ZEROS:
        return np.ones(1)
    return measurement.coeffs()


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------


def _measure(state, measurement) -> np.ndarray:
    if measurement is ZEROS:
        return np.array([state.probabilities()[0]])
    return state.term_expectations(measurement)


class ExactEstimator:
    """Exact expectation values (density matrix when noisy)."""

    shots = 0

    def __init__(self, noise: NoiseModel = NOISELESS, cache: dict | None = None):
        self.noise = noise
        self.cache = {} if cache is None else cache

    def exact_values(self, circuit: Circuit, params: Sequence[float], measurement) -> np.ndarray:
        key = (circuit, tuple(float(p) for p in params), self.noise, measurement)
        hit = self.cache.get(key)
        if hit is None:
            if measurement is not ZEROS and measurement.width != circuit.width:
                raise CircuitError(f"observable width {measurement.width} != circuit width {circuit.width}")
            hit = _measure(run(circuit, params, self.noise), measurement)
            self.cache[key] = hit
        return hit

    def sample(self, exact: np.ndarray, measurement):
        return exact, np.zeros_like(exact)

    def evaluate(self, circuit: Circuit, params: Sequence[float], measurement):
        return self.sample(self.exact_values(circuit, params, measurement), measurement)


class SampledEstimator(ExactEstimator):
    """Binomial shot noise on top of exact values; one independent sample
    per Pauli term."""

    def __init__(
        self,
        noise: NoiseModel = NOISELESS,
        shots: int = 8192,
        rng: np.random.Generator | int | None = None,
        cache: dict | None = None,
    ):
        super().__init__(noise, cache)
        if shots < 1:
            raise CircuitError("shots must be >= 1")
        self.shots = int(shots)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._identity: dict = {}

    def with_rng(self, rng) -> "SampledEstimator":
        """Same noise/shots/cache, fresh random stream."""
        return SampledEstimator(self.noise, self.shots, rng, self.cache)

    def sample(self, exact: np.ndarray, measurement):
        if measurement is ZEROS:
            p = min(max(float(exact[0]), 0.0), 1.0)
            phat = self.rng.binomial(self.shots, p) / self.shots
            return np.array([phat]), np.array([phat * (1.0 - phat) / self.shots])
        ident = self._identity.get(measurement)
        if ident is None:
            ident = self._identity[measurement] = identity_mask(measurement)
        return sample_pauli_terms(exact, ident, self.shots, self.rng)


# --------------------------------------------------------------------------
# shift rules
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftRule:
    """``d f / d theta = sum_k w_k f(theta + s_k * pi/2)``.

    Shifts are integers (units of pi/2) reduced modulo ``period``, the
    period of ``f`` in the same units.
    """

    terms: tuple[tuple[float, int], ...]
    period: int

    def reduce(self, s: int) -> int:
        s %= self.period
        return s - self.period if s > self.period // 2 else s

    def second(self) -> "ShiftRule":
        """Rule for the second derivative: the first-order rule applied twice."""
        merged: dict[int, float] = {}
        for w1, s1 in self.terms:
            for w2, s2 in self.terms:
                s = self.reduce(s1 + s2)
                merged[s] = merged.get(s, 0.0) + w1 * w2
        return ShiftRule(tuple((w, s) for s, w in merged.items() if abs(w) > 1e-15), self.period)


TWO_TERM = ShiftRule(((0.5, 1), (-0.5, -1)), 4)
# Controlled rotations have generator eigenvalues {0, +-1/2}; four terms are needed.
_C_PLUS = (math.sqrt(2) + 1) / (4 * math.sqrt(2))
_C_MINUS = (math.sqrt(2) - 1) / (4 * math.sqrt(2))
FOUR_TERM = ShiftRule(((_C_PLUS, 1), (-_C_PLUS, -1), (-_C_MINUS, 3), (_C_MINUS, -3)), 8)
NO_DEPENDENCE = ShiftRule((), 4)

_RULES = {"RX": TWO_TERM, "RY": TWO_TERM, "RZ": TWO_TERM, "CRY": FOUR_TERM}


def shift_rules(circuit: Circuit) -> tuple[ShiftRule, ...]:
    """One rule per parameter; each parameter may drive at most one gate."""
    rules: list[ShiftRule | None] = [None] * circuit.n_params
    for g in circuit.gates:
        if g.param is None:
            continue
        if rules[g.param] is not None:
            raise CircuitError(f"parameter {g.param} drives more than one gate")
        if g.kind not in _RULES:
            raise CircuitError(f"no shift rule for parameter in {g.kind}")
        rules[g.param] = _RULES[g.kind]
    return tuple(NO_DEPENDENCE if r is None else r for r in rules)


def gradient_stencils(circuit: Circuit) -> list[list[tuple[float, tuple[int, ...]]]]:
    n = circuit.n_params
    out = []
    for i, rule in enumerate(shift_rules(circuit)):
        out.append([(w, _unit(n, {i: s})) for w, s in rule.terms])
    return out


def hessian_stencils(circuit: Circuit) -> dict[tuple[int, int], list[tuple[float, tuple[int, ...]]]]:
    """Stencils for the upper triangle ``i <= j``."""
    n = circuit.n_params
    rules = shift_rules(circuit)
    out = {}
    for i in range(n):
        out[(i, i)] = [(w, _unit(n, {i: s})) for w, s in rules[i].second().terms]
        for j in range(i + 1, n):
            out[(i, j)] = [
                (wi * wj, _unit(n, {i: si, j: sj})) for wi, si in rules[i].terms for wj, sj in rules[j].terms
            ]
    return out


def _unit(n: int, shifts: dict[int, int]) -> tuple[int, ...]:
    u = [0] * n
    for i, s in shifts.items():
        u[i] = s
    return tuple(u)


def shifted(params: Sequence[float], units: tuple[int, ...]) -> tuple[float, ...]:
    return tuple(float(p) + u * HALF_PI if u else float(p) for p, u in zip(params, units))


def gradient_circuit_count(n_params: int, n_terms: int = 1) -> int:
    """Circuits for a two-term-rule gradient."""
    return 2 * n_params * n_terms


def hessian_circuit_count(n_params: int, n_terms: int = 1) -> int:
    """Circuits for a two-term-rule Hessian with one shared unshifted circuit."""
    return n_terms * (1 + n_params + 4 * (n_params * (n_params - 1) // 2))


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientResult:
    values: np.ndarray
    variances: np.ndarray
    evaluations: int = 0

    def __post_init__(self):
        if self.values.shape != self.variances.shape or self.values.ndim != 1:
            raise ValueError("values/variances must be equal-length vectors")
        if np.any(self.variances < 0):
            raise ValueError("negative variance")


@dataclass(frozen=True)
class HessianResult:
    values: np.ndarray
    variances: np.ndarray
    evaluations: int = 0

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape != self.variances.shape:
            raise ValueError("Hessian must be square with matching variances")
        if not np.array_equal(v, v.T):
            raise ValueError("Hessian values must be exactly symmetric")
        if np.any(self.variances < 0):
            raise ValueError("negative variance")


# --------------------------------------------------------------------------
# direct differentiation
# --------------------------------------------------------------------------


class _PointCache:
    """Evaluates each distinct shifted point once, in first-request order."""

    def __init__(self, circuit, params, measurement, estimator):
        self.circuit = circuit
        self.params = tuple(float(p) for p in params)
        self.measurement = measurement
        self.estimator = estimator
        self.points: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}

    def __call__(self, units):
        hit = self.points.get(units)
        if hit is None:
            hit = self.estimator.evaluate(self.circuit, shifted(self.params, units), self.measurement)
            self.points[units] = hit
        return hit


def _apply_stencil(stencil, points: _PointCache, coeffs: np.ndarray) -> tuple[float, float]:
    if not stencil:
        return 0.0, 0.0
    weights = [w for w, _ in stencil]
    evals = [points(u) for _, u in stencil]
    per_term = _lincomb(weights, [v for v, _ in evals])
    per_term_var = _lincomb([w * w for w in weights], [s for _, s in evals])
    value = _lincomb(coeffs, per_term)
    var = _lincomb(coeffs * coeffs, per_term_var)
    return float(value), max(float(var), 0.0)


def _default_estimator(estimator):
    return ExactEstimator() if estimator is None else estimator


def grad_expectation(circuit: Circuit, params, obs: PauliObservable, estimator=None) -> GradientResult:
    """Gradient of ``<obs>`` by parameter shifts; per-term variances add with
    squared weights (``1/4 (s+^2 + s-^2)`` for the two-term rule)."""
    circuit.check_params(params)
    estimator = _default_estimator(estimator)
    points = _PointCache(circuit, params, obs, estimator)
    coeffs = measurement_coeffs(obs)
    vals, vars_ = [], []
    for stencil in gradient_stencils(circuit):
        v, s = _apply_stencil(stencil, points, coeffs)
        vals.append(v)
        vars_.append(s)
    return GradientResult(np.array(vals), np.array(vars_), len(points.points) * len(coeffs))


def hessian_expectation(circuit: Circuit, params, obs: PauliObservable, estimator=None) -> HessianResult:
    """Hessian of ``<obs>``.

    Diagonal: ``1/2 [f(t + pi) - f(t)]`` for two-term gates, with ``f(t)``
    evaluated once and shared.  Off-diagonal: the four-point product rule,
    computed once for ``i < j`` and mirrored.
    """
    circuit.check_params(params)
    estimator = _default_estimator(estimator)
    n = circuit.n_params
    points = _PointCache(circuit, params, obs, estimator)
    coeffs = measurement_coeffs(obs)
    h = np.zeros((n, n))
    hv = np.zeros((n, n))
    for (i, j), stencil in hessian_stencils(circuit).items():
        v, s = _apply_stencil(stencil, points, coeffs)
        h[i, j] = h[j, i] = v
        hv[i, j] = hv[j, i] = s
    return HessianResult(h, hv, len(points.points) * len(coeffs))


def grad_probability(circuit: Circuit, params, estimator=None) -> GradientResult:
    return grad_expectation(circuit, params, ZEROS, estimator)


def hessian_probability(circuit: Circuit, params, estimator=None) -> HessianResult:
    return hessian_expectation(circuit, params, ZEROS, estimator)


# --------------------------------------------------------------------------
# batch transforms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Tape:
    """A circuit, the parameter vector to run it at, and what to measure."""

    circuit: Circuit
    params: tuple[float, ...]
    measurement: PauliObservable | None = ZEROS


@dataclass(frozen=True)
class Leaf:
    index: int


@dataclass(frozen=True)
class Combine:
    coeffs: tuple[float, ...]
    children: tuple


@dataclass(frozen=True)
class Stack:
    children: tuple


@dataclass(frozen=True)
class CircuitBatch:
    tapes: tuple[Tape, ...]
    root: object = field(default=Leaf(0))

    def __post_init__(self):
        widths = {t.circuit.width for t in self.tapes}
        if len(widths) > 1:
            raise CircuitError("all circuits of a batch must share one width")

    def __len__(self) -> int:
        return len(self.tapes)


class Transform:
    stage = 0

    def __call__(self, tape: Tape) -> CircuitBatch:  # pragma: no cover - interface
        raise NotImplementedError


class ExpandHamiltonian(Transform):
    """One tape per Pauli term, recombined with the term coefficients."""

    stage = 0

    def __call__(self, tape: Tape) -> CircuitBatch:
        if tape.measurement is ZEROS:
            return CircuitBatch((tape,), Leaf(0))
        terms = tape.measurement.terms
        tapes = tuple(
            Tape(tape.circuit, tape.params, PauliObservable((PauliTerm(1.0, t.pauli, t.part),))) for t in terms
        )
        return CircuitBatch(tapes, Combine(tuple(t.coeff for t in terms), tuple(Leaf(k) for k in range(len(terms)))))


class _Shift(Transform):
    stage = 1

    def _batch(self, tape: Tape, stencils) -> tuple[list[Tape], dict]:
        if tape.measurement is not ZEROS and len(tape.measurement) != 1:
            raise CircuitError("expand the Hamiltonian before differentiating")
        index: dict[tuple[int, ...], int] = {}
        tapes: list[Tape] = []
        for stencil in stencils:
            for _, u in stencil:
                if u not in index:
                    index[u] = len(tapes)
                    tapes.append(Tape(tape.circuit, shifted(tape.params, u), tape.measurement))
        return tapes, index

    @staticmethod
    def _node(stencil, index):
        return Combine(tuple(w for w, _ in stencil), tuple(Leaf(index[u]) for _, u in stencil))


class ParamShiftGradient(_Shift):
    def __call__(self, tape: Tape) -> CircuitBatch:
        stencils = gradient_stencils(tape.circuit)
        tapes, index = self._batch(tape, stencils)
        return CircuitBatch(tuple(tapes), Stack(tuple(self._node(s, index) for s in stencils)))


class ParamShiftHessian(_Shift):
    def __call__(self, tape: Tape) -> CircuitBatch:
        n = tape.circuit.n_params
        stencils = hessian_stencils(tape.circuit)
        tapes, index = self._batch(tape, list(stencils.values()))
        rows = []
        for i in range(n):
            row = [self._node(stencils[(min(i, j), max(i, j))], index) for j in range(n)]
            rows.append(Stack(tuple(row)))
        return CircuitBatch(tuple(tapes), Stack(tuple(rows)))


def compose(tape: Tape, *transforms: Transform) -> CircuitBatch:
    """Apply transforms in order, flattening into one batch.

    Allowed order: Hamiltonian expansion, then differentiation, then folding.
    """
    stages = [t.stage for t in transforms]
    if stages != sorted(stages):
        raise CircuitError("transforms must run expansion -> differentiation -> folding")
    batch = CircuitBatch((tape,), Leaf(0))
    for tr in transforms:
        tapes: list[Tape] = []
        subs: list[object] = []
        for t in batch.tapes:
            sub = tr(t)
            subs.append(_offset(sub.root, len(tapes)))
            tapes.extend(sub.tapes)
        batch = CircuitBatch(tuple(tapes), _substitute(batch.root, subs))
    return batch


def _offset(node, k: int):
    if isinstance(node, Leaf):
        return Leaf(node.index + k)
    if isinstance(node, Combine):
        return Combine(node.coeffs, tuple(_offset(c, k) for c in node.children))
    return Stack(tuple(_offset(c, k) for c in node.children))


def _substitute(node, subs):
    if isinstance(node, Leaf):
        return subs[node.index]
    if isinstance(node, Combine):
        return Combine(node.coeffs, tuple(_substitute(c, subs) for c in node.children))
    return Stack(tuple(_substitute(c, subs) for c in node.children))


def execute(batch: CircuitBatch, estimator=None) -> tuple[np.ndarray, np.ndarray]:
    """Run every tape and fold the recombination tree.

    Returns ``(value, variance)`` arrays shaped like the tree (scalar,
    vector or matrix).  Variances assume independent leaves.
    """
    estimator = _default_estimator(estimator)
    leaves = []
    for t in batch.tapes:
        v, s = estimator.evaluate(t.circuit, t.params, t.measurement)
        leaves.append((v[0], s[0]))

    def walk(node):
        if isinstance(node, Leaf):
            return leaves[node.index]
        if isinstance(node, Combine):
            parts = [walk(c) for c in node.children]
            val = _lincomb(node.coeffs, [p[0] for p in parts])
            var = _lincomb([c * c for c in node.coeffs], [p[1] for p in parts])
            return val, var
        parts = [walk(c) for c in node.children]
        return np.array([p[0] for p in parts]), np.array([p[1] for p in parts])

    val, var = walk(batch.root)
    return np.asarray(val, dtype=float), np.asarray(var, dtype=float)
