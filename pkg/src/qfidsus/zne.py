"""Zero-noise extrapolation: folding, Richardson weights, variance bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .autodiff import (
    CircuitBatch,
    Combine,
    GradientResult,
    HessianResult,
    Leaf,
    Tape,
    Transform,
    _lincomb,
    grad_expectation,
    hessian_expectation,
)
from .core import Circuit, CircuitError, Estimate, lower

FOLDINGS = ("unitary", "cnot")
_NATIVE = {"RX", "RY", "RZ", "H", "X", "CNOT"}


def richardson_coefficients(scale_factors: Sequence[float]) -> np.ndarray:
    """Lagrange weights for extrapolating to zero:
    ``gamma_j = prod_{m != j} (-x_m) / (x_j - x_m)``."""
    xs = [float(x) for x in scale_factors]
    if not xs:
        raise ValueError("need at least one scale factor")
    if len(set(xs)) != len(xs):
        raise ValueError(f"duplicate scale factors in {xs}")
    gamma = []
    for j, xj in enumerate(xs):
        g = 1.0
        for m, xm in enumerate(xs):
            if m != j:
                g *= -xm / (xj - xm)
        gamma.append(g)
    return np.array(gamma)


def _check_scale(lam: int) -> int:
    if int(lam) != lam or lam < 1 or lam % 2 == 0:
        raise CircuitError(f"scale factor must be an odd integer >= 1, got {lam}")
    return int(lam)


def fold_unitary(circuit: Circuit, lam: int) -> Circuit:
    """``(U U^dagger)^((lam-1)/2) U``."""
    k = (_check_scale(lam) - 1) // 2
    inv = circuit.dagger()
    gates = (circuit.gates + inv.gates) * k + circuit.gates
    return Circuit(circuit.width, gates, circuit.n_params)


def fold_cnot(circuit: Circuit, lam: int) -> Circuit:
    """Every CNOT followed by ``(lam-1)/2`` CNOT pairs.

    Composite gates (SWAP, CSWAP, CRY) are lowered first so that the CNOTs
    inside them are amplified too; that needs a bound circuit.
    """
    k = (_check_scale(lam) - 1) // 2
    if any(g.kind not in _NATIVE for g in circuit.gates):
        circuit = lower(circuit)
    gates = []
    for g in circuit.gates:
        gates.append(g)
        if g.kind == "CNOT":
            gates.extend([g, g] * k)
    return Circuit(circuit.width, tuple(gates), circuit.n_params)


def fold(circuit: Circuit, lam: int, folding: str) -> Circuit:
    if folding == "unitary":
        return fold_unitary(circuit, lam)
    if folding == "cnot":
        return fold_cnot(circuit, lam)
    raise CircuitError(f"unknown folding {folding!r}")


@dataclass(frozen=True)
class MitigationPlan:
    scale_factors: tuple[int, ...] = (1,)
    folding: str = "unitary"
    shots_per_scale: int = 8192

    def __post_init__(self):
        sf = tuple(int(_check_scale(x)) for x in self.scale_factors)
        object.__setattr__(self, "scale_factors", sf)
        if not sf or sf[0] != 1:
            raise ValueError("first scale factor must be 1")
        if any(b <= a for a, b in zip(sf, sf[1:])):
            raise ValueError("scale factors must be strictly increasing")
        if self.folding not in FOLDINGS:
            raise ValueError(f"folding must be one of {FOLDINGS}")
        if self.shots_per_scale < 1:
            raise ValueError("shots_per_scale must be >= 1")

    @classmethod
    def of_order(cls, n: int, folding: str = "unitary", shots_per_scale: int = 8192) -> "MitigationPlan":
        """Scale factors 1, 3, ..., 2n+1."""
        return cls(tuple(2 * j + 1 for j in range(n + 1)), folding, shots_per_scale)

    @cached_property
    def gamma(self) -> np.ndarray:
        return richardson_coefficients(self.scale_factors)

    @property
    def order(self) -> int:
        return len(self.scale_factors) - 1

    def label(self) -> str:
        return "(" + ",".join(str(x) for x in self.scale_factors) + ")"


@dataclass(frozen=True)
class MitigatedEstimate:
    value: float
    variance: float
    components: tuple[Estimate, ...]


def mitigate(plan: MitigationPlan | Sequence[float], estimates: Sequence[Estimate]) -> MitigatedEstimate:
    """``sum_j gamma_j E_j`` with variance ``sum_j gamma_j^2 s_j^2`` (ascending j)."""
    gamma = plan.gamma if isinstance(plan, MitigationPlan) else np.asarray(plan, dtype=float)
    if len(gamma) != len(estimates):
        raise ValueError(f"{len(gamma)} scale factors but {len(estimates)} estimates")
    value = _lincomb(gamma, [e.value for e in estimates])
    var = _lincomb(gamma * gamma, [e.variance for e in estimates])
    return MitigatedEstimate(float(value), float(var), tuple(estimates))


class Fold(Transform):
    """Batch transform: one bound, folded tape per scale factor."""

    stage = 2

    def __init__(self, plan: MitigationPlan):
        self.plan = plan

    def __call__(self, tape: Tape) -> CircuitBatch:
        bound = tape.circuit.bind(tape.params)
        tapes = tuple(Tape(fold(bound, lam, self.plan.folding), (), tape.measurement) for lam in self.plan.scale_factors)
        return CircuitBatch(tapes, Combine(tuple(self.plan.gamma), tuple(Leaf(k) for k in range(len(tapes)))))


class FoldedEstimator:
    """Binds, folds at one scale, then defers to ``base``."""

    def __init__(self, base, lam: int, folding: str = "unitary"):
        self.base = base
        self.lam = _check_scale(lam)
        self.folding = folding
        self._exact: dict = {}

    def exact_values(self, circuit, params, measurement):
        key = (circuit, tuple(float(p) for p in params), measurement)
        hit = self._exact.get(key)
        if hit is None:
            folded = fold(circuit.bind(params), self.lam, self.folding)
            hit = self._exact[key] = self.base.exact_values(folded, (), measurement)
        return hit

    def evaluate(self, circuit, params, measurement):
        return self.base.sample(self.exact_values(circuit, params, measurement), measurement)


class MitigatedEstimator:
    """Richardson-extrapolated evaluation of every circuit it is handed.

    Each Pauli term is extrapolated on its own; per-term variances are
    ``sum_j gamma_j^2 s_j^2``.
    """

    def __init__(self, base, plan: MitigationPlan):
        if getattr(base, "shots", 0) not in (0, plan.shots_per_scale):
            raise ValueError("base estimator shots differ from plan.shots_per_scale")
        self.base = base
        self.plan = plan
        self.folded = [FoldedEstimator(base, lam, plan.folding) for lam in plan.scale_factors]

    @property
    def shots(self) -> int:
        return getattr(self.base, "shots", 0)

    def evaluate(self, circuit, params, measurement):
        parts = [f.evaluate(circuit, params, measurement) for f in self.folded]
        gamma = self.plan.gamma
        values = _lincomb(gamma, [v for v, _ in parts])
        variances = _lincomb(gamma * gamma, [s for _, s in parts])
        return np.asarray(values, dtype=float), np.maximum(np.asarray(variances, dtype=float), 0.0)


def mitigated_gradient(circuit, params, obs, plan: MitigationPlan, estimator) -> GradientResult:
    """Gradient in which every shifted circuit is extrapolated separately."""
    return grad_expectation(circuit, params, obs, MitigatedEstimator(estimator, plan))


def mitigated_hessian(circuit, params, obs, plan: MitigationPlan, estimator) -> HessianResult:
    return hessian_expectation(circuit, params, obs, MitigatedEstimator(estimator, plan))


def gradient_then_mitigate(circuit, params, obs, plan: MitigationPlan, estimator) -> GradientResult:
    """The other order: one full gradient per scale factor, then extrapolate."""
    grads = [grad_expectation(circuit, params, obs, f) for f in MitigatedEstimator(estimator, plan).folded]
    gamma = plan.gamma
    values = _lincomb(gamma, [g.values for g in grads])
    variances = _lincomb(gamma * gamma, [g.variances for g in grads])
    return GradientResult(np.asarray(values), np.asarray(variances), sum(g.evaluations for g in grads))


def required_shots(N: int, baseline_variance: float, scale_variances: Sequence[float], gamma) -> int:
    """Smallest M with ``M >= (N / s^2) sum_j gamma_j^2 s_j^2``."""
    if baseline_variance <= 0:
        raise ValueError("baseline variance must be positive")
    scale_variances = np.asarray(scale_variances, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if scale_variances.shape != gamma.shape:
        raise ValueError("one variance per scale factor")
    if np.any(scale_variances <= 0):
        raise ValueError("per-scale variances must be positive")
    m = N / baseline_variance * float(_lincomb(gamma * gamma, scale_variances))
    return int(math.ceil(round(m, 9)))


@dataclass(frozen=True)
class MitigationError:
    per_trial_mean: float
    of_mean: float


def absolute_mitigation_error(values: Sequence[float], exact: float) -> MitigationError:
    """Mean of per-trial ``|v - exact|`` and ``|mean(v) - exact|``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one trial")
    return MitigationError(float(np.mean(np.abs(v - exact))), float(abs(np.mean(v) - exact)))
