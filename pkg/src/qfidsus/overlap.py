"""Overlap circuits: compute-uncompute, Hadamard test and swap test.

Register layout: the Hadamard and swap tests put their ancilla on qubit 0;
the data register(s) follow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import ZEROS, ExactEstimator, hessian_expectation
from .core import (
    CSWAP,
    RX,
    RY,
    Circuit,
    CircuitError,
    DEFAULT_NOISE,
    Estimate,
    Gate,
    H,
    NoiseModel,
    PauliObservable,
    relabel,
    toffoli_network,
)

METHODS = ("compute_uncompute", "hadamard_real", "hadamard_imag", "swap_test")
# methods whose measured value is |<f|i>|^2 (S uses half its Hessian)
_SQUARED = ("compute_uncompute", "swap_test")


@dataclass(frozen=True)
class OverlapJob:
    """``U_i`` is bound (no parameters); ``U_f`` carries the parameters."""

    U_i: Circuit
    U_f: Circuit
    method: str = "compute_uncompute"

    def __post_init__(self):
        if self.method not in METHODS:
            raise CircuitError(f"method must be one of {METHODS}")
        if self.U_i.width != self.U_f.width:
            raise CircuitError("U_i and U_f act on different widths")
        if self.U_i.n_params:
            raise CircuitError("U_i must be bound")

    @classmethod
    def from_ansatz(cls, ansatz: Circuit, theta_i: Sequence[float], method: str = "compute_uncompute"):
        return cls(ansatz.bind(theta_i), ansatz, method)

    @property
    def n(self) -> int:
        return self.U_i.width

    @property
    def width(self) -> int:
        if self.method == "compute_uncompute":
            return self.n
        if self.method == "swap_test":
            return 2 * self.n + 1
        return self.n + 1


def controlled(circuit: Circuit, control: int, mapping: Sequence[int], width: int) -> list[Gate]:
    """Controlled copy of an RY/CNOT circuit: RY -> CRY, CNOT -> Toffoli (6 CNOTs)."""
    out: list[Gate] = []
    for g in circuit.gates:
        qs = [mapping[q] for q in g.qubits]
        if g.kind == "RY":
            out.append(Gate("CRY", (control, qs[0]), g.angle, g.param, g.coeff))
        elif g.kind == "CNOT":
            out.extend(toffoli_network(control, qs[0], qs[1]))
        else:
            raise CircuitError(f"cannot control {g.kind}; only RY and CNOT are supported")
    return out


def build_overlap_circuit(job: OverlapJob) -> Circuit:
    n = job.n
    if job.method == "compute_uncompute":
        return job.U_i.then(job.U_f.dagger())
    if job.method == "swap_test":
        a = relabel(job.U_i, range(1, n + 1), 2 * n + 1)
        b = relabel(job.U_f, range(n + 1, 2 * n + 1), 2 * n + 1)
        gates = [H(0), *a.gates, *b.gates]
        gates += [CSWAP(0, 1 + k, n + 1 + k) for k in range(n)]
        gates.append(H(0))
        return Circuit(2 * n + 1, tuple(gates), job.U_f.n_params)
    data = list(range(1, n + 1))
    gates = [H(0)]
    gates += controlled(job.U_i, 0, data, n + 1)
    gates += controlled(job.U_f.dagger(), 0, data, n + 1)
    gates.append(RY(0, angle=-math.pi / 2) if job.method == "hadamard_real" else RX(0, angle=math.pi / 2))
    return Circuit(n + 1, tuple(gates), job.U_f.n_params)


def overlap_measurement(job: OverlapJob):
    """``ZEROS`` for compute-uncompute, otherwise Z on the ancilla."""
    if job.method == "compute_uncompute":
        return ZEROS
    return PauliObservable.from_terms([(1.0, "Z" + "I" * (job.width - 1))])


def estimate_overlap(job: OverlapJob, params_f: Sequence[float], estimator=None) -> Estimate:
    """``|<f|i>|^2`` (compute-uncompute, swap test) or ``Re/Im <f|i>`` (Hadamard).

    Swap-test estimates below zero are returned unchanged with a warning.
    """
    estimator = ExactEstimator() if estimator is None else estimator
    circuit = build_overlap_circuit(job)
    values, variances = estimator.evaluate(circuit, params_f, overlap_measurement(job))
    est = Estimate(float(values[0]), float(variances[0]), getattr(estimator, "shots", 0))
    if job.method == "swap_test" and est.value < 0:
        warnings.warn(f"swap-test squared overlap estimate is negative ({est.value:.4g})", RuntimeWarning, stacklevel=2)
    return est


def overlap_hessian(job: OverlapJob, params_f: Sequence[float], estimator=None):
    """Hessian of the job's measured quantity and the factor that turns
    ``w^T Hess w`` into the fidelity susceptibility."""
    circuit = build_overlap_circuit(job)
    hess = hessian_expectation(circuit, params_f, overlap_measurement(job), estimator)
    return hess, (0.5 if job.method in _SQUARED else 1.0)


def cnot_count(job: OverlapJob) -> int:
    return build_overlap_circuit(job).native_cnot_count()


# --------------------------------------------------------------------------
# noise sensitivity
# --------------------------------------------------------------------------

REPORT_METHODS = ("compute_uncompute", "hadamard_real", "swap_test")
PLACEHOLDER_METHODS = ("ancilla_based", "bell_based")


@dataclass(frozen=True)
class SensitivityRow:
    method: str
    p1: float
    p2: float
    r: float
    fs_mean: float
    fs_std: float
    fs_exact: float
    mean_abs_deviation: float
    n_trials: int
    cnot_count: int
    status: str = "ok"


def noise_sensitivity_report(
    L: int = 4,
    r_values: Sequence[float] = (1.0,),
    methods: Sequence[str] = REPORT_METHODS,
    noise_levels: Sequence[NoiseModel] = (NoiseModel(0.0, 0.0), DEFAULT_NOISE),
    trials: int = 20,
    shots: int = 8192,
    seed: int = 1234,
) -> list[SensitivityRow]:
    """Fidelity susceptibility from each overlap method.

    The response ``dtheta/dr`` comes from the exact noiseless pipeline for
    every method, so differences isolate the overlap estimator.  Shot noise
    is drawn per (method, noise level, r, trial) stream.
    """
    from . import pipeline
    from .autodiff import SampledEstimator

    rows: list[SensitivityRow] = []
    for ri, r in enumerate(r_values):
        inputs = pipeline.prepare_point(L, r)
        exact = ExactEstimator()
        resp = pipeline.solve_response(
            hessian_expectation(inputs.ansatz, inputs.theta, inputs.obs_r, exact),
            pipeline.grad_expectation(inputs.ansatz, inputs.theta, inputs.obs_h1, exact),
        )
        ref = pipeline.oracle.fs_spectral(L, r)
        for mi, method in enumerate(methods):
            job = OverlapJob.from_ansatz(inputs.ansatz, inputs.theta, method)
            if method == "hadamard_imag":
                continue  # its Hessian vanishes for real states; not an S estimator
            n_cx = cnot_count(job)
            for ni, noise in enumerate(noise_levels):
                cache: dict = {}
                vals = []
                for t in range(trials):
                    rng = pipeline.cell_rng(seed, ri, t, [100 + mi, ni])
                    est = SampledEstimator(noise, shots, rng, cache)
                    hess, factor = overlap_hessian(job, inputs.theta, est)
                    vals.append(pipeline.fidelity_susceptibility(hess, resp, factor))
                s = pipeline.summarize(vals)
                dev = float(np.mean(np.abs(np.asarray(vals) - ref)))
                rows.append(SensitivityRow(method, noise.p1, noise.p2, r, s.mean, s.std, ref, dev, s.n, n_cx))
        for name in PLACEHOLDER_METHODS:
            for noise in noise_levels:
                rows.append(
                    SensitivityRow(name, noise.p1, noise.p2, r, math.nan, math.nan, ref, math.nan, 0, 0, "not_implemented")
                )
    return rows
