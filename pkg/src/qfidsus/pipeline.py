"""Per-r workflow: VQE, response equations, d2E/dr2 and fidelity susceptibility."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import oracle
from .ansatz import build_ansatz
from .autodiff import (
    TWO_TERM,
    ExactEstimator,
    GradientResult,
    HessianResult,
    SampledEstimator,
    grad_expectation,
    hessian_circuit_count,
    hessian_expectation,
    hessian_probability,
    shift_rules,
)
from .core import DEFAULT_NOISE, NOISELESS, Circuit, Estimate, NoiseModel, PauliObservable, run, run_batch
from .tfim import reduce
from .zne import MitigatedEstimator, MitigationPlan

log = logging.getLogger(__name__)

R_GRID = tuple(round(0.5 + 0.1 * k, 10) for k in range(10))
SVD_RTOL = 1e-8
OVERLAP_GRAD_TOL = 1e-3


# --------------------------------------------------------------------------
# VQE
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VqeResult:
    theta_opt: np.ndarray
    energy: float
    iterations: int
    converged: bool


def vqe(
    observable: PauliObservable,
    ansatz: Circuit,
    r: float,
    exact_E0: float | None = None,
    *,
    step: float = 0.1,
    max_iter: int = 1000,
    tol: float = 1e-8,
) -> VqeResult:
    """Plain gradient descent from zero angles with analytic shift-rule gradients.

    Stops once ``|E - exact_E0| < tol``; without a reference it stops when
    the largest gradient component drops below ``1e-9``.
    """
    if any(rule is not TWO_TERM for rule in shift_rules(ansatz)):
        raise ValueError("VQE expects an ansatz whose parameters all follow the two-term rule")
    n = ansatz.n_params
    hmat = np.real(observable.matrix(r))
    stencil = np.vstack([np.zeros(n), 0.5 * np.pi * np.eye(n), -0.5 * np.pi * np.eye(n)])
    theta = np.zeros(n)

    def energies(th):
        psi = run_batch(ansatz, th + stencil)
        return np.real(np.einsum("bi,ij,bj->b", psi.conj(), hmat, psi))

    it = 0
    while True:
        e = energies(theta)
        grad = 0.5 * (e[1 : n + 1] - e[n + 1 :])
        if exact_E0 is not None:
            done = abs(e[0] - exact_E0) < tol
        else:
            done = np.max(np.abs(grad), initial=0.0) < 1e-9
        if done or it == max_iter:
            break
        theta = theta - step * grad
        it += 1
    if exact_E0 is not None:
        converged = bool(abs(e[0] - exact_E0) < tol)
    else:
        converged = bool(np.max(np.abs(grad), initial=0.0) < 1e-6)
    return VqeResult(theta, float(e[0]), it, converged)


@lru_cache(maxsize=256)
def _vqe_cached(L: int, r: float) -> VqeResult:
    red = reduce(L)
    return vqe(red.observable(), build_ansatz(red.n_qubits), r, oracle.ground_energy(L, r))


def ground_state_angles(L: int, r: float) -> VqeResult:
    """VQE solution for the reduced L-site problem (memoised per process)."""
    return _vqe_cached(int(L), float(r))


# --------------------------------------------------------------------------
# response and derived quantities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ResponseSolution:
    dtheta_dr: np.ndarray
    condition_number: float
    residual_norm: float
    rank: int
    truncated: bool = False


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, (GradientResult, HessianResult)) else x, dtype=float)


def solve_response(hess, grad_h1) -> ResponseSolution:
    """Solve ``Hess . dtheta/dr = -grad<H1>`` by SVD.

    Singular values below ``1e-8 * s_max`` are dropped (pseudoinverse).
    The reported condition number is that of the full matrix.
    """
    a = _values(hess)
    b = _values(grad_h1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise ValueError("Hessian must be square and match the gradient length")
    if a.shape[0] == 0:
        return ResponseSolution(np.zeros(0), 1.0, 0.0, 0)
    u, s, vt = np.linalg.svd(a)
    keep = s > SVD_RTOL * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    x = -(vt.T @ (inv * (u.T @ b)))
    cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    resid = float(np.max(np.abs(a @ x + b), initial=0.0))
    return ResponseSolution(x, max(cond, 1.0), resid, int(np.sum(keep)), bool(not np.all(keep)))


def second_energy_derivative(grad_h1, response: ResponseSolution) -> float:
    """``d2E/dr2 = sum_i d<H1>/dtheta_i * dtheta_i/dr``."""
    g = _values(grad_h1)
    if g.shape != response.dtheta_dr.shape:
        raise ValueError("length mismatch")
    return float(g @ response.dtheta_dr)


def fidelity_susceptibility(overlap_hessian, response: ResponseSolution, factor: float = 0.5) -> float:
    """``|factor * w^T B w|`` with ``w = dtheta/dr``.

    ``factor`` is 1/2 when ``B`` is the Hessian of the squared overlap and 1
    when it is the Hessian of the (real) overlap itself.
    """
    b = _values(overlap_hessian)
    w = response.dtheta_dr
    return float(abs(factor * (w @ b @ w)))


def _pair_weights(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``d(w^T M v)/dM`` restricted to the upper triangle of a symmetric M."""
    out = np.outer(w, v) + np.outer(v, w)
    np.fill_diagonal(out, w * v)
    return np.triu(out)


def d2E_variance(hess: HessianResult, grad_h1: GradientResult, response: ResponseSolution) -> float:
    """First-order propagation through ``-b^T A^+ b``; entries independent."""
    w = response.dtheta_dr
    var = np.sum((2.0 * w) ** 2 * grad_h1.variances)
    var += np.sum(_pair_weights(w, w) ** 2 * np.triu(hess.variances))
    return float(var)


def fs_variance(
    hess: HessianResult,
    grad_h1: GradientResult,
    overlap_hessian: HessianResult,
    response: ResponseSolution,
    factor: float = 0.5,
) -> float:
    """First-order propagation through ``factor * w^T B w`` with
    ``w = -A^+ b``; A, b and B entries treated as independent."""
    a = hess.values
    w = response.dtheta_dr
    u = 2.0 * factor * (overlap_hessian.values @ w)
    z = -(np.linalg.pinv(a, rcond=SVD_RTOL, hermitian=True) @ u)
    var = np.sum(z**2 * grad_h1.variances)
    var += np.sum(_pair_weights(z, w) ** 2 * np.triu(hess.variances))
    var += np.sum((factor * _pair_weights(w, w)) ** 2 * np.triu(overlap_hessian.variances))
    return float(var)


def overlap_gradient_norm(circuit: Circuit, theta: Sequence[float]) -> float:
    """``|| <psi | d_i psi> ||`` from exact statevectors.

    For an RY parameter ``d_i psi = psi(theta + pi e_i) / 2``.
    """
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    rows = np.vstack([theta, theta + np.pi * np.eye(n)])
    psi = run_batch(circuit, rows)
    return float(np.linalg.norm(0.5 * psi[1:].conj() @ psi[0]))


# --------------------------------------------------------------------------
# estimators and seeds
# --------------------------------------------------------------------------

ESTIMATORS = ("exact", "sampled", "noisy", "mitigated")
_FOLD_CODE = {"unitary": 1, "cnot": 2}


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str = "exact"
    shots: int = 8192
    noise: NoiseModel = DEFAULT_NOISE
    plan: MitigationPlan | None = None

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.kind == "mitigated" and self.plan is None:
            object.__setattr__(self, "plan", MitigationPlan((1, 3), shots_per_scale=self.shots))
        if self.plan is not None and self.plan.shots_per_scale != self.shots:
            raise ValueError("plan.shots_per_scale must equal shots")

    @property
    def effective_noise(self) -> NoiseModel:
        return self.noise if self.kind in ("noisy", "mitigated") else NOISELESS

    @property
    def stochastic(self) -> bool:
        return self.kind != "exact"

    def seed_extra(self) -> list[int]:
        """Extra words of the per-cell seed.  Empty for plan (1,) so that the
        identity plan replays the unmitigated noisy run draw for draw."""
        if self.kind != "mitigated" or self.plan.scale_factors == (1,):
            return []
        return [_FOLD_CODE[self.plan.folding], *self.plan.scale_factors]

    def build(self, rng, cache: dict, fold_caches: list | None = None):
        noise = self.effective_noise
        if self.kind == "exact":
            return ExactEstimator(noise, cache)
        base = SampledEstimator(noise, self.shots, rng, cache)
        if self.kind != "mitigated":
            return base
        est = MitigatedEstimator(base, self.plan)
        if fold_caches is not None:
            if not fold_caches:
                fold_caches.extend(f._exact for f in est.folded)
            for f, c in zip(est.folded, fold_caches):
                f._exact = c
        return est


def cell_rng(master_seed: int, r_index: int, trial: int, extra: Sequence[int] = ()) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(r_index), int(trial), *extra]))


# --------------------------------------------------------------------------
# one point
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PointResult:
    L: int
    r: float
    trial: int
    energy: Estimate
    d2E_dr2: Estimate
    fidelity_susceptibility: Estimate
    condition_number: float
    residual_norm: float
    flags: tuple[str, ...] = ()
    evaluations: tuple[tuple[str, int], ...] = ()

    @property
    def per_site(self) -> dict[str, float]:
        return {
            "energy": self.energy.value / self.L,
            "d2E_dr2": self.d2E_dr2.value / self.L,
            "fidelity_susceptibility": self.fidelity_susceptibility.value / self.L,
        }


@dataclass
class PointInputs:
    """Everything that is fixed for one r across trials."""

    L: int
    r: float
    ansatz: Circuit
    theta: np.ndarray
    obs_r: PauliObservable
    obs_h1: PauliObservable
    overlap: Circuit
    flags: tuple[str, ...] = ()
    vqe: VqeResult | None = None


def prepare_point(L: int, r: float) -> PointInputs:
    red = reduce(L)
    obs = red.observable()
    ansatz = build_ansatz(red.n_qubits)
    res = ground_state_angles(L, r)
    flags = [] if res.converged else ["vqe_not_converged"]
    if overlap_gradient_norm(ansatz, res.theta_opt) >= OVERLAP_GRAD_TOL:
        warnings.warn(f"overlap gradient does not vanish at r={r}", RuntimeWarning, stacklevel=2)
        flags.append("overlap_gradient")
    bound = ansatz.bind(res.theta_opt)
    overlap = bound.then(ansatz.dagger())
    return PointInputs(L, r, ansatz, res.theta_opt, obs.at(r), obs.part("H1"), overlap, tuple(flags), res)


def evaluate_point(inputs: PointInputs, estimator, trial: int = 0) -> PointResult:
    """The three quantum derivatives at one r, combined into d2E/dr2 and S."""
    th = inputs.theta
    shots = getattr(estimator, "shots", 0)
    values, variances = estimator.evaluate(inputs.ansatz, th, inputs.obs_r)
    c = inputs.obs_r.coeffs()
    energy = Estimate(float(c @ values), float(c**2 @ variances), shots)

    hess = hessian_expectation(inputs.ansatz, th, inputs.obs_r, estimator)
    g1 = grad_expectation(inputs.ansatz, th, inputs.obs_h1, estimator)
    ov = hessian_probability(inputs.overlap, th, estimator)
    resp = solve_response(hess, g1)
    d2 = second_energy_derivative(g1, resp)
    fs = fidelity_susceptibility(ov, resp)
    flags = list(inputs.flags)
    if resp.truncated:
        flags.append("pseudo_inverse")
    if shots:
        d2_var = d2E_variance(hess, g1, resp)
        fs_var = fs_variance(hess, g1, ov, resp)
    else:
        d2_var = fs_var = 0.0
    return PointResult(
        inputs.L,
        inputs.r,
        trial,
        energy,
        Estimate(d2, d2_var, shots),
        Estimate(fs, fs_var, shots),
        resp.condition_number,
        resp.residual_norm,
        tuple(flags),
        (("hessian_H", hess.evaluations), ("gradient_H1", g1.evaluations), ("hessian_overlap", ov.evaluations)),
    )


def point_circuit_count(inputs: PointInputs) -> dict[str, int]:
    """Circuits needed per evaluation, per quantity (two-term rules)."""
    n = inputs.ansatz.n_params
    return {
        "hessian_H": hessian_circuit_count(n, len(inputs.obs_r)),
        "gradient_H1": 2 * n * len(inputs.obs_h1),
        "hessian_overlap": hessian_circuit_count(n, 1),
    }


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


@dataclass
class CellResult:
    r_index: int
    r: float
    trials: list[PointResult] = field(default_factory=list)
    error: str | None = None


def run_cell(L: int, r_index: int, r: float, spec: EstimatorSpec, trials: int, master_seed: int) -> CellResult:
    """All trials at one r.  Exact states are computed once and shared;
    each trial only redraws shot noise from its own seed."""
    out = CellResult(r_index, r)
    try:
        inputs = prepare_point(L, r)
        counts = point_circuit_count(inputs)
        log.info("L=%d r=%.3f circuits per evaluation %s", L, r, counts)
        cache: dict = {}
        fold_caches: list = []
        n_trials = trials if spec.stochastic else 1
        for t in range(n_trials):
            rng = cell_rng(master_seed, r_index, t, spec.seed_extra())
            est = spec.build(rng, cache, fold_caches)
            out.trials.append(evaluate_point(inputs, est, t))
            if t == 0:
                done = dict(out.trials[0].evaluations)
                if done != counts:
                    raise RuntimeError(f"circuit count mismatch: expected {counts}, executed {done}")
                log.info("circuit counts verified at r=%.3f", r)
    except Exception as exc:  # cell failures are reported, not fatal
        log.error("cell r=%s failed: %s", r, exc)
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def run_tasks(tasks: Sequence[tuple], jobs: int = 1) -> list[CellResult]:
    """Run ``run_cell`` argument tuples, serially or in ``jobs`` processes.

    Results come back in task order whatever the worker count.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [run_cell(*t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, *zip(*tasks)))


def sweep(
    L: int,
    r_values: Sequence[float] = R_GRID,
    spec: EstimatorSpec = EstimatorSpec(),
    trials: int = 20,
    seed: int = 1234,
    jobs: int = 1,
) -> list[CellResult]:
    """One cell per r; output ordered by r index."""
    return run_tasks([(L, k, float(r), spec, trials, seed) for k, r in enumerate(r_values)], jobs)


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    n: int

    @property
    def sem(self) -> float:
        return self.std / math.sqrt(self.n) if self.n else math.nan


def summarize(values: Sequence[float]) -> Summary:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return Summary(math.nan, math.nan, 0)
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return Summary(float(np.mean(v)), std, int(v.size))


def exact_reference(L: int, r: float) -> dict[str, float]:
    return {
        "energy": oracle.ground_energy(L, r),
        "d2E_dr2": oracle.d2E_finite_difference(L, r),
        "fidelity_susceptibility": oracle.fs_spectral(L, r),
    }
