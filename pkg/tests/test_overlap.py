import math
import warnings

import numpy as np
import pytest

from qfidsus.ansatz import build_ansatz
from qfidsus.autodiff import ExactEstimator, SampledEstimator
from qfidsus.core import X, Circuit, CircuitError, NoiseModel, run
from qfidsus.overlap import (
    OverlapJob,
    build_overlap_circuit,
    cnot_count,
    estimate_overlap,
    noise_sensitivity_report,
    overlap_hessian,
)


def job(method, n=2, seed=0, same=False):
    rng = np.random.default_rng(seed)
    c = build_ansatz(n)
    xi = rng.uniform(-2, 2, c.n_params)
    xf = xi if same else rng.uniform(-2, 2, c.n_params)
    return OverlapJob.from_ansatz(c, xi, method), xi, xf


def test_widths():
    for method, w in (("compute_uncompute", 3), ("hadamard_real", 4), ("hadamard_imag", 4), ("swap_test", 7)):
        j, _, _ = job(method, 3)
        assert j.width == w == build_overlap_circuit(j).width


def test_validation():
    c = build_ansatz(2)
    with pytest.raises(CircuitError):
        OverlapJob(c.bind([0, 0, 0]), build_ansatz(3))
    with pytest.raises(CircuitError):
        OverlapJob(c, c)
    with pytest.raises(CircuitError):
        OverlapJob(c.bind([0, 0, 0]), c, "bell")


def test_same_state_cases():
    for method, want in (("compute_uncompute", 1.0), ("hadamard_real", 1.0), ("hadamard_imag", 0.0), ("swap_test", 1.0)):
        j, xi, _ = job(method, same=True)
        assert estimate_overlap(j, xi).value == pytest.approx(want, abs=1e-10)


def test_orthogonal():
    j = OverlapJob(Circuit(1), Circuit(1, (X(0),)))
    assert estimate_overlap(j, []).value == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_compute_uncompute_matches_statevector(seed):
    j, xi, xf = job("compute_uncompute", 3, seed)
    c = build_ansatz(3)
    ref = abs(np.vdot(run(c, xf).data, run(c, xi).data)) ** 2
    assert estimate_overlap(j, xf).value == pytest.approx(ref, abs=1e-10)
    js, _, _ = job("swap_test", 3, seed)
    assert estimate_overlap(js, xf).value == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("seed", range(100))
def test_hadamard_identity(seed):
    n = 2 + seed % 2
    cu, _, xf = job("compute_uncompute", n, seed)
    re, _, _ = job("hadamard_real", n, seed)
    im, _, _ = job("hadamard_imag", n, seed)
    a = estimate_overlap(re, xf).value
    b = estimate_overlap(im, xf).value
    assert abs(a * a + b * b - estimate_overlap(cu, xf).value) < 1e-8
    xi = job("compute_uncompute", n, seed)[1]
    c = build_ansatz(n)
    assert a == pytest.approx(float(np.vdot(run(c, xf).data, run(c, xi).data).real), abs=1e-10)


def test_hadamard_real_sign():
    c = build_ansatz(2)
    xi = np.array([0.3, 0.2, -0.5])
    xf = xi + np.array([math.pi, 0, 0])
    want = float(np.vdot(run(c, xf).data, run(c, xi).data).real)
    got = estimate_overlap(OverlapJob.from_ansatz(c, xi, "hadamard_real"), xf).value
    assert got == pytest.approx(want, abs=1e-10)


def test_overlap_hessians_agree():
    j, xi, _ = job("compute_uncompute", 2, 3, same=True)
    h_cu, f_cu = overlap_hessian(j, xi)
    h_re, f_re = overlap_hessian(OverlapJob.from_ansatz(build_ansatz(2), xi, "hadamard_real"), xi)
    h_sw, f_sw = overlap_hessian(OverlapJob.from_ansatz(build_ansatz(2), xi, "swap_test"), xi)
    assert (f_cu, f_re, f_sw) == (0.5, 1.0, 0.5)
    assert np.max(np.abs(f_cu * h_cu.values - f_re * h_re.values)) < 1e-10
    assert np.max(np.abs(f_cu * h_cu.values - f_sw * h_sw.values)) < 1e-10


def test_cnot_counts():
    counts = {m: cnot_count(job(m)[0]) for m in ("compute_uncompute", "hadamard_real", "swap_test")}
    assert counts["hadamard_real"] > counts["compute_uncompute"]
    assert counts["swap_test"] > counts["compute_uncompute"]


def test_swap_negative_estimate_warns():
    c = build_ansatz(2)
    xi = np.array([0.0, 0.0, 0.0])
    xf = np.array([math.pi, 0.0, 0.0])  # orthogonal: true value 0
    j = OverlapJob.from_ansatz(c, xi, "swap_test")
    seen_negative = False
    for s in range(40):
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            est = estimate_overlap(j, xf, SampledEstimator(shots=100, rng=s))
        if est.value < 0:
            seen_negative = True
            assert any("negative" in str(x.message) for x in w)
    assert seen_negative


def test_report_rows():
    rows = noise_sensitivity_report(L=4, r_values=(1.0,), trials=4, noise_levels=(NoiseModel(0, 0),))
    ok = [r for r in rows if r.status == "ok"]
    assert {r.method for r in ok} == {"compute_uncompute", "hadamard_real", "swap_test"}
    assert {r.status for r in rows if r.status != "ok"} == {"not_implemented"}
    means = [r.fs_mean for r in ok]
    assert max(means) - min(means) < 5 * max(r.fs_std for r in ok)
