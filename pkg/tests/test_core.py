import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfidsus.core import (
    CNOT,
    CRY,
    CSWAP,
    H,
    RX,
    RY,
    RZ,
    SWAP,
    X,
    Circuit,
    CircuitError,
    Estimate,
    Gate,
    NoiseModel,
    PauliObservable,
    PauliString,
    expectation_exact,
    expectation_sampled,
    gate_matrix,
    lower,
    probability_all_zeros,
    relabel,
    run,
    run_batch,
)

from conftest import random_circuit

Z = PauliObservable.from_terms([(1.0, "Z")])


def test_empty_circuit_is_zero_state():
    assert np.allclose(run(Circuit(1)).data, [1, 0])


def test_ry_pi_flips():
    psi = run(Circuit(1, (RY(0, angle=math.pi),))).data
    assert np.allclose(np.abs(psi), [0, 1])


def test_x_with_depolarizing():
    st_ = run(Circuit(1, (X(0),)), noise=NoiseModel(0.1, 0.0))
    assert st_.kind == "mixed"
    assert st_.expectation(Z) == pytest.approx(-0.9, abs=1e-12)


def test_expectation_cos():
    c = Circuit(1, (RY(0, 0),), 1)
    assert expectation_exact(c, [math.pi / 3], Z) == pytest.approx(0.5, abs=1e-12)


def test_gate_validation():
    with pytest.raises(CircuitError):
        Gate("CNOT", (0, 0))
    with pytest.raises(CircuitError):
        Circuit(2, (CNOT(0, 2),))
    with pytest.raises(CircuitError):
        Circuit(1, (RY(0, 1),), 1)
    with pytest.raises(CircuitError):
        run(Circuit(1, (RY(0, 0),), 1), [])
    with pytest.raises(CircuitError):
        run(Circuit(8))


def test_width_mismatch():
    with pytest.raises(CircuitError):
        expectation_exact(Circuit(2), [], Z)


def test_sampled_deterministic_outcome():
    est = expectation_sampled(Circuit(1), [], Z, shots=100, rng_seed=1)
    assert est.value == 1.0 and est.variance == 0.0


def test_sampled_binomial_statistics():
    c = Circuit(1, (RY(0, angle=math.pi / 2),))
    est = expectation_sampled(c, [], Z, shots=8192, rng_seed=3)
    assert abs(est.value) < 5 / math.sqrt(8192)


def test_sampled_reproducible():
    c = Circuit(1, (RY(0, angle=1.0),))
    a = expectation_sampled(c, [], Z, shots=1000, rng_seed=11)
    b = expectation_sampled(c, [], Z, shots=1000, rng_seed=11)
    assert a == b


@pytest.mark.parametrize("shots", [10**2, 10**4, 10**6])
def test_sampled_error_scales(shots):
    c = Circuit(2, (RY(0, angle=0.7), CNOT(0, 1), RX(1, angle=0.4)))
    obs = PauliObservable.from_terms([(0.5, "ZZ"), (-1.2, "XI"), (0.3, "YZ")])
    exact = expectation_exact(c, [], obs)
    est = expectation_sampled(c, [], obs, shots=shots, rng_seed=shots)
    bound = 5 * math.sqrt(sum(t.coeff**2 for t in obs.terms))
    assert abs(est.value - exact) * math.sqrt(shots) < bound


def test_zero_shots_rejected():
    with pytest.raises(CircuitError):
        expectation_sampled(Circuit(1), [], Z, shots=0)


def test_probability_all_zeros():
    assert probability_all_zeros(Circuit(1)).value == 1.0
    assert probability_all_zeros(Circuit(2, (X(1),))).value == 0.0
    c = Circuit(2, (RY(0, angle=1.1), CNOT(0, 1)))
    exact = probability_all_zeros(c).value
    draws = [probability_all_zeros(c, shots=4000, rng_seed=k).value for k in range(50)]
    assert np.mean(draws) == pytest.approx(exact, abs=5 * math.sqrt(exact * (1 - exact) / 200000))


def test_estimate_invariants():
    with pytest.raises(ValueError):
        Estimate(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        Estimate(0.0, -1.0, 10)


def test_noise_model_bounds():
    with pytest.raises(ValueError):
        NoiseModel(1.5, 0)
    assert NoiseModel().noiseless


def test_pauli_string_validation():
    with pytest.raises(CircuitError):
        PauliString("XQ")


def test_duplicate_pauli_rejected():
    with pytest.raises(CircuitError):
        PauliObservable.from_terms([(1.0, "XX"), (2.0, "XX")])


@pytest.mark.parametrize("kind", ["RX", "RY", "RZ"])
def test_rotation_unitary(kind):
    u = gate_matrix(kind, 0.37)
    assert np.allclose(u @ u.conj().T, np.eye(2))


def test_composite_gates_match_lowered():
    c = Circuit(3, (H(0), RY(1, angle=0.4), CRY(0, 1, angle=0.9), SWAP(1, 2), CSWAP(0, 1, 2), RX(2, angle=0.3)))
    a = run(c).data
    b = run(lower(c)).data
    assert abs(abs(np.vdot(a, b)) - 1) < 1e-12


def test_cry_matches_definition():
    c = Circuit(2, (X(0), CRY(0, 1, angle=0.8)))
    psi = run(c).data
    assert np.allclose(psi, [0, 0, math.cos(0.4), math.sin(0.4)])


def test_relabel():
    c = Circuit(1, (X(0),))
    psi = run(relabel(c, [2], 3)).data
    assert psi[1] == pytest.approx(1.0)


def test_run_batch_matches_run(rng):
    c = random_circuit(rng, width=3, n_params=5)
    rows = rng.uniform(-3, 3, (4, 5))
    batch = run_batch(c, rows)
    for k in range(4):
        assert np.allclose(batch[k], run(c, rows[k]).data, atol=1e-12)


def test_dagger_inverts(rng):
    c = random_circuit(rng, width=3, n_params=4).bind(rng.uniform(-3, 3, 4))
    psi = run(c.then(c.dagger())).data
    assert abs(psi[0]) == pytest.approx(1.0, abs=1e-12)


def test_invariants_after_every_gate(rng):
    c = random_circuit(rng, width=3, n_params=6)
    run(c, rng.uniform(-3, 3, 6), NoiseModel(0.01, 0.05), check=True)
    run(c, rng.uniform(-3, 3, 6), check=True)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pure_equals_mixed_noiseless(seed):
    rng = np.random.default_rng(seed)
    width = int(rng.integers(1, 4))
    c = random_circuit(rng, width=width, n_params=int(rng.integers(1, 7)), n_fixed=int(rng.integers(0, 8)))
    params = rng.uniform(-3, 3, c.n_params)
    letters = "IXYZ"
    ops = ["".join(letters[int(k)] for k in rng.integers(0, 4, width)) for _ in range(4)]
    obs = PauliObservable.from_terms([(1.0, s) for s in dict.fromkeys(ops)])
    a = run(c, params).term_expectations(obs)
    b = run(c, params, mixed=True).term_expectations(obs)
    assert np.max(np.abs(a - b)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_depolarizing_contracts(seed, p):
    rng = np.random.default_rng(seed)
    c = Circuit(1, tuple(RY(0, angle=float(a)) if k % 2 else RX(0, angle=float(a))
                         for k, a in enumerate(rng.uniform(-3, 3, 4))))
    for s in "XYZ":
        obs = PauliObservable.from_terms([(1.0, s)])
        clean = abs(run(c).expectation(obs))
        noisy = abs(run(c, noise=NoiseModel(p, 0.0)).expectation(obs))
        assert noisy <= clean + 1e-12


def test_measurement_rotation_y():
    # S H|0> is the +1 eigenstate of Y
    c = Circuit(1, (H(0), RZ(0, angle=math.pi / 2)))
    obs = PauliObservable.from_terms([(1.0, "Y")])
    est = expectation_sampled(c, [], obs, shots=500, rng_seed=0)
    assert est.value == pytest.approx(1.0)
