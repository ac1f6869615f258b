import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfidsus.core import PauliObservable, PauliString
from qfidsus.oracle import full_ground_energy, ground_energy
from qfidsus.tfim import composite_basis, full_matrices, full_tfim, pauli_decompose, reduce

R_GRID = [0.5 + 0.1 * k for k in range(10)]
S2 = math.sqrt(2)


def test_full_tfim_terms_L4():
    obs = full_tfim(4)
    h0 = obs.part("H0").terms
    h1 = obs.part("H1").terms
    assert len(h0) == 4 and len(h1) == 4
    assert all(t.coeff == -1.0 and t.pauli.ops.count("X") == 2 for t in h0)
    assert all(t.coeff == -1.0 and t.pauli.ops.count("Z") == 1 for t in h1)


def test_full_tfim_L2_wraparound():
    obs = full_tfim(2)
    h0 = obs.part("H0").terms
    assert len(h0) == 1 and h0[0].coeff == -2.0 and h0[0].pauli.ops == "XX"
    assert sorted(t.pauli.ops for t in obs.part("H1").terms) == ["IZ", "ZI"]


def test_full_ground_energy_r0():
    h0, h1 = full_matrices(4)
    assert np.linalg.eigvalsh(h0)[0] == pytest.approx(-4.0, abs=1e-12)
    assert np.allclose(full_tfim(4).matrix(0.7), h0 + 0.7 * h1)


@pytest.mark.parametrize("L", [3, 0, 14, 5])
def test_bad_L(L):
    with pytest.raises(ValueError):
        full_tfim(L)
    with pytest.raises(ValueError):
        composite_basis(L)


def test_basis_L4():
    b = composite_basis(4)
    got = [set(o.labels()) for o in b.orbits]
    assert got == [{"0000"}, {"0101", "1010"}, {"0011", "1001", "1100", "0110"}, {"1111"}]


def test_basis_counts():
    assert len(composite_basis(2)) == 2
    assert len(composite_basis(6)) == 8


@pytest.mark.parametrize("L", [2, 4, 6, 8])
def test_basis_invariants(L):
    b = composite_basis(L)
    assert sum(o.size for o in b.orbits) == 2 ** (L - 1)
    reps = [o.representative for o in b.orbits]
    assert reps == sorted(reps) and len(set(reps)) == len(reps)
    for o in b.orbits:
        assert L % o.size == 0
        assert all(bin(m).count("1") % 2 == 0 for m in o.members)
    v = b.isometry()
    assert np.allclose(v.T @ v, np.eye(len(b)))


def test_reduced_matrix_L4():
    red = reduce(4)
    r = 0.8
    want = np.array([
        [-4 * r, 0, -2, 0],
        [0, 0, -2 * S2, 0],
        [-2, -2 * S2, 0, -2],
        [0, 0, -2, 4 * r],
    ])
    assert np.max(np.abs(red.matrix(r) - want)) < 1e-12


def test_reduced_matrix_L2():
    assert np.allclose(reduce(2).matrix(0.3), [[-0.6, -2], [-2, 0.6]])


@pytest.mark.parametrize("L", [2, 4, 6])
@pytest.mark.parametrize("r", R_GRID)
def test_reduced_vs_full(L, r):
    assert abs(ground_energy(L, r) - full_ground_energy(L, r)) < 1e-10


def test_pauli_form_L4():
    obs = reduce(4).observable()
    got = {(t.part, t.pauli.ops): t.coeff for t in obs.terms}
    want = {
        ("H0", "IX"): -1.0, ("H0", "XI"): -1.0, ("H0", "XZ"): -1.0, ("H0", "ZX"): 1.0,
        ("H0", "XX"): -S2, ("H0", "YY"): -S2, ("H1", "IZ"): -2.0, ("H1", "ZI"): -2.0,
    }
    assert got.keys() == want.keys()
    for k, v in want.items():
        assert abs(got[k] - v) < 1e-12


def test_decompose_trivial():
    obs = pauli_decompose(np.eye(4))
    assert [(t.coeff, t.pauli.ops) for t in obs.terms] == [(1.0, "II")]
    obs = pauli_decompose(np.diag([1.0, -1.0]))
    assert [(t.coeff, t.pauli.ops) for t in obs.terms] == [(1.0, "Z")]


def test_decompose_errors():
    with pytest.raises(ValueError):
        pauli_decompose(np.eye(3))
    with pytest.raises(ValueError):
        pauli_decompose(np.array([[0, 1], [0, 0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_decompose_roundtrip(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2**n, 2**n))
    m = a + a.T
    obs = pauli_decompose(m)
    rebuilt = sum(t.coeff * t.pauli.matrix() for t in obs.terms)
    assert np.max(np.abs(rebuilt - m)) < 1e-10


def test_padding_keeps_ground_state():
    red = reduce(6)
    h0, h1 = red.padded()
    assert h0.shape == (8, 8)
    assert np.linalg.eigvalsh(h0 + h1)[0] == pytest.approx(np.linalg.eigvalsh(red.matrix(1.0))[0], abs=1e-12)
    obs = red.observable()
    assert obs.width == 3
    assert np.allclose(obs.matrix(1.0), h0 + h1)
