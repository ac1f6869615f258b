"""Transverse-field Ising chain and its parity/translation reduction.

``H(r) = -sum_i X_i X_{i+1} - r sum_i Z_i`` with periodic boundaries.  Spin
configurations are integers whose bit ``L-1-i`` is the spin at site ``i``
(site 0 is the leftmost character of the bit string).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .core import PauliObservable, PauliString, PauliTerm

PAD_ENERGY = 1.0e3
MAX_SITES = 12


def _check_L(L: int) -> None:
    if not isinstance(L, (int, np.integer)) or L % 2 or not 2 <= L <= MAX_SITES:
        raise ValueError(f"L must be an even integer in [2, {MAX_SITES}], got {L!r}")


def bitstring(config: int, L: int) -> str:
    return format(config, f"0{L}b")


def rotate(config: int, L: int) -> int:
    """Cyclic shift by one site."""
    return ((config << 1) | (config >> (L - 1))) & ((1 << L) - 1)


def full_tfim(L: int) -> PauliObservable:
    """Full L-qubit TFIM; XX bonds tagged H0, Z fields tagged H1.

    Bonds mapping onto the same Pauli string (only L=2) are merged.
    """
    _check_L(L)
    bonds: dict[str, float] = {}
    for i in range(L):
        ops = PauliString.from_sites(L, {i: "X", (i + 1) % L: "X"}).ops
        bonds[ops] = bonds.get(ops, 0.0) - 1.0
    terms = [PauliTerm(c, PauliString(p), "H0") for p, c in bonds.items()]
    terms += [PauliTerm(-1.0, PauliString.from_sites(L, {i: "Z"}), "H1") for i in range(L)]
    return PauliObservable(tuple(terms))


@lru_cache(maxsize=16)
def full_matrices(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense real (H0, H1) in the 2^L computational basis."""
    _check_L(L)
    dim = 1 << L
    idx = np.arange(dim)
    h0 = np.zeros((dim, dim))
    for i in range(L):
        flip = (1 << (L - 1 - i)) | (1 << (L - 1 - (i + 1) % L))
        h0[idx ^ flip, idx] -= 1.0
    ones = np.array([bin(s).count("1") for s in range(dim)])
    h1 = np.diag(-(L - 2.0 * ones))
    return h0, h1


@dataclass(frozen=True)
class TranslationOrbit:
    L: int
    members: tuple[int, ...]

    @property
    def representative(self) -> int:
        return max(self.members)

    @property
    def size(self) -> int:
        return len(self.members)

    def labels(self) -> list[str]:
        return [bitstring(m, self.L) for m in self.members]


@dataclass(frozen=True)
class CompositeBasis:
    """Normalised translation-orbit sums over the even-parity sector.

    Orbits are ordered by their lexicographically largest member, which puts
    the all-zeros configuration first and reproduces the textbook 4-site
    reduced matrix exactly.
    """

    L: int
    orbits: tuple[TranslationOrbit, ...]

    def __len__(self) -> int:
        return len(self.orbits)

    @cached_property
    def index(self) -> dict[int, int]:
        return {m: k for k, orb in enumerate(self.orbits) for m in orb.members}

    def norm(self, k: int) -> float:
        return 1.0 / math.sqrt(self.orbits[k].size)

    def isometry(self) -> np.ndarray:
        """2^L x m matrix whose columns are the composite states."""
        out = np.zeros((1 << self.L, len(self)))
        for k, orb in enumerate(self.orbits):
            out[list(orb.members), k] = self.norm(k)
        return out


@lru_cache(maxsize=16)
def composite_basis(L: int) -> CompositeBasis:
    _check_L(L)
    seen: set[int] = set()
    orbits = []
    for s in range(1 << L):
        if bin(s).count("1") % 2 or s in seen:
            continue
        members = {s}
        t = s
        for _ in range(L - 1):
            t = rotate(t, L)
            members.add(t)
        seen |= members
        orbits.append(TranslationOrbit(L, tuple(sorted(members))))
    orbits.sort(key=lambda o: o.representative)
    return CompositeBasis(L, tuple(orbits))


@dataclass(frozen=True)
class ReducedHamiltonian:
    basis: CompositeBasis
    H0: np.ndarray
    H1: np.ndarray

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    @property
    def L(self) -> int:
        return self.basis.L

    @property
    def n_qubits(self) -> int:
        return max(1, math.ceil(math.log2(self.dim)))

    def matrix(self, r: float) -> np.ndarray:
        return self.H0 + r * self.H1

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """(H0, H1) embedded in 2^n_qubits dimensions; padded rows sit at
        ``PAD_ENERGY`` so the ground state is untouched."""
        size = 1 << self.n_qubits
        h0 = np.zeros((size, size))
        h1 = np.zeros((size, size))
        h0[: self.dim, : self.dim] = self.H0
        h1[: self.dim, : self.dim] = self.H1
        for k in range(self.dim, size):
            h0[k, k] = PAD_ENERGY
        return h0, h1

    def observable(self) -> PauliObservable:
        """Qubit observable: composite state k encoded as |binary(k)>."""
        h0, h1 = self.padded()
        return pauli_decompose(h0, "H0") + pauli_decompose(h1, "H1")


@lru_cache(maxsize=16)
def reduce(L: int) -> ReducedHamiltonian:
    """Matrix elements of the TFIM between normalised composite states."""
    basis = composite_basis(L)
    m = len(basis)
    h0 = np.zeros((m, m))
    h1 = np.zeros((m, m))
    index = basis.index
    for a, orb in enumerate(basis.orbits):
        for s in orb.members:
            h1[a, a] -= (L - 2 * bin(s).count("1")) * basis.norm(a) ** 2
            for i in range(L):
                t = s ^ (1 << (L - 1 - i)) ^ (1 << (L - 1 - (i + 1) % L))
                b = index[t]
                h0[b, a] -= basis.norm(a) * basis.norm(b)
    return ReducedHamiltonian(basis, h0, h1)


def _pauli_strings(n: int):
    for ops in itertools.product("IXYZ", repeat=n):
        yield PauliString("".join(ops))


def pauli_decompose(matrix: np.ndarray, part: str = "H0", tol: float = 1e-12) -> PauliObservable:
    """Expand a real symmetric 2^n x 2^n matrix in Pauli strings.

    ``c_P = tr(M P) / 2^n``; terms with ``|c_P| < tol`` are dropped.
    """
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    dim = m.shape[0]
    n = dim.bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two >= 2")
    if np.max(np.abs(m - m.conj().T)) > 1e-12:
        raise ValueError("matrix is not symmetric")
    idx = np.arange(dim)
    terms = []
    for ps in _pauli_strings(n):
        x, z, ny = ps.masks()
        sign = np.array([1.0 - 2.0 * (bin(k & z).count("1") & 1) for k in range(dim)])
        c = (1j**ny) * np.sum(sign * m[idx, idx ^ x]) / dim
        if abs(c.imag) > 1e-10:
            raise ValueError("matrix is not real symmetric")
        if abs(c.real) >= tol:
            terms.append(PauliTerm(float(c.real), ps, part))
    return PauliObservable(tuple(terms))
