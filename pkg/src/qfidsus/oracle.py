"""Exact-diagonalisation references."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tfim import full_matrices, reduce

GAP_TOL = 1e-9
MAX_DIM = 4096


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    r: float = math.nan

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def ground_state(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def diagonalize(matrix, r: float = math.nan) -> SpectralData:
    """Full spectrum, ascending.  Each eigenvector is orthonormalised within
    its degenerate cluster and signed so its largest component is positive."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if m.shape[0] > MAX_DIM:
        raise ValueError(f"dimension {m.shape[0]} exceeds {MAX_DIM}")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12:
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(m)
    start = 0
    for k in range(1, len(w) + 1):
        if k == len(w) or w[k] - w[k - 1] > GAP_TOL:
            if k - start > 1:
                q, _ = np.linalg.qr(v[:, start:k])
                v[:, start:k] = q
            start = k
    v = np.column_stack([_fix_phase(v[:, k]) for k in range(v.shape[1])])
    return SpectralData(w, v, r)


def _pair(system):
    """Accept an even L (reduced TFIM) or an explicit ``(H0, H1)`` pair."""
    if isinstance(system, (int, np.integer)):
        red = reduce(int(system))
        return red.H0, red.H1
    h0, h1 = system
    return np.asarray(h0, dtype=float), np.asarray(h1, dtype=float)


def spectrum(system, r: float) -> SpectralData:
    h0, h1 = _pair(system)
    return diagonalize(h0 + r * h1, r)


def ground_energy(system, r: float) -> float:
    return spectrum(system, r).ground_energy


def full_ground_energy(L: int, r: float) -> float:
    h0, h1 = full_matrices(L)
    return float(np.linalg.eigvalsh(h0 + r * h1)[0])


def fs_spectral(system, r: float) -> float:
    """``sum_{n>0} |<n|H1|0>|^2 / (E0 - En)^2``; states within ``GAP_TOL`` of
    the ground energy are excluded."""
    h0, h1 = _pair(system)
    sd = diagonalize(h0 + r * h1, r)
    e, v = sd.eigenvalues, sd.eigenvectors
    if len(e) > 1 and e[1] - e[0] < GAP_TOL:
        raise ValueError(f"degenerate ground state at r={r}")
    elements = v.T @ h1 @ v[:, 0]
    gaps = e[0] - e
    keep = np.abs(gaps) > GAP_TOL
    return float(np.sum(elements[keep] ** 2 / gaps[keep] ** 2))


def fidelity(system, r: float, delta: float) -> float:
    psi0 = spectrum(system, r).ground_state
    psi1 = spectrum(system, r + delta).ground_state
    return float(abs(psi0 @ psi1))


def fs_finite_difference(system, r: float, delta: float = 1e-3, *, signed: bool = False) -> float:
    """Second central difference of ``F(r, d)`` at ``d = 0``.

    ``F`` peaks at 1 so the raw difference is negative; the magnitude is
    returned unless ``signed``.
    """
    if not 1e-4 <= delta <= 1e-2:
        raise ValueError("delta must lie in [1e-4, 1e-2]")
    h0, h1 = _pair(system)
    sd = diagonalize(h0 + r * h1, r)
    if len(sd.eigenvalues) > 1 and sd.eigenvalues[1] - sd.eigenvalues[0] < GAP_TOL:
        raise ValueError(f"degenerate ground state at r={r}")
    psi0 = sd.ground_state
    fp = abs(psi0 @ diagonalize(h0 + (r + delta) * h1).ground_state)
    fm = abs(psi0 @ diagonalize(h0 + (r - delta) * h1).ground_state)
    raw = (fp + fm - 2.0) / delta**2
    return float(raw) if signed else float(abs(raw))


def d2E_finite_difference(system, r: float, h: float = 1e-3) -> float:
    h0, h1 = _pair(system)

    def e0(x):
        return float(np.linalg.eigvalsh(h0 + x * h1)[0])

    return (e0(r + h) - 2.0 * e0(r) + e0(r - h)) / h**2


def dE_finite_difference(system, r: float, h: float = 1e-4) -> float:
    h0, h1 = _pair(system)

    def e0(x):
        return float(np.linalg.eigvalsh(h0 + x * h1)[0])

    return (e0(r + h) - e0(r - h)) / (2 * h)
