"""Low-level state-update kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics.  The numba path is used unless the
environment variable ``QFIDSUS_DISABLE_NUMBA`` is set to a truthy value
(or numba cannot be imported).  Both sets stay importable as
:data:`NUMBA_KERNELS` / :data:`NUMPY_KERNELS` for tests and benchmarks.

Conventions: qubit ``q`` of an ``n``-qubit register is bit ``n - 1 - q`` of
the basis-state index (qubit 0 is the most significant bit).  All kernels
mutate their array argument in place.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


# --------------------------------------------------------------------------
# pure numpy
# --------------------------------------------------------------------------


def _np_sv_apply_1q(psi, u, q, n):
    view = psi.reshape(1 << q, 2, 1 << (n - q - 1))
    view[:] = np.einsum("ab,ibj->iaj", u, view)


def _np_sv_apply_cnot(psi, c, t, n):
    cbit = 1 << (n - 1 - c)
    tbit = 1 << (n - 1 - t)
    idx = np.arange(psi.shape[0])
    src = idx[(idx & cbit) != 0]
    psi[src] = psi[src ^ tbit]


def _np_dm_apply_1q(rho, u, q, n):
    lo = 1 << (n - q - 1)
    hi = 1 << q
    view = rho.reshape(hi, 2, lo, hi, 2, lo)
    view[:] = np.einsum("ab,ibjkcl,dc->iajkdl", u, view, u.conj())


def _np_dm_apply_cnot(rho, c, t, n):
    cbit = 1 << (n - 1 - c)
    tbit = 1 << (n - 1 - t)
    idx = np.arange(rho.shape[0])
    perm = np.where((idx & cbit) != 0, idx ^ tbit, idx)
    rho[:] = rho[np.ix_(perm, perm)]


def _np_dm_depolarize_1q(rho, p, q, n):
    if p == 0.0:
        return
    lo = 1 << (n - q - 1)
    hi = 1 << q
    view = rho.reshape(hi, 2, lo, hi, 2, lo)
    traced = view[:, 0, :, :, 0, :] + view[:, 1, :, :, 1, :]
    view *= 1.0 - p
    view[:, 0, :, :, 0, :] += 0.5 * p * traced
    view[:, 1, :, :, 1, :] += 0.5 * p * traced


def _np_dm_depolarize_2q(rho, p, q1, q2, n):
    if p == 0.0:
        return
    a, b = sorted((q1, q2))
    shape = (1 << a, 2, 1 << (b - a - 1), 2, 1 << (n - b - 1))
    view = rho.reshape(shape + shape)
    traced = sum(view[:, i, :, j, :, :, i, :, j, :] for i in (0, 1) for j in (0, 1))
    view *= 1.0 - p
    for i in (0, 1):
        for j in (0, 1):
            view[:, i, :, j, :, :, i, :, j, :] += 0.25 * p * traced


def _np_phase_table(dim, zmask):
    idx = np.arange(dim)
    bits = np.bitwise_and(idx, zmask)
    parity = np.zeros(dim, dtype=np.int64)
    while np.any(bits):
        parity ^= bits & 1
        bits = bits >> 1
    return 1.0 - 2.0 * parity


def _np_sv_pauli_expvals(psi, xmasks, zmasks, nys):
    dim = psi.shape[0]
    idx = np.arange(dim)
    out = np.empty(xmasks.shape[0])
    for k in range(xmasks.shape[0]):
        sign = _np_phase_table(dim, zmasks[k])
        ph = (1j) ** (nys[k] % 4)
        out[k] = np.real(ph * np.sum(np.conj(psi[idx ^ xmasks[k]]) * sign * psi))
    return out


def _np_dm_pauli_expvals(rho, xmasks, zmasks, nys):
    dim = rho.shape[0]
    idx = np.arange(dim)
    out = np.empty(xmasks.shape[0])
    for k in range(xmasks.shape[0]):
        sign = _np_phase_table(dim, zmasks[k])
        ph = (1j) ** (nys[k] % 4)
        out[k] = np.real(ph * np.sum(sign * rho[idx, idx ^ xmasks[k]]))
    return out


NUMPY_KERNELS = SimpleNamespace(
    name="numpy",
    sv_apply_1q=_np_sv_apply_1q,
    sv_apply_cnot=_np_sv_apply_cnot,
    dm_apply_1q=_np_dm_apply_1q,
    dm_apply_cnot=_np_dm_apply_cnot,
    dm_depolarize_1q=_np_dm_depolarize_1q,
    dm_depolarize_2q=_np_dm_depolarize_2q,
    sv_pauli_expvals=_np_sv_pauli_expvals,
    dm_pauli_expvals=_np_dm_pauli_expvals,
)


# --------------------------------------------------------------------------
# numba
# --------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_sv_apply_1q(psi, u, q, n):
        step = 1 << (n - 1 - q)
        u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
        for i0 in range(psi.shape[0]):
            if i0 & step:
                continue
            i1 = i0 | step
            a = psi[i0]
            b = psi[i1]
            psi[i0] = u00 * a + u01 * b
            psi[i1] = u10 * a + u11 * b

    @njit(cache=True)
    def _nb_sv_apply_cnot(psi, c, t, n):
        cbit = 1 << (n - 1 - c)
        tbit = 1 << (n - 1 - t)
        for i in range(psi.shape[0]):
            if (i & cbit) and not (i & tbit):
                j = i | tbit
                tmp = psi[i]
                psi[i] = psi[j]
                psi[j] = tmp

    @njit(cache=True)
    def _nb_dm_apply_1q(rho, u, q, n):
        step = 1 << (n - 1 - q)
        dim = rho.shape[0]
        u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
        c00, c01, c10, c11 = np.conj(u00), np.conj(u01), np.conj(u10), np.conj(u11)
        # rows: rho <- u rho
        for i0 in range(dim):
            if i0 & step:
                continue
            i1 = i0 | step
            for j in range(dim):
                a = rho[i0, j]
                b = rho[i1, j]
                rho[i0, j] = u00 * a + u01 * b
                rho[i1, j] = u10 * a + u11 * b
        # columns: rho <- rho u^dagger
        for j0 in range(dim):
            if j0 & step:
                continue
            j1 = j0 | step
            for i in range(dim):
                a = rho[i, j0]
                b = rho[i, j1]
                rho[i, j0] = a * c00 + b * c01
                rho[i, j1] = a * c10 + b * c11

    @njit(cache=True)
    def _nb_dm_apply_cnot(rho, c, t, n):
        cbit = 1 << (n - 1 - c)
        tbit = 1 << (n - 1 - t)
        dim = rho.shape[0]
        for i in range(dim):
            if (i & cbit) and not (i & tbit):
                i2 = i | tbit
                for j in range(dim):
                    tmp = rho[i, j]
                    rho[i, j] = rho[i2, j]
                    rho[i2, j] = tmp
        for j in range(dim):
            if (j & cbit) and not (j & tbit):
                j2 = j | tbit
                for i in range(dim):
                    tmp = rho[i, j]
                    rho[i, j] = rho[i, j2]
                    rho[i, j2] = tmp

    @njit(cache=True)
    def _nb_dm_depolarize_1q(rho, p, q, n):
        if p == 0.0:
            return
        step = 1 << (n - 1 - q)
        dim = rho.shape[0]
        keep = 1.0 - p
        for i0 in range(dim):
            if i0 & step:
                continue
            i1 = i0 | step
            for j0 in range(dim):
                if j0 & step:
                    continue
                j1 = j0 | step
                avg = 0.5 * (rho[i0, j0] + rho[i1, j1])
                rho[i0, j0] = keep * rho[i0, j0] + p * avg
                rho[i1, j1] = keep * rho[i1, j1] + p * avg
                rho[i0, j1] *= keep
                rho[i1, j0] *= keep

    @njit(cache=True)
    def _nb_dm_depolarize_2q(rho, p, q1, q2, n):
        if p == 0.0:
            return
        b1 = 1 << (n - 1 - q1)
        b2 = 1 << (n - 1 - q2)
        offs = np.array([0, b2, b1, b1 | b2])
        dim = rho.shape[0]
        keep = 1.0 - p
        for i0 in range(dim):
            if (i0 & b1) or (i0 & b2):
                continue
            for j0 in range(dim):
                if (j0 & b1) or (j0 & b2):
                    continue
                tr = 0.0j
                for k in range(4):
                    tr += rho[i0 | offs[k], j0 | offs[k]]
                for k in range(4):
                    for m in range(4):
                        rho[i0 | offs[k], j0 | offs[m]] *= keep
                for k in range(4):
                    rho[i0 | offs[k], j0 | offs[k]] += 0.25 * p * tr

    @njit(cache=True)
    def _nb_parity(v):
        par = 0
        while v:
            par ^= v & 1
            v >>= 1
        return par

    @njit(cache=True)
    def _nb_sv_pauli_expvals(psi, xmasks, zmasks, nys):
        nterms = xmasks.shape[0]
        out = np.empty(nterms)
        for k in range(nterms):
            x = xmasks[k]
            z = zmasks[k]
            acc = 0.0j
            for i in range(psi.shape[0]):
                term = np.conj(psi[i ^ x]) * psi[i]
                if _nb_parity(i & z):
                    acc -= term
                else:
                    acc += term
            ny = nys[k] % 4
            if ny == 0:
                out[k] = acc.real
            elif ny == 1:
                out[k] = -acc.imag
            elif ny == 2:
                out[k] = -acc.real
            else:
                out[k] = acc.imag
        return out

    @njit(cache=True)
    def _nb_dm_pauli_expvals(rho, xmasks, zmasks, nys):
        nterms = xmasks.shape[0]
        out = np.empty(nterms)
        for k in range(nterms):
            x = xmasks[k]
            z = zmasks[k]
            acc = 0.0j
            for i in range(rho.shape[0]):
                if _nb_parity(i & z):
                    acc -= rho[i, i ^ x]
                else:
                    acc += rho[i, i ^ x]
            ny = nys[k] % 4
            if ny == 0:
                out[k] = acc.real
            elif ny == 1:
                out[k] = -acc.imag
            elif ny == 2:
                out[k] = -acc.real
            else:
                out[k] = acc.imag
        return out

    NUMBA_KERNELS = SimpleNamespace(
        name="numba",
        sv_apply_1q=_nb_sv_apply_1q,
        sv_apply_cnot=_nb_sv_apply_cnot,
        dm_apply_1q=_nb_dm_apply_1q,
        dm_apply_cnot=_nb_dm_apply_cnot,
        dm_depolarize_1q=_nb_dm_depolarize_1q,
        dm_depolarize_2q=_nb_dm_depolarize_2q,
        sv_pauli_expvals=_nb_sv_pauli_expvals,
        dm_pauli_expvals=_nb_dm_pauli_expvals,
    )
else:  # pragma: no cover
    NUMBA_KERNELS = None


USE_NUMBA = _HAVE_NUMBA and not _flag("QFIDSUS_DISABLE_NUMBA")
kernels = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
