"""Numba vs numpy simulator kernels.

    python3 benchmarks/bench_kernels.py [--qubits 3 5 7 9] [--repeat 200]

Each kernel is checked against its numpy twin before timing.  The last
block times one noisy L=6 sweep cell end to end in a subprocess with and
without QFIDSUS_DISABLE_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qfidsus._kernels import NUMBA_KERNELS, NUMPY_KERNELS


def random_dm(n, rng):
    a = rng.normal(size=(1 << n, 1 << n)) + 1j * rng.normal(size=(1 << n, 1 << n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_unitary(rng):
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    return q


def cases(n, rng):
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    psi /= np.linalg.norm(psi)
    rho = random_dm(n, rng)
    u = random_unitary(rng)
    m = 8
    xm = rng.integers(0, 1 << n, size=m).astype(np.int64)
    zm = rng.integers(0, 1 << n, size=m).astype(np.int64)
    ny = np.array([bin(x & z).count("1") for x, z in zip(xm, zm)], dtype=np.int64)
    q, c, t = 0, n // 2, n - 1
    return {
        "sv_apply_1q": (psi, (u, q, n)),
        "sv_apply_cnot": (psi, (c, t, n)),
        "dm_apply_1q": (rho, (u, q, n)),
        "dm_apply_cnot": (rho, (c, t, n)),
        "dm_depolarize_1q": (rho, (0.01, c, n)),
        "dm_depolarize_2q": (rho, (0.01, c, t, n)),
        "sv_pauli_expvals": (psi, (xm, zm, ny)),
        "dm_pauli_expvals": (rho, (xm, zm, ny)),
    }


def bench(n, repeat, rng):
    rows = []
    for name, (state, args) in cases(n, rng).items():
        f_np = getattr(NUMPY_KERNELS, name)
        f_nb = getattr(NUMBA_KERNELS, name)
        a, b = state.copy(), state.copy()
        ra, rb = f_np(a, *args), f_nb(b, *args)  # also triggers compilation
        ref, got = (ra, rb) if ra is not None else (a, b)
        err = float(np.max(np.abs(np.asarray(ref) - np.asarray(got))))
        t_np = min(timeit.repeat(lambda: f_np(state.copy(), *args), number=repeat, repeat=3)) / repeat
        t_nb = min(timeit.repeat(lambda: f_nb(state.copy(), *args), number=repeat, repeat=3)) / repeat
        rows.append((n, name, t_np * 1e6, t_nb * 1e6, t_np / t_nb, err))
    return rows


CELL = (
    "import time; from qfidsus import pipeline as p;"
    "spec = p.EstimatorSpec('noisy');"
    "p.run_cell(6, 0, 0.9, spec, 1, 1234);"
    "t = time.perf_counter(); p.run_cell(6, 0, 0.9, spec, {trials}, 1234);"
    "print(time.perf_counter() - t)"
)


def end_to_end(trials):
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, QFIDSUS_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", CELL.format(trials=trials)], env=env,
                             capture_output=True, text=True, check=True)
        out[label] = float(res.stdout.strip())
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--qubits", type=int, nargs="+", default=[3, 5, 7, 9])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--skip-cell", action="store_true")
    args = ap.parse_args()
    if NUMBA_KERNELS is None:
        sys.exit("numba is not installed")

    rng = np.random.default_rng(0)
    print(f"{'n':>2} {'kernel':<18} {'numpy us':>10} {'numba us':>10} {'speedup':>8} {'max|diff|':>10}")
    for n in args.qubits:
        for n_, name, t_np, t_nb, sp, err in bench(n, args.repeat, rng):
            print(f"{n_:>2} {name:<18} {t_np:>10.2f} {t_nb:>10.2f} {sp:>8.2f} {err:>10.1e}")

    if not args.skip_cell:
        t = end_to_end(args.trials)
        print(f"\nnoisy L=6 cell, {args.trials} trials: numba {t['numba']:.3f} s, "
              f"numpy {t['numpy']:.3f} s, speedup {t['numpy'] / t['numba']:.2f}x")


if __name__ == "__main__":
    main()
