#!/usr/bin/env python3
"""Regenerate the synthetic matrix suite shipped under matrices/.

All constructions are deterministic (fixed seeds); rerunning must be a
no-op on the committed files.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from spai_ir.analysis import cond2_transpose, kappa_inf  # noqa: E402
from spai_ir.sparse import SparseMatrix  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "matrices"


def write_mtx(path: Path, A: np.ndarray, symmetric: bool = False):
    rows, cols = np.nonzero(A)
    if symmetric:
        keep = rows >= cols
        rows, cols = rows[keep], cols[keep]
    vals = A[rows, cols]
    sym = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {sym}\n")
        fh.write(f"% synthetic test matrix ({path.stem})\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(vals)}\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def ident(n):
    return np.eye(n)


def band_asym(n):
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = 4.0
        if i:
            A[i, i - 1] = -1.0 + 0.3 * np.sin(0.7 * i)
        if i + 1 < n:
            A[i, i + 1] = -1.4
        if i >= 9:
            A[i, i - 9] = 0.6
    return A


def lap2d(m):
    n = m * m
    A = np.zeros((n, n))
    for i in range(m):
        for j in range(m):
            k = i * m + j
            A[k, k] = 4.0
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < m and 0 <= jj < m:
                    A[k, ii * m + jj] = -1.0
    return A


def dd_rand(n, seed=20240611):
    rng = np.random.RandomState(seed)
    A = np.zeros((n, n))
    for i in range(n):
        offs = rng.choice(n, size=5, replace=False)
        for j in offs:
            if j != i:
                A[i, j] = rng.uniform(-1.0, 1.0)
        A[i, i] = np.abs(A[i]).sum() + 1.0 + rng.uniform(0.0, 0.5)
    return A


def conv_diff(m, gamma=0.4):
    n = m * m
    A = np.zeros((n, n))
    for i in range(m):
        for j in range(m):
            k = i * m + j
            A[k, k] = 4.0
            if i > 0:
                A[k, k - m] = -1.0
            if i + 1 < m:
                A[k, k + m] = -1.0
            if j > 0:
                A[k, k - 1] = -1.0 - gamma
            if j + 1 < m:
                A[k, k + 1] = -1.0 + gamma
    return A


def colscale(n, seed=777):
    # moderate two-sided scaling: stresses the scaling path without making
    # the least-squares subproblems hopeless at low precision
    rng = np.random.RandomState(seed)
    B = np.zeros((n, n))
    for i in range(n):
        B[i, i] = 4.0
        if i:
            B[i, i - 1] = -1.0
        if i + 1 < n:
            B[i, i + 1] = -0.8
        if i + 5 < n:
            B[i, i + 5] = 0.3
    dl = 10.0 ** rng.uniform(-1, 1, size=n)
    dr = 10.0 ** rng.uniform(-1, 1, size=n)
    return dl[:, None] * B * dr[None, :]


def main():
    OUT.mkdir(exist_ok=True)
    jobs = {
        "ident_32": (ident(32), False),
        "band_asym_120": (band_asym(120), False),
        "lap2d_196": (lap2d(14), True),
        "dd_rand_64": (dd_rand(64), False),
        "conv_diff_225": (conv_diff(15), False),
        "colscale_80": (colscale(80), False),
    }
    for name, (A, sym) in jobs.items():
        write_mtx(OUT / f"{name}.mtx", A, symmetric=sym)
        S = SparseMatrix.from_dense(A)
        print(
            f"{name}: n={A.shape[0]} nnz={S.nnz} "
            f"kappa_inf={kappa_inf(S):.3e} cond2_t={cond2_transpose(S):.3e}"
        )


if __name__ == "__main__":
    main()
