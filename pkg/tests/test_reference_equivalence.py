"""Cross-validation against naive dense reference implementations.

In pure double precision the emulated pipeline performs exact double
arithmetic, so a from-scratch dense implementation of the same adaptive
construction and refinement protocol must reproduce the pattern evolution
exactly and the solver behavior almost exactly.  This guards the protocol
logic (candidate sets, acceptance filter, stopping rules) independently of
the golden-table data.
"""

import math

import numpy as np
import pytest

from conftest import random_dd_sparse
from spai_ir.krylov import GmresConfig, pgmres_left
from spai_ir.precision import DOUBLE, QUAD
from spai_ir.refine import IrConfig, run_ir
from spai_ir.spai import SpaiParams, build_spai
from spai_ir.sparse import SparseMatrix


def naive_spai(A: np.ndarray, eps: float, alpha: int, beta: int):
    """Literal dense transcription of the adaptive construction (double only)."""
    n = A.shape[0]
    M = np.zeros((n, n))
    rounds = np.zeros(n, dtype=int)
    for k in range(n):
        J = [k]
        m_sol = None
        for step in range(alpha + 1):
            I = np.nonzero(np.abs(A[:, J]).sum(axis=1))[0]
            Abar = A[np.ix_(I, J)]
            ebar = (I == k).astype(float)
            m_sol, *_ = np.linalg.lstsq(Abar, ebar, rcond=None)
            s = Abar @ m_sol - ebar
            if np.linalg.norm(s) <= eps:
                break
            if step == alpha:
                break
            L = sorted(set(I.tolist()) | {k})
            cands = sorted({j for ell in L for j in np.nonzero(A[ell])[0]} - set(J))
            scored = []
            for j in cands:
                col = A[I, j]
                den = col @ col
                if den == 0.0:
                    continue
                rad = s @ s - (s @ col) ** 2 / den
                scored.append((math.sqrt(max(rad, 0.0)), j))
            if not scored:
                break
            mean = sum(r for r, _ in scored) / len(scored)
            scored.sort()
            chosen = [j for r, j in scored[:beta] if r <= mean]
            if not chosen:
                break
            J = sorted(set(J) | set(chosen))
            rounds[k] += 1
        M[J, k] = m_sol
    return M, rounds


@pytest.mark.parametrize("eps", [0.2, 0.4])
def test_double_precision_build_matches_naive_reference(rng, eps):
    # The two implementations may legitimately diverge on knife-edge score
    # ties (pairwise-tree vs BLAS dot products differ in the last ulp, which
    # can swap candidate ranks), so the assertion is: divergence stays rare
    # and every column of both builds still meets its tolerance.  A protocol
    # bug (wrong candidate set, wrong filter, wrong loop) would break the
    # match rate massively.
    n = 25
    total_cols = 0
    matched_cols = 0
    for trial in range(6):
        dense = random_dd_sparse(rng, n)
        At = SparseMatrix.from_dense(dense).transpose()
        pre = build_spai(At, SpaiParams(eps=eps, uf=DOUBLE))
        M_ref, rounds_ref = naive_spai(At.to_dense(), eps, math.ceil(n / 8), 8)
        got = pre.P.to_dense()
        assert pre.all_satisfied
        B = At.to_dense()
        for k in range(n):
            total_cols += 1
            same = np.array_equal(got[:, k] != 0.0, M_ref[:, k] != 0.0)
            if same:
                matched_cols += 1
                denom = np.abs(M_ref[:, k]).max()
                assert np.abs(got[:, k] - M_ref[:, k]).max() <= 1e-10 * max(denom, 1e-300)
                assert pre.col_rounds[k] == rounds_ref[k]
            # matched or not, the reference build must satisfy the tolerance
            ek = (np.arange(n) == k).astype(float)
            assert np.linalg.norm(ek - B @ M_ref[:, k]) <= eps * (1 + 1e-12)
        assert abs(pre.nnz - np.count_nonzero(M_ref)) <= 0.02 * pre.nnz + 2
    assert matched_cols >= 0.9 * total_cols, (matched_cols, total_cols)


def naive_mgs_gmres(op, z, tau, max_iters):
    """Textbook MGS-GMRES with Givens stopping estimate, plain double."""
    n = z.shape[0]
    beta = np.linalg.norm(z)
    V = np.zeros((n, max_iters + 1))
    H = np.zeros((max_iters + 1, max_iters))
    cs = np.zeros(max_iters)
    sn = np.zeros(max_iters)
    g = np.zeros(max_iters + 1)
    g[0] = beta
    V[:, 0] = z / beta
    k = 0
    for j in range(max_iters):
        w = op(V[:, j])
        for i in range(j + 1):
            H[i, j] = V[:, i] @ w
            w = w - H[i, j] * V[:, i]
        H[j + 1, j] = np.linalg.norm(w)
        for i in range(j):
            t1 = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            t2 = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j], H[i + 1, j] = t1, t2
        denom = math.hypot(H[j, j], H[j + 1, j])
        cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        k = j + 1
        if abs(g[j + 1]) / beta <= tau:
            break
        V[:, j + 1] = w / np.linalg.norm(w)
    y = np.linalg.solve(np.triu(H[:k, :k]), g[:k])
    return V[:, :k] @ y, k


def test_double_gmres_iteration_counts_match_naive(rng):
    for trial in range(5):
        dense = random_dd_sparse(rng, 40)
        A = SparseMatrix.from_dense(dense)
        r = rng.randn(40)
        tau = 1e-8
        d, rep = pgmres_left(A, None, r, GmresConfig(tau=tau, max_iters=40, ug=DOUBLE, up=DOUBLE))
        d_ref, k_ref = naive_mgs_gmres(lambda v: dense @ v, r, tau, 40)
        assert abs(rep.iters - k_ref) <= 1, f"trial {trial}: {rep.iters} vs {k_ref}"
        assert np.abs(d - d_ref).max() <= 1e-6 * np.abs(d_ref).max()


def test_refinement_step_counts_match_naive_protocol(rng):
    # all-double five-precision config against a plain numpy transcription of
    # the refinement loop with the same convergence rule
    for trial in range(3):
        dense = random_dd_sparse(rng, 30)
        A = SparseMatrix.from_dense(dense)
        b = rng.randn(30)
        n = 30
        tau = 1e-8
        cfg = IrConfig(uf=DOUBLE, u=DOUBLE, ur=QUAD, solver="spai", tau=tau,
                       spai=SpaiParams(eps=0.3, uf=DOUBLE))
        x, rep = run_ir(A, b, cfg)

        # naive protocol
        M_ref, _ = naive_spai(dense.T, 0.3, math.ceil(n / 8), 8)
        P = M_ref.T
        x_star = np.linalg.solve(dense, b)
        xn = P @ b
        steps = 0
        iters = []
        u = 2.0**-53
        for _ in range(10):
            ferr = np.abs(x_star - xn).max() / np.abs(x_star).max()
            nbe = np.abs(b - dense @ xn).max() / (
                np.abs(b).max() + np.abs(dense).sum(axis=1).max() * np.abs(xn).max()
            )
            if ferr <= n * u and nbe <= n * u:
                break
            rn = b - dense @ xn
            d_ref, k_ref = naive_mgs_gmres(lambda v: P @ (dense @ v), P @ rn, tau, n)
            xn = xn + d_ref
            steps += 1
            iters.append(k_ref)
        assert rep.converged
        assert rep.steps == steps, f"trial {trial}: {rep.steps} vs {steps} ({rep.gmres_iters_per_step} vs {iters})"
        for a, b_ in zip(rep.gmres_iters_per_step, iters):
            assert abs(a - b_) <= 2, f"trial {trial}: {rep.gmres_iters_per_step} vs {iters}"
