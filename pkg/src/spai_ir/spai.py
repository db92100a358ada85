"""Adaptive sparse approximate inverse construction.

Builds an explicit sparse M with M ~= inv(B) column by column: each column
solves a small dense least-squares problem on the current sparsity pattern,
and while the column residual is above the tolerance the pattern is grown
with the candidate indices that most reduce the residual in a univariate
sense.  All arithmetic runs in a configurable emulated precision.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .precision import (
    ERRSTATE,
    SINGLE,
    Precision,
    _rnd,
    fl_dot,
    fl_norm2,
    fl_op,
    fl_sum,
)
from .sparse import (
    ScalingInfo,
    SparseMatrix,
    column_scale,
    extract_submatrix,
    index_set,
    shadow,
)

__all__ = [
    "SpaiParams",
    "SpaiPreconditioner",
    "RankDeficiencySignal",
    "build_spai",
    "build_left_preconditioner",
    "solve_column_ls",
    "rho_score",
    "augment_pattern",
]

COL_OK = "ok"
COL_OVERFLOW = "overflow"
COL_STAGNATED = "stagnated"
COL_RANK_DEFICIENT = "rank_deficient"


class RankDeficiencySignal(ArithmeticError):
    """A least-squares subproblem became numerically rank deficient."""


@dataclass(frozen=True)
class SpaiParams:
    """Inputs of the adaptive construction.

    ``eps`` is the per-column residual tolerance, ``alpha`` the maximum
    number of augmentation rounds (``None`` means ceil(n / beta), which lets
    a column fill in as much as it needs), ``beta`` the maximum number of
    indices added per round.  ``initial_pattern`` is ``"identity"`` or
    ``"pattern"`` (the sparsity of the input matrix itself).
    """

    eps: float
    alpha: int | None = None
    beta: int = 8
    initial_pattern: str = "identity"
    uf: Precision = SINGLE

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.beta < 1:
            raise ValueError("beta must be at least 1")
        if self.initial_pattern not in ("identity", "pattern"):
            raise ValueError(f"unknown initial pattern {self.initial_pattern!r}")

    def resolved_alpha(self, n: int) -> int:
        return self.alpha if self.alpha is not None else math.ceil(n / self.beta)


@dataclass
class SpaiPreconditioner:
    """The assembled preconditioner plus per-column construction statistics.

    ``col_resnorm`` holds the final residual 2-norm of each column as
    measured in the build precision, ``col_rounds`` the number of pattern
    augmentations, ``satisfied`` whether the column met the tolerance, and
    ``col_status`` one of ``ok | overflow | stagnated | rank_deficient``.
    """

    P: SparseMatrix
    col_resnorm: np.ndarray
    col_rounds: np.ndarray
    satisfied: np.ndarray
    col_status: list[str]
    params: SpaiParams
    scaling: ScalingInfo | None = None

    @property
    def nnz(self) -> int:
        return self.P.nnz

    @property
    def all_satisfied(self) -> bool:
        return bool(np.all(self.satisfied))

    def stats_dict(self) -> dict:
        return {
            "nnz": self.nnz,
            "eps": self.params.eps,
            "uf": self.params.uf.name,
            "all_satisfied": self.all_satisfied,
            "max_col_resnorm": float(np.max(self.col_resnorm)) if self.col_resnorm.size else 0.0,
            "total_rounds": int(np.sum(self.col_rounds)),
            "abnormal_columns": sum(1 for s in self.col_status if s != COL_OK),
        }


def solve_column_ls(Abar: np.ndarray, ebar: np.ndarray, uf: Precision):
    """Least squares min ||Abar m - ebar||_2 by Householder QR, all in ``uf``.

    Returns ``(mbar, sbar)`` where ``sbar = Abar @ mbar - ebar`` is also
    accumulated in ``uf``.  Raises :class:`RankDeficiencySignal` when a
    diagonal of R rounds to zero (or the problem is structurally wide).
    """
    A = np.array(Abar, dtype=np.float64)
    e = np.array(ebar, dtype=np.float64)
    m, p = A.shape
    if p > m:
        raise RankDeficiencySignal("wide least-squares block")
    with np.errstate(**ERRSTATE):
        return _solve_column_ls_body(A, e, np.array(Abar, dtype=np.float64), m, p, uf)


def _solve_column_ls_body(A, e, B, m, p, uf):
    e_orig = e.copy()
    for j in range(p):
        x = A[j:, j]
        nx = fl_norm2(x, uf)
        if nx == 0.0:
            raise RankDeficiencySignal(f"zero pivot column {j}")
        alpha = -nx if x[0] >= 0.0 else nx
        v = x.copy()
        v[0] = fl_op("sub", x[0], alpha, p=uf)
        vtv = fl_dot(v, v, uf)
        if vtv != 0.0:
            # apply H = I - 2 v v^T / (v^T v) to the trailing block and to e
            if j + 1 < p:
                s = fl_dot(v[:, None], A[j:, j + 1 :], uf, axis=0)
                coef = _rnd(_rnd(2.0 * s, uf) / vtv, uf)
                A[j:, j + 1 :] = _rnd(
                    A[j:, j + 1 :] - _rnd(v[:, None] * coef[None, :], uf), uf
                )
            se = fl_dot(v, e[j:], uf)
            ce = fl_op("div", fl_op("mul", 2.0, se, p=uf), vtv, p=uf)
            e[j:] = _rnd(e[j:] - _rnd(v * ce, uf), uf)
        A[j, j] = alpha
        A[j + 1 :, j] = 0.0
        if _rnd(np.array([alpha]), uf)[0] == 0.0:
            raise RankDeficiencySignal(f"diagonal {j} rounds to zero")
    mbar = np.zeros(p)
    for c in range(p - 1, -1, -1):
        s = fl_dot(A[c, c + 1 :], mbar[c + 1 :], uf) if c + 1 < p else 0.0
        mbar[c] = fl_op("div", fl_op("sub", e[c], s, p=uf), A[c, c], p=uf)
    # residual on the original block, fixed ascending-column accumulation
    y = np.zeros(m)
    for c in range(p):
        y = _rnd(y + _rnd(B[:, c] * mbar[c], uf), uf)
    sbar = _rnd(y - e_orig, uf)
    return mbar, sbar


def rho_score(sbar: np.ndarray, a_col_on_I: np.ndarray, uf: Precision) -> float:
    """Predicted residual norm if one candidate column joins the pattern.

    Equals the minimum over scalars mu of ||sbar + mu * a|| in exact
    arithmetic; computed here in ``uf`` with the radicand clamped at zero.
    """
    a = np.asarray(a_col_on_I, dtype=np.float64)
    if not np.any(a):
        raise ValueError("zero candidate column: score undefined")
    ss = fl_dot(sbar, sbar, uf)
    num = fl_dot(sbar, a, uf)
    den = fl_dot(a, a, uf)
    q = fl_op("div", fl_op("mul", num, num, p=uf), den, p=uf)
    rad = fl_op("sub", ss, q, p=uf)
    if rad < 0.0:
        rad = 0.0
    return fl_op("sqrt", rad, p=uf)


def augment_pattern(
    A: SparseMatrix,
    k: int,
    Ik: np.ndarray,
    Jk: np.ndarray,
    sbar: np.ndarray,
    beta: int,
    uf: Precision,
    A_t: SparseMatrix | None = None,
) -> np.ndarray:
    """Grow the pattern of column k by up to ``beta`` acceptable candidates.

    Candidates are the unvisited column indices of the rows in Ik plus row k;
    a candidate is acceptable when its score is at most the mean score, and
    the smallest scores win (ties broken by smallest column index).  Returns
    Jk unchanged when no candidate exists.
    """
    if A_t is None:
        A_t = A.transpose()
    Lk = index_set(np.append(Ik, k))
    pieces = [A_t.col(int(ell))[0] for ell in Lk]
    cand = np.setdiff1d(np.concatenate(pieces), Jk) if pieces else np.empty(0, np.int64)
    if cand.size == 0:
        return Jk
    C = extract_submatrix(A, Ik, cand)
    usable = np.any(C != 0.0, axis=0)
    cand, C = cand[usable], C[:, usable]
    if cand.size == 0:
        return Jk
    with np.errstate(**ERRSTATE):
        ss = fl_dot(sbar, sbar, uf)
        dots = fl_dot(sbar[:, None], C, uf, axis=0)
        dens = fl_dot(C, C, uf, axis=0)
        q = _rnd(_rnd(dots * dots, uf) / dens, uf)
        rad = np.maximum(_rnd(ss - q, uf), 0.0)
        rho = _rnd(np.sqrt(rad), uf)
        rho_mean = fl_op("div", fl_sum(rho, uf), float(cand.size), p=uf)
    order = np.lexsort((cand, rho))
    chosen = [int(cand[i]) for i in order[: int(beta)] if rho[i] <= rho_mean]
    if not chosen:
        return Jk
    return index_set(np.concatenate([Jk, np.asarray(chosen, dtype=np.int64)]))


def build_spai(At: SparseMatrix, params: SpaiParams, max_workers: int = 1) -> SpaiPreconditioner:
    """Adaptive approximate inverse M ~= inv(At), all arithmetic in ``params.uf``.

    The input values are first rounded into the build precision (entries
    that round to zero are dropped).  Columns are independent: they may be
    computed concurrently and the result is identical for any execution
    order.  Abnormal columns (overflow, stagnation, rank deficiency) are
    frozen at their last finite state and flagged rather than aborting the
    whole construction.
    """
    if At.n_rows != At.n_cols:
        raise ValueError("square matrix required")
    n = At.n_rows
    B = At.rounded(params.uf)
    if params.initial_pattern == "identity":
        diag_ok = np.zeros(n, dtype=bool)
        for j in range(n):
            diag_ok[j] = bool(np.any(B.col(j)[0] == j))
        if not np.all(diag_ok):
            j = int(np.nonzero(~diag_ok)[0][0])
            raise ValueError(
                f"zero diagonal at index {j}: identity initial pattern needs a nonzero diagonal"
            )
    B_t = B.transpose()
    alpha = params.resolved_alpha(n)

    def column(k: int):
        if params.initial_pattern == "identity":
            first = index_set([k])
        else:
            rows = B.col(k)[0]
            first = index_set(rows) if rows.size else index_set([k])
        return _build_column(B, B_t, k, first, params.eps, alpha, params.beta, params.uf)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(column, range(n)))
    else:
        results = [column(k) for k in range(n)]

    rows_acc = []
    vals_acc = []
    colptr_cols = []
    resnorm = np.zeros(n)
    rounds = np.zeros(n, dtype=np.int64)
    satisfied = np.zeros(n, dtype=bool)
    status: list[str] = []
    for k, (J, vals, rn, rd, sat, st) in enumerate(results):
        rows_acc.append(J)
        vals_acc.append(vals)
        colptr_cols.append(np.full(J.size, k, dtype=np.int64))
        resnorm[k] = rn if math.isfinite(rn) else np.inf
        rounds[k] = rd
        satisfied[k] = sat
        status.append(st)
    M = SparseMatrix.from_coo(
        n,
        n,
        np.concatenate(rows_acc) if rows_acc else np.empty(0, np.int64),
        np.concatenate(colptr_cols) if colptr_cols else np.empty(0, np.int64),
        np.concatenate(vals_acc) if vals_acc else np.empty(0),
    )
    return SpaiPreconditioner(
        P=M,
        col_resnorm=resnorm,
        col_rounds=rounds,
        satisfied=satisfied,
        col_status=status,
        params=params,
    )


def _build_column(B, B_t, k, first_pattern, eps, alpha, beta, uf):
    """Adaptive loop for one column: solve, test, augment, repeat.

    Returns ``(J, values, resnorm, rounds, satisfied, status)``; J and
    values describe the pattern of the last completed least-squares solve
    (an augmentation performed on the final round is never re-solved and is
    discarded).
    """
    Jk = first_pattern
    J_solved = np.empty(0, dtype=np.int64)
    values = np.empty(0)
    resnorm = math.inf
    rounds = 0
    satisfied = False
    status = COL_OK
    for step in range(alpha + 1):
        Ik = shadow(B, Jk)
        if Ik.size == 0:
            status = COL_STAGNATED
            break
        Abar = extract_submatrix(B, Ik, Jk)
        ebar = (Ik == k).astype(np.float64)
        try:
            mbar, sbar = solve_column_ls(Abar, ebar, uf)
        except RankDeficiencySignal:
            status = COL_RANK_DEFICIENT
            break
        if not (np.all(np.isfinite(mbar)) and np.all(np.isfinite(sbar))):
            status = COL_OVERFLOW
            break
        norm = fl_norm2(sbar, uf)
        if not math.isfinite(norm):
            status = COL_OVERFLOW
            break
        J_solved, values, resnorm = Jk, mbar, norm
        if norm <= eps:
            satisfied = True
            break
        if step == alpha:
            break
        grown = augment_pattern(B, k, Ik, Jk, sbar, beta, uf, A_t=B_t)
        if grown.size == Jk.size:
            status = COL_STAGNATED
            break
        Jk = grown
        rounds += 1
    return J_solved, values, resnorm, rounds, satisfied, status


def build_left_preconditioner(A: SparseMatrix, params: SpaiParams, max_workers: int = 1) -> SpaiPreconditioner:
    """Left preconditioner P ~= inv(A) via the transposed construction.

    The transpose is column-scaled so every column peaks at magnitude 1
    (this keeps low-precision builds inside the representable range), the
    approximate inverse M of the scaled transpose is built, and the scaling
    is folded back: P = M^T D.  Column statistics refer to the scaled system
    actually solved.
    """
    if A.n_rows != A.n_cols:
        raise ValueError("square matrix required")
    At = A.transpose()
    scaled, info = column_scale(At)
    pre = build_spai(scaled, params, max_workers=max_workers)
    P = pre.P.transpose().scale_columns(info.d)
    return SpaiPreconditioner(
        P=P,
        col_resnorm=pre.col_resnorm,
        col_rounds=pre.col_rounds,
        satisfied=pre.satisfied,
        col_status=pre.col_status,
        params=params,
        scaling=info,
    )
