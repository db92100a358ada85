"""Dense condition-number kernels and checks of the preconditioner
quality bounds (residual-based distance to the inverse, conditioning of
the preconditioned operator versus its closed-form estimate, and the
feasibility constraint linking build precision to the column tolerance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .precision import SingularMatrixError
from .refine import norm_inf
from .spai import SpaiParams, SpaiPreconditioner
from .sparse import SparseMatrix

__all__ = [
    "BoundReport",
    "BoundViolationError",
    "kappa_inf",
    "cond2_transpose",
    "kappa_inf_product",
    "check_bounds",
]


class BoundViolationError(AssertionError):
    """A guaranteed preconditioner quality bound failed to hold."""


def _dense(A) -> np.ndarray:
    return A.to_dense() if isinstance(A, SparseMatrix) else np.asarray(A, dtype=np.float64)


def _inv(A: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("singular") from exc


def kappa_inf(A) -> float:
    """Infinity-norm condition number via a dense inverse (desk scale)."""
    Ad = _dense(A)
    return norm_inf(Ad) * norm_inf(_inv(Ad))


def _two_norm_power(X: np.ndarray, tol: float = 1e-4, max_iters: int = 500) -> float:
    """Largest singular value of X by power iteration on X^T X.

    Deterministic start vector; iterates until the estimate stabilizes to
    roughly three digits.
    """
    n = X.shape[1]
    v = np.ones(n) / np.sqrt(n)
    sigma = 0.0
    for _ in range(max_iters):
        w = X @ v
        v_new = X.T @ w
        norm = np.linalg.norm(v_new)
        if norm == 0.0:
            return 0.0
        v_new /= norm
        sigma_new = float(np.linalg.norm(X @ v_new))
        if sigma_new > 0 and abs(sigma_new - sigma) <= tol * sigma_new:
            return sigma_new
        sigma = sigma_new
        v = v_new
    return sigma


def cond2_transpose(A) -> float:
    """2-norm condition measure |inv(A^T)| |A^T| of the transposed system."""
    Ad = _dense(A)
    X = np.abs(_inv(Ad).T) @ np.abs(Ad.T)
    return _two_norm_power(X)


def kappa_inf_product(P: SparseMatrix, A: SparseMatrix) -> float:
    """Infinity-norm condition number of the preconditioned operator P A."""
    prod = (P.to_scipy_csc() @ A.to_scipy_csc()).toarray()
    return kappa_inf(prod)


@dataclass
class BoundReport:
    """Measured preconditioner quality against its guaranteed bounds.

    ``norm_I_minus_PA`` and ``dist_to_inverse`` are hard-bounded by
    ``bound_2n_eps`` and ``dist_bound`` whenever every column met its
    tolerance; ``kappa_tilde`` versus ``estimate`` is recorded only (the
    estimate is a heuristic, not an upper bound).
    """

    n: int
    eps: float
    uf: str
    norm_I_minus_PA: float
    bound_2n_eps: float
    kappa_tilde: float
    estimate: float
    dist_to_inverse: float
    dist_bound: float
    feasible: bool
    satisfied_all: bool
    cond2_at: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def check_bounds(A: SparseMatrix, pre: SpaiPreconditioner, params: SpaiParams | None = None) -> BoundReport:
    """Fill a :class:`BoundReport` for a built preconditioner.

    When every column is satisfied the two residual bounds are asserted
    (raising :class:`BoundViolationError` on failure); otherwise the report
    is returned flagged, with nothing asserted.
    """
    params = params if params is not None else pre.params
    n = A.n_rows
    eps = params.eps
    Ad = _dense(A)
    invA = _inv(Ad)
    Pd = pre.P.to_dense()
    resid = np.eye(n) - Pd @ Ad
    norm_res = norm_inf(resid)
    bound = 2.0 * n * eps
    dist = norm_inf(Pd - invA)
    dist_bound = bound * norm_inf(invA)
    cond2_at = cond2_transpose(A)
    feasible = params.uf.unit_roundoff * cond2_at <= eps
    kt = kappa_inf_product(pre.P, A)
    estimate = (1.0 + 2.0 * n * eps) ** 2
    satisfied_all = pre.all_satisfied
    report = BoundReport(
        n=n,
        eps=eps,
        uf=params.uf.name,
        norm_I_minus_PA=norm_res,
        bound_2n_eps=bound,
        kappa_tilde=kt,
        estimate=estimate,
        dist_to_inverse=dist,
        dist_bound=dist_bound,
        feasible=feasible,
        satisfied_all=satisfied_all,
        cond2_at=cond2_at,
    )
    if satisfied_all:
        if norm_res > bound:
            raise BoundViolationError(
                f"residual bound violated: |I - P A| = {norm_res:.3e} > 2 n eps = {bound:.3e}"
            )
        if dist > dist_bound:
            raise BoundViolationError(
                f"inverse distance bound violated: {dist:.3e} > {dist_bound:.3e}"
            )
    return report
