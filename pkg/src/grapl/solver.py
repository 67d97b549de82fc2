"""Regularized least-squares estimation of arm means on a graph.

After ``t`` pulls the estimator solves ``V_t m = x_t`` with

    V_t = L_lambda + diag(n_t) / gamma,     x_t = sum_s (x_s - offset) e_{pi_s} / gamma,

and reports ``m + offset``. Each pull changes one diagonal entry of ``V_t``
and one entry of ``x_t``, so the previous solution is an excellent warm
start for conjugate gradient.
"""

from __future__ import annotations

import math
from typing import Callable, Union

import numpy as np
import scipy.linalg as sla

from .graph import LaplacianOperator

__all__ = [
    "ConvergenceError",
    "solve_cg",
    "EstimatorState",
    "dense_system",
    "dense_solve",
    "DiagVarianceTracker",
]

Operator = Union[np.ndarray, Callable[[np.ndarray], np.ndarray], LaplacianOperator]


class ConvergenceError(RuntimeError):
    """Conjugate gradient stopped before reaching the residual tolerance."""

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _as_matvec(op: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(op, np.ndarray):
        return lambda x: op @ x
    if hasattr(op, "matvec"):
        return op.matvec
    if callable(op):
        return op
    raise TypeError(f"cannot apply operator of type {type(op).__name__}")


def solve_cg(
    op: Operator,
    rhs: np.ndarray,
    x0: np.ndarray | None = None,
    *,
    rel_tol: float = 1e-12,
    max_iters: int | None = None,
    diag: np.ndarray | None = None,
) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradient for an SPD operator.

    Parameters
    ----------
    op : ndarray, callable or object with ``matvec``
        Symmetric positive definite operator.
    rhs : ndarray
        Right-hand side ``b``.
    x0 : ndarray, optional
        Warm start; zeros when omitted.
    rel_tol : float
        Stop once ``||op(x) - b|| <= rel_tol * ||b||``.
    max_iters : int, optional
        Iteration cap, ``10 * n`` by default.
    diag : ndarray, optional
        Diagonal of ``op`` for the preconditioner. Taken from
        ``op.diagonal()`` when available, otherwise no preconditioning.

    Raises
    ------
    ConvergenceError
        If the cap is reached first. The exception carries the final
        true residual norm.
    """
    matvec = _as_matvec(op)
    b = np.asarray(rhs, dtype=np.float64)
    n = b.shape[0]
    if max_iters is None:
        max_iters = 10 * max(n, 1)
    if diag is None:
        if isinstance(op, np.ndarray):
            diag = np.diag(op)
        elif hasattr(op, "diagonal"):
            diag = op.diagonal()
    inv_diag = None if diag is None else 1.0 / np.asarray(diag, dtype=np.float64)

    b_norm = math.sqrt(float(np.dot(b, b)))
    if b_norm == 0.0:
        return np.zeros(n)
    target = rel_tol * b_norm
    target_sq = target * target

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - matvec(x)
    iters = 0
    # Outer loop restarts from the true residual if the recurrence drifted.
    while True:
        if float(np.dot(r, r)) <= target_sq:
            return x
        z = r if inv_diag is None else inv_diag * r
        p = z.copy()
        rz = float(np.dot(r, z))
        while iters < max_iters:
            ap = matvec(p)
            pap = float(np.dot(p, ap))
            if pap <= 0:
                raise ConvergenceError(
                    "operator is not positive definite along a search direction",
                    float(np.linalg.norm(r)),
                    iters,
                )
            step = rz / pap
            x += step * p
            r -= step * ap
            iters += 1
            if float(np.dot(r, r)) <= target_sq:
                break
            z = r if inv_diag is None else inv_diag * r
            rz_new = float(np.dot(r, z))
            p *= rz_new / rz
            p += z
            rz = rz_new
        r = b - matvec(x)
        res = float(np.linalg.norm(r))
        if res <= target:
            return x
        if iters >= max_iters:
            raise ConvergenceError(
                f"CG did not reach rel_tol={rel_tol:g} in {max_iters} iterations "
                f"(residual {res:.3e}, target {target:.3e})",
                res,
                iters,
            )


class EstimatorState:
    """Incrementally updated graph-regularized mean estimate.

    ``offset`` is a reference level subtracted from every observation before
    accumulation and added back to the solution, so regularization shrinks
    toward ``offset`` rather than toward zero.

    With ``method="dense"`` a dense ``V_t^{-1}`` is kept by rank-one
    Sherman-Morrison updates and ``V_t^{-1} x_t`` seeds CG, which then only
    checks (and if needed repairs) the residual. ``"auto"`` picks dense for
    ``n <= dense_max_n``. Both methods meet the same ``rel_tol``.
    """

    def __init__(
        self,
        laplacian: LaplacianOperator,
        gamma: float,
        *,
        offset: float = 0.0,
        rel_tol: float = 1e-12,
        max_iters: int | None = None,
        method: str = "auto",
        dense_max_n: int = 1024,
    ) -> None:
        if not gamma > 0:
            raise ValueError(f"gamma must be positive, got {gamma!r}")
        if method not in ("auto", "cg", "dense"):
            raise ValueError(f"method must be 'auto', 'cg' or 'dense', got {method!r}")
        self.laplacian = laplacian
        self.gamma = float(gamma)
        self.offset = float(offset)
        self.rel_tol = rel_tol
        self.max_iters = max_iters
        n = laplacian.n
        self.pull_counts = np.zeros(n, dtype=np.int64)
        self.obs_accum = np.zeros(n)
        self.solution = np.zeros(n)
        self._pull_diag = np.zeros(n)
        self._lap_diag = laplacian.diagonal()
        # V_t as one CSR matrix; a pull only touches its diagonal slot.
        self._system = laplacian.to_sparse().tocsr()
        self._system.sum_duplicates()
        self._system.sort_indices()
        rows = np.repeat(np.arange(n), np.diff(self._system.indptr))
        self._diag_pos = np.flatnonzero(rows == self._system.indices)
        self._inverse = None
        if method == "dense" or (method == "auto" and n <= dense_max_n):
            inv = sla.cho_solve(sla.cho_factor(self._system.toarray()), np.eye(n))
            self._inverse = 0.5 * (inv + inv.T)

    @property
    def n(self) -> int:
        return self.laplacian.n

    @property
    def t(self) -> int:
        return int(self.pull_counts.sum())

    @property
    def means(self) -> np.ndarray:
        """Current estimate ``V_t^{-1} x_t + offset``."""
        return self.solution + self.offset

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._system @ x

    def diagonal(self) -> np.ndarray:
        return self._lap_diag + self._pull_diag

    def record_pull(self, arm: int, observation: float) -> "EstimatorState":
        if not 0 <= arm < self.n:
            raise IndexError(f"arm {arm} out of range for {self.n} arms")
        self.pull_counts[arm] += 1
        self._pull_diag[arm] = self.pull_counts[arm] / self.gamma
        self._system.data[self._diag_pos[arm]] = self._lap_diag[arm] + self._pull_diag[arm]
        self.obs_accum[arm] += (float(observation) - self.offset) / self.gamma
        start = self.solution
        if self._inverse is not None:
            col = self._inverse[:, arm].copy()
            col /= math.sqrt(self.gamma + col[arm])
            self._inverse -= np.outer(col, col)
            start = self._inverse @ self.obs_accum
        self.solution = solve_cg(
            self,
            self.obs_accum,
            start,
            rel_tol=self.rel_tol,
            max_iters=self.max_iters,
            diag=self.diagonal(),
        )
        return self

    def superlevel_estimate(self, tau: float) -> np.ndarray:
        return self.means >= tau


def dense_system(laplacian: LaplacianOperator, gamma: float, pull_counts: np.ndarray) -> np.ndarray:
    """Dense ``V = L_lambda + diag(n) / gamma``."""
    return laplacian.to_dense() + np.diag(np.asarray(pull_counts, dtype=np.float64) / gamma)


def dense_solve(
    laplacian: LaplacianOperator,
    gamma: float,
    pull_counts: np.ndarray,
    obs_accum: np.ndarray,
) -> np.ndarray:
    """Cholesky reference solution of ``V m = x``."""
    factor = sla.cho_factor(dense_system(laplacian, gamma, pull_counts))
    return sla.cho_solve(factor, obs_accum)


class DiagVarianceTracker:
    """Dense ``V_t^{-1}`` maintained by rank-one Sherman-Morrison updates.

    Verification utility for small graphs; ``max_n`` guards against
    accidental use at scale. Also tracks ``log det V_t - log det L_lambda``
    through the matrix determinant lemma.
    """

    def __init__(self, laplacian: LaplacianOperator, gamma: float, *, max_n: int = 512) -> None:
        if laplacian.n > max_n:
            raise ValueError(f"dense tracker limited to N <= {max_n}, got N = {laplacian.n}")
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)
        self.inverse = sla.cho_solve(sla.cho_factor(laplacian.to_dense()), np.eye(laplacian.n))
        self.inverse = 0.5 * (self.inverse + self.inverse.T)
        self.sigma0 = self.sigma.copy()
        self.pull_counts = np.zeros(laplacian.n, dtype=np.int64)
        self.logdet_ratio = 0.0

    @property
    def sigma(self) -> np.ndarray:
        """``sigma_i = sqrt((V_t^{-1})_{ii})``."""
        return np.sqrt(np.diag(self.inverse))

    def update(self, arm: int) -> "DiagVarianceTracker":
        col = self.inverse[:, arm].copy()
        denom = self.gamma + col[arm]
        self.inverse -= np.outer(col, col) / denom
        self.logdet_ratio += math.log1p(col[arm] / self.gamma)
        self.pull_counts[arm] += 1
        return self
