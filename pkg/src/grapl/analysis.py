"""Complexity measures, effective dimension and error-bound evaluators.

All bound evaluators return a :class:`BoundValue` holding the natural log
of the bound, its value (``inf`` on overflow, never clamped to ``[0, 1]``)
and whether the smoothness condition behind the bound holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import LaplacianOperator
from .solver import DiagVarianceTracker

__all__ = [
    "ComplexityReport",
    "BoundValue",
    "GammaStar",
    "Spectrum",
    "gaps",
    "smoothness_norm",
    "complexities",
    "effective_dimension",
    "cliques_effective_dimension",
    "m_constant",
    "t_zero",
    "gamma_star",
    "bound_grapl",
    "bound_nonadaptive",
    "bound_oracle",
    "bound_simplified",
    "bound_cliques_lower",
    "critical_iteration",
    "confidence_event",
    "sigma_decay_bound",
    "logdet_budget",
]

MAX_SPECTRUM_N = 4096


@dataclass(frozen=True)
class ComplexityReport:
    """Hardness of an instance.

    ``H_tilde`` and ``H_star`` are ``None`` when no arm is at least
    ``epsilon`` from the threshold; ``smoothness`` is ``None`` when no
    Laplacian was supplied.
    """

    H: float
    H_tilde: float | None
    H_star: float | None
    N_small: int
    smoothness: float | None
    n_arms: int
    epsilon: float


@dataclass(frozen=True)
class BoundValue:
    log_value: float
    condition_met: bool

    @property
    def value(self) -> float:
        if self.log_value > 709.0:
            return math.inf
        return math.exp(self.log_value)


@dataclass(frozen=True)
class GammaStar:
    gamma: float
    d_prime: int
    M: float
    iterations: int
    history: list[float] = field(default_factory=list)


class Spectrum:
    """Ascending eigenvalues of ``L_lambda``, computed densely."""

    def __init__(self, eigenvalues: np.ndarray, ridge: float) -> None:
        eig = np.sort(np.asarray(eigenvalues, dtype=np.float64))
        self.eigenvalues = eig
        self.ridge = float(ridge)

    @classmethod
    def from_laplacian(cls, laplacian: LaplacianOperator, *, max_n: int = MAX_SPECTRUM_N) -> "Spectrum":
        if laplacian.n > max_n:
            raise ValueError(f"dense eigensolve limited to N <= {max_n}, got N = {laplacian.n}")
        eig = np.linalg.eigvalsh(laplacian.to_dense())
        # Roundoff can push the smallest eigenvalues a hair below the ridge.
        return cls(np.maximum(eig, laplacian.ridge), laplacian.ridge)

    @property
    def n(self) -> int:
        return int(self.eigenvalues.size)


def _eigs(spectrum: Spectrum | np.ndarray) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return spectrum.eigenvalues
    return np.sort(np.asarray(spectrum, dtype=np.float64))


def gaps(mu: np.ndarray, tau: float, epsilon: float) -> np.ndarray:
    """``|mu_i - tau| + epsilon``."""
    return np.abs(np.asarray(mu, dtype=np.float64) - tau) + epsilon


def smoothness_norm(laplacian: LaplacianOperator, mu: np.ndarray, offset: float = 0.0) -> float:
    """``||mu - offset||`` in the ``L_lambda`` norm."""
    return laplacian.norm(np.asarray(mu, dtype=np.float64) - offset)


def complexities(
    mu: np.ndarray,
    tau: float,
    epsilon: float,
    laplacian: LaplacianOperator | None = None,
    offset: float = 0.0,
) -> ComplexityReport:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    mu = np.asarray(mu, dtype=np.float64)
    dist = np.abs(mu - tau)
    H = float(np.sum((dist + epsilon) ** -2.0))
    sep = dist >= epsilon
    if sep.any():
        H_tilde = mu.size / float(np.min(dist[sep]) ** 2)
        H_star = float(np.sum(dist[sep] ** -2.0))
    else:
        H_tilde = H_star = None
    smooth = None if laplacian is None else smoothness_norm(laplacian, mu, offset)
    return ComplexityReport(H, H_tilde, H_star, int(np.count_nonzero(~sep)), smooth, int(mu.size), float(epsilon))


def _dim_thresholds(eig: np.ndarray, gamma: float) -> np.ndarray:
    # (d - 1) * gamma * lambda_d for d = 1..N; nondecreasing in d.
    return np.arange(eig.size) * gamma * eig


def _dim_rhs(T, n: int | None, gamma: float, lam: float):
    Tc = T if n is None else np.minimum(T, n)
    return Tc / np.log1p(Tc / (gamma * lam))


def effective_dimension(
    spectrum: Spectrum | np.ndarray,
    T: float,
    gamma: float,
    lam: float,
    *,
    cap_horizon: bool = True,
) -> int:
    """Largest ``d`` with ``(d - 1) gamma lambda_d <= T' / log(1 + T'/(gamma lam))``.

    Eigenvalues are those of ``L_lambda`` in ascending order. ``T' = min(T, N)``
    by default; ``cap_horizon=False`` keeps ``T' = T``, which is what the
    log-determinant inequality needs once ``T > N`` (see :func:`logdet_budget`).
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    eig = _eigs(spectrum)
    rhs = _dim_rhs(float(T), eig.size if cap_horizon else None, gamma, lam)
    return max(1, int(np.searchsorted(_dim_thresholds(eig, gamma), rhs, side="right")))


def _effective_dimension_many(eig: np.ndarray, T: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    rhs = _dim_rhs(T.astype(np.float64), eig.size, gamma, lam)
    return np.maximum(1, np.searchsorted(_dim_thresholds(eig, gamma), rhs, side="right"))


def cliques_effective_dimension(D: int, K: int, T: float, gamma: float, lam: float) -> int:
    """Closed-form effective dimension for ``D`` disjoint ``K``-cliques."""
    N = D * K
    Tc = min(T, N)
    log_term = math.log1p(Tc / (gamma * lam))
    first = min(D, math.floor(1 + Tc / (gamma * lam * log_term)))
    second = min(N, math.floor(1 + Tc / (gamma * (K + lam) * log_term)))
    return max(first, second)


def m_constant(alpha: float, gamma: float, lam: float) -> float:
    """``max(sqrt(alpha / (gamma lam)), sqrt(1 + alpha))``."""
    return max(math.sqrt(alpha / (gamma * lam)), math.sqrt(1 + alpha))


def _require_positive_R(R: float) -> None:
    if not R > 0:
        raise ValueError("bounds are undefined for R <= 0 (noiseless arms)")


def _require_smoothness(report: ComplexityReport) -> float:
    if report.smoothness is None:
        raise ValueError("report has no smoothness norm; pass a Laplacian to complexities()")
    return report.smoothness


def t_zero(report: ComplexityReport, gamma: float, alpha: float, lam: float) -> float:
    """Horizon at which the GrAPL smoothness condition starts to hold."""
    M = m_constant(alpha, gamma, lam)
    return gamma * report.H * (3 * M + 1) ** 2 * _require_smoothness(report) ** 2


def _exp_bound(reach: float, T: float, gamma: float, R: float, lam: float, s: float, d_T: int) -> BoundValue:
    # exp{-gamma^2/(2R^2) (reach - s)^2 + d_T log(1 + T/(gamma lam))}
    log_val = -(gamma**2) / (2 * R**2) * (reach - s) ** 2 + d_T * math.log1p(T / (gamma * lam))
    return BoundValue(log_val, s <= reach)


def bound_grapl(
    report: ComplexityReport,
    spectrum: Spectrum | np.ndarray,
    T: float,
    gamma: float,
    R: float,
    alpha: float,
    lam: float,
) -> BoundValue:
    """GrAPL upper bound on the expected loss."""
    _require_positive_R(R)
    s = _require_smoothness(report)
    M = m_constant(alpha, gamma, lam)
    reach = math.sqrt(T / (gamma * report.H)) / (3 * M + 1)
    return _exp_bound(reach, T, gamma, R, lam, s, effective_dimension(spectrum, T, gamma, lam))


def bound_nonadaptive(
    report: ComplexityReport,
    spectrum: Spectrum | np.ndarray,
    T: float,
    gamma: float,
    R: float,
    lam: float,
) -> BoundValue:
    """Upper bound for non-adaptive sampling that visits every arm each ``N`` pulls."""
    _require_positive_R(R)
    s = _require_smoothness(report)
    if report.H_tilde is None:
        raise ValueError("H_tilde undefined: no epsilon-separated arm")
    reach = math.sqrt(T / (gamma * report.H_tilde))
    return _exp_bound(reach, T, gamma, R, lam, s, effective_dimension(spectrum, T, gamma, lam))


def bound_oracle(
    report: ComplexityReport,
    spectrum: Spectrum | np.ndarray,
    T: float,
    gamma: float,
    R: float,
    lam: float,
) -> BoundValue:
    """Upper bound for the fractional oracle allocation."""
    _require_positive_R(R)
    s = _require_smoothness(report)
    if report.H_star is None:
        raise ValueError("H_star undefined: no epsilon-separated arm")
    reach = math.sqrt(T / (gamma * report.H_star))
    return _exp_bound(reach, T, gamma, R, lam, s, effective_dimension(spectrum, T, gamma, lam))


def _linear_rate(report: ComplexityReport, gamma: float, R: float, alpha: float, lam: float) -> float:
    M = m_constant(alpha, gamma, lam)
    return gamma / (4 * (3 * M + 1) ** 2 * R**2 * report.H)


def bound_simplified(
    report: ComplexityReport,
    spectrum: Spectrum | np.ndarray,
    T: float,
    gamma: float,
    R: float,
    alpha: float,
    lam: float,
) -> BoundValue:
    """``exp{-gamma T1 / (4 (3M+1)^2 R^2 H) + d_T log(1 + T/(gamma lam))}`` with ``T1 = T - T0``.

    Dominates :func:`bound_grapl` once ``T1 >= 8 T0``; ``condition_met``
    reports that regime.
    """
    _require_positive_R(R)
    T0 = t_zero(report, gamma, alpha, lam)
    T1 = T - T0
    d_T = effective_dimension(spectrum, T, gamma, lam)
    log_val = -_linear_rate(report, gamma, R, alpha, lam) * T1 + d_T * math.log1p(T / (gamma * lam))
    return BoundValue(log_val, T1 >= 8 * T0)


def bound_cliques_lower(D: int, K: int, T: float, R: float, H: float, N: int) -> float:
    """Lower bound on the expected loss for ``D`` disjoint ``K``-cliques with clique-constant means."""
    if N != D * K:
        raise ValueError("N must equal D * K")
    _require_positive_R(R)
    return math.exp(-3 * K * T / (R**2 * H) - 4 * math.log(12 * (math.log(T) + 1) * N))


def critical_iteration(
    report: ComplexityReport,
    spectrum: Spectrum | np.ndarray,
    gamma: float,
    R: float,
    alpha: float,
    lam: float,
    *,
    rate_scale: float = 1.0,
) -> int:
    """Smallest integer ``T`` where the linear decay term of :func:`bound_simplified`
    reaches the ``d_T log(1 + T/(gamma lam))`` term.

    ``rate_scale`` multiplies the linear coefficient, for sensitivity studies.
    """
    _require_positive_R(R)
    eig = _eigs(spectrum)
    n = eig.size
    rate = rate_scale * _linear_rate(report, gamma, R, alpha, lam)
    T0 = t_zero(report, gamma, alpha, lam)
    c = gamma * lam

    def excess(T: np.ndarray, d: np.ndarray) -> np.ndarray:
        return rate * (T - T0) - d * np.log1p(T / c)

    Ts = np.arange(1, n + 1, dtype=np.float64)
    hit = np.flatnonzero(excess(Ts, _effective_dimension_many(eig, Ts, gamma, lam)) >= 0)
    if hit.size:
        return int(hit[0]) + 1
    # Past N the effective dimension is frozen and the excess is convex in T,
    # so it crosses zero exactly once.
    d_n = effective_dimension(eig, n, gamma, lam)
    lo, hi = n, 2 * n
    while excess(np.float64(hi), d_n) < 0:
        lo, hi = hi, 2 * hi
        if hi > 1e18:
            raise OverflowError("critical iteration beyond 1e18")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if excess(np.float64(mid), d_n) >= 0:
            hi = mid
        else:
            lo = mid
    return int(hi)


def gamma_star(
    mu: np.ndarray,
    tau: float,
    epsilon: float,
    laplacian: LaplacianOperator,
    alpha: float,
    R: float,
    *,
    offset: float = 0.0,
    spectrum: Spectrum | np.ndarray | None = None,
    rel_tol: float = 1e-6,
    max_iter: int = 100,
) -> GammaStar:
    """Regularization weight balancing the warm-up and decay phases.

    ``M`` depends on ``gamma``, so the closed form is iterated from
    ``M = sqrt(1 + alpha)`` until the relative change drops below
    ``rel_tol``.
    """
    _require_positive_R(R)
    lam = laplacian.ridge
    report = complexities(mu, tau, epsilon, laplacian, offset)
    s = report.smoothness
    if not s > 0:
        raise ValueError("gamma* undefined for a zero smoothness norm")
    eig = _eigs(spectrum if spectrum is not None else Spectrum.from_laplacian(laplacian))
    thresholds = np.arange(eig.size) * eig

    M = math.sqrt(1 + alpha)
    history: list[float] = []
    gamma = d_prime = None
    for it in range(1, max_iter + 1):
        X = 9 * report.H * (3 * M + 1) ** 2 * s**2
        log_term = math.log1p(X / lam)
        d_prime = max(1, int(np.searchsorted(thresholds, X / log_term, side="right")))
        new_gamma = 2 * R / s * math.sqrt(d_prime * log_term)
        history.append(new_gamma)
        converged = gamma is not None and abs(new_gamma - gamma) <= rel_tol * abs(gamma)
        gamma = new_gamma
        M = m_constant(alpha, gamma, lam)
        if converged:
            return GammaStar(gamma, d_prime, M, it, history)
    raise RuntimeError(f"gamma* fixed point did not converge in {max_iter} iterations; last {gamma!r}")


def sigma_decay_bound(sigma0: np.ndarray, counts: np.ndarray, gamma: float) -> np.ndarray:
    """Upper bound ``sqrt(s0^2 / (1 + s0^2 n / gamma))`` on ``sigma_i^t``."""
    s2 = np.asarray(sigma0, dtype=np.float64) ** 2
    return np.sqrt(s2 / (1 + s2 * np.asarray(counts) / gamma))


def logdet_budget(
    spectrum: Spectrum | np.ndarray,
    T: float,
    gamma: float,
    lam: float,
    *,
    cap_horizon: bool = False,
) -> float:
    """``2 d_T log(1 + T / (gamma lam))``, the budget for ``log(|V_T| / |L_lambda|)``.

    The horizon is not capped at ``N`` here: with the cap, round-robin
    sampling on a graph with large ``gamma * lam`` exceeds the budget once
    ``T > N``.
    """
    d_T = effective_dimension(spectrum, T, gamma, lam, cap_horizon=cap_horizon)
    return 2 * d_T * math.log1p(T / (gamma * lam))


def confidence_event(
    laplacian: LaplacianOperator,
    gamma: float,
    mu: np.ndarray,
    arms: np.ndarray,
    values: np.ndarray,
    *,
    R: float,
    delta: float,
    offset: float = 0.0,
    noise_scale: str = "gamma",
) -> bool:
    """Whether ``|mu_hat_i^t - mu_i|`` stays inside the confidence radius for all ``i, t``.

    The radius is ``sigma_i^t (c sqrt(log(|V_t| / (delta^2 |L_lambda|))) + ||mu - offset||)``
    with ``c = R / gamma`` (``noise_scale="gamma"``) or ``c = R / sqrt(gamma)``
    (``noise_scale="sqrt_gamma"``). The two agree at ``gamma = 1``.
    """
    if noise_scale == "gamma":
        c = R / gamma
    elif noise_scale == "sqrt_gamma":
        c = R / math.sqrt(gamma)
    else:
        raise ValueError(f"unknown noise_scale {noise_scale!r}")
    mu = np.asarray(mu, dtype=np.float64)
    s = smoothness_norm(laplacian, mu, offset)
    tracker = DiagVarianceTracker(laplacian, gamma)
    x = np.zeros(laplacian.n)
    log_delta2 = 2 * math.log(delta)
    for arm, val in zip(np.asarray(arms, dtype=np.int64), np.asarray(values, dtype=np.float64)):
        tracker.update(int(arm))
        x[arm] += (val - offset) / gamma
        mu_hat = tracker.inverse @ x + offset
        radius = tracker.sigma * (c * math.sqrt(tracker.logdet_ratio - log_delta2) + s)
        if np.any(np.abs(mu_hat - mu) > radius):
            return False
    return True
