"""Sampling policies for thresholding bandits.

Every policy follows the same loop contract::

    for arm in policy.warmup_arms():      # APT only; not counted as iterations
        policy.observe(arm, stream.pull(arm))
    for t in range(T):
        arm = policy.select()
        policy.observe(arm, stream.pull(arm))
        estimate = policy.estimate()      # boolean superlevel-set mask

Ties in every argmin/argmax go to the lowest arm index.
"""

from __future__ import annotations

from typing import Literal

import numpy as np

from .graph import LaplacianOperator
from .solver import EstimatorState

__all__ = [
    "resolve_offset",
    "Policy",
    "GrAPL",
    "NonAdaptive",
    "APT",
    "OraclePolicy",
    "oracle_allocation",
    "oracle_schedule",
]


def resolve_offset(offset: float | bool | None, tau: float) -> float:
    """Reference level for the estimator.

    ``None`` means "offset by ``tau`` unless ``tau == 0``"; ``True``/``False``
    force ``tau``/``0``; a number is used as given.
    """
    if offset is None:
        return float(tau)
    if isinstance(offset, bool):
        return float(tau) if offset else 0.0
    return float(offset)


class Policy:
    name = "policy"

    def __init__(self, n_arms: int, tau: float, epsilon: float) -> None:
        if not epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        self.n_arms = int(n_arms)
        self.tau = float(tau)
        self.epsilon = float(epsilon)
        self.history: list[int] = []

    def warmup_arms(self) -> list[int]:
        return []

    def select(self) -> int:
        raise NotImplementedError

    def observe(self, arm: int, value: float) -> None:
        raise NotImplementedError

    @property
    def counts(self) -> np.ndarray:
        raise NotImplementedError

    def means(self) -> np.ndarray:
        raise NotImplementedError

    def estimate(self) -> np.ndarray:
        """Current superlevel-set estimate ``{i : mean_i >= tau}``."""
        return self.means() >= self.tau


class _GraphPolicy(Policy):
    def __init__(
        self,
        laplacian: LaplacianOperator,
        tau: float,
        epsilon: float,
        gamma: float,
        *,
        offset: float | bool | None = None,
        rel_tol: float = 1e-12,
    ) -> None:
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        super().__init__(laplacian.n, tau, epsilon)
        self.gamma = float(gamma)
        self.estimator = EstimatorState(laplacian, gamma, offset=resolve_offset(offset, tau), rel_tol=rel_tol)

    @property
    def counts(self) -> np.ndarray:
        return self.estimator.pull_counts

    def means(self) -> np.ndarray:
        return self.estimator.means

    def observe(self, arm: int, value: float) -> None:
        self.estimator.record_pull(arm, value)
        self.history.append(arm)


class GrAPL(_GraphPolicy):
    """Adaptive graph-regularized thresholding.

    Pulls ``argmin_i delta_hat_i * sqrt(n_i + alpha)`` where
    ``delta_hat_i = |mean_i - tau| + epsilon`` comes from the regularized
    estimate. A tiny ``alpha`` (e.g. 1e-8) forces one pull of every arm
    before any second pull.
    """

    name = "grapl"

    def __init__(
        self,
        laplacian: LaplacianOperator,
        tau: float,
        epsilon: float,
        gamma: float,
        alpha: float = 1.0,
        *,
        offset: float | bool | None = None,
        rel_tol: float = 1e-12,
    ) -> None:
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        super().__init__(laplacian, tau, epsilon, gamma, offset=offset, rel_tol=rel_tol)
        self.alpha = float(alpha)
        self.delta_hat = np.full(self.n_arms, self.epsilon)

    def proxies(self) -> np.ndarray:
        return self.delta_hat * np.sqrt(self.counts + self.alpha)

    def select(self) -> int:
        return int(np.argmin(self.proxies()))

    def observe(self, arm: int, value: float) -> None:
        super().observe(arm, value)
        self.delta_hat = np.abs(self.means() - self.tau) + self.epsilon


class NonAdaptive(_GraphPolicy):
    """Graph-regularized estimation with a fixed sampling rule.

    ``mode="round_robin"`` cycles a per-trial permutation, so every block of
    ``N`` pulls touches each arm once; ``mode="random"`` pulls uniformly.
    """

    name = "nonadaptive"

    def __init__(
        self,
        laplacian: LaplacianOperator,
        tau: float,
        epsilon: float,
        gamma: float,
        *,
        mode: Literal["round_robin", "random"] = "random",
        rng: np.random.Generator | int | None = None,
        permutation: np.ndarray | None = None,
        offset: float | bool | None = None,
        rel_tol: float = 1e-12,
    ) -> None:
        super().__init__(laplacian, tau, epsilon, gamma, offset=offset, rel_tol=rel_tol)
        if mode not in ("round_robin", "random"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        if mode == "round_robin":
            if permutation is None:
                permutation = self.rng.permutation(self.n_arms)
            permutation = np.asarray(permutation, dtype=np.int64)
            if sorted(permutation.tolist()) != list(range(self.n_arms)):
                raise ValueError("permutation must be a permutation of the arms")
            self.permutation = permutation
        self._step = 0

    def select(self) -> int:
        if self.mode == "random":
            return int(self.rng.integers(self.n_arms))
        return int(self.permutation[self._step % self.n_arms])

    def observe(self, arm: int, value: float) -> None:
        super().observe(arm, value)
        self._step += 1


class APT(Policy):
    """Graph-oblivious anytime thresholding on per-arm sample means.

    Each arm is pulled ``init_pulls_per_arm`` times up front through
    :meth:`warmup_arms`; afterwards the policy pulls
    ``argmin_i (|xbar_i - tau| + epsilon) * sqrt(n_i)``.
    """

    name = "apt"

    def __init__(self, n_arms: int, tau: float, epsilon: float, *, init_pulls_per_arm: int = 2) -> None:
        super().__init__(n_arms, tau, epsilon)
        if init_pulls_per_arm < 1:
            raise ValueError("APT needs at least one initial pull per arm")
        self.init_pulls_per_arm = int(init_pulls_per_arm)
        self._counts = np.zeros(self.n_arms, dtype=np.int64)
        self._means = np.zeros(self.n_arms)

    def warmup_arms(self) -> list[int]:
        return list(range(self.n_arms)) * self.init_pulls_per_arm

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    def means(self) -> np.ndarray:
        return self._means

    def proxies(self) -> np.ndarray:
        return (np.abs(self._means - self.tau) + self.epsilon) * np.sqrt(self._counts)

    def select(self) -> int:
        return int(np.argmin(self.proxies()))

    def observe(self, arm: int, value: float) -> None:
        self._counts[arm] += 1
        self._means[arm] += (value - self._means[arm]) / self._counts[arm]
        self.history.append(arm)


def oracle_allocation(mu: np.ndarray, tau: float, epsilon: float) -> np.ndarray:
    """Optimal fractional allocation given the true gaps.

    ``beta_i = 1 / (H_star |mu_i - tau|^2)`` for arms at least ``epsilon``
    from the threshold and 0 otherwise, where ``H_star`` normalizes the sum.
    """
    gap = np.abs(np.asarray(mu, dtype=np.float64) - tau)
    sep = gap >= epsilon
    if not sep.any():
        raise ValueError("no arm is epsilon-separated from the threshold; allocation undefined")
    inv = np.zeros_like(gap)
    inv[sep] = gap[sep] ** -2.0
    return inv / inv.sum()


def oracle_schedule(beta: np.ndarray, T: int) -> np.ndarray:
    """Integer pull counts summing to ``T`` by largest-remainder rounding."""
    beta = np.asarray(beta, dtype=np.float64)
    if T < 0:
        raise ValueError("T must be nonnegative")
    target = beta * T
    counts = np.floor(target).astype(np.int64)
    short = int(T - counts.sum())
    if short:
        rem = target - counts
        # stable sort on -rem keeps lowest index first among equal remainders
        order = np.argsort(-rem, kind="stable")
        counts[order[:short]] += 1
    return counts


class OraclePolicy(_GraphPolicy):
    """Graph-regularized estimation sampled by the oracle allocation.

    Final counts equal :func:`oracle_schedule` for the given horizon. Within
    the horizon, the arm furthest behind its pro-rata quota is pulled next.
    """

    name = "oracle"

    def __init__(
        self,
        laplacian: LaplacianOperator,
        mu: np.ndarray,
        tau: float,
        epsilon: float,
        gamma: float,
        horizon: int,
        *,
        offset: float | bool | None = None,
        rel_tol: float = 1e-12,
    ) -> None:
        super().__init__(laplacian, tau, epsilon, gamma, offset=offset, rel_tol=rel_tol)
        self.beta = oracle_allocation(mu, tau, epsilon)
        self.horizon = int(horizon)
        self.targets = oracle_schedule(self.beta, self.horizon)

    def select(self) -> int:
        t = len(self.history) + 1
        if t > self.horizon:
            raise RuntimeError("oracle schedule exhausted")
        deficit = self.targets * (t / self.horizon) - self.counts
        deficit = np.where(self.counts < self.targets, deficit, -np.inf)
        return int(np.argmax(deficit))
