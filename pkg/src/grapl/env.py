"""Problem instances, seeded reward streams and the misclassification metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

__all__ = [
    "NoiseKind",
    "ProblemInstance",
    "RewardStream",
    "superlevel_set",
    "as_mask",
    "misclassified",
    "loss",
    "error_rate",
]

NoiseKind = Literal["gaussian", "bernoulli", "deterministic"]
_NOISE_KINDS = ("gaussian", "bernoulli", "deterministic")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """True means, threshold ``tau``, slack ``epsilon`` and a reward model."""

    mu: np.ndarray
    tau: float
    epsilon: float
    noise: NoiseKind = "gaussian"
    sigma: float = 1.0

    def __post_init__(self) -> None:
        mu = np.array(self.mu, dtype=np.float64).ravel()
        if mu.size == 0 or not np.all(np.isfinite(mu)):
            raise ValueError("mu must be a nonempty finite vector")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.noise not in _NOISE_KINDS:
            raise ValueError(f"noise must be one of {_NOISE_KINDS}, got {self.noise!r}")
        if self.noise == "bernoulli" and (mu.min() < 0 or mu.max() > 1):
            raise ValueError("Bernoulli arms need means in [0, 1]")
        if self.noise == "gaussian" and not self.sigma > 0:
            raise ValueError("Gaussian noise needs sigma > 0")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def n_arms(self) -> int:
        return int(self.mu.size)

    @property
    def R(self) -> float:
        """Sub-Gaussian scale of the reward noise (0 for deterministic arms)."""
        if self.noise == "gaussian":
            return float(self.sigma)
        if self.noise == "bernoulli":
            return 0.5
        return 0.0

    def pull(self, arm: int, rng: np.random.Generator) -> float:
        """One independent draw from arm ``arm``."""
        m = self.mu[arm]
        if self.noise == "gaussian":
            return float(m + self.sigma * rng.standard_normal())
        if self.noise == "bernoulli":
            return float(rng.random() < m)
        return float(m)

    def truth(self) -> np.ndarray:
        return superlevel_set(self.mu, self.tau)


class RewardStream:
    """Reproducible rewards for one trial.

    With ``per_arm=True`` every arm owns an independent PCG64 stream spawned
    from ``seed``, so the k-th pull of arm i returns the same value no matter
    which policy asks or in what order. Otherwise a single stream is consumed
    in pull order.
    """

    _CHUNK = 256

    def __init__(self, instance: ProblemInstance, seed: int | np.random.SeedSequence, *, per_arm: bool = True) -> None:
        self.instance = instance
        self.per_arm = per_arm
        self.seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.n_pulls = 0
        if per_arm:
            n = instance.n_arms
            self._children: list[np.random.SeedSequence | None] = list(self.seed_seq.spawn(n))
            self._buffers: list[np.ndarray | None] = [None] * n
            self._pos = np.zeros(n, dtype=np.int64)
            self._gens: list[np.random.Generator | None] = [None] * n
        else:
            self._rng = np.random.default_rng(self.seed_seq)

    def _unit(self, arm: int) -> float:
        # Standard normal or uniform variate from the arm's own stream.
        buf = self._buffers[arm]
        if buf is None or self._pos[arm] == buf.size:
            gen = self._gens[arm]
            if gen is None:
                gen = self._gens[arm] = np.random.default_rng(self._children[arm])
            if self.instance.noise == "gaussian":
                buf = gen.standard_normal(self._CHUNK)
            else:
                buf = gen.random(self._CHUNK)
            self._buffers[arm] = buf
            self._pos[arm] = 0
        val = buf[self._pos[arm]]
        self._pos[arm] += 1
        return float(val)

    def pull(self, arm: int) -> float:
        inst = self.instance
        if not 0 <= arm < inst.n_arms:
            raise IndexError(f"arm {arm} out of range")
        self.n_pulls += 1
        if inst.noise == "deterministic":
            return float(inst.mu[arm])
        if not self.per_arm:
            return inst.pull(arm, self._rng)
        u = self._unit(arm)
        if inst.noise == "gaussian":
            return float(inst.mu[arm] + inst.sigma * u)
        return float(u < inst.mu[arm])


def superlevel_set(mu: np.ndarray, tau: float) -> np.ndarray:
    """Boolean mask of ``{i : mu_i >= tau}``."""
    return np.asarray(mu) >= tau


def as_mask(estimate: np.ndarray | Iterable[int], n: int) -> np.ndarray:
    """Accept a boolean mask or a collection of arm indices."""
    if isinstance(estimate, np.ndarray) and estimate.dtype == bool:
        if estimate.shape != (n,):
            raise ValueError(f"mask must have shape ({n},)")
        return estimate
    mask = np.zeros(n, dtype=bool)
    idx = np.fromiter((int(i) for i in estimate), dtype=np.int64)
    mask[idx] = True
    return mask


def _separated(mu: np.ndarray, tau: float, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    above = mu >= tau + epsilon
    below = mu < tau - epsilon
    return above, below


def misclassified(mu: np.ndarray, tau: float, epsilon: float, estimate) -> np.ndarray:
    """Mask of ``(S_{tau+eps} \\ S_hat) | (S_hat \\ S_{tau-eps})``."""
    mu = np.asarray(mu, dtype=np.float64)
    est = as_mask(estimate, mu.size)
    above, below = _separated(mu, tau, epsilon)
    return (above & ~est) | (below & est)


def loss(mu: np.ndarray, tau: float, epsilon: float, estimate) -> int:
    """1 if any epsilon-separated arm is on the wrong side, else 0."""
    return int(misclassified(mu, tau, epsilon, estimate).any())


def error_rate(mu: np.ndarray, tau: float, epsilon: float, estimate) -> float:
    """Fraction of epsilon-separated arms that are misclassified.

    Zero when no arm is separated (nothing can be wrong).
    """
    mu = np.asarray(mu, dtype=np.float64)
    above, below = _separated(mu, tau, epsilon)
    denom = int(np.count_nonzero(above | below))
    if denom == 0:
        return 0.0
    return np.count_nonzero(misclassified(mu, tau, epsilon, estimate)) / denom
