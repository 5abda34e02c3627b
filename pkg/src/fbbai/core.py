"""Bandit instances, empirical state and seeded reward streams.

Arms are indexed from 0 throughout the library.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "Family",
    "DistributionFamily",
    "BanditInstance",
    "EmpiricalState",
    "RewardStream",
    "sample_reward",
    "update_state",
    "best_arm_set",
    "best_arm",
    "gaps",
    "validate_allocation",
    "load_instance",
    "reward_block",
    "TRIAL_CHUNK",
]

# Trials are grouped in fixed-size chunks for reward generation; the chunk
# size must never depend on the thread count.
TRIAL_CHUNK = 256


class Family(enum.Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class DistributionFamily:
    """Reward family; ``sigma`` is the known standard deviation for Gaussians."""

    kind: Family
    sigma: float | None = None

    def __post_init__(self):
        kind = Family(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Family.GAUSSIAN:
            if self.sigma is None or not self.sigma > 0:
                raise DomainError("Gaussian family needs sigma > 0")
            object.__setattr__(self, "sigma", float(self.sigma))
        elif self.sigma is not None:
            raise DomainError("Bernoulli family carries no sigma")

    @classmethod
    def bernoulli(cls) -> "DistributionFamily":
        return cls(Family.BERNOULLI)

    @classmethod
    def gaussian(cls, sigma: float) -> "DistributionFamily":
        return cls(Family.GAUSSIAN, sigma)

    @property
    def is_bernoulli(self) -> bool:
        return self.kind is Family.BERNOULLI


@dataclass(frozen=True)
class BanditInstance:
    family: DistributionFamily
    means: tuple[float, ...]

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        if len(means) < 2:
            raise DomainError("an instance needs at least two arms")
        if not all(np.isfinite(means)):
            raise DomainError("means must be finite")
        if self.family.is_bernoulli and not all(0.0 <= m <= 1.0 for m in means):
            raise DomainError("Bernoulli means must lie in [0, 1]")

    @classmethod
    def bernoulli(cls, means: Sequence[float]) -> "BanditInstance":
        return cls(DistributionFamily.bernoulli(), tuple(means))

    @classmethod
    def gaussian(cls, means: Sequence[float], sigma: float = 1.0) -> "BanditInstance":
        return cls(DistributionFamily.gaussian(sigma), tuple(means))

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def mean_array(self) -> np.ndarray:
        return np.asarray(self.means, dtype=float)

    def to_dict(self) -> dict:
        d = {"family": self.family.kind.value, "means": list(self.means)}
        if self.family.sigma is not None:
            d["sigma"] = self.family.sigma
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BanditInstance":
        try:
            kind = Family(d["family"])
            means = d["means"]
        except (KeyError, ValueError) as exc:
            raise DomainError(f"bad instance description: {exc}") from exc
        fam = DistributionFamily(kind, d.get("sigma"))
        return cls(fam, tuple(means))


def load_instance(path: str | Path) -> BanditInstance:
    with open(path) as fh:
        return BanditInstance.from_dict(json.load(fh))


@dataclass
class EmpiricalState:
    """Round counter, pull counts and reward sums for one trial."""

    K: int
    t: int = 0
    counts: np.ndarray = field(default=None)
    sums: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.K, dtype=np.int64)
        if self.sums is None:
            self.sums = np.zeros(self.K, dtype=float)

    @property
    def means(self) -> np.ndarray:
        """Empirical means; NaN for arms never pulled."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)

    def update(self, arm: int, reward: float) -> "EmpiricalState":
        if not 0 <= arm < self.K:
            raise IndexError(f"arm {arm} out of range for K={self.K}")
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.t += 1
        return self

    def copy(self) -> "EmpiricalState":
        return EmpiricalState(self.K, self.t, self.counts.copy(), self.sums.copy())


def update_state(state: EmpiricalState, arm: int, reward: float) -> EmpiricalState:
    """Record one pull; mutates and returns ``state``."""
    return state.update(arm, reward)


class RewardStream:
    """Deterministic reward source with one Philox substream per (trial, arm).

    The m-th reward of an arm depends only on ``(seed, trial, arm, m)``, so
    the order in which arms are pulled never changes what each arm yields.
    """

    def __init__(self, seed: int, trial: int = 0):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        self.seed = int(seed)
        self.trial = int(trial)
        self._gens: dict[int, np.random.Generator] = {}

    def _gen(self, arm: int) -> np.random.Generator:
        g = self._gens.get(arm)
        if g is None:
            key = np.array([self.seed, (self.trial << 16) | arm], dtype=np.uint64)
            g = np.random.Generator(np.random.Philox(key=key))
            self._gens[arm] = g
        return g

    def draw(self, instance: BanditInstance, arm: int) -> float:
        if not 0 <= arm < instance.K:
            raise IndexError(f"arm {arm} out of range for K={instance.K}")
        g = self._gen(arm)
        mu = instance.means[arm]
        if instance.family.is_bernoulli:
            return 1.0 if g.random() < mu else 0.0
        return mu + instance.family.sigma * g.standard_normal()


    def draw_many(self, instance: BanditInstance, arm: int, n: int) -> np.ndarray:
        """The next ``n`` rewards of ``arm``; same sequence as ``n`` calls to :meth:`draw`."""
        if not 0 <= arm < instance.K:
            raise IndexError(f"arm {arm} out of range for K={instance.K}")
        g = self._gen(arm)
        mu = instance.means[arm]
        if instance.family.is_bernoulli:
            return (g.random(n) < mu).astype(float)
        return mu + instance.family.sigma * g.standard_normal(n)


def sample_reward(stream: RewardStream, instance: BanditInstance, arm: int) -> float:
    return stream.draw(instance, arm)


def reward_block(instance: BanditInstance, seed: int, chunk: int, n: int, T: int) -> np.ndarray:
    """Pre-drawn rewards ``X[j, i, m]`` for trial ``j`` of trial-chunk ``chunk``.

    Each (trial, arm) pair owns a contiguous segment of the chunk's Philox
    counter space. Used by the Monte-Carlo harness.
    """
    key = np.array([seed, (1 << 63) | chunk], dtype=np.uint64)
    g = np.random.Generator(np.random.Philox(key=key))
    mu = instance.mean_array[None, :, None]
    if instance.family.is_bernoulli:
        u = g.random((n, instance.K, T))
        return (u < mu).astype(float)
    z = g.standard_normal((n, instance.K, T))
    return mu + instance.family.sigma * z


def best_arm_set(means: Sequence[float], tol: float = 0.0) -> frozenset[int]:
    m = np.asarray(means, dtype=float)
    if m.size == 0:
        raise DomainError("empty mean vector")
    top = np.max(m)
    return frozenset(int(i) for i in np.flatnonzero(m >= top - tol))


def best_arm(means: Sequence[float]) -> int:
    """Lowest-index best arm; NaN entries (unpulled arms) never win."""
    m = np.asarray(means, dtype=float)
    m = np.where(np.isnan(m), -np.inf, m)
    return int(np.argmax(m))


def gaps(means: Sequence[float]) -> np.ndarray:
    m = np.asarray(means, dtype=float)
    if m.size < 2:
        raise DomainError("need K >= 2")
    return np.sort(m.max() - m)


def validate_allocation(weights, tol: float = 1e-9) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
        raise DomainError(f"not a point on the simplex: {w}")
    return w
