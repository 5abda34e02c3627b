"""KL divergences, complexity measures and the rate objective."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BanditInstance, DistributionFamily, best_arm
from .errors import DomainError

__all__ = [
    "kl_bernoulli",
    "kl_bernoulli_array",
    "kl_gaussian",
    "kl",
    "kl_array",
    "ComplexityMeasure",
    "complexity",
    "complexity_array",
    "rate_objective",
]


def _xlogy_ratio(x: float, y: float) -> float:
    # x * log(x / y) with 0 log 0 = 0
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return math.inf
    return x * math.log(x / y)


def kl_bernoulli(q: float, p: float) -> float:
    """KL(Ber(q) || Ber(p))."""
    if not (0.0 <= q <= 1.0 and 0.0 <= p <= 1.0):
        raise DomainError(f"Bernoulli means must lie in [0,1], got q={q}, p={p}")
    if q == p:
        return 0.0
    return _xlogy_ratio(q, p) + _xlogy_ratio(1.0 - q, 1.0 - p)


def kl_bernoulli_array(q, p) -> np.ndarray:
    """Vectorised :func:`kl_bernoulli` with the same boundary conventions."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((q < 0) | (q > 1) | (p < 0) | (p > 1)):
        raise DomainError("Bernoulli means must lie in [0,1]")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = np.where(q > 0, q * np.log(q / p), 0.0)
        b = np.where(q < 1, (1 - q) * np.log((1 - q) / (1 - p)), 0.0)
    out = a + b
    return np.where(q == p, 0.0, out)


def kl_gaussian(q: float, p: float, sigma: float) -> float:
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return (q - p) ** 2 / (2.0 * sigma * sigma)


def kl(family: DistributionFamily, q: float, p: float) -> float:
    if family.is_bernoulli:
        return kl_bernoulli(q, p)
    return kl_gaussian(q, p, family.sigma)


def kl_array(family: DistributionFamily, q, p) -> np.ndarray:
    if family.is_bernoulli:
        return kl_bernoulli_array(q, p)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return (q - p) ** 2 / (2.0 * family.sigma**2)


@dataclass(frozen=True)
class ComplexityMeasure:
    """``kind`` is ``"h1"``, ``"h2"`` or ``"constant"`` (with ``value``)."""

    kind: str
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("h1", "h2", "constant"):
            raise DomainError(f"unknown complexity measure {self.kind!r}")
        if self.kind == "constant" and not self.value > 0:
            raise DomainError("constant complexity must be positive")

    @classmethod
    def h1(cls) -> "ComplexityMeasure":
        return cls("h1")

    @classmethod
    def h2(cls) -> "ComplexityMeasure":
        return cls("h2")

    @classmethod
    def constant(cls, value: float = 1.0) -> "ComplexityMeasure":
        return cls("constant", float(value))

    @classmethod
    def parse(cls, text: str) -> "ComplexityMeasure":
        t = text.lower()
        if t in ("h1", "h2"):
            return cls(t)
        if t.startswith("constant:") or t.startswith("const:"):
            return cls.constant(float(t.split(":", 1)[1]))
        raise DomainError(f"cannot parse complexity {text!r}")

    def tag(self) -> str:
        return self.kind if self.kind != "constant" else f"constant:{self.value!r}"

    def __call__(self, means) -> float:
        return complexity(self, means)


def complexity(measure: ComplexityMeasure, instance) -> float:
    """H(P) for an instance or a raw mean vector; +inf propagates from zero gaps."""
    if measure.kind == "constant":
        return measure.value
    means = instance.mean_array if isinstance(instance, BanditInstance) else np.asarray(instance, float)
    star = best_arm(means)
    g = means[star] - np.delete(means, star)
    if measure.kind == "h1":
        if np.any(g == 0):
            return math.inf
        return float(np.sum(g ** -2.0))
    # h2: max over suboptimal sorted gaps, rank counted from the best arm (rank 1)
    g = np.sort(g)
    if np.any(g == 0):
        return math.inf
    ranks = np.arange(2, len(g) + 2)
    return float(np.max(ranks / g**2))


def complexity_array(measure: ComplexityMeasure, P: np.ndarray) -> np.ndarray:
    """Row-wise H for a batch of mean vectors of shape (N, K)."""
    P = np.asarray(P, dtype=float)
    if measure.kind == "constant":
        return np.full(P.shape[0], measure.value)
    if measure.kind == "h2":
        return np.array([complexity(measure, row) for row in P])
    star = P.max(axis=1, keepdims=True)
    g = star - P
    # exactly one zero gap (the best arm) is removed below
    nzero = np.sum(g == 0, axis=1)
    with np.errstate(divide="ignore"):
        inv = np.where(g > 0, g ** -2.0, 0.0).sum(axis=1)
    return np.where(nzero > 1, np.inf, inv)


def rate_objective(instance: BanditInstance, Q, r, H: ComplexityMeasure) -> float:
    """H(P) * sum_i r_i KL(Q_i || P_i).

    An infinite H multiplies a zero divergence sum to zero.
    """
    Q = np.asarray(Q, dtype=float)
    r = np.asarray(r, dtype=float)
    if Q.shape != (instance.K,) or r.shape != (instance.K,):
        raise DomainError("dimension mismatch between instance, Q and r")
    d = kl_array(instance.family, Q, instance.mean_array)
    with np.errstate(invalid="ignore"):
        terms = np.where(r > 0, r * d, 0.0)
    s = float(np.sum(terms))
    h = complexity(H, instance)
    if s == 0.0:
        return 0.0
    return h * s
