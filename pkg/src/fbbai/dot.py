"""Delayed optimal tracking over ``B + K - 1`` batches, with checkers for its divergence bounds.

The first K batches pull one arm each; their means form the first stored
mean ``Q'_1``. Batch ``b > K`` allocates by ``r*_{b-K}(Q'_1, ..., Q'_{b-K})``
and then folds its own means into the stored vector:
``Q'_new = Q' + r_b * (Q_b - Q')``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import BanditInstance, RewardStream, best_arm, best_arm_set, validate_allocation
from .divergence import ComplexityMeasure, complexity, kl_array
from .errors import CheckpointError, ConfigError, ContractError, DomainError
from .policies import TableSource
from .rates import DiscreteBatchSolution, nearest_index


# ------------------------------------------------------------------ rules

@dataclass
class BatchRule:
    """``alloc(b, stored)`` gives the allocation for planned batch ``b`` (1-based) from the
    first b stored means; ``recommend(stored)`` maps all B stored means to an arm."""

    K: int
    B: int
    alloc_fn: Callable[[int, list], np.ndarray]
    recommend_fn: Callable[[list], int]
    name: str = "rule"

    def alloc(self, b: int, stored: Sequence[np.ndarray]) -> np.ndarray:
        r = np.asarray(self.alloc_fn(b, list(stored)), dtype=float)
        try:
            r = validate_allocation(r)
        except DomainError as exc:
            raise ContractError(f"{self.name}: batch {b} allocation off the simplex: {r}") from exc
        if r.shape != (self.K,):
            raise ContractError(f"{self.name}: allocation has shape {r.shape}")
        return r

    def recommend(self, stored: Sequence[np.ndarray]) -> int:
        j = int(self.recommend_fn(list(stored)))
        if not 0 <= j < self.K:
            raise ContractError(f"{self.name}: recommendation {j} out of range")
        return j

    # constructors

    @classmethod
    def constant(cls, r, B: int) -> "BatchRule":
        r = validate_allocation(r)
        return cls(len(r), B, lambda b, s: r, lambda s: best_arm(s[-1]), "constant")

    @classmethod
    def from_table(cls, table: TableSource, B: int) -> "BatchRule":
        """Allocate by the table at the latest stored mean; recommend its empirical best."""
        return cls(table.K, B, lambda b, s: table(s[-1]), lambda s: best_arm(s[-1]), "table")

    @classmethod
    def from_batch_solution(cls, sol: DiscreteBatchSolution) -> "BatchRule":
        """Nearest-neighbour extension of solved batch tables to continuous stored means."""
        def idx(s):
            return sum((nearest_index(sol.grids, q) for q in s), ())

        return cls(sol.K, sol.B, lambda b, s: sol.alloc[b - 1][idx(s[:b])],
                   lambda s: int(sol.recommend[idx(s)]), "batch_table")

    @classmethod
    def random(cls, K: int, B: int, rng: np.random.Generator) -> "BatchRule":
        """A random smooth rule; some batches put exactly zero mass on a few arms."""
        Ws = [rng.normal(scale=3.0, size=(K, K * b)) for b in range(1, B + 1)]
        cs = [rng.normal(size=K) for _ in range(B)]
        masks = []
        for _ in range(B):
            m = np.ones(K, dtype=bool)
            if rng.random() < 0.3:
                m[rng.choice(K, size=rng.integers(1, K), replace=False)] = False
            masks.append(m)
        v = rng.normal(size=(B, K))

        def alloc(b, s):
            z = Ws[b - 1] @ np.concatenate(s) + cs[b - 1]
            e = np.where(masks[b - 1], np.exp(z - z.max()), 0.0)
            return e / e.sum()

        def recommend(s):
            return int(np.argmax(np.asarray(s).T @ v[: len(s)].sum(axis=1) + np.asarray(s)[-1]))

        return cls(K, B, alloc, recommend, "random")

    @classmethod
    def load(cls, path, B: int) -> "BatchRule":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        kind = doc.get("kind") if isinstance(doc, dict) else None
        if kind == "table":
            return cls.from_table(TableSource.from_dict(doc), B)
        if kind == "batch_table":
            sol = DiscreteBatchSolution.from_dict(doc)
            if sol.B != B:
                raise ConfigError(f"{path} holds a B={sol.B} rule, asked for B={B}")
            return cls.from_batch_solution(sol)
        raise CheckpointError(f"{path}: unknown rule kind {kind!r}")


# ------------------------------------------------------------------ trace

@dataclass
class DotTrace:
    K: int
    B: int
    T_B: int
    r: np.ndarray  # (B+K-1, K) planned allocations
    n: np.ndarray  # (B+K-1, K) pull counts
    Q: np.ndarray  # (B+K-1, K) batch means, nan where an arm was not pulled
    stored: np.ndarray  # (B, K) stored means Q'_1..Q'_B
    recommendation: int
    samples: list = field(default_factory=list, repr=False)  # samples[b][i]

    @property
    def n_batches(self) -> int:
        return self.B + self.K - 1


def pull_counts(r: np.ndarray, T_B: int, K: int) -> np.ndarray:
    """``ceil(r (T_B - K))`` plus the leftover pulls, given one at a time to the arms
    furthest below ``T_B r`` (lower index first on ties)."""
    n = np.ceil(r * (T_B - K) - 1e-12).astype(np.int64)
    n = np.maximum(n, 0)
    rem = T_B - int(n.sum())
    if rem < 0:
        raise ContractError("rounded pulls exceed the batch size")
    order = sorted(range(K), key=lambda i: (-(T_B * r[i] - n[i]), i))
    for k in range(rem):
        n[order[k % K]] += 1
    return n


def _mean(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else math.nan


def run_dot(rule: BatchRule, instance: BanditInstance, T: int, stream: RewardStream,
            keep_samples: bool = False) -> DotTrace:
    K, B = instance.K, rule.B
    if rule.K != K:
        raise DomainError(f"rule has K={rule.K}, instance has K={K}")
    nb = B + K - 1
    T_B = T // nb  # the last T - nb*T_B rounds are left unused
    if T_B <= K:
        raise ConfigError(f"T={T} gives batches of {T_B} pulls; need more than K={K}")
    r = np.zeros((nb, K))
    n = np.zeros((nb, K), dtype=np.int64)
    Q = np.full((nb, K), np.nan)
    samples = []
    for b in range(K):
        r[b, b] = 1.0
        n[b, b] = T_B
        x = stream.draw_many(instance, b, T_B)
        Q[b, b] = _mean(x)
        samples.append([x if i == b else np.empty(0) for i in range(K)])
    stored = [np.diag(Q[:K]).copy()]
    for b in range(K, nb):
        rb = rule.alloc(b - K + 1, stored)
        nbi = pull_counts(rb, T_B, K)
        xs = [stream.draw_many(instance, i, int(nbi[i])) for i in range(K)]
        r[b], n[b] = rb, nbi
        Q[b] = [_mean(x) for x in xs]
        samples.append(xs)
        prev = stored[-1]
        step = np.where(rb > 0, rb * (np.nan_to_num(Q[b]) - prev), 0.0)
        stored.append(prev + step)
    rec = rule.recommend(stored)
    return DotTrace(K, B, T_B, r, n, Q, np.array(stored), rec, samples if keep_samples else [])


# --------------------------------------------------------------- checkers

def _div(family, Q: np.ndarray, P: np.ndarray) -> np.ndarray:
    # D(Q_i || P_i), treating unpulled (nan) entries as zero; callers weight them by r = 0
    return kl_array(family, np.where(np.isnan(Q), P, Q), P)


def _weighted(r: np.ndarray, d: np.ndarray) -> float:
    with np.errstate(invalid="ignore"):
        return float(np.where(r == 0, 0.0, r * d).sum())


def realized_divergence(trace: DotTrace, instance: BanditInstance, upto: int | None = None) -> float:
    """``sum_{b <= upto} sum_i r_{b,i} D(Q_{b,i} || P_i)``."""
    upto = trace.n_batches if upto is None else upto
    P = instance.mean_array
    return sum(_weighted(trace.r[b], _div(instance.family, trace.Q[b], P)) for b in range(upto))


def lemma4_sides(trace: DotTrace, rule: BatchRule | None, instance: BanditInstance, B_C: int):
    K = trace.K
    if not K <= B_C <= trace.n_batches:
        raise DomainError(f"B_C={B_C} outside [{K}, {trace.n_batches}]")
    P, fam = instance.mean_array, instance.family
    lhs = realized_divergence(trace, instance, B_C)
    rhs = 0.0
    for a in range(1, B_C - K + 1):
        ra = trace.r[a + K - 1] if rule is None else rule.alloc(a, list(trace.stored[:a]))
        rhs += _weighted(ra, _div(fam, trace.stored[a - 1], P))
    rhs += float(np.sum(_div(fam, trace.stored[B_C - K], P)))
    return lhs, rhs


def lemma4_check(trace: DotTrace, rule: BatchRule | None, instance: BanditInstance, B_C: int,
                 tol: float = 1e-9) -> bool:
    """Realized divergence up to batch B_C dominates the stored-mean divergence."""
    lhs, rhs = lemma4_sides(trace, rule, instance, B_C)
    if math.isinf(rhs):
        return math.isinf(lhs)
    return lhs >= rhs - tol * max(1.0, abs(rhs))


def lemma3_sides(trace: DotTrace, instance: BanditInstance, H: ComplexityMeasure, value: float):
    """``(applies, lhs, rhs)``; the bound concerns runs whose recommendation is wrong."""
    nb = trace.n_batches
    applies = trace.recommendation not in best_arm_set(instance.means)
    lhs = realized_divergence(trace, instance) / nb
    h = complexity(H, instance)
    rhs = trace.B / nb * value / h if math.isfinite(h) else 0.0
    return applies, lhs, rhs


def lemma3_check(trace: DotTrace, rule: BatchRule | None, instance: BanditInstance,
                 H: ComplexityMeasure, rgoB_minus_eps: float, tol: float = 1e-9) -> bool:
    """Averaged realized divergence against ``B/(B+K-1) * value / H(P)``.

    ``rgoB_minus_eps`` must be the value the rule guarantees for every stored
    mean sequence (e.g. :func:`fbbai.rates.continuous_value`). Runs that
    recommend a best arm are outside the bound and pass trivially.
    """
    applies, lhs, rhs = lemma3_sides(trace, instance, H, rgoB_minus_eps)
    return (not applies) or lhs >= rhs - tol * max(1.0, abs(rhs))


# ------------------------------------------------------------- queue view

def stored_mean_weights(trace: DotTrace) -> list[list[tuple[np.ndarray, np.ndarray]]]:
    """Sample-level view of the stored means.

    Entry ``[a][i]`` holds ``(samples, weights)`` for arm i after stored update a:
    the uniform-phase samples start with weight ``1/T_B`` each, an update with
    allocation r scales old weights by ``1 - r_i`` and spreads ``r_i`` evenly
    over the batch's fresh samples. ``sum(weights * samples)`` reproduces the
    stored mean. Needs a trace run with ``keep_samples=True``.
    """
    if not trace.samples:
        raise DomainError("trace has no samples; rerun with keep_samples=True")
    K = trace.K
    xs = [trace.samples[i][i] for i in range(K)]
    ws = [np.full(trace.T_B, 1.0 / trace.T_B) for _ in range(K)]
    out = [[(xs[i].copy(), ws[i].copy()) for i in range(K)]]
    for b in range(K, trace.n_batches):
        for i in range(K):
            ri = trace.r[b, i]
            fresh = trace.samples[b][i]
            if ri > 0:
                ws[i] = np.concatenate([ws[i] * (1 - ri), np.full(fresh.size, ri / fresh.size)])
                xs[i] = np.concatenate([xs[i], fresh])
        out.append([(xs[i].copy(), ws[i].copy()) for i in range(K)])
    return out


# ------------------------------------------------------------- many runs

def simulate_dot(rule: BatchRule, instance: BanditInstance, T: int, trials: int, seed: int):
    """Independent runs; trial j uses reward substreams ``(seed, j)``."""
    return [run_dot(rule, instance, T, RewardStream(seed, j)) for j in range(trials)]


def dot_csv(traces: Sequence[DotTrace], instance: BanditInstance) -> str:
    best = best_arm_set(instance.means)
    lines = ["trial,recommendation,error,divergence,lemma4_ok"]
    for j, tr in enumerate(traces):
        ok = all(lemma4_check(tr, None, instance, bc) for bc in range(tr.K, tr.n_batches + 1))
        div = realized_divergence(tr, instance) / tr.n_batches
        lines.append(f"{j},{tr.recommendation},{int(tr.recommendation not in best)},{div!r},{int(ok)}")
    return "\n".join(lines) + "\n"
