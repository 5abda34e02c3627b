"""Fixed-budget sampling policies sharing one ``reset / choose_arm / recommend`` interface.

Uniform, Successive Rejects and Sequential Halving are all expressed as a
phase schedule: within a phase the surviving arms are pulled round-robin in
index order, and at the end of a phase the best ``keep`` survivors (by
empirical mean, lower index first on ties) move on.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import EmpiricalState, best_arm, validate_allocation
from .errors import CheckpointError, ConfigError, DomainError, PolicyError
from .network import NetworkParams, forward, load_checkpoint


# ---------------------------------------------------------------- sources

class FixedSource:
    def __init__(self, weights: Sequence[float]):
        self.weights = validate_allocation(weights)

    @property
    def K(self) -> int:
        return len(self.weights)

    def __call__(self, Q) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        if Q.ndim == 2:
            return np.broadcast_to(self.weights, Q.shape).copy()
        return self.weights.copy()


class NetworkSource:
    def __init__(self, params: NetworkParams):
        self.params = params

    @property
    def K(self) -> int:
        return self.params.K

    def __call__(self, Q) -> np.ndarray:
        return forward(self.params, Q)


class TableSource:
    """Allocation table on a product grid, multilinearly interpolated.

    ``values`` has shape ``(len(grid_0), ..., len(grid_{K-1}), K)``. Queries
    outside the grid are clamped to its boundary.
    """

    def __init__(self, grids: Sequence[Sequence[float]], values):
        self.grids = [np.asarray(g, dtype=float) for g in grids]
        self.values = np.asarray(values, dtype=float)
        K = len(self.grids)
        if self.values.shape != tuple(len(g) for g in self.grids) + (K,):
            raise DomainError(f"table shape {self.values.shape} does not match grids")
        for g in self.grids:
            if g.size == 0 or np.any(np.diff(g) <= 0):
                raise DomainError("table grids must be nonempty and strictly increasing")
        rows = self.values.reshape(-1, K)
        if np.any(rows < -1e-9) or np.any(np.abs(rows.sum(axis=1) - 1) > 1e-9):
            raise DomainError("table rows must lie on the simplex")

    @property
    def K(self) -> int:
        return len(self.grids)

    def _one(self, q: np.ndarray) -> np.ndarray:
        idx, wts = [], []
        for g, x in zip(self.grids, q):
            if g.size == 1 or x <= g[0]:
                idx.append((0, 0)); wts.append(0.0)
            elif x >= g[-1]:
                idx.append((g.size - 1, g.size - 1)); wts.append(0.0)
            else:
                j = int(np.searchsorted(g, x, side="right")) - 1
                idx.append((j, j + 1)); wts.append((x - g[j]) / (g[j + 1] - g[j]))
        out = np.zeros(self.K)
        for corner in range(1 << self.K):
            w, pos = 1.0, []
            for d in range(self.K):
                hi = (corner >> d) & 1
                w *= wts[d] if hi else 1.0 - wts[d]
                pos.append(idx[d][hi])
            if w:
                out += w * self.values[tuple(pos)]
        return out / out.sum()

    def __call__(self, Q) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        if Q.ndim == 2:
            return np.array([self._one(q) for q in Q])
        return self._one(Q)

    def to_dict(self) -> dict:
        return {"kind": "table", "K": self.K, "grids": [g.tolist() for g in self.grids],
                "alloc": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TableSource":
        if d.get("kind") != "table":
            raise CheckpointError("table file must have kind 'table'")
        try:
            return cls(d["grids"], d["alloc"])
        except KeyError as exc:
            raise CheckpointError(f"table file missing field {exc}") from exc

    @classmethod
    def load(cls, path) -> "TableSource":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(doc)


# --------------------------------------------------------------- policies

class Policy:
    """Base class; subclasses implement :meth:`choose_arm` and :meth:`recommend`."""

    name = "policy"

    def reset(self, K: int, T: int) -> "Policy":
        self.K, self.T = K, T
        return self

    def choose_arm(self, state: EmpiricalState) -> int:
        raise NotImplementedError

    def recommend(self, state: EmpiricalState) -> int:
        return best_arm(state.means)

    def target(self, state: EmpiricalState):
        """Ideal allocation at ``state`` for tracking policies, else ``None``."""
        return None


@dataclass(frozen=True)
class Phase:
    length: int  # total pulls in the phase
    keep: int    # survivors kept at its end


class SchedulePolicy(Policy):
    def phases(self, K: int, T: int) -> list[Phase]:
        raise NotImplementedError

    def reset(self, K: int, T: int) -> "SchedulePolicy":
        super().reset(K, T)
        self.schedule = self.phases(K, T)
        self.bounds = np.cumsum([p.length for p in self.schedule])
        self.survivors = list(range(K))
        self.phase = 0
        return self

    def _advance(self, state: EmpiricalState) -> None:
        # apply eliminations for every phase whose end has been reached
        while self.phase < len(self.schedule) and state.t >= self.bounds[self.phase]:
            keep = self.schedule[self.phase].keep
            m = state.means
            ranked = sorted(self.survivors, key=lambda i: (-_mean_or_ninf(m[i]), i))
            self.survivors = sorted(ranked[:keep])
            self.phase += 1

    def choose_arm(self, state: EmpiricalState) -> int:
        self._advance(state)
        if self.phase >= len(self.schedule):
            raise PolicyError("budget exhausted")
        start = 0 if self.phase == 0 else int(self.bounds[self.phase - 1])
        return self.survivors[(state.t - start) % len(self.survivors)]

    def recommend(self, state: EmpiricalState) -> int:
        self._advance(state)
        m = state.means
        return min(self.survivors, key=lambda i: (-_mean_or_ninf(m[i]), i))


def _mean_or_ninf(x: float) -> float:
    return -math.inf if math.isnan(x) else x


class UniformPolicy(SchedulePolicy):
    name = "uniform"

    def phases(self, K, T):
        return [Phase(T, K)]


def sr_log_bar(K: int) -> float:
    return 0.5 + sum(1.0 / i for i in range(2, K + 1))


def sr_pull_counts(K: int, T: int) -> list[int]:
    """Cumulative per-arm pull targets n_1, ..., n_{K-1} of Successive Rejects."""
    lb = sr_log_bar(K)
    return [math.ceil((T - K) / (lb * (K + 1 - k))) for k in range(1, K)]


class SuccessiveRejects(SchedulePolicy):
    """The final phase absorbs whatever budget the earlier phases leave."""

    name = "sr"

    def phases(self, K, T):
        if T <= K:
            raise ConfigError(f"Successive Rejects needs T > K (T={T}, K={K})")
        n = [0] + sr_pull_counts(K, T)
        out, used = [], 0
        for k in range(1, K):
            alive = K + 1 - k
            if k == K - 1:
                length = T - used
            else:
                length = alive * (n[k] - n[k - 1])
            out.append(Phase(length, alive - 1))
            used += length
        if out[-1].length < 0 or n[1] < 1:
            raise ConfigError(f"budget T={T} too small for the Successive Rejects schedule with K={K}")
        return out


class SequentialHalving(SchedulePolicy):
    name = "sh"

    def phases(self, K, T):
        R = math.ceil(math.log2(K))
        if T < K * R:
            raise ConfigError(f"Sequential Halving needs T >= K*ceil(log2 K) = {K * R}")
        out, used, alive = [], 0, K
        for r in range(R):
            keep = math.ceil(alive / 2)
            length = T - used if r == R - 1 else alive * (T // (alive * R))
            out.append(Phase(length, keep))
            used += length
            alive = keep
        return out


class RgoTracking(Policy):
    """Pull each arm once, then the arm whose pull fraction lags its target most."""

    name = "tracking"

    def __init__(self, source: Callable):
        self.source = source

    def target(self, state: EmpiricalState) -> np.ndarray:
        try:
            r = np.asarray(self.source(state.means), dtype=float)
        except Exception as exc:  # noqa: BLE001 - any source failure aborts the trial
            raise PolicyError(f"allocation source failed: {exc}") from exc
        if r.shape != (state.K,) or not np.all(np.isfinite(r)):
            raise PolicyError(f"allocation source returned {r!r}")
        return r

    def choose_arm(self, state: EmpiricalState) -> int:
        if state.t < state.K:
            return state.t
        r = self.target(state)
        return int(np.argmax(r - state.counts / state.t))


def uniform_policy() -> UniformPolicy:
    return UniformPolicy()


def successive_rejects() -> SuccessiveRejects:
    return SuccessiveRejects()


def sequential_halving() -> SequentialHalving:
    return SequentialHalving()


def rgo_tracking(source: Callable) -> RgoTracking:
    return RgoTracking(source)


def tracking_error(source: Callable, state: EmpiricalState) -> float:
    """max_i |r_i(Q(t)) - N_i(t)/t|."""
    if state.t < 1 or np.any(state.counts == 0):
        raise DomainError("tracking error needs every arm pulled at least once")
    r = np.asarray(source(state.means), dtype=float)
    return float(np.max(np.abs(r - state.counts / state.t)))


# ------------------------------------------------------------ spec parsing

@dataclass
class PolicySpec:
    """Parsed ``--policy`` value; :meth:`make` builds a fresh policy per trial."""

    kind: str  # uniform | sr | sh | tracking
    text: str
    source: Callable | None = None

    def make(self) -> Policy:
        if self.kind == "uniform":
            return UniformPolicy()
        if self.kind == "sr":
            return SuccessiveRejects()
        if self.kind == "sh":
            return SequentialHalving()
        return RgoTracking(self.source)


def parse_policy(text: str, K: int | None = None) -> PolicySpec:
    """``uniform | sr | sh | tnn:model.json | table:table.json | fixed:0.4,0.3,0.3``."""
    head, _, arg = text.partition(":")
    if head in ("uniform", "sr", "sh") and not arg:
        return PolicySpec(head, text)
    if head == "tnn" and arg:
        params, _, _ = load_checkpoint(arg, expected_K=K)
        return PolicySpec("tracking", text, NetworkSource(params))
    if head == "table" and arg:
        src = TableSource.load(arg)
        if K is not None and src.K != K:
            raise DomainError(f"table has K={src.K}, instance has K={K}")
        return PolicySpec("tracking", text, src)
    if head == "fixed" and arg:
        src = FixedSource([float(x) for x in arg.split(",")])
        if K is not None and src.K != K:
            raise DomainError(f"fixed allocation has {src.K} entries, instance has K={K}")
        return PolicySpec("tracking", text, src)
    raise ConfigError(f"cannot parse policy {text!r}")
