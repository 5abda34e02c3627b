"""Rate computations on grids.

* :func:`oracle_exponent` -- exponent of the oracle that sees the final
  empirical means, for a given allocation source.
* :func:`rgo_inner`, :func:`rgo_solve_discrete` -- the single-batch minimax
  rate on product grids. The sup over tables decomposes per Q grid point
  into a small max-min problem ``max_r min_P H(P) r.D(Q||P)``.
* :func:`rgoB_solve_discrete` -- the two-batch version by backward induction.
* :func:`fc_allocation` -- the optimal fixed-confidence allocation.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

from .core import BanditInstance, DistributionFamily, best_arm_set
from .divergence import ComplexityMeasure, complexity, kl, kl_array
from .errors import CheckpointError, ConfigError, DomainError, ResourceError
from .policies import TableSource

BERNOULLI = DistributionFamily.bernoulli()

# ------------------------------------------------------------------ grids


def _as_grids(grids, K: int | None = None) -> tuple[np.ndarray, ...]:
    if isinstance(grids, GridSpec):
        return grids.grids
    grids = list(grids)
    if grids and np.ndim(grids[0]) == 0:  # one shared list of values
        if K is None:
            raise ConfigError("a shared value list needs K")
        grids = [grids] * K
    out = tuple(np.asarray(g, dtype=float) for g in grids)
    for g in out:
        if g.ndim != 1 or g.size == 0 or np.any(np.diff(g) <= 0):
            raise DomainError("grids must be nonempty and strictly increasing")
    return out


def _product(grids: Sequence[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*grids, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class GridSpec:
    """Per-arm value grids; the grid over 𝒬^K is their product."""

    grids: tuple[np.ndarray, ...]
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "grids", _as_grids(self.grids))
        for g in self.grids:
            if g[0] < self.lo or g[-1] > self.hi:
                raise DomainError("grid values outside the domain box")

    @classmethod
    def regular(cls, K: int, step: float = 5e-3, lo: float = 0.0, hi: float = 1.0) -> "GridSpec":
        if not step > 0 or not hi > lo:
            raise ConfigError("need step > 0 and hi > lo")
        n = int(round((hi - lo) / step))
        g = np.linspace(lo, hi, n + 1)
        return cls(tuple(g for _ in range(K)), lo, hi)

    @classmethod
    def for_instance(cls, instance: BanditInstance, step: float = 5e-3,
                     box: tuple[float, float] | None = None) -> "GridSpec":
        if instance.family.is_bernoulli:
            lo, hi = box or (0.0, 1.0)
        elif box is None:
            raise ConfigError("Gaussian grids need an explicit bounded box")
        else:
            lo, hi = box
        return cls.regular(instance.K, step, lo, hi)

    @property
    def K(self) -> int:
        return len(self.grids)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.size for g in self.grids)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        return _product(self.grids)

    def chunks(self, size: int = 1 << 18):
        """Grid points in lexicographic order, ``size`` at a time."""
        for start in range(0, self.size, size):
            idx = np.unravel_index(np.arange(start, min(start + size, self.size)), self.shape)
            yield np.stack([g[i] for g, i in zip(self.grids, idx)], axis=1)


def _weighted(r: np.ndarray, d: np.ndarray) -> np.ndarray:
    # sum_i r_i d_i with 0 * inf = 0
    with np.errstate(invalid="ignore"):
        return np.where(r == 0, 0.0, r * d).sum(axis=-1)


# --------------------------------------------------------- oracle exponent

def adversarial_mask(Q: np.ndarray, best: np.ndarray) -> np.ndarray:
    """Rows of Q with some empirical best arm (ties included) outside the true best set.

    Counting ties makes the grid set the closure of the open error region,
    so the grid minimum converges to the continuous infimum.
    """
    top = Q.max(axis=1, keepdims=True)
    return np.any((Q == top) & ~best[None, :], axis=1)


def oracle_exponent(source: Callable, instance: BanditInstance, grid: GridSpec | None = None,
                    chunk: int = 1 << 18) -> float:
    """``min`` over adversarial grid Q of ``sum_i r_i(Q) KL(Q_i||P_i)`` (see :func:`adversarial_mask`)."""
    grid = grid or GridSpec.for_instance(instance)
    if grid.K != instance.K:
        raise DomainError("grid dimension differs from K")
    P = instance.mean_array
    best = np.zeros(instance.K, dtype=bool)
    best[list(best_arm_set(P))] = True
    out = math.inf
    for Q in grid.chunks(chunk):
        Q = Q[adversarial_mask(Q, best)]
        if Q.shape[0] == 0:
            continue
        r = np.asarray(source(Q), dtype=float)
        d = kl_array(instance.family, Q, P[None, :])
        out = min(out, float(np.min(_weighted(r, d))))
    if out == math.inf:
        raise DomainError("no grid point Q has an empirical best arm outside I*(P)")
    return out


# --------------------------------------------------------- per-point LPs

def _prune(a: np.ndarray, C: np.ndarray):
    # drop duplicate rows and rows dominated by another row (never the unique min)
    rows = np.unique(np.column_stack([a, C]), axis=0)
    keep = np.ones(len(rows), dtype=bool)
    for p in range(len(rows)):
        others = rows[keep & (np.arange(len(rows)) != p)]
        if others.size and np.any(np.all(others <= rows[p], axis=1)):
            keep[p] = False
    rows = rows[keep]
    return rows[:, 0], rows[:, 1:]


MAX_VERTEX_SYSTEMS = 2_000_000


def _maxmin_vertex(a: np.ndarray, C: np.ndarray):
    """Exact ``max_{r in simplex} min_p a_p + C_p.r`` by enumerating arrangement vertices."""
    a, C = _prune(a, C)
    K = C.shape[1]
    if len(a) == 1:
        i = int(np.argmax(C[0]))
        r = np.zeros(K)
        r[i] = 1.0
        return float(a[0] + C[0, i]), r
    pairs = list(itertools.combinations(range(len(a)), 2))
    normals = [C[p] - C[q] for p, q in pairs] + list(np.eye(K))
    rhs = [a[q] - a[p] for p, q in pairs] + [0.0] * K
    normals, rhs = np.asarray(normals), np.asarray(rhs)
    n_sys = math.comb(len(rhs), K - 1)
    if n_sys > MAX_VERTEX_SYSTEMS:
        raise ResourceError(f"{n_sys} vertex systems exceed the exhaustive limit")
    combos = np.asarray(list(itertools.combinations(range(len(rhs)), K - 1)), dtype=np.int64)
    M = np.concatenate([normals[combos], np.ones((len(combos), 1, K))], axis=1)
    b = np.concatenate([rhs[combos], np.ones((len(combos), 1))], axis=1)
    ok = np.abs(np.linalg.det(M)) > 1e-12
    R = np.linalg.solve(M[ok], b[ok][..., None])[..., 0]
    R = R[np.all(R >= -1e-12, axis=1)]
    R = np.clip(R, 0.0, None)
    R /= R.sum(axis=1, keepdims=True)
    vals = np.min(a[None, :] + R @ C.T, axis=1)
    k = int(np.argmax(vals))
    return float(vals[k]), R[k]


def _maxmin_alternating(a: np.ndarray, C: np.ndarray, max_iter: int = 1000):
    """Same problem by a double oracle: LP on a working set, add best responses."""
    K = C.shape[1]
    u = np.full(K, 1.0 / K)
    S = [int(np.argmin(a + C @ u))]
    for _ in range(max_iter):
        cs = np.r_[np.zeros(K), -1.0]
        A = np.column_stack([-C[S], np.ones(len(S))])
        res = linprog(cs, A_ub=A, b_ub=a[S], A_eq=np.r_[np.ones(K), 0.0][None, :], b_eq=[1.0],
                      bounds=[(0, 1)] * K + [(None, None)], method="highs")
        if res.status != 0:
            raise DomainError(f"linear program failed: {res.message}")
        r = np.clip(res.x[:K], 0.0, None)
        r /= r.sum()
        vals = a + C @ r
        p = int(np.argmin(vals))
        if vals[p] >= -res.fun - 1e-12 or p in S:
            return float(vals[p]), r
        S.append(p)
    raise DomainError("double oracle did not converge")


_SOLVERS = {"exhaustive": _maxmin_vertex, "alternating": _maxmin_alternating}


def _solver(method: str):
    try:
        return _SOLVERS[method.lower()]
    except KeyError:
        raise ConfigError(f"unknown method {method!r}; use exhaustive or alternating") from None


class _Problem:
    """Divergence tensor ``D[q, p, i]``, complexities ``H[p]`` and error masks ``F[J, p]``."""

    def __init__(self, H: ComplexityMeasure, P_grid, Q_grid, family: DistributionFamily,
                 coefficients: str = "grid"):
        self.Q_grids = _as_grids(Q_grid)
        K = len(self.Q_grids)
        self.P_grids = _as_grids(P_grid, K)
        if len(self.P_grids) != K:
            raise DomainError("P and Q grids have different K")
        self.K, self.family = K, family
        self.Q = _product(self.Q_grids)
        self.P = _product(self.P_grids)
        if family.is_bernoulli and (np.any(self.P < 0) | np.any(self.P > 1) |
                                    np.any(self.Q < 0) | np.any(self.Q > 1)):
            raise DomainError("Bernoulli grids must lie in [0, 1]")
        if coefficients == "grid":
            X = np.broadcast_to(self.Q[:, None, :], (len(self.Q), len(self.P), K))
        elif coefficients == "cell":
            lo, hi = cell_bounds(self.Q_grids, family)
            qi = _product([np.arange(g.size) for g in self.Q_grids]).astype(np.int64)
            L = np.stack([lo[i][qi[:, i]] for i in range(K)], axis=1)
            U = np.stack([hi[i][qi[:, i]] for i in range(K)], axis=1)
            X = np.clip(self.P[None, :, :], L[:, None, :], U[:, None, :])
        else:
            raise ConfigError("coefficients must be 'grid' or 'cell'")
        self.D = kl_array(family, X, self.P[None, :, :])
        self.H = np.array([complexity(H, p) for p in self.P])
        self.F = np.zeros((K, len(self.P)), dtype=bool)
        for p, pt in enumerate(self.P):
            bs = best_arm_set(pt)
            for J in range(K):
                self.F[J, p] = J not in bs
        feasible = self.F.any(axis=0)
        if not np.all(np.isfinite(self.H[feasible])):
            raise DomainError("infinite complexity at a P grid point that can be an error instance")
        if not np.all(np.isfinite(self.D[:, feasible])):
            raise DomainError("infinite divergence on the grids (Bernoulli boundary in the P grid?)")

    def best_response(self, q: int, offset: np.ndarray, scale: float, solve):
        """``max_{J, r} min_{p in F_J} offset_p + scale*H_p r.D[q, p]``; returns (value, r, J)."""
        best = (-math.inf, None, None)
        order = [int(np.argmax(self.Q[q]))] + [j for j in range(self.K) if j != int(np.argmax(self.Q[q]))]
        for J in order:
            mask = self.F[J]
            if not mask.any():
                return math.inf, np.full(self.K, 1.0 / self.K), J
            v, r = solve(offset[mask], scale * self.H[mask, None] * self.D[q, mask])
            if v > best[0] + 1e-12:
                best = (v, r, J)
        return best


def cell_bounds(grids: Sequence[np.ndarray], family: DistributionFamily):
    """Nearest-neighbour cells ``[lo, hi]`` of each grid value, clipped to the domain."""
    dom = (0.0, 1.0) if family.is_bernoulli else (-math.inf, math.inf)
    lo, hi = [], []
    for g in grids:
        mids = (g[1:] + g[:-1]) / 2
        lo.append(np.r_[dom[0], mids])
        hi.append(np.r_[mids, dom[1]])
    return lo, hi


def nearest_index(grids: Sequence[np.ndarray], x) -> tuple[int, ...]:
    """Grid index of the nearest value per coordinate (midpoints go to the lower value)."""
    return tuple(int(np.searchsorted((g[1:] + g[:-1]) / 2, v, side="left")) for g, v in zip(grids, x))


# ----------------------------------------------------------- solutions

@dataclass
class DiscreteMinimaxSolution:
    grids: tuple[np.ndarray, ...]
    alloc: np.ndarray  # shape grid_shape + (K,)
    recommend: np.ndarray  # shape grid_shape
    point_values: np.ndarray  # shape grid_shape
    value: float
    method: str = "exhaustive"
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.grids)

    def to_table(self) -> TableSource:
        return TableSource(self.grids, self.alloc)

    def lookup(self, Q) -> tuple[np.ndarray, int]:
        """Nearest-neighbour allocation and recommendation."""
        idx = nearest_index(self.grids, Q)
        return self.alloc[idx], int(self.recommend[idx])

    def to_dict(self) -> dict:
        return {
            "kind": "table",
            "K": self.K,
            "grids": [g.tolist() for g in self.grids],
            "alloc": self.alloc.tolist(),
            "recommend": self.recommend.tolist(),
            "point_values": [None if not math.isfinite(v) else v for v in self.point_values.ravel()],
            "value": self.value,
            "method": self.method,
            "meta": self.meta,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


@dataclass
class DiscreteBatchSolution:
    """Per-batch tables: ``alloc[b]`` is indexed by the grid indices of (Q_1, ..., Q_{b+1})."""

    grids: tuple[np.ndarray, ...]
    B: int
    alloc: list[np.ndarray]
    recommend: np.ndarray
    value: float
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.grids)

    def to_dict(self) -> dict:
        return {
            "kind": "batch_table",
            "K": self.K,
            "B": self.B,
            "grids": [g.tolist() for g in self.grids],
            "alloc": [a.tolist() for a in self.alloc],
            "recommend": self.recommend.tolist(),
            "value": self.value,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteBatchSolution":
        if d.get("kind") != "batch_table":
            raise CheckpointError("batch rule file must have kind 'batch_table'")
        try:
            return cls(tuple(np.asarray(g, float) for g in d["grids"]), int(d["B"]),
                       [np.asarray(a, float) for a in d["alloc"]],
                       np.asarray(d["recommend"], dtype=np.int64), float(d["value"]), d.get("meta", {}))
        except KeyError as exc:
            raise CheckpointError(f"batch rule file missing field {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


# -------------------------------------------------------------- R^go

def rgo_inner(source: Callable, H: ComplexityMeasure, P_grid, Q_grid, J: Callable | None = None,
              family: DistributionFamily = BERNOULLI) -> float:
    """``min_Q min_{P: J(Q) not in I*(P)} H(P) sum_i r_i(Q) D(Q_i||P_i)`` on product grids."""
    prob = _Problem(H, P_grid, Q_grid, family)
    R = np.asarray(source(prob.Q), dtype=float)
    Js = np.argmax(prob.Q, axis=1) if J is None else np.asarray(J(prob.Q), dtype=np.int64)
    vals = prob.H[None, :] * _weighted(R[:, None, :], prob.D)  # (nQ, nP)
    vals = np.where(prob.F[Js], vals, math.inf)
    out = float(vals.min()) if vals.size else math.inf
    if not math.isfinite(out):
        raise DomainError("no feasible (P, Q) pair on these grids")
    return out


def rgo_solve_discrete(H: ComplexityMeasure, P_grid, Q_grid, method: str = "exhaustive",
                       family: DistributionFamily = BERNOULLI, coefficients: str = "grid"
                       ) -> DiscreteMinimaxSolution:
    """Optimal grid tables ``r(Q), J(Q)``; the value is the minimum of per-point optima."""
    solve = _solver(method)
    prob = _Problem(H, P_grid, Q_grid, family, coefficients)
    shape = tuple(g.size for g in prob.Q_grids)
    n = len(prob.Q)
    alloc = np.empty((n, prob.K))
    rec = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    zero = np.zeros(len(prob.P))
    for q in range(n):
        vals[q], alloc[q], rec[q] = prob.best_response(q, zero, 1.0, solve)
    value = float(vals.min())
    if not math.isfinite(value):
        raise DomainError("no adversarial (P, Q) pair on these grids")
    return DiscreteMinimaxSolution(prob.Q_grids, alloc.reshape(shape + (prob.K,)), rec.reshape(shape),
                                   vals.reshape(shape), value, method.lower(),
                                   {"complexity": H.tag(), "coefficients": coefficients,
                                    "p_grids": [g.tolist() for g in prob.P_grids]})


def simplex_grid(K: int, step: float) -> np.ndarray:
    """All points of the simplex with coordinates in multiples of ``1/round(1/step)``."""
    n = int(round(1.0 / step))
    pts = [c for c in itertools.product(range(n + 1), repeat=K - 1) if sum(c) <= n]
    return np.array([list(c) + [n - sum(c)] for c in pts], dtype=float) / n


def rgoB_solve_discrete(H: ComplexityMeasure, P_grid, Q_grid, B: int = 2,
                        family: DistributionFamily = BERNOULLI, r1_step: float = 0.05,
                        method: str = "exhaustive", coefficients: str = "grid",
                        max_problems: int = 500_000) -> DiscreteBatchSolution:
    """Batch-oracle rate for ``B <= 2``.

    For B=2 the first-batch allocation ranges over a simplex grid of step
    ``r1_step``; the second batch and the recommendation are solved exactly
    per history. ``value`` is recomputed from the returned tables.
    """
    if B == 1:
        s = rgo_solve_discrete(H, P_grid, Q_grid, method, family, coefficients)
        return DiscreteBatchSolution(s.grids, 1, [s.alloc], s.recommend, s.value,
                                     {**s.meta, "per_point": s.method})
    if B != 2:
        raise ResourceError("the discrete batch solver supports B <= 2 only")
    solve = _solver(method)
    prob = _Problem(H, P_grid, Q_grid, family, coefficients)
    R1 = simplex_grid(prob.K, r1_step)
    n = len(prob.Q)
    work = n * n * len(R1) * prob.K
    if work > max_problems:
        raise ResourceError(f"{work} per-point problems exceed the limit {max_problems}")
    r1 = np.empty((n, prob.K))
    r2 = np.empty((n, n, prob.K))
    J = np.empty((n, n), dtype=np.int64)
    for q1 in range(n):
        best_val, best_rho = -math.inf, None
        for rho in R1:
            off = 0.5 * prob.H * (prob.D[q1] @ rho)
            inner, rows, Js, pruned = math.inf, [], [], False
            for q2 in range(n):
                v, r, j = prob.best_response(q2, off, 0.5, solve)
                rows.append(r)
                Js.append(j)
                inner = min(inner, v)
                if best_rho is not None and inner <= best_val:
                    pruned = True  # this rho cannot beat the incumbent
                    break
            if not pruned and (best_rho is None or inner > best_val):
                best_val, best_rho = inner, rho
                r2[q1], J[q1] = np.array(rows), np.array(Js)
        r1[q1] = best_rho
    shape = tuple(g.size for g in prob.Q_grids)
    sol = DiscreteBatchSolution(prob.Q_grids, 2, [r1.reshape(shape + (prob.K,)),
                                                  r2.reshape(shape + shape + (prob.K,))],
                                J.reshape(shape + shape), math.nan,
                                {"complexity": H.tag(), "r1_step": r1_step,
                                 "coefficients": coefficients,
                                 "p_grids": [g.tolist() for g in prob.P_grids]})
    sol.value = batch_value(sol, H, prob.P_grids, family, coefficients)
    return sol


def batch_value(sol: DiscreteBatchSolution, H: ComplexityMeasure, P_grid,
                family: DistributionFamily = BERNOULLI, coefficients: str = "grid") -> float:
    """Objective of the tables: ``min`` over histories and error instances of the averaged divergence.

    With ``coefficients="cell"`` each stored mean ranges over the whole
    nearest-neighbour cell of its grid point, which gives the value of the
    rule extended to continuous means.
    """
    prob = _Problem(H, P_grid, sol.grids, family, coefficients)
    n, K = len(prob.Q), prob.K
    tabs = [a.reshape((n,) * (b + 1) + (K,)) for b, a in enumerate(sol.alloc)]
    Jt = sol.recommend.reshape((n,) * sol.B)
    best = math.inf
    for hist in itertools.product(range(n), repeat=sol.B):
        acc = np.zeros(len(prob.P))
        for b in range(sol.B):
            acc += _weighted(tabs[b][hist[:b + 1]][None, :], prob.D[hist[b]])
        v = prob.H * acc / sol.B
        mask = prob.F[int(Jt[hist])]
        if mask.any():
            best = min(best, float(v[mask].min()))
    if not math.isfinite(best):
        raise DomainError("no adversarial history on these grids")
    return best


def continuous_value(sol: DiscreteMinimaxSolution | DiscreteBatchSolution, H: ComplexityMeasure,
                     P_grid, family: DistributionFamily = BERNOULLI) -> float:
    """Value of the nearest-neighbour extension of a grid rule over all continuous means."""
    if isinstance(sol, DiscreteMinimaxSolution):
        sol = DiscreteBatchSolution(sol.grids, 1, [sol.alloc], sol.recommend, sol.value)
    return batch_value(sol, H, P_grid, family, "cell")


# ------------------------------------------------------- fixed confidence

def _d(family, x, y):
    return kl(family, float(x), float(y))


def challenger_mean(family: DistributionFamily, alpha: float, p1: float, pa: float,
                    method: str = "closed", tol: float = 1e-14) -> float:
    """Minimiser of ``alpha d(p1, m) + (1 - alpha) d(pa, m)`` over m."""
    if method == "closed":
        return alpha * p1 + (1 - alpha) * pa
    lo, hi = min(p1, pa), max(p1, pa)
    h = 1e-7

    def slope(m):
        a = alpha * _d(family, p1, m + h) + (1 - alpha) * _d(family, pa, m + h)
        b = alpha * _d(family, p1, m - h) + (1 - alpha) * _d(family, pa, m - h)
        return a - b

    while hi - lo > tol:
        mid = (lo + hi) / 2
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


class FCAllocation(NamedTuple):
    alloc: np.ndarray
    value: float  # inverse characteristic time
    challengers: np.ndarray  # challenger mean per arm (nan at the best arm)


def _bisect(f, lo, hi, tol):
    # f increasing, f(lo) < 0 < f(hi)
    for _ in range(400):
        mid = (lo + hi) / 2
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return (lo + hi) / 2


def fc_allocation(instance: BanditInstance, tol: float = 1e-12) -> FCAllocation:
    """Optimal fixed-confidence weights by nested bisection.

    With ``w_best = 1`` and ``x_a = w_a / w_best``, every challenger cost
    ``g_a(x_a) = d(mu*, m_a) + x_a d(mu_a, m_a)`` equals a common level y; y
    is fixed by ``sum_a d(mu*, m_a) / d(mu_a, m_a) = 1``.
    """
    fam, mu = instance.family, instance.mean_array
    best = best_arm_set(mu)
    if len(best) > 1:
        raise DomainError("fixed-confidence allocation needs a unique best arm")
    s = next(iter(best))
    others = [a for a in range(instance.K) if a != s]

    def g(a, x):
        m = (mu[s] + x * mu[a]) / (1 + x)
        return _d(fam, mu[s], m) + x * _d(fam, mu[a], m)

    def x_of(a, y):
        hi = 1.0
        while g(a, hi) < y:
            hi *= 2
            if hi > 1e300:
                raise DomainError("challenger weight diverged")
        return _bisect(lambda x: g(a, x) - y, 0.0, hi, tol)

    def F(y):
        tot = 0.0
        for a in others:
            x = x_of(a, y)
            m = (mu[s] + x * mu[a]) / (1 + x)
            tot += _d(fam, mu[s], m) / _d(fam, mu[a], m)
        return tot - 1.0

    y_max = min(_d(fam, mu[s], mu[a]) for a in others)
    y = _bisect(F, 0.0, y_max * (1 - 1e-15), tol)
    x = np.ones(instance.K)
    for a in others:
        x[a] = x_of(a, y)
    w = x / x.sum()
    ch = np.full(instance.K, np.nan)
    for a in others:
        ch[a] = (mu[s] + x[a] * mu[a]) / (1 + x[a])
    costs = [w[s] * _d(fam, mu[s], ch[a]) + w[a] * _d(fam, mu[a], ch[a]) for a in others]
    return FCAllocation(w, float(min(costs)), ch)


def transport_costs(instance: BanditInstance, w) -> np.ndarray:
    """``(w* + w_a) I_alpha(mu*, mu_a)`` for every challenger a (nan at the best arm)."""
    mu, fam = instance.mean_array, instance.family
    s = int(np.argmax(mu))
    out = np.full(instance.K, np.nan)
    for a in range(instance.K):
        if a == s:
            continue
        tot = w[s] + w[a]
        alpha = w[s] / tot
        m = challenger_mean(fam, alpha, mu[s], mu[a])
        out[a] = tot * (alpha * _d(fam, mu[s], m) + (1 - alpha) * _d(fam, mu[a], m))
    return out


def fc_fb_suboptimality_bound(P1: BanditInstance, P2: BanditInstance, T: int, slack: float = 0.0,
                              r1: float | None = None) -> float:
    """``exp(-2 T r1 D(P2_1||P1_1)(1+slack)) / 2`` with r1 the FC weight of arm 1 under P2."""
    a, b = P1.mean_array, P2.mean_array
    if a.shape != b.shape or np.any(a[1:] != b[1:]):
        raise DomainError("the two instances must differ only in the first arm")
    if r1 is None:
        r1 = float(fc_allocation(P2).alloc[0])
    return 0.5 * math.exp(-2.0 * T * r1 * kl(P2.family, b[0], a[0]) * (1 + slack))
