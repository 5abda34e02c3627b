"""Adversarial training of the allocation network and checkpoint selection.

Each step samples ``n_true`` instances P and, per P, ``n_emp`` empirical
mean vectors Q whose best arms are disjoint from P's. The pair with the
smallest rate objective E(P, Q) is found and the network takes one AdamW step
that *raises* E there, pushing up the worst-case exponent.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import BanditInstance, DistributionFamily, best_arm_set
from .divergence import ComplexityMeasure, complexity_array, kl_array
from .errors import ConfigError, DomainError, SamplingError
from .network import AdamWState, NetworkParams, _backward_coeff, adamw_step, forward


@dataclass
class TrainConfig:
    K: int = 3
    family: DistributionFamily = field(default_factory=DistributionFamily.bernoulli)
    complexity: ComplexityMeasure = field(default_factory=ComplexityMeasure.h1)
    box: tuple[float, float] | None = None
    n_true: int = 32
    n_emp: int = 90
    iterations: int = 20_000
    checkpoint_every: int = 200
    eval_n_true: int = 32
    eval_n_emp: int = 100_000
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-7
    share_q: bool = True
    max_draws: int = 10_000_000

    def __post_init__(self):
        for name in ("K", "n_true", "n_emp", "iterations", "checkpoint_every", "eval_n_true", "eval_n_emp"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.K < 2:
            raise ConfigError("K must be at least 2")
        if self.box is None:
            if not self.family.is_bernoulli:
                raise ConfigError("Gaussian training needs a bounded sampling box")
            self.box = (0.0, 1.0)
        lo, hi = self.box
        if not hi >= lo:
            raise ConfigError("box must satisfy lo <= hi")


# -------------------------------------------------------------- sampling

def sample_true(rng: np.random.Generator, config: TrainConfig, n: int | None = None) -> np.ndarray:
    """K i.i.d. uniform means over the box (shape ``(K,)``, or ``(n, K)``)."""
    lo, hi = config.box
    size = (config.K,) if n is None else (n, config.K)
    return rng.uniform(lo, hi, size=size)


def _unique_best(P: np.ndarray) -> np.ndarray:
    return np.sum(P == P.max(axis=1, keepdims=True), axis=1) == 1


def sample_true_unique(rng: np.random.Generator, config: TrainConfig, n: int) -> np.ndarray:
    """``n`` instances with a unique best arm (others are redrawn)."""
    out = sample_true(rng, config, n)
    bad = ~_unique_best(out)
    tries = 0
    while bad.any():
        out[bad] = sample_true(rng, config, int(bad.sum()))
        bad = ~_unique_best(out)
        tries += 1
        if tries > 1000:
            raise SamplingError("cannot draw an instance with a unique best arm from this box")
    return out


def sample_adversarial_Q(rng: np.random.Generator, P, config: TrainConfig, n: int = 1) -> np.ndarray:
    """``n`` uniform draws of Q with ``I*(Q)`` disjoint from ``I*(P)`` (rejection sampling)."""
    P = np.asarray(P, dtype=float)
    bestP = np.zeros(config.K, dtype=bool)
    bestP[list(best_arm_set(P))] = True
    if bestP.all():
        raise DomainError("every arm of P is best; no adversarial Q exists")
    out, got, drawn = np.empty((n, config.K)), 0, 0
    batch = max(4 * n, 256)
    while got < n:
        Q = sample_true(rng, config, batch)
        drawn += batch
        ok = ~np.any((Q == Q.max(axis=1, keepdims=True)) & bestP[None, :], axis=1)
        take = Q[ok][: n - got]
        out[got:got + len(take)] = take
        got += len(take)
        if drawn >= config.max_draws and got / drawn < 1e-6:
            raise SamplingError(f"acceptance rate {got / drawn:.2e} below 1e-6")
    return out


# ------------------------------------------------------------ objective

def pair_objective(r: np.ndarray, P: np.ndarray, Q: np.ndarray, config: TrainConfig) -> np.ndarray:
    """``H(P) sum_i r_i KL(Q_i||P_i)`` for broadcastable batches; inf marks rejected pairs."""
    d = kl_array(config.family, Q, P)
    P = np.asarray(P, dtype=float)
    h = complexity_array(config.complexity, P.reshape(-1, P.shape[-1])).reshape(P.shape[:-1])
    with np.errstate(invalid="ignore"):
        e = np.where(r == 0, 0.0, r * d).sum(axis=-1)
    bad = ~np.all(np.isfinite(d), axis=-1) | ~np.isfinite(h)
    return np.where(bad, math.inf, h * e)


class StepResult(NamedTuple):
    P: np.ndarray
    Q: np.ndarray
    E: float


def _draw_batch(rng, config):
    Ps = sample_true_unique(rng, config, config.n_true)
    stars = np.argmax(Ps, axis=1)
    if config.share_q:
        pool = {}
        for j in sorted(set(stars.tolist())):
            pool[j] = sample_adversarial_Q(rng, np.eye(config.K)[j], config, config.n_emp)
        Qs = np.stack([pool[j] for j in stars])
    else:
        Qs = np.stack([sample_adversarial_Q(rng, p, config, config.n_emp) for p in Ps])
    return Ps, Qs


def scan_min(params: NetworkParams, Ps: np.ndarray, Qs: np.ndarray, config: TrainConfig):
    """Minimising pair over the scan; ties keep the first pair in (P, Q) order."""
    r = forward(params, Qs.reshape(-1, config.K)).reshape(Qs.shape)
    E = pair_objective(r, Ps[:, None, :], Qs, config)
    k = int(np.argmin(E))
    p, q = divmod(k, Qs.shape[1])
    return p, q, float(E[p, q])


def train_step(params: NetworkParams, state: AdamWState, config: TrainConfig,
               rng: np.random.Generator) -> StepResult:
    """One adversarial step; parameters are updated in place."""
    for _ in range(100):
        Ps, Qs = _draw_batch(rng, config)
        p, q, e = scan_min(params, Ps, Qs, config)
        if math.isfinite(e):
            break
    else:
        raise SamplingError("every sampled pair was rejected")
    P, Q = Ps[p], Qs[p, q]
    d = kl_array(config.family, Q, P)
    h = complexity_array(config.complexity, P[None, :])[0]
    grad = _backward_coeff(params, Q, h * d)
    adamw_step(params, state, [-g for g in grad])  # ascend E at the worst pair
    return StepResult(P.copy(), Q.copy(), e)


# -------------------------------------------------------- eval/selection

@dataclass
class EvalSet:
    P: np.ndarray  # (n, K)
    Q: list[np.ndarray]  # adversarial Q pool per P (pools may be shared objects)

    @classmethod
    def build(cls, config: TrainConfig, seed: int | None = None) -> "EvalSet":
        rng = np.random.default_rng([config.seed if seed is None else seed, 0xE7A1])
        P = sample_true_unique(rng, config, config.eval_n_true)
        pools = {}
        for j in sorted(set(np.argmax(P, axis=1).tolist())):
            pools[j] = sample_adversarial_Q(rng, np.eye(config.K)[j], config, config.eval_n_emp)
        return cls(P, [pools[int(j)] for j in np.argmax(P, axis=1)])


def eval_min_E(source: Callable, evalset: EvalSet, config: TrainConfig) -> float:
    """Smallest objective over the evaluation pairs for an allocation source."""
    if len(evalset.P) == 0:
        raise ConfigError("empty evaluation set")
    cache: dict[int, np.ndarray] = {}
    best = math.inf
    for P, Q in zip(evalset.P, evalset.Q):
        if id(Q) not in cache:
            cache[id(Q)] = np.asarray(source(Q), dtype=float)
        best = min(best, float(np.min(pair_objective(cache[id(Q)], P[None, :], Q, config))))
    return best


def select_checkpoint(checkpoints: Sequence[NetworkParams], evalset: EvalSet, config: TrainConfig):
    """``(index, params, scores)`` of the checkpoint with the largest eval min-E (earliest on ties)."""
    if not checkpoints:
        raise ConfigError("no checkpoints to select from")
    scores = [eval_min_E(lambda Q, c=c: forward(c, Q), evalset, config) for c in checkpoints]
    k = int(np.argmax(scores))
    return k, checkpoints[k], scores


@dataclass
class TrainResult:
    params: NetworkParams
    state: AdamWState
    selected_iteration: int
    eval_min_E: float
    uniform_eval_min_E: float
    log: list[tuple[int, float, float]]
    checkpoints: list[tuple[int, NetworkParams]] = field(repr=False, default_factory=list)

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "E_min", "eval_min_E"])
        for it, e, ev in self.log:
            w.writerow([it, repr(e), repr(ev)])
        return buf.getvalue()


def train(config: TrainConfig, progress: Callable[[int, float, float], None] | None = None) -> TrainResult:
    """Run the full loop with a fixed budget and return the selected checkpoint."""
    rng = np.random.default_rng(config.seed)
    params = NetworkParams.init(config.K, seed=config.seed)
    state = AdamWState(lr=config.lr, weight_decay=config.weight_decay)
    evalset = EvalSet.build(config)
    ckpts, scores, log = [], [], []
    for it in range(1, config.iterations + 1):
        res = train_step(params, state, config, rng)
        if it % config.checkpoint_every == 0 or it == config.iterations:
            snap = params.copy()
            score = eval_min_E(lambda Q: forward(snap, Q), evalset, config)
            ckpts.append((it, snap))
            scores.append(score)
            log.append((it, res.E, score))
            if progress:
                progress(it, res.E, score)
    k = int(np.argmax(scores))
    uniform = eval_min_E(lambda Q: np.full(Q.shape, 1.0 / config.K), evalset, config)
    return TrainResult(ckpts[k][1], state, ckpts[k][0], scores[k], uniform, log, ckpts)
