"""Monte-Carlo experiment runner, exact small-horizon enumerator and rate fitting."""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .core import TRIAL_CHUNK, BanditInstance, EmpiricalState, best_arm_set, reward_block
from .errors import ConfigError, DomainError, InsufficientFailuresError, PolicyError, ResourceError
from .policies import (
    FixedSource,
    NetworkSource,
    Policy,
    PolicySpec,
    RgoTracking,
    SchedulePolicy,
    parse_policy,
)

CSV_COLUMNS = ("t", "poe", "poe_stderr", "disc_avg", "disc_worst", "disc_fail")


@dataclass
class ExperimentConfig:
    instance: BanditInstance
    policy: str
    T: int = 2000
    n_trials: int = 100_000
    seed: int = 0
    checkpoints: int | Sequence[int] = 50
    collect_disc: bool = True
    threads: int = 1
    backend: str | None = None
    oracle_grid: float | None = None

    def __post_init__(self):
        if self.T < self.instance.K:
            raise ConfigError(f"T={self.T} is smaller than K={self.instance.K}")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be positive")

    def checkpoint_rounds(self) -> np.ndarray:
        if isinstance(self.checkpoints, (int, np.integer)):
            c = int(self.checkpoints)
            ts = np.unique(np.round(np.arange(1, c + 1) * self.T / c).astype(np.int64))
        else:
            ts = np.unique(np.asarray(self.checkpoints, dtype=np.int64))
        if ts.size and (ts[0] < 1 or ts[-1] > self.T):
            raise ConfigError("checkpoints must lie in [1, T]")
        return ts

    def describe(self) -> dict:
        return {
            "instance": self.instance.to_dict(),
            "policy": self.policy,
            "T": self.T,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "checkpoints": self.checkpoint_rounds().tolist(),
            "collect_disc": self.collect_disc,
        }


@dataclass
class ExperimentReport:
    checkpoints: np.ndarray
    poe: np.ndarray
    poe_stderr: np.ndarray
    disc_avg: np.ndarray
    disc_worst: np.ndarray
    disc_fail: np.ndarray
    n_trials: int
    aborted: int = 0
    oracle_exponent: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def final_poe(self) -> float:
        return float(self.poe[-1])

    @property
    def final_stderr(self) -> float:
        return float(self.poe_stderr[-1])


# ------------------------------------------------------------ single trial

def simulate_trial(policy: Policy, rewards: np.ndarray, T: int, checkpoints: Sequence[int],
                   best: frozenset[int]):
    """Reference run of one trial on a pre-drawn reward table ``rewards[arm, m]``.

    Returns ``(err, disc, arms)`` at the given checkpoint rounds.
    """
    K = rewards.shape[0]
    policy.reset(K, T)
    state = EmpiricalState(K)
    cps = list(checkpoints)
    err = np.zeros(len(cps), dtype=np.uint8)
    disc = np.full(len(cps), np.nan)
    arms = np.empty(T, dtype=np.int64)
    c = 0
    for t in range(T + 1):
        while c < len(cps) and cps[c] == t:
            err[c] = policy.recommend(state) not in best
            target = policy.target(state) if t >= K else None
            if target is not None:
                disc[c] = np.max(np.abs(target - state.counts / t))
            c += 1
        if t == T:
            break
        arm = policy.choose_arm(state)
        arms[t] = arm
        state.update(arm, rewards[arm, state.counts[arm]])
    return err, disc, arms


# -------------------------------------------------------------- experiment

def _chunk_runner(config: ExperimentConfig, spec: PolicySpec, cps: np.ndarray, best_mask: np.ndarray,
                  best: frozenset[int]) -> Callable[[int], tuple]:
    inst, T = config.instance, config.T
    proto = spec.make()

    def run(chunk: int):
        lo = chunk * TRIAL_CHUNK
        n = min(TRIAL_CHUNK, config.n_trials - lo)
        X = reward_block(inst, config.seed, chunk, n, T)
        aborted = np.zeros(n, dtype=bool)
        if isinstance(proto, SchedulePolicy):
            proto.reset(inst.K, T)
            phase_len = [p.length for p in proto.schedule]
            phase_keep = [p.keep for p in proto.schedule]
            err = kernels.run_schedule(X, phase_len, phase_keep, best_mask, cps, backend=config.backend)
            disc = np.full(err.shape, np.nan)
        elif isinstance(proto, RgoTracking) and isinstance(spec.source, (FixedSource, NetworkSource)):
            if isinstance(spec.source, FixedSource):
                err, disc = kernels.run_tracking(X, best_mask, cps, fixed=spec.source.weights,
                                                 backend=config.backend)
            else:
                err, disc = kernels.run_tracking(X, best_mask, cps, params=spec.source.params,
                                                 backend=config.backend)
        else:
            err = np.zeros((n, len(cps)), dtype=np.uint8)
            disc = np.full((n, len(cps)), np.nan)
            for j in range(n):
                try:
                    err[j], disc[j], _ = simulate_trial(spec.make(), X[j], T, cps, best)
                except PolicyError:
                    aborted[j] = True
        keep = ~aborted
        err, disc = err[keep].astype(np.int64), disc[keep]
        if not config.collect_disc:
            disc = np.full(disc.shape, np.nan)
        failed = err.astype(bool)
        with np.errstate(invalid="ignore"):
            dsum = np.where(np.isnan(disc), 0.0, disc)
        return (
            err.sum(axis=0),
            dsum.sum(axis=0),
            np.max(np.where(np.isnan(disc), -np.inf, disc), axis=0, initial=-np.inf),
            np.where(failed, dsum, 0.0).sum(axis=0),
            int(keep.sum()),
            int(aborted.sum()),
            bool(np.any(np.isnan(disc))),
        )

    return run


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    inst = config.instance
    spec = parse_policy(config.policy, inst.K)
    best = best_arm_set(inst.means)
    best_mask = np.array([i in best for i in range(inst.K)], dtype=np.uint8)
    cps = config.checkpoint_rounds()
    runner = _chunk_runner(config, spec, cps, best_mask, best)
    n_chunks = math.ceil(config.n_trials / TRIAL_CHUNK)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(runner, range(n_chunks)))
    else:
        parts = [runner(c) for c in range(n_chunks)]

    C = len(cps)
    n_err = np.zeros(C, dtype=np.int64)
    d_sum, d_fail = np.zeros(C), np.zeros(C)
    d_max = np.full(C, -np.inf)
    done = aborted = 0
    any_nan = False
    for e, ds, dm, df, k, a, nan in parts:  # fixed chunk order keeps sums reproducible
        n_err += e
        d_sum += ds
        d_max = np.maximum(d_max, dm)
        d_fail += df
        done += k
        aborted += a
        any_nan |= nan
    if done == 0:
        raise PolicyError("every trial aborted")
    poe = n_err / done
    stderr = np.sqrt(poe * (1 - poe) / done)
    has_disc = config.collect_disc and not any_nan and isinstance(spec.make(), RgoTracking)
    if has_disc:
        disc_avg = d_sum / done
        disc_worst = d_max
        with np.errstate(invalid="ignore", divide="ignore"):
            disc_fail = np.where(n_err > 0, d_fail / np.maximum(n_err, 1), np.nan)
    else:
        disc_avg = disc_worst = disc_fail = np.full(C, np.nan)

    oracle = None
    if config.oracle_grid and isinstance(spec.source, (NetworkSource, FixedSource)):
        from .rates import GridSpec, oracle_exponent
        oracle = oracle_exponent(spec.source, inst, GridSpec.regular(inst.K, config.oracle_grid))
    meta = config.describe()
    meta["trials_completed"] = done
    meta["aborted"] = aborted
    return ExperimentReport(cps, poe, stderr, disc_avg, disc_worst, disc_fail, done, aborted,
                            oracle, meta)


# -------------------------------------------------------- exact enumerator

def exact_poe(make_policy: Callable[[], Policy], instance: BanditInstance, T: int,
              as_fraction: bool = False):
    """Exact probability of error by enumerating all reward sequences."""
    if not instance.family.is_bernoulli:
        raise DomainError("exact enumeration needs Bernoulli arms")
    if T > 20:
        raise ResourceError(f"T={T} is too large to enumerate (limit 20)")
    K = instance.K
    best = best_arm_set(instance.means)
    probs = [Fraction(repr(m)) for m in instance.means]

    def rec(policy: Policy, state: EmpiricalState, weight: Fraction) -> Fraction:
        if state.t == T:
            return weight if policy.recommend(state) not in best else Fraction(0)
        arm = policy.choose_arm(state)
        total = Fraction(0)
        for reward, p in ((1.0, probs[arm]), (0.0, 1 - probs[arm])):
            if p == 0:
                continue
            nxt = state.copy().update(arm, reward)
            total += rec(_clone(policy), nxt, weight * p)
        return total

    result = rec(make_policy().reset(K, T), EmpiricalState(K), Fraction(1))
    return result if as_fraction else float(result)


def _clone(policy: Policy) -> Policy:
    if isinstance(policy, SchedulePolicy):
        c = object.__new__(type(policy))
        c.__dict__.update(policy.__dict__)
        c.survivors = list(policy.survivors)
        return c
    return policy  # tracking policies keep no per-trial state


# ------------------------------------------------------------ rate fitting

class RateEstimate(NamedTuple):
    rate: float
    stderr: float


def empirical_rate(ts, poe, H: float = 1.0, fraction: float = 0.5) -> RateEstimate:
    """H * (-slope) of a least-squares fit of log PoE on t over the last ``fraction`` of points."""
    ts = np.asarray(ts, dtype=float)
    poe = np.asarray(poe, dtype=float)
    k = max(2, int(math.ceil(len(ts) * fraction)))
    ts, poe = ts[-k:], poe[-k:]
    if np.any(poe <= 0):
        raise InsufficientFailuresError("zero PoE estimates in the fitted range; run more trials")
    fit = stats.linregress(ts, np.log(poe))
    return RateEstimate(-fit.slope * H, fit.stderr * H)


# --------------------------------------------------------------- reporting

def _fmt(x: float) -> str:
    return repr(float(x))


def report_csv(report: ExperimentReport) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for k, t in enumerate(report.checkpoints):
        vals = [report.poe[k], report.poe_stderr[k], report.disc_avg[k], report.disc_worst[k],
                report.disc_fail[k]]
        lines.append(",".join([str(int(t))] + [_fmt(v) for v in vals]))
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, path: str | Path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and a JSON sidecar next to it; returns both paths."""
    path = Path(path)
    body = report_csv(report).encode()
    side = path.with_suffix(path.suffix + ".json")
    meta = dict(report.metadata)
    meta.update({
        "n_trials": report.n_trials,
        "aborted": report.aborted,
        "oracle_exponent": report.oracle_exponent,
        "csv_sha256": hashlib.sha256(body).hexdigest(),
    })
    try:
        path.write_bytes(body)
        side.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path, side


def read_report_csv(path: str | Path) -> dict[str, np.ndarray]:
    rows = Path(path).read_text().strip().splitlines()
    header = rows[0].split(",")
    data = [r.split(",") for r in rows[1:]]
    out = {}
    for j, name in enumerate(header):
        col = [float(r[j]) for r in data]
        out[name] = np.asarray(col, dtype=np.int64 if name == "t" else float)
    return out
