"""Four-layer allocation network ``Q -> simplex`` with a hand-written backward pass.

Layout: input (K) -> hidden (3K, ReLU) -> hidden (3K, ReLU, identity skip
from the first hidden layer) -> softmax output (K). Inputs are sorted in
decreasing order before the forward pass and outputs are mapped back to the
original arm order; arms with equal empirical means share their mass evenly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BanditInstance
from .divergence import ComplexityMeasure, complexity, kl_array
from .errors import CheckpointError, DomainError

CHECKPOINT_VERSION = 1


@dataclass
class NetworkParams:
    K: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def hidden(self) -> int:
        return 3 * self.K

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.K, self.hidden, self.hidden, self.K)

    def __post_init__(self):
        d = self.dims
        shapes = [(d[1], d[0]), (d[2], d[1]), (d[3], d[2])]
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise DomainError("network needs exactly three weight layers")
        for W, b, s in zip(self.weights, self.biases, shapes):
            if W.shape != s or b.shape != (s[0],):
                raise DomainError(f"layer shape {W.shape}/{b.shape} inconsistent with dims {d}")

    @classmethod
    def zeros(cls, K: int) -> "NetworkParams":
        H = 3 * K
        shapes = [(H, K), (H, H), (K, H)]
        return cls(K, [np.zeros(s) for s in shapes], [np.zeros(s[0]) for s in shapes])

    @classmethod
    def init(cls, K: int, seed: int = 0) -> "NetworkParams":
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        H = 3 * K
        shapes = [(H, K), (H, H), (K, H)]
        Ws = [rng.standard_normal(s) * np.sqrt(2.0 / s[1]) for s in shapes]
        return cls(K, Ws, [np.zeros(s[0]) for s in shapes])

    def arrays(self) -> list[np.ndarray]:
        return [self.weights[0], self.biases[0], self.weights[1], self.biases[1],
                self.weights[2], self.biases[2]]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.K, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, v: np.ndarray) -> "NetworkParams":
        out, k = [], 0
        for a in self.arrays():
            out.append(v[k:k + a.size].reshape(a.shape).copy())
            k += a.size
        return NetworkParams(self.K, [out[0], out[2], out[4]], [out[1], out[3], out[5]])


def _canonicalize(Q: np.ndarray):
    perm = np.argsort(-Q, axis=1, kind="stable")
    X = np.take_along_axis(Q, perm, axis=1)
    return perm, X


def _tie_average(vals: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Average ``vals`` over runs of equal entries of the sorted rows ``X``."""
    if not np.any(X[:, 1:] == X[:, :-1]):
        return vals
    labels = np.concatenate(
        [np.zeros((X.shape[0], 1), dtype=np.int64), np.cumsum(X[:, 1:] != X[:, :-1], axis=1)], axis=1)
    M = (labels[:, :, None] == labels[:, None, :]).astype(float)
    return np.einsum("njk,nk->nj", M, vals) / M.sum(axis=2)


def _forward_sorted(params: NetworkParams, X: np.ndarray):
    W1, W2, W3 = params.weights
    b1, b2, b3 = params.biases
    z1 = X @ W1.T + b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ W2.T + b2
    h2 = h1 + np.maximum(z2, 0.0)
    z3 = h2 @ W3.T + b3
    z3 = z3 - z3.max(axis=1, keepdims=True)
    e = np.exp(z3)
    s = e / e.sum(axis=1, keepdims=True)
    return s, (z1, h1, z2, h2)


def forward(params: NetworkParams, Q) -> np.ndarray:
    """Allocation for one mean vector (shape ``(K,)``) or a batch ``(N, K)``."""
    Q = np.asarray(Q, dtype=float)
    single = Q.ndim == 1
    Qb = Q[None, :] if single else Q
    if Qb.shape[1] != params.K:
        raise DomainError(f"expected {params.K} means, got {Qb.shape[1]}")
    if np.any(np.isnan(Qb)):
        raise DomainError("NaN in network input")
    perm, X = _canonicalize(Qb)
    s, _ = _forward_sorted(params, X)
    s = _tie_average(s, X)
    r = np.empty_like(s)
    np.put_along_axis(r, perm, s, axis=1)
    return r[0] if single else r


def _coefficients(P: BanditInstance, Q: np.ndarray, H: ComplexityMeasure) -> np.ndarray:
    d = kl_array(P.family, Q, P.mean_array)
    if not np.all(np.isfinite(d)):
        raise DomainError("infinite divergence: reject this (P, Q) pair")
    h = complexity(H, P)
    if not np.isfinite(h):
        raise DomainError("infinite complexity for this instance")
    return h * d


def loss(params: NetworkParams, P: BanditInstance, Q, H: ComplexityMeasure) -> float:
    """Rate objective ``H(P) * sum_i r_i(Q) KL(Q_i || P_i)`` at the network allocation."""
    Q = np.asarray(Q, dtype=float)
    c = _coefficients(P, Q, H)
    return float(forward(params, Q) @ c)


def backward(params: NetworkParams, P: BanditInstance, Q, H: ComplexityMeasure) -> list[np.ndarray]:
    """Gradient of :func:`loss`, ordered like :meth:`NetworkParams.arrays`."""
    Q = np.asarray(Q, dtype=float)
    c = _coefficients(P, Q, H)
    return _backward_coeff(params, Q, c)


def _backward_coeff(params: NetworkParams, Q: np.ndarray, c: np.ndarray) -> list[np.ndarray]:
    perm, X = _canonicalize(Q[None, :])
    s, (z1, h1, z2, h2) = _forward_sorted(params, X)
    cs = _tie_average(c[perm], X)
    dz3 = s * (cs - np.sum(s * cs, axis=1, keepdims=True))
    W1, W2, W3 = params.weights
    dW3 = dz3.T @ h2
    db3 = dz3[0]
    dh2 = dz3 @ W3
    dz2 = dh2 * (z2 > 0)
    dW2 = dz2.T @ h1
    db2 = dz2[0]
    dh1 = dh2 + dz2 @ W2
    dz1 = dh1 * (z1 > 0)
    dW1 = dz1.T @ X
    db1 = dz1[0]
    return [dW1, db1, dW2, db2, dW3, db3]


@dataclass
class AdamWState:
    lr: float = 1e-3
    weight_decay: float = 1e-7
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = field(default=None)
    v: list[np.ndarray] | None = field(default=None)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("lr", "weight_decay", "beta1", "beta2", "eps", "step")}
        if self.m is not None:
            d["m"] = [a.tolist() for a in self.m]
            d["v"] = [a.tolist() for a in self.v]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdamWState":
        st = cls(**{k: d[k] for k in ("lr", "weight_decay", "beta1", "beta2", "eps", "step")})
        if "m" in d:
            st.m = [np.asarray(a, dtype=float) for a in d["m"]]
            st.v = [np.asarray(a, dtype=float) for a in d["v"]]
        return st


def adamw_step(params: NetworkParams, state: AdamWState, grad: list[np.ndarray]):
    """One decoupled-weight-decay Adam step (descends ``grad``); updates in place."""
    arrays = params.arrays()
    if len(grad) != len(arrays) or any(g.shape != a.shape for g, a in zip(grad, arrays)):
        raise DomainError("gradient shapes do not match parameters")
    if state.m is None:
        state.m = [np.zeros_like(a) for a in arrays]
        state.v = [np.zeros_like(a) for a in arrays]
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for a, g, m, v in zip(arrays, grad, state.m, state.v):
        a *= 1.0 - state.lr * state.weight_decay
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        a -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def save_checkpoint(path: str | Path, params: NetworkParams, state: AdamWState | None = None, *,
                    family: str = "bernoulli", complexity_tag: str = "h1", seed: int | None = None,
                    extra: dict | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "K": params.K,
        "family": family,
        "complexity": complexity_tag,
        "seed": seed,
        "dims": list(params.dims),
        "weights": [W.tolist() for W in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    if state is not None:
        doc["optimizer"] = state.to_dict()
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path: str | Path, expected_K: int | None = None):
    """Return ``(params, optimizer_state_or_None, metadata)``."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: top level must be an object")
    for key in ("version", "K", "dims", "weights", "biases"):
        if key not in doc:
            raise CheckpointError(f"{path}: missing field {key!r}")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {doc['version']!r}")
    K = int(doc["K"])
    if expected_K is not None and K != expected_K:
        raise DomainError(f"{path}: checkpoint has K={K}, expected K={expected_K}")
    if list(doc["dims"]) != [K, 3 * K, 3 * K, K]:
        raise DomainError(f"{path}: dims {doc['dims']} inconsistent with K={K}")
    try:
        params = NetworkParams(
            K,
            [np.asarray(w, dtype=float) for w in doc["weights"]],
            [np.asarray(b, dtype=float) for b in doc["biases"]],
        )
    except (ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad weight arrays: {exc}") from exc
    state = AdamWState.from_dict(doc["optimizer"]) if doc.get("optimizer") else None
    meta = {k: doc.get(k) for k in ("family", "complexity", "seed", "extra")}
    return params, state, meta
