"""Pure-numpy fallback for the compiled trial loops, vectorised across trials.

Signatures and semantics mirror ``_ckernels``.
"""
from __future__ import annotations

import numpy as np


def _masked_best(sums, counts, alive_mask):
    # lowest-index best among alive arms; unpulled alive arms rank above dead ones
    lowest = -np.finfo(float).max
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(counts > 0, sums / np.maximum(counts, 1), lowest / 2)
    return np.argmax(np.where(alive_mask, m, lowest), axis=1)


def simulate_schedule(X, phase_len, phase_keep, best_mask, checkpoints, err_out):
    n, K, T = X.shape
    rows = np.arange(n)
    sums = np.zeros((n, K))
    counts = np.zeros((n, K), dtype=np.int64)
    alive = np.tile(np.arange(K), (n, 1))
    phase, start, bound, c = 0, 0, int(phase_len[0]), 0
    C, P = len(checkpoints), len(phase_len)
    best_mask = np.asarray(best_mask, dtype=bool)
    t = 0
    while True:
        while phase < P and t >= bound:
            keep = int(phase_keep[phase])
            ca = np.take_along_axis(counts, alive, axis=1)
            sa = np.take_along_axis(sums, alive, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                ma = np.where(ca > 0, sa / np.maximum(ca, 1), -np.inf)
            order = np.argsort(-ma, axis=1, kind="stable")
            alive = np.sort(np.take_along_axis(alive, order[:, :keep], axis=1), axis=1)
            start = bound
            phase += 1
            if phase < P:
                bound += int(phase_len[phase])
        while c < C and checkpoints[c] == t:
            mask = np.zeros((n, K), dtype=bool)
            mask[rows[:, None], alive] = True
            arm = _masked_best(sums, counts, mask)
            err_out[:, c] = ~best_mask[arm]
            c += 1
        if t >= T:
            break
        arm = alive[:, (t - start) % alive.shape[1]]
        sums[rows, arm] += X[rows, arm, counts[rows, arm]]
        counts[rows, arm] += 1
        t += 1


def _net_forward_batch(Q, W1, b1, W2, b2, W3, b3):
    from .network import NetworkParams, forward
    params = NetworkParams(Q.shape[1], [np.asarray(W1), np.asarray(W2), np.asarray(W3)],
                           [np.asarray(b1), np.asarray(b2), np.asarray(b3)])
    return forward(params, Q)


def simulate_tracking(X, use_network, fixed_w, W1, b1, W2, b2, W3, b3,
                      best_mask, checkpoints, err_out, disc_out):
    n, K, T = X.shape
    rows = np.arange(n)
    sums = np.zeros((n, K))
    counts = np.zeros((n, K), dtype=np.int64)
    best_mask = np.asarray(best_mask, dtype=bool)
    everyone = np.ones((n, K), dtype=bool)
    C, c, t = len(checkpoints), 0, 0
    r = None
    fixed_w = np.asarray(fixed_w, dtype=float)
    while True:
        if t >= K:
            Q = sums / counts
            if use_network:
                r = _net_forward_batch(Q, W1, b1, W2, b2, W3, b3)
            else:
                r = np.broadcast_to(fixed_w, (n, K))
        while c < C and checkpoints[c] == t:
            arm = _masked_best(sums, counts, everyone)
            err_out[:, c] = ~best_mask[arm]
            if t >= K:
                disc_out[:, c] = np.max(np.abs(r - counts / t), axis=1)
            else:
                disc_out[:, c] = np.nan
            c += 1
        if t >= T:
            break
        if t < K:
            arm = np.full(n, t)
        else:
            arm = np.argmax(r - counts / t, axis=1)
        sums[rows, arm] += X[rows, arm, counts[rows, arm]]
        counts[rows, arm] += 1
        t += 1
