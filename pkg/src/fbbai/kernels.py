"""Backend selection for the trial loops.

The compiled extension is used when importable; setting the environment
variable ``FBBAI_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("FBBAI_PURE_PYTHON") == "1":
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def get_backend(name: str | None = None):
    """Module implementing the loops; ``name`` is ``"compiled"``, ``"python"`` or None (default)."""
    if name is None:
        name = BACKEND
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    if name == "python":
        return _pykernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def _bytes(a):
    return np.ascontiguousarray(a, dtype=np.uint8)


def _longs(a):
    return np.ascontiguousarray(a, dtype=np.int_)


def run_schedule(X, phase_len, phase_keep, best_mask, checkpoints, backend=None):
    X = np.ascontiguousarray(X, dtype=float)
    checkpoints = _longs(checkpoints)
    err = np.zeros((X.shape[0], len(checkpoints)), dtype=np.uint8)
    get_backend(backend).simulate_schedule(X, _longs(phase_len), _longs(phase_keep),
                                           _bytes(best_mask), checkpoints, err)
    return err


def run_tracking(X, best_mask, checkpoints, *, fixed=None, params=None, backend=None):
    X = np.ascontiguousarray(X, dtype=float)
    K = X.shape[1]
    checkpoints = _longs(checkpoints)
    err = np.zeros((X.shape[0], len(checkpoints)), dtype=np.uint8)
    disc = np.zeros((X.shape[0], len(checkpoints)), dtype=float)
    if params is not None:
        arrays = [np.ascontiguousarray(a, dtype=float) for a in params.arrays()]
        use_net, w = 1, np.zeros(K)
    else:
        H = 3 * K
        arrays = [np.zeros((H, K)), np.zeros(H), np.zeros((H, H)), np.zeros(H),
                  np.zeros((K, H)), np.zeros(K)]
        use_net, w = 0, np.ascontiguousarray(fixed, dtype=float)
    get_backend(backend).simulate_tracking(X, use_net, w, *arrays, _bytes(best_mask),
                                           checkpoints, err, disc)
    return err, disc
