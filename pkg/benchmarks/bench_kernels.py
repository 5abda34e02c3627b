"""Time the compiled trial loops against the numpy fallback.

    python benchmarks/bench_kernels.py --trials 256 --T 2000

Both backends run on the same reward block; the script checks that their
outputs agree before reporting timings.
"""
import argparse
import time

import numpy as np

from fbbai import kernels
from fbbai.core import BanditInstance, reward_block
from fbbai.network import NetworkParams
from fbbai.policies import successive_rejects


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=256)
    ap.add_argument("--T", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)

    inst = BanditInstance.bernoulli([0.5, 0.45, 0.3])
    X = reward_block(inst, 0, 0, a.trials, a.T)
    mask = np.array([1, 0, 0], dtype=np.uint8)
    cps = np.arange(40, a.T + 1, 40)
    sched = successive_rejects().reset(3, a.T).schedule
    params = NetworkParams.init(3, seed=0)
    cases = {
        "schedule (SR)": lambda b: kernels.run_schedule(X, [p.length for p in sched], [p.keep for p in sched],
                                                        mask, cps, backend=b),
        "tracking (fixed)": lambda b: kernels.run_tracking(X, mask, cps, fixed=[0.4, 0.4, 0.2], backend=b),
        "tracking (network)": lambda b: kernels.run_tracking(X, mask, cps, params=params, backend=b),
    }
    backends = kernels.available_backends()
    print(f"{a.trials} trials x T={a.T}; backends: {', '.join(backends)}")
    print(f"{'loop':<20}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        times, outs = [], []
        for b in backends:
            t, out = _time(lambda: fn(b), a.repeat)
            times.append(t)
            outs.append(out if isinstance(out, tuple) else (out,))
        for other in outs[1:]:
            for x, y in zip(outs[0], other):
                np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)
        row = f"{name:<20}" + "".join(f"{t:>11.3f}s" for t in times)
        if len(times) > 1:
            row += f"{times[1] / times[0]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
