import numpy as np
import pytest

from fbbai import kernels
from fbbai.core import BanditInstance, best_arm_set, reward_block
from fbbai.harness import simulate_trial
from fbbai.network import NetworkParams
from fbbai.policies import FixedSource, NetworkSource, parse_policy, rgo_tracking

BACKENDS = kernels.available_backends()
CPS = np.array([3, 10, 25, 57, 80])


def _setup(means=(0.5, 0.45, 0.3), n=24, T=80, seed=3):
    inst = BanditInstance.bernoulli(means)
    X = reward_block(inst, seed, 0, n, T)
    best = best_arm_set(inst.means)
    mask = np.array([i in best for i in range(inst.K)], dtype=np.uint8)
    return inst, X, best, mask


def _reference(policy_factory, X, T, best):
    out = [simulate_trial(policy_factory(), X[j], T, CPS, best) for j in range(len(X))]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])


def test_default_backend_listed():
    assert kernels.BACKEND in BACKENDS
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("name", ["uniform", "sr", "sh"])
def test_schedule_kernels_match_reference(backend, name):
    inst, X, best, mask = _setup()
    spec = parse_policy(name)
    proto = spec.make().reset(inst.K, 80)
    err = kernels.run_schedule(X, [p.length for p in proto.schedule], [p.keep for p in proto.schedule],
                               mask, CPS, backend=backend)
    ref, _ = _reference(spec.make, X, 80, best)
    np.testing.assert_array_equal(err, ref)


@pytest.mark.parametrize("backend", BACKENDS)
def test_fixed_tracking_matches_reference(backend):
    inst, X, best, mask = _setup()
    w = np.array([0.5, 0.3, 0.2])
    err, disc = kernels.run_tracking(X, mask, CPS, fixed=w, backend=backend)
    ref_e, ref_d = _reference(lambda: rgo_tracking(FixedSource(w)), X, 80, best)
    np.testing.assert_array_equal(err, ref_e)
    np.testing.assert_array_equal(disc, ref_d)


@pytest.mark.parametrize("backend", BACKENDS)
def test_network_tracking_matches_reference(backend):
    inst, X, best, mask = _setup(means=(0.5, 0.5, 0.2, 0.45), n=12)
    params = NetworkParams.init(4, seed=9)
    err, disc = kernels.run_tracking(X, mask, CPS, params=params, backend=backend)
    ref_e, ref_d = _reference(lambda: rgo_tracking(NetworkSource(params)), X, 80, best)
    np.testing.assert_array_equal(err, ref_e)
    np.testing.assert_allclose(disc, ref_d, rtol=0, atol=1e-12)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_backends_agree_on_discrete_rewards():
    # Bernoulli rewards produce many exact ties in means and deficits
    inst, X, best, mask = _setup(means=(0.5, 0.5, 0.5), n=64, T=80)
    params = NetworkParams.init(3, seed=1)
    a = kernels.run_tracking(X, mask, CPS, params=params, backend="compiled")
    b = kernels.run_tracking(X, mask, CPS, params=params, backend="python")
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_allclose(a[1], b[1], rtol=0, atol=1e-12)


def test_pure_python_switch():
    import os
    import subprocess
    import sys
    env = dict(os.environ, FBBAI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from fbbai import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
