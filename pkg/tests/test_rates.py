import math

import numpy as np
import pytest

from fbbai.core import BanditInstance
from fbbai.divergence import ComplexityMeasure, kl_bernoulli
from fbbai.errors import ConfigError, DomainError, ResourceError
from fbbai.policies import FixedSource
from fbbai.rates import (DiscreteBatchSolution, GridSpec, adversarial_mask, batch_value, challenger_mean,
                         continuous_value, fc_allocation, fc_fb_suboptimality_bound, oracle_exponent,
                         rgo_inner, rgo_solve_discrete, rgoB_solve_discrete, simplex_grid,
                         transport_costs)

LN3_HALF = 0.549306144334054845697  # mpmath, 30 digits
ONE = ComplexityMeasure.constant(1.0)
TINY = [0.25, 0.75]


def random_tiny(rng):
    K = int(rng.integers(2, 4))
    P = np.sort(rng.uniform(0.05, 0.95, size=3)).tolist()
    Q = np.sort(rng.uniform(0.05, 0.95, size=2)).tolist()
    return K, ComplexityMeasure.constant(float(rng.uniform(0.5, 2.0))), [P] * K, [Q] * K


# ---------------------------------------------------------------- oracle

def test_oracle_uniform_instance1(inst1):
    v = oracle_exponent(FixedSource([1 / 3] * 3), inst1)
    assert v == pytest.approx(8.36476e-4, rel=2e-3)


def test_oracle_grid_convergence(inst1):
    src = FixedSource([0.45, 0.4, 0.15])
    coarse = oracle_exponent(src, inst1, GridSpec.regular(3, 1e-2))
    half = oracle_exponent(src, inst1, GridSpec.regular(3, 5e-3))
    assert half <= coarse and (coarse - half) / coarse < 0.05


def test_oracle_mass_on_empirical_best_is_zero(inst1):
    # Q = (0.40, 0.45, 0.30): arm 2 is the empirical best and sits at its true mean
    def greedy(Q):
        return np.eye(3)[np.argmax(Q, axis=1)]
    assert oracle_exponent(greedy, inst1, GridSpec.regular(3, 0.05)) == pytest.approx(0.0, abs=1e-12)
    assert oracle_exponent(FixedSource([1 / 3] * 3), inst1, GridSpec.regular(3, 0.05)) > 0


def test_oracle_errors():
    src = FixedSource([0.5, 0.5])
    with pytest.raises(DomainError):
        oracle_exponent(src, BanditInstance.bernoulli([0.4, 0.4]), GridSpec.regular(2, 0.1))
    with pytest.raises(ConfigError):
        GridSpec.for_instance(BanditInstance.gaussian([0.0, 1.0]))


def test_adversarial_mask_counts_ties():
    Q = np.array([[0.5, 0.5, 0.1], [0.6, 0.5, 0.1], [0.2, 0.5, 0.1]])
    np.testing.assert_array_equal(adversarial_mask(Q, np.array([True, False, False])), [True, False, True])


# ---------------------------------------------------------- R^go (B=1)

def test_rgo_inner_tiny():
    # Q=(0.25,0.75) against P=(0.75,0.25) costs ln3/2 for any r, but the tied
    # point Q=(0.75,0.75) (J = arm 0) against P=(0.25,0.75) costs r_0 ln3/2, and
    # Q=(0.25,0.25) against the same P costs r_1 ln3/2
    for r in ([0.5, 0.5], [0.9, 0.1], [0.0, 1.0], [1.0, 0.0]):
        v = rgo_inner(FixedSource(r), ONE, [TINY] * 2, [TINY] * 2)
        assert v == pytest.approx(min(r) * LN3_HALF, abs=1e-12)
    v3 = rgo_inner(FixedSource([0.5, 0.5]), ComplexityMeasure.constant(3.0), [TINY] * 2, [TINY] * 2)
    assert v3 == pytest.approx(1.5 * LN3_HALF, abs=1e-12)


@pytest.mark.parametrize("method", ["exhaustive", "alternating"])
def test_rgo_tiny_value(method):
    sol = rgo_solve_discrete(ONE, [TINY] * 2, [TINY] * 2, method)
    assert abs(sol.value - LN3_HALF) <= 1e-9
    rows = sol.alloc.reshape(-1, 2)
    np.testing.assert_allclose(rows.sum(axis=1), 1.0)
    r, j = sol.lookup([0.7, 0.3])
    assert j == 0


def test_rgo_infeasible():
    with pytest.raises(DomainError):
        rgo_solve_discrete(ONE, [[0.6], [0.3]], [[0.6], [0.3]])


def test_rgo_methods_agree_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        K, H, P, Q = random_tiny(rng)
        a = rgo_solve_discrete(H, P, Q, "exhaustive")
        b = rgo_solve_discrete(H, P, Q, "alternating")
        assert abs(a.value - b.value) <= 1e-6
        np.testing.assert_allclose(a.point_values, b.point_values, atol=1e-6)


def test_rgo_solution_certified_by_inner():
    rng = np.random.default_rng(5)
    K, H, P, Q = random_tiny(rng)
    sol = rgo_solve_discrete(H, P, Q)
    tab = {tuple(q): (r, j) for q, r, j in zip(
        np.stack(np.meshgrid(*sol.grids, indexing="ij"), -1).reshape(-1, K),
        sol.alloc.reshape(-1, K), sol.recommend.ravel())}
    src = lambda Qs: np.array([tab[tuple(q)][0] for q in Qs])
    J = lambda Qs: np.array([tab[tuple(q)][1] for q in Qs])
    assert rgo_inner(src, H, P, Q, J=J) == pytest.approx(sol.value, abs=1e-9)
    assert np.all(sol.point_values >= sol.value - 1e-12)


def test_table_roundtrip(tmp_path):
    sol = rgo_solve_discrete(ONE, [TINY] * 2, [TINY] * 2)
    sol.save(tmp_path / "t.json")
    from fbbai.policies import TableSource
    src = TableSource.load(tmp_path / "t.json")
    np.testing.assert_allclose(src([0.25, 0.75]), sol.alloc[0, 1])


# ------------------------------------------------------------ R^go_B

def test_simplex_grid():
    g = simplex_grid(3, 0.5)
    assert len(g) == 6 and np.allclose(g.sum(axis=1), 1)


def test_batch_tiny():
    s1 = rgoB_solve_discrete(ONE, [TINY] * 2, [TINY] * 2, B=1)
    assert s1.value == pytest.approx(LN3_HALF, abs=1e-12)
    s2 = rgoB_solve_discrete(ONE, [TINY] * 2, [TINY] * 2, B=2)
    assert s2.value <= LN3_HALF + 1e-9
    assert s2.value == pytest.approx(math.log(3) / 4, abs=1e-9)
    back = DiscreteBatchSolution.from_dict(s2.to_dict())
    assert batch_value(back, ONE, [TINY] * 2) == pytest.approx(s2.value, abs=1e-12)
    assert continuous_value(s2, ONE, [TINY] * 2) <= s2.value + 1e-12


def test_batch_corollary_on_random_instances():
    rng = np.random.default_rng(77)
    for _ in range(20):
        K, H, P, Q = random_tiny(rng)
        one = rgo_solve_discrete(H, P, Q).value
        two = rgoB_solve_discrete(H, P, Q, B=2, r1_step=0.25 if K == 3 else 0.1).value
        assert two <= one + 1e-9


def test_batch_single_point_grid_is_fixed_objective():
    P = [[0.2, 0.7], [0.2, 0.7]]
    Q = [[0.3], [0.6]]
    sol = rgoB_solve_discrete(ONE, P, Q, B=2, r1_step=0.1)
    # one history: both batches see Q=(0.3, 0.6); the value is the average allocation's objective
    r = (sol.alloc[0].reshape(2) + sol.alloc[1].reshape(2)) / 2
    assert sol.value == pytest.approx(rgo_inner(FixedSource(r), ONE, P, Q, J=lambda Qs: sol.recommend.reshape(1)),
                                      abs=1e-12)


def test_batch_guards():
    with pytest.raises(ResourceError):
        rgoB_solve_discrete(ONE, [TINY] * 2, [TINY] * 2, B=3)
    with pytest.raises(ResourceError):
        rgoB_solve_discrete(ONE, [TINY] * 2, [TINY] * 2, B=2, max_problems=10)


# --------------------------------------------------- fixed confidence

def test_fc_symmetric():
    res = fc_allocation(BanditInstance.bernoulli([0.75, 0.25]))
    np.testing.assert_allclose(res.alloc, [0.5, 0.5], atol=1e-9)


def test_fc_lower_bound_constant():
    res = fc_allocation(BanditInstance.bernoulli([0.6, 0.5, 0.45]))
    assert np.all(res.alloc >= 0.07)
    assert res.alloc.sum() == pytest.approx(1.0)


def test_fc_quadratic_scaling():
    r = [fc_allocation(BanditInstance.bernoulli([0.4, 0.5, 0.5 - e])).alloc[0] for e in (0.05, 0.025)]
    assert 2.5 <= r[0] / r[1] <= 6


@pytest.mark.parametrize("means", [(0.6, 0.5, 0.45), (0.3, 0.8, 0.5, 0.75), (0.4, 0.5, 0.45)])
def test_fc_stationarity(means):
    inst = BanditInstance.bernoulli(means)
    res = fc_allocation(inst)
    c = transport_costs(inst, res.alloc)
    c = c[~np.isnan(c)]
    assert np.max(c) - np.min(c) <= 1e-9 * max(1.0, np.max(c))
    assert res.value == pytest.approx(np.min(c), rel=1e-9)


def test_fc_tied_best_rejected():
    with pytest.raises(DomainError):
        fc_allocation(BanditInstance.bernoulli([0.5, 0.5, 0.1]))


def test_challenger_bisection_agrees():
    from fbbai.core import DistributionFamily
    fam = DistributionFamily.bernoulli()
    for alpha, p1, pa in [(0.3, 0.6, 0.5), (0.9, 0.8, 0.1), (0.5, 0.45, 0.4)]:
        a = challenger_mean(fam, alpha, p1, pa)
        b = challenger_mean(fam, alpha, p1, pa, method="bisect")
        assert a == pytest.approx(b, abs=1e-10)


def test_suboptimality_bound():
    b = {e: fc_fb_suboptimality_bound(BanditInstance.bernoulli([0.6, 0.5, 0.5 - e]),
                                      BanditInstance.bernoulli([0.4, 0.5, 0.5 - e]), 1000)
         for e in (0.05, 0.025)}
    assert b[0.05] < b[0.025] <= 0.5
    P1, P2 = BanditInstance.bernoulli([0.6, 0.5, 0.45]), BanditInstance.bernoulli([0.4, 0.5, 0.45])
    assert fc_fb_suboptimality_bound(P1, P2, 100, r1=0.0) == 0.5
    x1 = fc_fb_suboptimality_bound(P1, P2, 100, r1=0.1)
    x2 = fc_fb_suboptimality_bound(P1, P2, 200, r1=0.1)
    assert x2 == pytest.approx(2 * x1 ** 2)
    with pytest.raises(DomainError):
        fc_fb_suboptimality_bound(P1, BanditInstance.bernoulli([0.4, 0.4, 0.45]), 100)
