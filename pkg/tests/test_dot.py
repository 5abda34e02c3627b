import numpy as np
import pytest

from fbbai.core import BanditInstance, RewardStream
from fbbai.divergence import ComplexityMeasure
from fbbai.dot import (BatchRule, dot_csv, lemma3_check, lemma3_sides, lemma4_check, lemma4_sides,
                       pull_counts, realized_divergence, run_dot, simulate_dot, stored_mean_weights)
from fbbai.errors import ConfigError, ContractError, DomainError
from fbbai.rates import continuous_value, rgoB_solve_discrete

ONE = ComplexityMeasure.constant(1.0)
TINY = [0.25, 0.75]


class ScriptedStream:
    """Reward source that hands out fixed per-arm sequences in order."""

    def __init__(self, per_arm):
        self.left = [list(x) for x in per_arm]

    def draw_many(self, instance, arm, n):
        out, self.left[arm] = self.left[arm][:n], self.left[arm][n:]
        return np.array(out, dtype=float)


def test_stored_update_example():
    rule = BatchRule.constant([0.4, 0.6], B=2)
    inst = BanditInstance.bernoulli([0.5, 0.5])
    tr = run_dot(rule, inst, 12, ScriptedStream([[1, 0, 1, 0, 1, 1], [1, 0, 0, 1, 0, 0]]))
    assert tr.T_B == 4
    np.testing.assert_array_equal(tr.n, [[4, 0], [0, 4], [2, 2]])
    np.testing.assert_allclose(tr.stored, [[0.5, 0.5], [0.7, 0.2]])


def test_small_schedule_arithmetic():
    tr = run_dot(BatchRule.constant([0.3, 0.7], 2), BanditInstance.bernoulli([0.6, 0.4]), 12, RewardStream(0))
    assert tr.T_B == 4 and tr.n[:2].tolist() == [[4, 0], [0, 4]]
    assert tr.n[2].sum() == 4 and np.all(tr.n[2] >= 2 * tr.r[2])


def test_degenerate_instance():
    tr = run_dot(BatchRule.constant([0.5, 0.5], 3), BanditInstance.bernoulli([1.0, 0.0]), 40, RewardStream(3))
    np.testing.assert_array_equal(tr.Q[2:], np.tile([1.0, 0.0], (2, 1)))
    np.testing.assert_array_equal(tr.stored, np.tile([1.0, 0.0], (3, 1)))
    assert tr.recommendation == 0
    for bc in range(2, 5):
        assert lemma4_sides(tr, None, BanditInstance.bernoulli([1.0, 0.0]), bc) == (0.0, 0.0)


@pytest.mark.parametrize("r,T_B,K", [([0.5, 0.5], 4, 2), ([0.1, 0.2, 0.7], 10, 3), ([1.0, 0.0, 0.0], 7, 3),
                                     ([1 / 3, 1 / 3, 1 / 3], 9, 3)])
def test_pull_counts_constraints(r, T_B, K):
    r = np.array(r)
    n = pull_counts(r, T_B, K)
    assert n.sum() == T_B and np.all(n >= r * (T_B - K) - 1e-12)


def test_run_dot_errors():
    inst = BanditInstance.bernoulli([0.6, 0.4])
    with pytest.raises(ConfigError):
        run_dot(BatchRule.constant([0.5, 0.5], 2), inst, 6, RewardStream(0))
    with pytest.raises(DomainError):
        run_dot(BatchRule.constant([0.2, 0.3, 0.5], 2), inst, 60, RewardStream(0))
    bad = BatchRule(2, 2, lambda b, s: np.array([0.7, 0.7]), lambda s: 0)
    with pytest.raises(ContractError):
        run_dot(bad, inst, 60, RewardStream(0))
    with pytest.raises(ContractError):
        run_dot(BatchRule(2, 2, lambda b, s: np.array([0.5, 0.5]), lambda s: 5), inst, 60, RewardStream(0))


def test_budget_and_convexity():
    rng = np.random.default_rng(1)
    inst = BanditInstance.bernoulli([0.7, 0.2, 0.5])
    for j in range(30):
        B = int(rng.integers(2, 5))
        tr = run_dot(BatchRule.random(3, B, rng), inst, 200 + j, RewardStream(4, j))
        assert tr.n.sum() == tr.n_batches * tr.T_B
        assert np.all((tr.stored >= 0) & (tr.stored <= 1))
        for k in range(1, B):
            rb = tr.r[k + 2]
            upd = np.where(rb > 0, tr.stored[k - 1] + rb * (np.nan_to_num(tr.Q[k + 2]) - tr.stored[k - 1]),
                           tr.stored[k - 1])
            np.testing.assert_allclose(tr.stored[k], upd, rtol=0, atol=1e-15)


def test_lemma4_base_case_equality():
    inst = BanditInstance.bernoulli([0.6, 0.3, 0.5])
    tr = run_dot(BatchRule.constant([0.2, 0.3, 0.5], 3), inst, 100, RewardStream(8))
    lhs, rhs = lemma4_sides(tr, None, inst, 3)
    assert lhs == pytest.approx(rhs, rel=1e-14)
    with pytest.raises(DomainError):
        lemma4_sides(tr, None, inst, 2)


def test_lemma4_fuzz():
    rng = np.random.default_rng(20240)
    checks = 0
    for j in range(1000):
        K, B = int(rng.integers(2, 4)), int(rng.integers(2, 5))
        inst = BanditInstance.bernoulli(rng.uniform(0.02, 0.98, size=K))
        rule = BatchRule.random(K, B, rng)
        T = int(rng.integers((B + K - 1) * (K + 1), 400))
        tr = run_dot(rule, inst, T, RewardStream(99, j))
        for bc in range(K, tr.n_batches + 1):
            assert lemma4_check(tr, rule, inst, bc, tol=1e-9)
            checks += 1
    assert checks > 2000


def test_planned_allocations_recomputed_from_rule():
    rng = np.random.default_rng(3)
    inst = BanditInstance.bernoulli([0.3, 0.6])
    rule = BatchRule.random(2, 3, rng)
    tr = run_dot(rule, inst, 90, RewardStream(1))
    assert lemma4_sides(tr, rule, inst, 4) == lemma4_sides(tr, None, inst, 4)


def test_lemma3_on_tiny_exhaustive_rule():
    sol = rgoB_solve_discrete(ONE, [TINY] * 2, [TINY] * 2, B=2)
    value = continuous_value(sol, ONE, [TINY] * 2)
    assert 0 < value <= sol.value
    rule = BatchRule.from_batch_solution(sol)
    applied = 0
    for means in ([0.75, 0.25], [0.25, 0.75]):
        inst = BanditInstance.bernoulli(means)
        for tr in simulate_dot(rule, inst, 30, 500, seed=5):
            assert lemma3_check(tr, rule, inst, ONE, value)
            applied += lemma3_sides(tr, inst, ONE, value)[0]
    assert applied > 0


def test_lemma3_huge_complexity_trivial():
    inst = BanditInstance.bernoulli([0.6, 0.4])
    tr = run_dot(BatchRule.constant([0.5, 0.5], 2), inst, 30, RewardStream(0))
    _, lhs, rhs = lemma3_sides(tr, inst, ComplexityMeasure.constant(1e300), 1.0)
    assert rhs < 1e-299 and lhs >= rhs


def test_queue_view_reproduces_stored_means():
    rng = np.random.default_rng(11)
    inst = BanditInstance.bernoulli([0.45, 0.55, 0.3])
    for j in range(20):
        tr = run_dot(BatchRule.random(3, 4, rng), inst, 180, RewardStream(6, j), keep_samples=True)
        view = stored_mean_weights(tr)
        for a, row in enumerate(view):
            for i, (x, w) in enumerate(row):
                assert w.sum() == pytest.approx(1.0, abs=1e-12)
                assert np.dot(w, x) == pytest.approx(tr.stored[a, i], abs=1e-12)
    with pytest.raises(DomainError):
        stored_mean_weights(run_dot(BatchRule.constant([0.3, 0.3, 0.4], 2), inst, 60, RewardStream(0)))


def test_constant_rule_matches_rate_objective():
    inst = BanditInstance.bernoulli([0.6, 0.4])
    tr = run_dot(BatchRule.constant([0.5, 0.5], 3), inst, 400, RewardStream(2))
    from fbbai.divergence import kl_bernoulli
    direct = sum(tr.r[b] @ [kl_bernoulli(q, p) for q, p in zip(np.nan_to_num(tr.Q[b], nan=0.6), inst.means)]
                 for b in range(tr.n_batches))
    assert realized_divergence(tr, inst) == pytest.approx(direct, rel=1e-12)


def test_rule_load(tmp_path):
    sol = rgoB_solve_discrete(ONE, [TINY] * 2, [TINY] * 2, B=2)
    sol.save(tmp_path / "b.json")
    rule = BatchRule.load(tmp_path / "b.json", 2)
    assert rule.K == 2 and rule.B == 2
    with pytest.raises(ConfigError):
        BatchRule.load(tmp_path / "b.json", 3)


def test_dot_csv():
    inst = BanditInstance.bernoulli([0.6, 0.4])
    traces = simulate_dot(BatchRule.constant([0.5, 0.5], 2), inst, 30, 5, seed=1)
    lines = dot_csv(traces, inst).splitlines()
    assert lines[0] == "trial,recommendation,error,divergence,lemma4_ok" and len(lines) == 6
    assert all(l.endswith(",1") for l in lines[1:])
    assert dot_csv(traces, inst) == dot_csv(simulate_dot(BatchRule.constant([0.5, 0.5], 2), inst, 30, 5, 1), inst)
