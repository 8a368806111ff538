import math

import numpy as np
import pytest
from conftest import chain_model

from paa.harness.scenario import random_model
from paa.planner import NodeBudgetError, PlannerParams, paa_action, q_hat, q_hat_row, tree_nodes
from paa.smdp import ModelPair, Smdp, perturb_kernel
from paa.welfare import WelfareConfig

W1 = WelfareConfig(1.0, 0.1, 1.0)


def brute_backup(model, s, a, h):
    """Depth-h backup on a deterministic kernel, written as a plain recursion."""
    if h == 0:
        return 0.0
    nxt = int(np.argmax(model.kernel[s, a]))
    best = max(brute_backup(model, nxt, b, h - 1) for b in range(model.num_actions))
    return model.state_welfare[nxt] + model.gamma * best


class TestRecursion:
    def test_depth_zero(self, small_model):
        pair = perturb_kernel(small_model, 0.1)
        assert q_hat(pair, 0, 1, 0, PlannerParams(1, 3, 3, 4)) == 0.0

    def test_depth_one_deterministic(self):
        m = chain_model(q=0.0)
        pair = ModelPair.exact(m)
        for exploit in (True, False):
            got = q_hat(pair, 2, 1, 1, PlannerParams(1, 5, 5, 2), exploit_determinism=exploit)
            assert got == pytest.approx(math.sqrt(0.2 * 0.4), rel=1e-15)

    def test_two_step_chain(self):
        # W = (0.3, 0.7, 0.8); from state 0: stay -> 0.3 + 0.5 * 0.7, move -> 0.7 + 0.5 * 0.8
        pair = ModelPair.exact(chain_model())
        for exploit in (True, False):
            row = q_hat_row(pair, 0, 2, PlannerParams(2, 2, 2, 2), exploit_determinism=exploit)
            np.testing.assert_allclose(row, [0.65, 1.1], rtol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_degenerates_to_exact_backup(self, seed):
        m = random_model(5, 3, 7, WelfareConfig(2.0, 0.1, 1.0), 0.8, seed=seed, deterministic=True)
        pair = ModelPair.exact(m)
        H = 1 + seed % 4
        params = PlannerParams(H, 1, 1, 7)
        for s in range(5):
            row = q_hat_row(pair, s, H, params, seed, exploit_determinism=False)
            fast = q_hat_row(pair, s, H, params, seed)
            for a in range(3):
                ref = brute_backup(m, s, a, H)
                assert row[a] == ref
                assert fast[a] == ref

    def test_fixed_assessors_deterministic_paths_agree(self):
        m = random_model(4, 2, 10, W1, 0.7, seed=4, deterministic=True)
        pair = ModelPair.exact(m)
        params = PlannerParams(3, 2, 2, 4)
        for s in range(4):
            slow = q_hat_row(pair, s, 3, params, 9, fixed_assessors=True, exploit_determinism=False)
            fast = q_hat_row(pair, s, 3, params, 9, fixed_assessors=True)
            np.testing.assert_allclose(slow, fast, rtol=1e-14)

    def test_row_matches_single_estimates(self, small_model):
        pair = perturb_kernel(small_model, 0.05)
        params = PlannerParams(2, 4, 3, 5)
        row = q_hat_row(pair, 3, 2, params, seed=12)
        for a in range(2):
            assert q_hat(pair, 3, a, 2, params, seed=12) == row[a]

    def test_reproducible_and_seed_dependent(self, small_model):
        pair = perturb_kernel(small_model, 0.05)
        params = PlannerParams(2, 4, 3, 5)
        a = q_hat_row(pair, 1, 2, params, seed=1)
        assert np.array_equal(a, q_hat_row(pair, 1, 2, params, seed=1))
        assert not np.array_equal(a, q_hat_row(pair, 1, 2, params, seed=2))

    def test_estimates_in_range(self, small_model):
        pair = perturb_kernel(small_model, 0.2)
        params = PlannerParams(3, 3, 2, 3)
        g = small_model.gamma
        for seed in range(5):
            row = q_hat_row(pair, seed % 5, 3, params, seed)
            assert np.all(row >= 0.1 * (1 - g**3) / (1 - g) - 1e-12)
            assert np.all(row <= 1.0 * (1 - g**3) / (1 - g) + 1e-12)

    def test_node_budget(self, small_model):
        pair = perturb_kernel(small_model, 0.05)
        params = PlannerParams(4, 2, 10, 3)
        nodes = tree_nodes(params, 2)
        assert nodes == 1 + 20 + 400 + 8000
        with pytest.raises(NodeBudgetError, match=str(nodes)) as info:
            q_hat(pair, 0, 0, 4, params, node_budget=1000)
        assert info.value.nodes == nodes

    def test_extreme_exponent_warns(self):
        m = random_model(3, 2, 4, WelfareConfig(math.inf, 0.1, 1.0), 0.5, seed=0)
        with pytest.warns(UserWarning, match="no sampling guarantee"):
            q_hat(perturb_kernel(m, 0.1), 0, 0, 1, PlannerParams(1, 2, 2, 2))

    def test_errors(self, small_model):
        pair = ModelPair.exact(small_model)
        with pytest.raises(IndexError):
            q_hat(pair, 9, 0, 1, PlannerParams(1, 1, 1, 1))
        with pytest.raises(ValueError):
            q_hat(pair, 0, 0, 1, PlannerParams(1, 1, 1, 13))
        with pytest.raises(ValueError):
            PlannerParams(0, 1, 1, 1)
        with pytest.raises(ValueError):
            PlannerParams(1, 1.5, 1, 1)


class TestGreedyAction:
    def test_single_action(self):
        m = Smdp(np.ones((1, 1, 1)), [[0.5]], W1, 0.5)
        assert paa_action(ModelPair.exact(m), 0, PlannerParams(2, 2, 2, 1)) == 0

    def test_bandit_separation(self):
        # action 0 pays 0.1 or 0.3, action 1 pays 0.7 or 0.9, each with probability 1/2
        k = np.zeros((5, 2, 5))
        k[:, 0, 1] = k[:, 0, 2] = 0.5
        k[:, 1, 3] = k[:, 1, 4] = 0.5
        m = Smdp(k, [[0.5, 0.1, 0.3, 0.7, 0.9]], W1, 0.5)
        pair = ModelPair.exact(m)
        picks = [paa_action(pair, 0, PlannerParams(1, 64, 64, 1), seed) for seed in range(100)]
        assert np.mean(np.array(picks) == 1) >= 0.99

    def test_tie_goes_to_lowest_index(self):
        k = np.zeros((3, 3, 3))
        k[:, :, 1] = 1.0
        m = Smdp(k, [[0.2, 0.6, 0.9]], W1, 0.5)
        for seed in range(5):
            assert paa_action(ModelPair.exact(m), 0, PlannerParams(2, 3, 3, 1), seed, exploit_determinism=False) == 0
