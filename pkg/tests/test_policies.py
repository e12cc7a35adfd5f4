import math

import numpy as np
import pytest

from horde.errors import SamplingSupportError
from horde.features import SparseFeatures
from horde.policies import (
    CHAIN_ACTIONS,
    ConstantAction,
    DEFAULT_ACTIONS,
    FixedDistribution,
    GibbsPolicy,
    GVFQuestion,
    PersistentRandomPolicy,
    StackedGibbsScores,
    generate_random_gibbs,
    importance_ratio,
    policy_prob,
    policy_probs,
    question_bank_constant,
    question_bank_gibbs,
)


def feats(indices, n):
    return SparseFeatures(indices, n)


class TestPolicyProb:
    def test_uniform_at_zero_parameters(self):
        pol = GibbsPolicy(10, 5, [], [])
        p = policy_probs(pol, feats([0, 3], 10), 5)
        assert np.allclose(p, 0.2)

    def test_constant_action_degenerate(self):
        pol = ConstantAction(DEFAULT_ACTIONS.index("forward"))
        assert policy_prob(pol, None, DEFAULT_ACTIONS.index("forward"), 5) == 1.0
        assert policy_prob(pol, None, DEFAULT_ACTIONS.index("stop"), 5) == 0.0

    def test_two_action_softmax_oracle(self):
        # u = (ln 3, 0), phi = {0}, n = 1: p(a0) = (1/3)/(1/3 + 1) = 0.25
        pol = GibbsPolicy(1, 2, [0, 1], [math.log(3.0), 0.0])
        p = policy_probs(pol, feats([0], 1), 2)
        assert p[0] == pytest.approx(0.25, abs=1e-12)
        assert p[1] == pytest.approx(0.75, abs=1e-12)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(5, 60))
            a = int(rng.integers(2, 6))
            pol = generate_random_gibbs(n, a, rng, nonzeros=min(10, n * a))
            k = int(rng.integers(1, n + 1))
            phi = feats(np.sort(rng.choice(n, k, replace=False)), n)
            p = policy_probs(pol, phi, a)
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all(p >= 0)

    def test_block_disjointness(self):
        # changing another action's block leaves this action's score unchanged
        rng = np.random.default_rng(5)
        n, a = 20, 4
        pol = generate_random_gibbs(n, a, rng, nonzeros=15)
        phi = feats(np.arange(0, 20, 3), n)
        base = pol.scores(phi)
        # perturb block 2 only
        extra_idx = np.append(pol.indices, 2 * n + 1)
        extra_val = np.append(pol.values, 7.7)
        perturbed = GibbsPolicy(n, a, extra_idx, extra_val)
        new = perturbed.scores(phi)
        for action in (0, 1, 3):
            assert new[action] == base[action]

    def test_softmax_shift_invariance(self):
        # adding c at one always-active feature in every block shifts every
        # score by c and leaves the distribution unchanged
        rng = np.random.default_rng(11)
        n, a = 12, 5
        pol = generate_random_gibbs(n, a, rng, nonzeros=20)
        phi = feats([0, 4, 7], n)
        c = 3.14
        shifted = GibbsPolicy(
            n,
            a,
            np.concatenate([pol.indices, [b * n + 0 for b in range(a)]]),
            np.concatenate([pol.values, [c] * a]),
        )
        assert np.allclose(policy_probs(pol, phi, a), policy_probs(shifted, phi, a), atol=1e-12)

    def test_stacked_scores_match_single(self):
        rng = np.random.default_rng(13)
        n, a = 30, 5
        policies = [generate_random_gibbs(n, a, rng) for _ in range(8)]
        stack = StackedGibbsScores(policies, n, a)
        phi = feats(np.sort(rng.choice(n, 9, replace=False)), n)
        batch = stack.probs(phi.indices)
        for i, pol in enumerate(policies):
            assert np.allclose(batch[i], policy_probs(pol, phi, a), atol=1e-12)


class TestImportanceRatio:
    def test_on_policy_is_one(self):
        pol = FixedDistribution((0.2, 0.8))
        assert importance_ratio(pol, 0.8, None, 1, 2) == 1.0

    def test_chain_right_ratio(self):
        target = FixedDistribution((0.05, 0.95))
        assert importance_ratio(target, 0.2, None, 1, 2) == pytest.approx(4.75)

    def test_chain_left_ratio(self):
        target = FixedDistribution((0.05, 0.95))
        assert importance_ratio(target, 0.8, None, 0, 2) == pytest.approx(0.0625)

    def test_constant_action_ratios(self):
        pol = ConstantAction(2)
        assert importance_ratio(pol, 0.25, None, 2, 5) == 4.0
        assert importance_ratio(pol, 0.25, None, 1, 5) == 0.0

    def test_zero_behaviour_prob_rejected(self):
        with pytest.raises(SamplingSupportError):
            importance_ratio(ConstantAction(0), 0.0, None, 0, 5)


class TestBehaviourPolicy:
    def test_memoryless_when_repeat_zero(self):
        rng = np.random.default_rng(0)
        pol = PersistentRandomPolicy(5, repeat_probability=0.0, rng=rng)
        actions = [pol.sample() for _ in range(2000)]
        counts = np.bincount([a for a, _ in actions], minlength=5)
        assert all(p == pytest.approx(0.2) for _, p in actions)
        assert counts.min() > 300

    def test_repeat_probability_of_emitted_action(self):
        pol = PersistentRandomPolicy(5, repeat_probability=0.5, rng=np.random.default_rng(1))
        a0, p0 = pol.sample()
        assert p0 == pytest.approx(0.2)  # first draw is uniform
        # oracle: P(a == last) = 0.5 + 0.5 / 5 = 0.6
        _, p1 = pol.sample()
        assert p1 in (pytest.approx(0.6), pytest.approx(0.1))

    def test_empirical_change_frequency(self):
        rng = np.random.default_rng(42)
        pol = PersistentRandomPolicy(5, repeat_probability=0.5, rng=rng)
        prev, _ = pol.sample()
        changes = 0
        n = 100_000
        for _ in range(n):
            a, _ = pol.sample()
            changes += a != prev
            prev = a
        assert changes / n == pytest.approx(0.4, abs=0.01)


class TestGibbsGeneration:
    def test_sixty_nonzeros_in_unit_interval(self):
        rng = np.random.default_rng(9)
        pol = generate_random_gibbs(6065, 5, rng)
        assert pol.values.size == 60
        assert len(set(pol.indices.tolist())) == 60
        assert np.all((pol.values >= 0) & (pol.values <= 1))

    def test_different_seeds_differ(self):
        a = generate_random_gibbs(100, 5, np.random.default_rng(1))
        b = generate_random_gibbs(100, 5, np.random.default_rng(2))
        assert a != b


class TestQuestionBanks:
    def test_paper_bank_size(self):
        bank = question_bank_constant((0.0, 0.5, 0.8), 53, DEFAULT_ACTIONS)
        assert len(bank) == 795
        ids = {q.qid for q in bank}
        assert len(ids) == 795

    def test_single_question(self):
        bank = question_bank_constant((0.5,), 1, CHAIN_ACTIONS)
        assert len(bank) == 2  # one per action
        bank = question_bank_constant((0.5,), 1, DEFAULT_ACTIONS)[:1]
        assert len(bank) == 1

    def test_active_subset_per_action(self):
        bank = question_bank_constant((0.0, 0.5, 0.8), 53, DEFAULT_ACTIONS)
        for a in range(5):
            matching = [q for q in bank if q.target == ConstantAction(a)]
            assert len(matching) == 159

    def test_gibbs_bank(self):
        rng = np.random.default_rng(0)
        bank = question_bank_gibbs(20, 40, DEFAULT_ACTIONS, (0.0, 0.5, 0.8, 0.95), 53, rng)
        assert len(bank) == 20
        assert all(0.0 <= q.gamma < 1.0 for q in bank)
        assert all(0 <= q.reward_index < 53 for q in bank)

    def test_gamma_range_enforced(self):
        with pytest.raises(Exception):
            GVFQuestion("bad", ConstantAction(0), 1.0, 0)
