import numpy as np
import pytest
from hypothesis import given, strategies as st

import driftlock as dl
from driftlock.errors import ContractViolationError
from driftlock.objectives import class_ranking, eval_objective, leading_non_true, softmax

finite_logits = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=2, max_size=12
).map(np.array)


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        assert softmax(np.zeros(3)) == pytest.approx([1 / 3] * 3)

    def test_stable_under_huge_logits(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert np.isfinite(p).all()
        assert p[0] == pytest.approx(1.0)
        assert p[1] == pytest.approx(0.0, abs=1e-300)

    @given(finite_logits)
    def test_normalized(self, logits):
        p = softmax(logits)
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(p >= 0)

    @given(finite_logits)
    def test_shared_normalizer_identity(self, logits):
        # log p_y - log p_t == f_y - f_t, so margins survive a probs-only wire
        p = softmax(logits)
        logp = np.log(np.maximum(p, 1e-300))
        for y in range(len(logits)):
            for t in range(len(logits)):
                assert logp[y] - logp[t] == pytest.approx(logits[y] - logits[t], abs=1e-9)


class TestEvalObjective:
    def test_untargeted_margin_direct(self):
        assert eval_objective(dl.untargeted("margin", 0), np.array([2.0, 1.0, 0.0])) == 1.0

    def test_untargeted_prob_uniform(self):
        logits = np.zeros(4)
        assert eval_objective(dl.untargeted("prob", 0), logits) == pytest.approx(0.25)

    def test_targeted_margin_hand_evaluated(self):
        # max_{k != t} f_k - f_t with logits [2,1,0], t=2 -> 2 - 0
        assert eval_objective(dl.targeted("margin", 2), np.array([2.0, 1.0, 0.0])) == 2.0

    def test_ce_values(self):
        logits = np.array([1.0, 0.0])
        p0 = np.exp(1) / (np.exp(1) + 1)
        assert eval_objective(dl.untargeted("ce", 0), logits) == pytest.approx(np.log(p0))
        assert eval_objective(dl.targeted("ce", 1), logits) == pytest.approx(-np.log(1 - p0))

    def test_targeted_prob_sign(self):
        logits = np.array([0.0, 1.0])
        p = softmax(logits)
        assert eval_objective(dl.targeted("prob", 1), logits) == pytest.approx(-p[1])

    def test_invalid_class_raises(self):
        with pytest.raises(ContractViolationError):
            eval_objective(dl.untargeted("prob", 5), np.zeros(3))
        with pytest.raises(ContractViolationError):
            dl.untargeted("nonsense", 0)

    @given(finite_logits)
    def test_pure(self, logits):
        obj = dl.untargeted("ce", 0)
        assert eval_objective(obj, logits) == eval_objective(obj, logits)


class TestRanking:
    def test_leading_non_true(self):
        assert leading_non_true(np.array([0.5, 0.3, 0.2]), 0) == 1
        assert leading_non_true(np.array([0.1, 0.9]), 1) == 0

    def test_tie_prefers_lowest_index(self):
        assert leading_non_true(np.array([0.5, 0.25, 0.25]), 0) == 1

    def test_class_ranking_basic(self):
        assert class_ranking(np.array([0.4, 0.3, 0.2, 0.1]), 0, 2) == [1, 2]

    def test_class_ranking_full_permutation(self):
        probs = np.array([0.4, 0.3, 0.2, 0.1])
        assert sorted(class_ranking(probs, 1, 3)) == [0, 2, 3]

    def test_class_ranking_uniform_ties_by_index(self):
        assert class_ranking(np.full(5, 0.2), 2, 4) == [0, 1, 3, 4]

    def test_top_k_bound(self):
        with pytest.raises(ContractViolationError):
            class_ranking(np.full(4, 0.25), 0, 4)


class TestLockedLeaderEquivalence:
    @given(
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=3, max_size=8),
        st.data(),
    )
    def test_raising_leader_raises_competitor_max(self, weights, data):
        # with t the leading non-true class, any change that strictly
        # decreases the TargetedProb(t) loss (i.e. raises P(t)) strictly
        # raises max_{k != y} P(k), the margin loss's competitor term
        p = np.array(weights) / np.sum(weights)
        y = data.draw(st.integers(0, len(p) - 1))
        t = leading_non_true(p, y)
        bump = data.draw(st.floats(min_value=1e-6, max_value=0.5))
        q = p.copy()
        q[t] += bump
        q /= q.sum()
        assert q[t] > p[t]  # the bump strictly decreased -P(t)
        mask = np.arange(len(p)) != y
        assert q[mask].max() > p[mask].max()
