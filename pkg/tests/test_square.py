import numpy as np
import pytest

import driftlock as dl
from driftlock.attacks import square_patch_side
from driftlock.objectives import eval_objective
from conftest import ConstantOracle, LinearTwoClassOracle, RecordingOracle

EPS = 8.0 / 255.0


class TestPatchSchedule:
    def test_initial_side_hand_evaluated(self):
        # round(sqrt(0.05 * 32 * 32)) = round(7.155) = 7
        assert square_patch_side(0, 10000, 0.05, (32, 32, 3)) == 7

    def test_tail_after_eight_halvings(self):
        # p = 0.05 / 256 -> round(sqrt(0.2)) = 0 -> clamped to 1
        assert square_patch_side(9999, 10000, 0.05, (32, 32, 3)) == 1

    def test_side_never_exceeds_image(self):
        for i in (0, 10, 5000):
            assert square_patch_side(i, 10000, 1.0, (8, 8, 1)) <= 8
            assert square_patch_side(i, 10000, 1.0, (8, 16, 1)) <= 8

    def test_halving_points_monotone(self):
        sides = [square_patch_side(i, 10000, 0.05, (32, 32, 1)) for i in range(0, 10000, 250)]
        assert sides == sorted(sides, reverse=True)

    def test_halves_exactly_at_fraction(self):
        before = square_patch_side(9, 10000, 0.05, (64, 64, 1))
        at = square_patch_side(10, 10000, 0.05, (64, 64, 1))
        assert at <= before
        assert at == max(1, round(np.sqrt(0.025 * 64 * 64)))


class TestSquareStep:
    def _engine(self, oracle, x, budget, obj, seed=0):
        eng = dl.SquareEngine()
        rng = dl.fresh_rng(seed, "attack")
        eng.begin(x, oracle.score(x), obj, budget, oracle, rng)
        return eng, rng

    def test_constant_logits_reject_forever(self):
        oracle = ConstantOracle([1.0, 0.0])
        x = np.full((8, 8, 1), 0.5)
        eng, rng = self._engine(oracle, x, dl.PerturbationBudget(EPS, 40), dl.untargeted("prob", 0))
        init = eng.current.copy()
        for _ in range(20):
            out = eng.step(dl.untargeted("prob", 0), rng, oracle)
            assert not out.accepted
            assert out.queries_spent == 1
        assert np.array_equal(eng.current, init)

    def test_one_query_per_step(self, small_rbf_zoo):
        inst = dl.generate_instances(small_rbf_zoo, 1, "uniform", seed=3)
        x, y = inst.images[0], int(inst.labels[0])
        oracle = dl.ZooOracle(small_rbf_zoo)
        budget = dl.PerturbationBudget(EPS, 60)
        eng, rng = self._engine(oracle, x, budget, dl.untargeted("ce", y))
        before = oracle.query_count
        for _ in range(30):
            out = eng.step(dl.untargeted("ce", y), rng, oracle)
            assert out.queries_spent == 1
        assert oracle.query_count - before == 30

    def test_stripes_init(self):
        oracle = RecordingOracle(ConstantOracle([1.0, 0.0]))
        x = np.full((8, 8, 1), 0.5)
        self._engine(oracle, x, dl.PerturbationBudget(EPS, 10), dl.untargeted("prob", 0))
        init = oracle.queries[1][0]  # query 0 is the clean image
        delta = init - x
        assert set(np.unique(delta)) <= {-EPS, EPS}
        # vertical stripes: constant down each column
        assert np.all(delta == delta[0:1, :, :])

    def test_one_pixel_image_accepts_iff_margin_improves(self):
        # 1x1 image: the patch is the whole image; reconstruct the accept
        # decision from the query log
        w = np.array([[[1.0]]])
        oracle = RecordingOracle(LinearTwoClassOracle(w))
        x = np.full((1, 1, 1), 0.5)
        budget = dl.PerturbationBudget(0.1, 30)
        obj = dl.untargeted("margin", 0)
        eng, rng = self._engine(oracle, x, budget, obj)
        current_loss = eng.loss
        for _ in range(10):
            out = eng.step(obj, rng, oracle)
            cand_logits = oracle.queries[-1][1]
            cand_loss = eval_objective(obj, cand_logits)
            assert out.accepted == (cand_loss < current_loss)
            current_loss = eng.loss

    def test_perturbation_stays_extreme_valued(self, small_rbf_zoo):
        inst = dl.generate_instances(small_rbf_zoo, 1, "uniform", seed=9)
        x, y = inst.images[0], int(inst.labels[0])
        oracle = dl.ZooOracle(small_rbf_zoo)
        budget = dl.PerturbationBudget(EPS, 80)
        eng, rng = self._engine(oracle, x, budget, dl.untargeted("ce", y))
        for _ in range(80):
            eng.step(dl.untargeted("ce", y), rng, oracle)
        delta = eng.current - x
        lo, hi = np.maximum(x - EPS, 0.0), np.minimum(x + EPS, 1.0)
        unclamped = (x - EPS >= 0.0) & (x + EPS <= 1.0)
        vals = np.unique(np.abs(delta[unclamped]).round(12))
        assert set(vals) <= {0.0, round(EPS, 12)}
        assert np.all(eng.current >= lo) and np.all(eng.current <= hi)

    def test_whole_image_patch_on_tiny_budget(self):
        # side = min(H, W) when p_init covers the image
        assert square_patch_side(0, 10, 1.0, (4, 4, 1)) == 4
