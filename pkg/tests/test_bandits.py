import numpy as np
import pytest

import driftlock as dl
from driftlock.errors import ConfigurationError
from driftlock.objectives import eval_objective, softmax
from conftest import ConstantOracle, LinearTwoClassOracle, RecordingOracle

EPS = 8.0 / 255.0


class StubRng:
    """Deterministic exploration noise for dissecting single steps."""

    def __init__(self, noise):
        self.noise = np.asarray(noise, dtype=np.float64)

    def standard_normal(self, shape):
        assert shape == self.noise.shape
        return self.noise.copy()


def _make(x, oracle, obj, budget, **kw):
    eng = dl.BanditsEngine(**kw)
    eng.begin(x, oracle.score(x), obj, budget, oracle, dl.fresh_rng(0, "attack"))
    return eng


class TestBanditsStep:
    def test_antithetic_cancellation_with_zero_noise(self):
        # coinciding probes: the two-point estimate vanishes, the prior
        # stays zero, and the image cannot move
        oracle = LinearTwoClassOracle(np.ones((8, 8, 1)))
        x = np.full((8, 8, 1), 0.5)
        eng = _make(x, oracle, dl.untargeted("prob", 0), dl.PerturbationBudget(EPS, 10))
        out = eng.step(dl.untargeted("prob", 0), StubRng(np.zeros((2, 2, 1))), oracle)
        assert np.all(eng.prior == 0.0)
        assert not out.accepted
        assert np.array_equal(eng.current, x)

    def test_probes_respect_noise_sparsity(self):
        oracle = RecordingOracle(LinearTwoClassOracle(np.ones((8, 8, 1))))
        x = np.full((8, 8, 1), 0.5)
        eng = _make(x, oracle, dl.untargeted("prob", 0), dl.PerturbationBudget(EPS, 10))
        noise = np.zeros((2, 2, 1))
        noise[0, 0, 0] = 1.0
        eng.step(dl.untargeted("prob", 0), StubRng(noise), oracle)
        probe1, probe2 = oracle.queries[1][0], oracle.queries[2][0]
        diff = probe1 - probe2
        assert np.any(diff[:4, :4, :] != 0)  # upsampled e1 footprint
        assert np.all(diff[4:, :, :] == 0) and np.all(diff[:, 4:, :] == 0)

    def test_estimate_sign_matches_analytic_gradient(self):
        # finite-difference estimate vs the closed-form directional
        # derivative of P(y) for the 2-class linear scorer
        w = np.linspace(-0.4, 1.0, 64).reshape(8, 8, 1)
        oracle = RecordingOracle(LinearTwoClassOracle(w))
        x = np.full((8, 8, 1), 0.6)
        assert float((w * x).sum()) > 0  # y = 0 correctly classified
        obj = dl.untargeted("prob", 0)
        eng = _make(x, oracle, obj, dl.PerturbationBudget(EPS, 10), tau=0.01, fd_eta=0.001)
        noise = np.ones((2, 2, 1))
        eng.step(obj, StubRng(noise), oracle)
        l1 = eval_objective(obj, oracle.queries[1][1])
        l2 = eval_objective(obj, oracle.queries[2][1])
        estimate = (l1 - l2) / (2 * eng.tau * eng.fd_eta)
        s = float((w * x).sum())
        p = softmax(np.array([s, -s]))
        grad = 2.0 * p[0] * (1 - p[0]) * w  # d P(0) / dx
        direction = np.repeat(np.repeat(noise, 4, axis=0), 4, axis=1)
        analytic = float((grad * direction).sum())
        assert np.sign(estimate) == np.sign(analytic)

    def test_query_accounting_default_and_strict(self):
        # small weights keep the softmax unsaturated so probes actually
        # see a loss difference
        w = np.full((8, 8, 1), 0.01)
        oracle = LinearTwoClassOracle(w)
        x = np.full((8, 8, 1), 0.5)
        budget = dl.PerturbationBudget(EPS, 10)
        eng = _make(x, oracle, dl.untargeted("prob", 0), budget)
        rng = dl.fresh_rng(1, "attack")
        before = oracle.query_count
        out = eng.step(dl.untargeted("prob", 0), rng, oracle)
        assert out.queries_spent == 2
        assert oracle.query_count - before == 2
        assert out.accepted  # the image moved

        oracle2 = LinearTwoClassOracle(w)
        eng2 = _make(x, oracle2, dl.untargeted("prob", 0), budget, strict_check=True)
        before = oracle2.query_count
        out2 = eng2.step(dl.untargeted("prob", 0), dl.fresh_rng(1, "attack"), oracle2)
        assert out2.queries_spent == 3
        assert oracle2.query_count - before == 3

    def test_strict_check_probs_are_at_current_image(self):
        w = np.linspace(-1.0, 1.0, 64).reshape(8, 8, 1)
        inner = LinearTwoClassOracle(w)
        oracle = RecordingOracle(inner)
        x = np.full((8, 8, 1), 0.6)
        eng = _make(x, oracle, dl.untargeted("prob", 0), dl.PerturbationBudget(EPS, 10), strict_check=True)
        out = eng.step(dl.untargeted("prob", 0), dl.fresh_rng(2, "attack"), oracle)
        assert np.array_equal(oracle.queries[-1][0], eng.current)
        assert out.probs == pytest.approx(softmax(oracle.queries[-1][1]))

    def test_prior_resolution_must_divide(self):
        oracle = ConstantOracle([1.0, 0.0])
        x = np.full((9, 9, 1), 0.5)
        eng = dl.BanditsEngine(prior_factor=4)
        with pytest.raises(ConfigurationError):
            eng.begin(x, oracle.score(x), dl.untargeted("prob", 0),
                      dl.PerturbationBudget(EPS, 5), oracle, dl.fresh_rng(0, "attack"))

    def test_probes_clipped_to_ball(self):
        inner = LinearTwoClassOracle(np.ones((8, 8, 1)))
        x = np.full((8, 8, 1), 0.5)
        budget = dl.PerturbationBudget(EPS, 20)
        checker = dl.ConstraintCheckingOracle(inner, x, budget)
        rec = dl.run_attack(
            dl.BanditsEngine(), dl.Untargeted(), x, 0, budget, checker,
            dl.fresh_rng(3, "attack"), loss_family="prob",
        )
        assert checker.violations == 0
        assert rec.queries_used == checker.query_count
