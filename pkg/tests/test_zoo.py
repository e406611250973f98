import numpy as np
import pytest

import driftlock as dl
from driftlock.errors import ConfigurationError, ContractViolationError, GenerationError
from driftlock.objectives import softmax
from driftlock.runner import RankingTrace
from driftlock.zoo import (
    DifficultyProfile,
    ZooSpec,
    calibration,
    linear_infeasibility_slack,
    profile_from_name,
    zoo_eval,
)

EPS = 8.0 / 255.0


class TestZooEval:
    def test_zero_weights_give_uniform_probs(self):
        spec = dl.make_zoo("linear", k=5, shape=(4, 4, 1), seed=1)
        spec.params["W"][:] = 0.0
        spec.params["b"][:] = 0.0
        probs = softmax(zoo_eval(spec, np.full((4, 4, 1), 0.3)))
        assert probs == pytest.approx([0.2] * 5)

    def test_rbf_prototype_is_attractor(self):
        spec = dl.make_zoo("rbf", k=6, shape=(4, 4, 1), seed=2, prototypes_per_class=2)
        proto = spec.params["prototypes"][4, 1].reshape(4, 4, 1)
        assert int(np.argmax(zoo_eval(spec, proto))) == 4

    def test_mlp_forward_pass_hand_computed(self):
        spec = ZooSpec(kind="mlp1", k=2, shape=(1, 2, 1), seed=0)
        spec.params["W1"] = np.eye(2)
        spec.params["b1"] = np.zeros(2)
        spec.params["W2"] = np.array([[1.0, 0.0], [0.0, 1.0]])
        spec.params["b2"] = np.array([0.1, -0.1])
        x = np.array([0.25, 0.75]).reshape(1, 2, 1)
        expected = np.tanh([0.25, 0.75]) + np.array([0.1, -0.1])
        assert zoo_eval(spec, x) == pytest.approx(expected, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        spec = dl.make_zoo("linear", k=3, shape=(4, 4, 1), seed=1)
        with pytest.raises(ContractViolationError):
            zoo_eval(spec, np.zeros((2, 2, 1)))

    def test_deterministic(self, small_rbf_zoo):
        x = np.random.default_rng(3).uniform(0, 1, (8, 8, 1))
        assert np.array_equal(zoo_eval(small_rbf_zoo, x), zoo_eval(small_rbf_zoo, x))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            dl.make_zoo("forest", k=3)


class TestGenerateInstances:
    def test_single_instance(self, small_linear_zoo):
        inst = dl.generate_instances(small_linear_zoo, 1, "uniform", seed=5)
        assert len(inst) == 1
        inst.verify(small_linear_zoo)

    def test_seed_reproducibility(self, small_linear_zoo):
        a = dl.generate_instances(small_linear_zoo, 4, "uniform", seed=5)
        b = dl.generate_instances(small_linear_zoo, 4, "uniform", seed=5)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)

    def test_every_instance_correctly_classified(self, small_rbf_zoo):
        inst = dl.generate_instances(small_rbf_zoo, 6, "uniform", seed=6)
        inst.verify(small_rbf_zoo)
        for i in range(6):
            assert int(np.argmax(zoo_eval(small_rbf_zoo, inst.images[i]))) == inst.labels[i]

    def test_verify_detects_tampering(self, small_rbf_zoo):
        inst = dl.generate_instances(small_rbf_zoo, 2, "uniform", seed=6)
        inst.labels[0] = (inst.labels[0] + 1) % small_rbf_zoo.k
        with pytest.raises(GenerationError):
            inst.verify(small_rbf_zoo)

    def test_medium_heavy_margins_inside_window(self):
        zoo = _bench_zoo("medium-heavy")
        prof = profile_from_name("medium-heavy")
        inst = dl.generate_instances(zoo, 10, "medium-heavy", seed=42, epsilon=EPS)
        assert np.all(inst.clean_margins >= prof.margin_lo)
        assert np.all(inst.clean_margins <= prof.margin_hi)
        from driftlock.zoo import _competitor_gap

        for i in range(10):
            gap = _competitor_gap(zoo, inst.images[i].reshape(-1), int(inst.labels[i]))
            assert gap <= prof.competitor_gap_max + 1e-12

    def test_bimodal_has_certified_hard_side(self):
        zoo = _bench_zoo("bimodal")
        prof = profile_from_name("bimodal")
        inst = dl.generate_instances(zoo, 12, "bimodal", seed=42, epsilon=EPS)
        easy = inst.clean_margins <= prof.easy_margin_hi
        hard = ~easy
        assert easy.any() and hard.any()
        for i in np.flatnonzero(hard):
            slack = linear_infeasibility_slack(zoo, inst.images[i].reshape(-1), int(inst.labels[i]), EPS)
            assert slack >= prof.hard_slack - 1e-9

    def test_bimodal_requires_linear_zoo(self, small_rbf_zoo):
        with pytest.raises(ConfigurationError):
            dl.generate_instances(small_rbf_zoo, 2, "bimodal", seed=1)

    def test_generation_error_on_impossible_window(self, small_linear_zoo):
        prof = DifficultyProfile(name="medium-heavy", margin_lo=1e6, margin_hi=2e6)
        with pytest.raises(GenerationError):
            dl.generate_instances(small_linear_zoo, 2, prof, seed=1, max_tries=5)

    def test_n_must_be_positive(self, small_linear_zoo):
        with pytest.raises(ContractViolationError):
            dl.generate_instances(small_linear_zoo, 0, "uniform", seed=1)

    def test_unknown_profile_rejected(self, small_linear_zoo):
        with pytest.raises(ConfigurationError):
            dl.generate_instances(small_linear_zoo, 1, "easy-peasy", seed=1)


def _bench_zoo(name):
    entry = dict(calibration()["benchmark_zoos"][name])
    kind = entry.pop("kind")
    return dl.make_zoo(kind, entry.pop("k"), tuple(entry.pop("shape")), entry.pop("seed"), **entry)


class TestFixtureFile:
    def test_roundtrip_bit_exact(self, tmp_path, small_rbf_zoo):
        path = tmp_path / "zoo.txt"
        dl.save_zoo_fixture(small_rbf_zoo, path)
        loaded = dl.load_zoo_fixture(path)
        assert loaded.kind == small_rbf_zoo.kind
        assert loaded.k == small_rbf_zoo.k
        assert loaded.shape == small_rbf_zoo.shape
        assert loaded.scalars == small_rbf_zoo.scalars
        for name, arr in small_rbf_zoo.params.items():
            assert np.array_equal(loaded.params[name], arr), name

    def test_rejects_non_fixture(self, tmp_path):
        path = tmp_path / "bogus.txt"
        path.write_text("hello\n")
        with pytest.raises(ConfigurationError):
            dl.load_zoo_fixture(path)


class TestDifficultyRegressions:
    """Pinned against the frozen calibration fixture."""

    def test_drift_fraction_majority(self):
        zoo = _bench_zoo("medium-heavy")
        inst = dl.generate_instances(zoo, 20, "medium-heavy", seed=42, epsilon=EPS)
        budget = dl.PerturbationBudget(EPS, 2000)
        drifted = 0
        for i in range(20):
            x, y = inst.images[i], int(inst.labels[i])
            trace = RankingTrace(y)
            dl.run_attack(
                dl.SimbaEngine(), dl.Untargeted(), x, y, budget, dl.ZooOracle(zoo),
                dl.fresh_rng(1000 + i, "attack"), loss_family="ce", trace=trace,
            )
            drifted += int(len({e[1] for e in trace.entries}) > 1)
        floor = calibration()["regression"]["drift_fraction_min"]
        assert drifted / 20 > floor

    def test_bimodal_medium_zone_mass_below_bound(self):
        zoo = _bench_zoo("bimodal")
        inst = dl.generate_instances(zoo, 40, "bimodal", seed=42, epsilon=EPS)
        budget = dl.PerturbationBudget(EPS, 2000)
        iters = []
        for i in range(40):
            rec = dl.run_attack(
                dl.SimbaEngine(), dl.Untargeted(), inst.images[i], int(inst.labels[i]),
                budget, dl.ZooOracle(zoo), dl.fresh_rng(1000 + i, "attack"), loss_family="prob",
            )
            iters.append(rec.iterations_used if rec.success else 2000)
        iters = np.asarray(iters, dtype=float)
        mass = np.mean((iters >= 100) & (iters <= 1500))
        assert mass < calibration()["regression"]["bimodal_medium_mass_max"]
