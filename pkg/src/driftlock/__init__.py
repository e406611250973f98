"""Score-based black-box attacks behind a probability-oracle interface,
with opportunistic target locking and a desk-scale benchmark harness."""

from .core import (
    ClassifierOracle,
    ConstraintCheckingOracle,
    PerturbationBudget,
    RunRecord,
    RNG_ALGORITHM,
    clip_to_constraints,
    fresh_rng,
)
from .objectives import (
    Objective,
    class_ranking,
    eval_objective,
    leading_non_true,
    softmax,
    targeted,
    untargeted,
)
from .basis import build_basis
from .attacks import BanditsEngine, SimbaEngine, SquareEngine, make_engine, square_patch_side
from .targeting import (
    CleanArgmax,
    Exploring,
    FixedSwitch,
    Locked,
    OracleTarget,
    RandomTarget,
    RankStability,
    Untargeted,
    effective_objective,
    oracle_probe,
    ots_update,
)
from .runner import run_attack, run_attack_full
from .zoo import ZooOracle, generate_instances, load_zoo_fixture, make_zoo, save_zoo_fixture, zoo_eval

__version__ = "0.1.0"
