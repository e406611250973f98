"""Domain types, the deterministic RNG contract, and the classifier-oracle base.

Images are plain numpy float64 arrays of shape (H, W, C) with values in
[0, 1]. All randomness flows through Philox streams created by
:func:`fresh_rng`, keyed on (seed, label) so sub-streams are decorrelated
and reproducible across platforms.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractViolationError

RNG_ALGORITHM = "philox4x64-10"


def philox_key(seed: int, label: str) -> int:
    """128-bit Philox key derived from (seed, label) via blake2b."""
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def fresh_rng(seed: int, label: str) -> np.random.Generator:
    """Deterministic, labelled random stream.

    Equal (seed, label) pairs give bit-identical streams; distinct labels
    decorrelate sub-streams of the same seed. Philox is counter-based and
    platform-portable.
    """
    return np.random.Generator(np.random.Philox(key=philox_key(seed, label)))


@dataclass(frozen=True)
class PerturbationBudget:
    """L-infinity radius (pixel units) and the iteration cap of a run."""

    epsilon: float
    iteration_budget: int

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ContractViolationError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.iteration_budget < 0:
            raise ContractViolationError("iteration_budget must be >= 0")


def validate_image(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or min(x.shape) < 1:
        raise ContractViolationError(f"image must have shape (H, W, C), got {x.shape}")
    return x


def ball_bounds(x_orig: np.ndarray, epsilon: float):
    """Per-pixel clip bounds: the eps-ball intersected with [0, 1]."""
    lo = np.maximum(x_orig - epsilon, 0.0)
    hi = np.minimum(x_orig + epsilon, 1.0)
    return lo, hi


def clip_to_constraints(x_adv: np.ndarray, x_orig: np.ndarray, budget: PerturbationBudget) -> np.ndarray:
    """Project onto the feasible set: |x' - x| <= eps per pixel and x' in [0, 1].

    Idempotent; raises on shape mismatch.
    """
    if x_adv.shape != x_orig.shape:
        raise ContractViolationError(
            f"shape mismatch: {x_adv.shape} vs {x_orig.shape}"
        )
    lo, hi = ball_bounds(x_orig, budget.epsilon)
    return np.clip(x_adv, lo, hi)


def satisfies_constraints(x_adv: np.ndarray, x_orig: np.ndarray, budget: PerturbationBudget) -> bool:
    """True iff x_adv already lies in the eps-ball intersected with [0, 1]."""
    return np.array_equal(clip_to_constraints(x_adv, x_orig, budget), x_adv)


class ClassifierOracle:
    """Black-box scorer: full logit vector out, no gradients.

    Subclasses implement `_score`. Every `score` call increments the query
    counter by exactly one, and scoring is deterministic for a fixed oracle
    instance and input. One instance per run; not thread-safe.
    """

    num_classes: int

    def __init__(self):
        self._queries = 0

    @property
    def query_count(self) -> int:
        return self._queries

    def score(self, x: np.ndarray) -> np.ndarray:
        self._queries += 1
        return self._score(x)

    def _score(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ConstraintCheckingOracle(ClassifierOracle):
    """Wrapper asserting that every query lies inside the feasible set.

    Used by the acceptance suite; the check is exact (clip must be a
    no-op on the queried image).
    """

    def __init__(self, inner: ClassifierOracle, x_orig: np.ndarray, budget: PerturbationBudget):
        super().__init__()
        self.inner = inner
        self.num_classes = inner.num_classes
        self._lo, self._hi = ball_bounds(x_orig, budget.epsilon)
        self.violations = 0

    def _score(self, x: np.ndarray) -> np.ndarray:
        clipped = np.clip(x, self._lo, self._hi)
        if not np.array_equal(clipped, x):
            self.violations += 1
            raise ContractViolationError("oracle query outside the eps-ball / [0,1] box")
        return self.inner.score(x)

    @property
    def inner_query_count(self) -> int:
        return self.inner.query_count


@dataclass
class RunRecord:
    """One (classifier, attack, mode, image, seed) run."""

    classifier_id: str
    attack_id: str
    mode_id: str
    image_id: str
    seed: int
    success: bool
    iterations_used: int
    queries_used: int
    final_class: int
    true_label: int
    iteration_budget: int
    epsilon: float
    loss_family: str
    lock_iteration: Optional[int] = None
    locked_class: Optional[int] = None
    oracle_class: Optional[int] = None
    lock_transitions: int = 0
    sweep_point: Optional[str] = None
    trace: Optional[list] = None
    schema: int = 1

    def __post_init__(self):
        if self.success and self.final_class == self.true_label:
            raise ContractViolationError("success requires final_class != true_label")
        if (self.lock_iteration is None) != (self.locked_class is None):
            raise ContractViolationError("lock_iteration and locked_class must appear together")
        if self.iterations_used > self.iteration_budget:
            raise ContractViolationError("iterations_used exceeds the budget")

    def key(self) -> tuple:
        return (
            self.classifier_id,
            self.attack_id,
            self.mode_id,
            self.image_id,
            self.seed,
            self.sweep_point,
        )

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        payload = json.loads(line)
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in payload.items() if k in known})
