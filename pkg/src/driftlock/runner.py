"""The attack loop: step the engine, update the lock, stop on success.

The loop guard is misclassification of the current point or budget
exhaustion. Success is read off the probability vector backing each
step's outcome, so no extra queries are spent on checks. The cached loss
is re-evaluated exactly once at every objective switch, and the
perturbation is continuous across switches.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .attacks.base import AttackEngine
from .core import ClassifierOracle, PerturbationBudget, RunRecord
from .errors import MisclassifiedInputError
from .objectives import softmax
from .targeting import (
    Locked,
    LockPolicy,
    effective_objective,
    initial_lock_state,
    mode_id,
    ots_update,
)


class TraceRecorder:
    """Collects per-iteration diagnostics; entries land in RunRecord.trace."""

    entries: Optional[list] = None

    def on_begin(self, x0, current, probs):
        pass

    def on_step(self, iteration, current, outcome):
        pass

    def on_finish(self, engine):
        pass


class RankingTrace(TraceRecorder):
    """Per-iteration [iteration, leader, P(true), P(leader)]."""

    def __init__(self, y: int):
        self.y = y
        self.entries = []

    def _leader(self, probs):
        masked = np.array(probs)
        masked[self.y] = -np.inf
        return int(np.argmax(masked))

    def on_begin(self, x0, current, probs):
        lead = self._leader(probs)
        self.entries.append([0, lead, float(probs[self.y]), float(probs[lead])])

    def on_step(self, iteration, current, outcome):
        lead = self._leader(outcome.probs)
        self.entries.append(
            [iteration, lead, float(outcome.probs[self.y]), float(outcome.probs[lead])]
        )


class CosineTrace(TraceRecorder):
    """Per-iteration cosine between the running perturbation and a fixed
    reference direction; zero perturbations contribute cosine 0."""

    def __init__(self, x0: np.ndarray, reference: np.ndarray, horizon: int):
        self.x0 = x0
        ref = reference.reshape(-1)
        norm = np.linalg.norm(ref)
        if norm == 0:
            raise ValueError("reference direction must be nonzero")
        self.ref = ref / norm
        self.horizon = horizon
        self.entries = []

    def _cos(self, current):
        delta = (current - self.x0).reshape(-1)
        norm = np.linalg.norm(delta)
        if norm == 0.0:
            return 0.0
        return float(delta @ self.ref / norm)

    def on_step(self, iteration, current, outcome):
        if iteration <= self.horizon:
            self.entries.append([iteration, self._cos(current)])


class FinalImageGrabber(TraceRecorder):
    """Keeps the final adversarial image; stores nothing in the record."""

    def __init__(self):
        self.final_image = None

    def on_finish(self, engine):
        self.final_image = engine.current.copy()


def run_attack_full(
    engine: AttackEngine,
    policy: LockPolicy,
    image: np.ndarray,
    y: int,
    budget: PerturbationBudget,
    oracle: ClassifierOracle,
    rng: np.random.Generator,
    *,
    loss_family: str = "prob",
    classifier_id: str = "?",
    image_id: str = "?",
    seed: int = 0,
    oracle_class: Optional[int] = None,
    trace: Optional[TraceRecorder] = None,
    sweep_point: Optional[str] = None,
    mode: Optional[str] = None,
):
    """Run one attack to success or budget exhaustion.

    Returns (RunRecord, engine); the engine's final state carries the
    adversarial image and its probability vector.
    """
    queries_before = oracle.query_count
    clean_logits = oracle.score(image)
    if int(np.argmax(clean_logits)) != y:
        raise MisclassifiedInputError(
            f"{image_id}: clean prediction {int(np.argmax(clean_logits))} != label {y}"
        )
    clean_probs = softmax(clean_logits)

    state = initial_lock_state()
    lock_transitions = 0
    state = ots_update(state, clean_probs, y, False, 0, policy)
    if isinstance(state, Locked):
        lock_transitions += 1

    objective = effective_objective(state, y, loss_family)
    engine.begin(image, clean_logits, objective, budget, oracle, rng)
    if trace is not None:
        trace.on_begin(image, engine.current, engine.current_probs)

    success = int(np.argmax(engine.current_probs)) != y  # Square's init can already flip
    iterations = 0
    while not success and iterations < budget.iteration_budget:
        wanted = effective_objective(state, y, loss_family)
        if wanted != objective:
            engine.refresh_objective(wanted)
            objective = wanted
        outcome = engine.step(objective, rng, oracle)
        iterations += 1
        was_locked = isinstance(state, Locked)
        state = ots_update(state, outcome.probs, y, outcome.accepted, iterations, policy)
        if isinstance(state, Locked) and not was_locked:
            lock_transitions += 1
        if trace is not None:
            trace.on_step(iterations, engine.current, outcome)
        success = int(np.argmax(outcome.probs)) != y

    if trace is not None:
        trace.on_finish(engine)

    record = RunRecord(
        classifier_id=classifier_id,
        attack_id=engine.name,
        mode_id=mode if mode is not None else mode_id(policy),
        image_id=image_id,
        seed=seed,
        success=success,
        iterations_used=iterations,
        queries_used=oracle.query_count - queries_before,
        final_class=int(np.argmax(engine.current_probs)),
        true_label=y,
        iteration_budget=budget.iteration_budget,
        epsilon=budget.epsilon,
        loss_family=loss_family,
        lock_iteration=state.lock_iteration if isinstance(state, Locked) else None,
        locked_class=state.target if isinstance(state, Locked) else None,
        oracle_class=oracle_class,
        lock_transitions=lock_transitions,
        sweep_point=sweep_point,
        trace=trace.entries if trace is not None else None,
    )
    return record, engine


def run_attack(engine, policy, image, y, budget, oracle, rng, **kw) -> RunRecord:
    record, _ = run_attack_full(engine, policy, image, y, budget, oracle, rng, **kw)
    return record
