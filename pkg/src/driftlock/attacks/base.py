"""Uniform step interface shared by all attack engines.

Engines are single-run, single-thread state machines. The runner owns the
loop, the lock controller, and the success check; engines only propose
and (for random-search attacks) accept on strict loss decrease. Objective
switches mid-run reuse the cached logits of the current point, so a
switch costs no query and never resets the perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ClassifierOracle, PerturbationBudget, ball_bounds
from ..objectives import Objective, eval_objective, softmax


@dataclass
class StepOutcome:
    accepted: bool
    queries_spent: int
    loss: float
    probs: np.ndarray  # probabilities backing the post-step success check


class AttackEngine:
    name: str = "abstract"

    def begin(
        self,
        x0: np.ndarray,
        clean_logits: np.ndarray,
        objective: Objective,
        budget: PerturbationBudget,
        oracle: ClassifierOracle,
        rng: np.random.Generator,
    ) -> None:
        """Install run state. May query the oracle (Square's striped init)."""
        self.x0 = x0
        self.budget = budget
        self.lo, self.hi = ball_bounds(x0, budget.epsilon)
        self.current = x0.copy()
        self.current_logits = np.asarray(clean_logits, dtype=np.float64)
        self.current_probs = softmax(self.current_logits)
        self.loss = eval_objective(objective, self.current_logits)

    def step(
        self, objective: Objective, rng: np.random.Generator, oracle: ClassifierOracle
    ) -> StepOutcome:
        raise NotImplementedError

    def refresh_objective(self, objective: Objective) -> None:
        """Re-evaluate the cached loss under a new objective; no query."""
        self.loss = eval_objective(objective, self.current_logits)

    def _accept(self, cand: np.ndarray, logits: np.ndarray, loss: float) -> None:
        self.current = cand
        self.current_logits = logits
        self.current_probs = softmax(logits)
        self.loss = loss
