"""Random-search attack proposing square patches of extreme-point noise.

Initialization paints vertical stripes of +/-eps; each iteration redraws
one random square window with a fresh +/-eps sign per channel and keeps
it only on strict loss decrease. The window side follows a halving
schedule tied to the total budget N, so N is fixed per experiment.
"""

from __future__ import annotations

import numpy as np

from ..objectives import eval_objective
from .base import AttackEngine, StepOutcome

HALVING_POINTS = (0.001, 0.005, 0.02, 0.1, 0.2, 0.4, 0.6, 0.8)


def square_patch_side(i: int, n_total: int, p_init: float, shape) -> int:
    """Side of the square proposed at iteration i of a budget-n run."""
    frac = i / n_total
    halvings = sum(1 for th in HALVING_POINTS if frac >= th)
    p = p_init / (2.0 ** halvings)
    h, w = shape[0], shape[1]
    side = max(1, round(np.sqrt(p * h * w)))
    return min(side, h, w)


class SquareEngine(AttackEngine):
    name = "square"

    def __init__(self, p_init: float = 0.05):
        self.p_init = p_init

    def begin(self, x0, clean_logits, objective, budget, oracle, rng):
        super().begin(x0, clean_logits, objective, budget, oracle, rng)
        h, w, c = x0.shape
        self.n_total = max(budget.iteration_budget, 1)
        self.i = 0
        eps = budget.epsilon
        stripes = rng.choice(np.array([-eps, eps]), size=(1, w, c))
        init = np.clip(x0 + stripes, self.lo, self.hi)
        logits = oracle.score(init)
        self._accept_unconditional(init, logits, eval_objective(objective, logits))

    def _accept_unconditional(self, cand, logits, loss):
        self._accept(cand, logits, loss)

    def step(self, objective, rng, oracle):
        h, w, c = self.x0.shape
        eps = self.budget.epsilon
        side = square_patch_side(self.i, self.n_total, self.p_init, self.x0.shape)
        self.i += 1
        r = int(rng.integers(0, h - side + 1))
        col = int(rng.integers(0, w - side + 1))
        signs = rng.choice(np.array([-eps, eps]), size=c)
        cand = self.current.copy()
        cand[r : r + side, col : col + side, :] = (
            self.x0[r : r + side, col : col + side, :] + signs
        )
        np.clip(cand, self.lo, self.hi, out=cand)
        logits = oracle.score(cand)
        loss = eval_objective(objective, logits)
        if loss < self.loss:
            self._accept(cand, logits, loss)
            return StepOutcome(True, 1, loss, self.current_probs)
        return StepOutcome(False, 1, self.loss, self.current_probs)
