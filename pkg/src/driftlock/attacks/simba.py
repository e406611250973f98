"""Coordinate-descent random search over an orthonormal basis.

Each iteration walks one basis atom: try +delta, accept on strict loss
decrease (1 query); otherwise try -delta (2nd query); otherwise reject.
The atom order is one uniform permutation of the whole basis, re-drawn
on exhaustion. Step size defaults to the perturbation radius with
post-hoc projection back into the feasible set.
"""

from __future__ import annotations

import numpy as np

from ..basis import build_basis
from ..objectives import eval_objective
from .base import AttackEngine, StepOutcome


class SimbaEngine(AttackEngine):
    name = "simba"

    def __init__(self, basis: str = "dct8", step_size: float | None = None):
        self.basis_kind = basis
        self.step_size = step_size

    def begin(self, x0, clean_logits, objective, budget, oracle, rng):
        super().begin(x0, clean_logits, objective, budget, oracle, rng)
        self.basis = build_basis(x0.shape, self.basis_kind)
        self.delta = self.step_size if self.step_size is not None else budget.epsilon
        self.order = rng.permutation(self.basis.num_atoms)
        self.cursor = 0

    def step(self, objective, rng, oracle):
        if self.cursor >= self.basis.num_atoms:
            self.order = rng.permutation(self.basis.num_atoms)
            self.cursor = 0
        atom = int(self.order[self.cursor])
        self.cursor += 1
        queries = 0
        for sign in (1.0, -1.0):
            cand = self.basis.add_scaled(self.current, atom, sign * self.delta)
            np.clip(cand, self.lo, self.hi, out=cand)
            logits = oracle.score(cand)
            queries += 1
            loss = eval_objective(objective, logits)
            if loss < self.loss:
                self._accept(cand, logits, loss)
                return StepOutcome(True, queries, loss, self.current_probs)
        return StepOutcome(False, queries, self.loss, self.current_probs)
