"""Gradient estimation with a data-dependent prior at reduced resolution.

Each iteration takes two antithetic probes around the current point to
estimate how well the prior correlates with the loss gradient, updates
the prior by a gradient step, then moves the image along the sign of the
upsampled prior. There is no accept/reject filter; the step is taken
unconditionally.

Query accounting: the default reuses each iteration's first probe as the
misclassification check for the previous iteration's move (2 queries per
iteration). `strict_check=True` adds a dedicated query at the moved
image instead, making the check exact at the cost of a third query.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..objectives import eval_objective, softmax
from .base import AttackEngine, StepOutcome


def _upsample(prior: np.ndarray, shape) -> np.ndarray:
    """Nearest-neighbor upsampling of (h', w', C) onto (H, W, C)."""
    h, w, _ = shape
    fr = h // prior.shape[0]
    fc = w // prior.shape[1]
    return np.repeat(np.repeat(prior, fr, axis=0), fc, axis=1)


class BanditsEngine(AttackEngine):
    name = "bandits"

    def __init__(
        self,
        prior_factor: int = 4,
        tau: float = 0.01,
        fd_eta: float = 0.01,
        prior_lr: float = 100.0,
        image_lr: float | None = None,
        strict_check: bool = False,
    ):
        self.prior_factor = prior_factor
        self.tau = tau
        self.fd_eta = fd_eta
        self.prior_lr = prior_lr
        self.image_lr = image_lr
        self.strict_check = strict_check

    def begin(self, x0, clean_logits, objective, budget, oracle, rng):
        super().begin(x0, clean_logits, objective, budget, oracle, rng)
        h, w, c = x0.shape
        ph = max(1, h // self.prior_factor)
        pw = max(1, w // self.prior_factor)
        if h % ph or w % pw:
            raise ConfigurationError(
                f"prior resolution {ph}x{pw} must divide the image {h}x{w}"
            )
        self.prior = np.zeros((ph, pw, c))
        self.h_img = self.image_lr if self.image_lr is not None else budget.epsilon / 10.0

    def step(self, objective, rng, oracle):
        noise = rng.standard_normal(self.prior.shape) / np.sqrt(self.prior.size)
        up_plus = _upsample(self.prior + self.tau * noise, self.x0.shape)
        up_minus = _upsample(self.prior - self.tau * noise, self.x0.shape)

        probe1 = np.clip(self.current + self.fd_eta * up_plus, self.lo, self.hi)
        logits1 = oracle.score(probe1)
        loss1 = eval_objective(objective, logits1)
        probe2 = np.clip(self.current + self.fd_eta * up_minus, self.lo, self.hi)
        logits2 = oracle.score(probe2)
        loss2 = eval_objective(objective, logits2)
        queries = 2

        deriv = (loss1 - loss2) / (2.0 * self.tau * self.fd_eta)
        self.prior = self.prior - self.prior_lr * deriv * noise

        moved_to = np.clip(
            self.current + self.h_img * np.sign(_upsample(self.prior, self.x0.shape)),
            self.lo,
            self.hi,
        )
        accepted = not np.array_equal(moved_to, self.current)
        self.current = moved_to

        if self.strict_check:
            logits = oracle.score(self.current)
            queries += 1
        else:
            # probe-1 acts as the check for the previous move; see module doc
            logits = logits1
        self.current_logits = logits
        self.current_probs = softmax(logits)
        self.loss = eval_objective(objective, logits)
        return StepOutcome(accepted, queries, self.loss, self.current_probs)
