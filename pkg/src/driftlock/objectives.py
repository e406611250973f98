"""Attack loss functions and class-ranking helpers.

Every objective is a quantity the attacker *minimizes*; sign conventions
are folded in here so the attack engines stay objective-agnostic. Margin
losses operate on logits; because softmax shares one normalizer, margins
computed from log-probabilities agree with logit margins, which is what
lets a probabilities-only scorer support margin loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError

FAMILIES = ("prob", "ce", "margin")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max subtraction)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class Objective:
    """Loss family x mode. `class_index` is the true label when untargeted,
    the target class when targeted."""

    family: str
    targeted: bool
    class_index: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractViolationError(f"unknown loss family {self.family!r}")
        if self.class_index < 0:
            raise ContractViolationError("class index must be non-negative")


def untargeted(family: str, y: int) -> Objective:
    return Objective(family, False, y)


def targeted(family: str, t: int) -> Objective:
    return Objective(family, True, t)


def eval_objective(obj: Objective, logits: np.ndarray) -> float:
    """Loss value at the given logits; lower is better for the attacker.

    prob:   P(y)            untargeted, -P(t) targeted
    ce:     log P(y)        untargeted, -log P(t) targeted
    margin: f_y - max_{k!=y} f_k untargeted, max_{k!=t} f_k - f_t targeted
    """
    k = obj.class_index
    if k >= logits.shape[0]:
        raise ContractViolationError(f"class index {k} out of range for K={logits.shape[0]}")
    if obj.family == "margin":
        others = np.delete(logits, k)
        if obj.targeted:
            return float(others.max() - logits[k])
        return float(logits[k] - others.max())
    probs = softmax(logits)
    if obj.family == "prob":
        return float(-probs[k]) if obj.targeted else float(probs[k])
    # ce
    logp = float(np.log(max(probs[k], 1e-300)))
    return -logp if obj.targeted else logp


def leading_non_true(probs: np.ndarray, y: int) -> int:
    """argmax over k != y; ties broken toward the lowest class index."""
    masked = np.array(probs, dtype=np.float64)
    masked[y] = -np.inf
    return int(np.argmax(masked))


def class_ranking(probs: np.ndarray, y: int, top_k: int) -> list[int]:
    """Top-k non-true classes by descending probability, ties by index."""
    k_total = len(probs)
    if top_k > k_total - 1:
        raise ContractViolationError(f"top_k={top_k} exceeds K-1={k_total - 1}")
    candidates = [k for k in range(k_total) if k != y]
    # stable sort keeps index order among equal probabilities
    order = sorted(candidates, key=lambda k: -probs[k])
    return order[:top_k]
