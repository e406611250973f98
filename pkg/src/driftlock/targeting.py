"""Online target selection: lock policies, the irreversible lock state,
and the oracle-probe protocol.

A run starts exploring (untargeted). Policies decide if and when to lock
onto a non-true class; once locked, the objective becomes targeted at
that class for the rest of the budget and the state never transitions
again. The rank-stability policy counts accepted steps by default (the
alternative, counting every pass, is exposed via `count_rejected`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import fresh_rng
from .objectives import Objective, leading_non_true, targeted, untargeted


@dataclass(frozen=True)
class Untargeted:
    """Never locks."""


@dataclass(frozen=True)
class FixedSwitch:
    """Lock onto the leading non-true class at the first update with
    iteration >= t; t = 0 locks on the clean-image ranking."""

    t: int


@dataclass(frozen=True)
class RankStability:
    """Lock once the same non-true class has led for s consecutive counted
    steps. s = math.inf is the never-lock sentinel."""

    s: int | float
    count_rejected: bool = False


@dataclass(frozen=True)
class OracleTarget:
    """Lock before iteration 0 onto a supplied class."""

    target: int


@dataclass(frozen=True)
class RandomTarget:
    """Lock before iteration 0 onto a uniform non-true class drawn from a
    dedicated stream."""

    seed: int


@dataclass(frozen=True)
class CleanArgmax:
    """Lock before any step onto the clean-image leading non-true class."""


LockPolicy = Union[Untargeted, FixedSwitch, RankStability, OracleTarget, RandomTarget, CleanArgmax]


@dataclass(frozen=True)
class Exploring:
    candidate: Optional[int]
    counter: int


@dataclass(frozen=True)
class Locked:
    target: int
    lock_iteration: int


LockState = Union[Exploring, Locked]


def initial_lock_state() -> LockState:
    return Exploring(None, 0)


def mode_id(policy: LockPolicy) -> str:
    if isinstance(policy, Untargeted):
        return "untargeted"
    if isinstance(policy, FixedSwitch):
        return "ots-fixed"
    if isinstance(policy, RankStability):
        return "ots-stability"
    if isinstance(policy, OracleTarget):
        return "oracle"
    if isinstance(policy, RandomTarget):
        return "random-target"
    return "clean-argmax"


def ots_update(
    state: LockState,
    probs: np.ndarray,
    y: int,
    step_accepted: bool,
    iteration: int,
    policy: LockPolicy,
) -> LockState:
    """One controller update. Called once before the first step (with the
    clean-image probabilities and iteration 0) and once after every step
    with the post-step probabilities. Irreversible: a Locked state is
    returned unchanged."""
    if isinstance(state, Locked):
        return state
    if isinstance(policy, Untargeted):
        return state
    if isinstance(policy, OracleTarget):
        return Locked(policy.target, iteration)
    if isinstance(policy, RandomTarget):
        k = len(probs)
        rng = fresh_rng(policy.seed, "random-target")
        pick = int(rng.integers(k - 1))
        if pick >= y:
            pick += 1
        return Locked(pick, iteration)
    if isinstance(policy, CleanArgmax):
        return Locked(leading_non_true(probs, y), iteration)
    if isinstance(policy, FixedSwitch):
        if iteration >= policy.t:
            return Locked(leading_non_true(probs, y), iteration)
        return state
    # RankStability
    if policy.s is math.inf:
        return state
    if not step_accepted and not policy.count_rejected:
        return state
    leader = leading_non_true(probs, y)
    counter = state.counter + 1 if leader == state.candidate else 1
    if counter >= policy.s:
        return Locked(leader, iteration)
    return Exploring(leader, counter)


def effective_objective(state: LockState, y: int, loss_family: str) -> Objective:
    if isinstance(state, Locked):
        return targeted(loss_family, state.target)
    return untargeted(loss_family, y)


def oracle_probe(
    engine,
    image: np.ndarray,
    y: int,
    budget,
    oracle,
    seed: int,
    *,
    loss_family: str = "prob",
    classifier_id: str = "?",
    image_id: str = "?",
    trace=None,
):
    """Untargeted probe run defining the trajectory oracle class.

    On success the oracle class is the final argmax; on failure it is the
    leading non-true class at budget exhaustion, which keeps oracle mode
    total. The probe record doubles as the untargeted-mode record when
    seeds match."""
    from .runner import run_attack_full

    record, eng = run_attack_full(
        engine,
        Untargeted(),
        image,
        y,
        budget,
        oracle,
        fresh_rng(seed, "attack"),
        loss_family=loss_family,
        classifier_id=classifier_id,
        image_id=image_id,
        seed=seed,
        trace=trace,
    )
    if record.success:
        oracle_class = record.final_class
    else:
        oracle_class = leading_non_true(eng.current_probs, y)
    return oracle_class, record
