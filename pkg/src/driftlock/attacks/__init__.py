from .base import StepOutcome, AttackEngine
from .simba import SimbaEngine
from .square import SquareEngine, square_patch_side
from .bandits import BanditsEngine

ENGINES = {
    "simba": SimbaEngine,
    "square": SquareEngine,
    "bandits": BanditsEngine,
}


def make_engine(attack_id: str, **kw) -> AttackEngine:
    try:
        cls = ENGINES[attack_id]
    except KeyError:
        raise ValueError(f"unknown attack {attack_id!r}") from None
    return cls(**kw)


__all__ = [
    "AttackEngine",
    "StepOutcome",
    "SimbaEngine",
    "SquareEngine",
    "BanditsEngine",
    "square_patch_side",
    "make_engine",
    "ENGINES",
]
