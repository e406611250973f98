"""Experiment configuration and run orchestration.

run_experiment executes every (image, seed, mode) cell of a config into
a resumable JSONL archive. Oracle mode triggers an untargeted probe
first; when the untargeted mode is also requested with the same seed the
probe record is reused as the untargeted record (one probe, not two).
Per-image attack seeds derive from (experiment seed, image id) so sweeps
and mode comparisons stay paired.
"""

from __future__ import annotations

import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .archive import Archive
from .attacks import make_engine
from .bridge import BridgeConfig, BridgeOracle, bridge_handshake
from .core import PerturbationBudget, RunRecord, fresh_rng, philox_key
from .errors import ConfigurationError
from .runner import run_attack_full
from .targeting import (
    CleanArgmax,
    FixedSwitch,
    OracleTarget,
    RandomTarget,
    RankStability,
    Untargeted,
    oracle_probe,
)
from .zoo import ZooOracle, generate_instances, make_zoo

DEFAULT_EPSILON = 8.0 / 255.0
DEFAULT_STABILITY = {"simba": 10, "square": 8, "bandits": 15}
DEFAULT_FIXED_T = 5
MODES = ("untargeted", "oracle", "ots-stability", "ots-fixed", "random-target", "clean-argmax")


@dataclass
class ExperimentConfig:
    output: str = "runs/out"
    budget: int = 10000
    epsilon: float = DEFAULT_EPSILON
    instance_count: int = 100
    instance_seed: int = 42
    attack_seeds: list[int] = field(default_factory=lambda: [0])
    modes: list[str] = field(default_factory=lambda: ["untargeted", "oracle", "ots-stability"])
    workers: int = 1

    source: str = "zoo"
    zoo_kind: str = "rbf"
    zoo_k: int = 100
    zoo_shape: tuple[int, int, int] = (16, 16, 1)
    zoo_seed: int = 7
    zoo_params: dict = field(default_factory=dict)
    profile: str = "medium-heavy"
    bridge: Optional[dict] = None
    bridge_images: Optional[str] = None

    attack_id: str = "simba"
    loss_family: str = "prob"
    attack_params: dict = field(default_factory=dict)

    stability_s: Optional[int] = None
    fixed_t: int = DEFAULT_FIXED_T
    count_rejected: bool = False

    def validate(self):
        if self.budget <= 0 or self.epsilon <= 0:
            raise ConfigurationError("budget and epsilon must be positive")
        for m in self.modes:
            if m not in MODES:
                raise ConfigurationError(f"unknown mode {m!r}")
        if self.attack_id not in ("simba", "square", "bandits"):
            raise ConfigurationError(f"unknown attack {self.attack_id!r}")
        if self.loss_family not in ("prob", "ce", "margin"):
            raise ConfigurationError(f"unknown loss family {self.loss_family!r}")
        if self.source not in ("zoo", "bridge"):
            raise ConfigurationError(f"unknown classifier source {self.source!r}")
        if self.source == "bridge" and not self.bridge:
            raise ConfigurationError("bridge source needs a [classifier.bridge] table")
        return self

    @property
    def stability(self) -> int:
        return self.stability_s if self.stability_s is not None else DEFAULT_STABILITY[self.attack_id]

    def to_meta(self) -> dict:
        payload = dataclasses.asdict(self)
        payload["zoo_shape"] = list(self.zoo_shape)
        return payload

    @classmethod
    def from_meta(cls, meta: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        data = {k: v for k, v in meta.items() if k in known}
        if "zoo_shape" in data:
            data["zoo_shape"] = tuple(data["zoo_shape"])
        return cls(**data)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    cfg = ExperimentConfig()
    exp = raw.get("experiment", {})
    for key in ("output", "budget", "epsilon", "instance_count", "instance_seed", "workers"):
        if key in exp:
            setattr(cfg, key, exp[key])
    if "attack_seeds" in exp:
        cfg.attack_seeds = [int(s) for s in exp["attack_seeds"]]
    if "modes" in exp:
        cfg.modes = list(exp["modes"])
    cls = raw.get("classifier", {})
    cfg.source = cls.get("source", cfg.source)
    cfg.zoo_kind = cls.get("kind", cfg.zoo_kind)
    cfg.zoo_k = cls.get("k", cfg.zoo_k)
    if "shape" in cls:
        cfg.zoo_shape = tuple(int(v) for v in cls["shape"])
    cfg.zoo_seed = cls.get("seed", cfg.zoo_seed)
    cfg.profile = cls.get("profile", cfg.profile)
    cfg.zoo_params = {
        k: v
        for k, v in cls.items()
        if k not in ("source", "kind", "k", "shape", "seed", "profile", "bridge", "images")
    }
    if "bridge" in cls:
        cfg.bridge = dict(cls["bridge"])
        cfg.bridge_images = cls.get("images")
    atk = raw.get("attack", {})
    cfg.attack_id = atk.get("id", cfg.attack_id)
    cfg.loss_family = atk.get("loss", cfg.loss_family)
    cfg.attack_params = {k: v for k, v in atk.items() if k not in ("id", "loss")}
    ots = raw.get("ots", {})
    if "s" in ots:
        cfg.stability_s = int(ots["s"])
    if "t" in ots:
        cfg.fixed_t = int(ots["t"])
    cfg.count_rejected = bool(ots.get("count_rejected", cfg.count_rejected))
    return cfg.validate()


def derive_attack_seed(base_seed: int, image_id: str) -> int:
    """Per-image attack seed; mode- and sweep-independent so runs pair."""
    return philox_key(base_seed, f"attack-seed:{image_id}") % (2**63)


def _policy_for(mode: str, cfg: ExperimentConfig, attack_seed: int, oracle_class: Optional[int]):
    if mode == "untargeted":
        return Untargeted()
    if mode == "oracle":
        return OracleTarget(oracle_class)
    if mode == "ots-stability":
        return RankStability(cfg.stability, cfg.count_rejected)
    if mode == "ots-fixed":
        return FixedSwitch(cfg.fixed_t)
    if mode == "random-target":
        return RandomTarget(attack_seed)
    return CleanArgmax()


class ClassifierContext:
    """Provides instances and fresh per-run oracles for a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        if cfg.source == "zoo":
            self.spec = make_zoo(
                cfg.zoo_kind, cfg.zoo_k, cfg.zoo_shape, cfg.zoo_seed, **cfg.zoo_params
            )
            self.classifier_id = self.spec.classifier_id
            self.instances = generate_instances(
                self.spec, cfg.instance_count, cfg.profile, cfg.instance_seed, epsilon=cfg.epsilon
            )
        else:
            self.spec = None
            self.classifier_id = f"bridge-{cfg.bridge.get('host', 'stdio')}"
            data = np.load(cfg.bridge_images)
            self.instances = _BridgeInstances(data["images"], data["labels"])

    def fresh_oracle(self):
        if self.spec is not None:
            return ZooOracle(self.spec)
        session = bridge_handshake(BridgeConfig(**self.cfg.bridge))
        return BridgeOracle(session)


class _BridgeInstances:
    def __init__(self, images, labels):
        self.images = images
        self.labels = labels

    def __len__(self):
        return len(self.labels)

    def image_id(self, i):
        return f"img-{i:03d}"


def _run_cell(ctx: ClassifierContext, cfg: ExperimentConfig, idx: int, base_seed: int,
              modes: list[str], sweep_point: Optional[str] = None) -> list[RunRecord]:
    """All requested modes for one (image, seed); probe shared."""
    image = ctx.instances.images[idx]
    y = int(ctx.instances.labels[idx])
    image_id = ctx.instances.image_id(idx)
    attack_seed = derive_attack_seed(base_seed, image_id)
    budget = PerturbationBudget(cfg.epsilon, cfg.budget)
    records: list[RunRecord] = []

    oracle_class = None
    probe_record = None
    if "oracle" in modes or "untargeted" in modes:
        engine = make_engine(cfg.attack_id, **cfg.attack_params)
        oracle_class, probe_record = oracle_probe(
            engine,
            image,
            y,
            budget,
            ctx.fresh_oracle(),
            attack_seed,
            loss_family=cfg.loss_family,
            classifier_id=ctx.classifier_id,
            image_id=image_id,
        )
        probe_record.seed = base_seed
        probe_record.sweep_point = sweep_point
    for mode in modes:
        if mode == "untargeted":
            records.append(probe_record)
            continue
        engine = make_engine(cfg.attack_id, **cfg.attack_params)
        policy = _policy_for(mode, cfg, attack_seed, oracle_class)
        record, _ = run_attack_full(
            engine,
            policy,
            image,
            y,
            budget,
            ctx.fresh_oracle(),
            fresh_rng(attack_seed, "attack"),
            loss_family=cfg.loss_family,
            classifier_id=ctx.classifier_id,
            image_id=image_id,
            seed=base_seed,
            oracle_class=oracle_class,
            sweep_point=sweep_point,
            mode=mode,
        )
        records.append(record)
    return records


_WORKER_CTX: dict = {}


def _worker_init(meta: dict):
    cfg = ExperimentConfig.from_meta(meta).validate()
    _WORKER_CTX["cfg"] = cfg
    _WORKER_CTX["ctx"] = ClassifierContext(cfg)


def _worker_cell(args):
    idx, base_seed, modes, sweep_point = args
    records = _run_cell(_WORKER_CTX["ctx"], _WORKER_CTX["cfg"], idx, base_seed, modes, sweep_point)
    return [r.to_json() for r in records]


def run_experiment(
    cfg: ExperimentConfig,
    archive_path=None,
    sweep_point: Optional[str] = None,
    ctx: Optional[ClassifierContext] = None,
) -> Archive:
    """Execute the config; completed (classifier, attack, mode, image,
    seed) cells found in the archive are skipped."""
    cfg.validate()
    path = Path(archive_path) if archive_path else Path(cfg.output) / "records.jsonl"
    archive = Archive(path, meta=cfg.to_meta())
    if ctx is None:
        ctx = ClassifierContext(cfg)

    pending = []
    for base_seed in cfg.attack_seeds:
        for idx in range(len(ctx.instances)):
            image_id = ctx.instances.image_id(idx)
            missing = [
                m
                for m in cfg.modes
                if (ctx.classifier_id, cfg.attack_id, m, image_id, base_seed, sweep_point)
                not in archive
            ]
            if missing:
                pending.append((idx, base_seed, missing, sweep_point))

    if cfg.workers > 1 and cfg.source == "zoo":
        with ProcessPoolExecutor(
            max_workers=cfg.workers, initializer=_worker_init, initargs=(cfg.to_meta(),)
        ) as pool:
            for lines in pool.map(_worker_cell, pending, chunksize=1):
                for line in lines:
                    archive.append(RunRecord.from_json(line))
    else:
        for args in pending:
            for record in _run_cell(ctx, cfg, *args):
                archive.append(record)
    return archive


def run_alignment(cfg: ExperimentConfig, horizon: int = 500, archive_path=None) -> Archive:
    """Alignment experiment: per image, an untargeted probe defines the
    oracle class, the oracle-mode run defines the oracle direction, and
    untargeted + OTS runs record per-iteration cosines against it.

    Runs use the config's full budget; `horizon` only bounds the recorded
    trace (a run that terminates early holds its final cosine)."""
    from .runner import CosineTrace, FinalImageGrabber

    cfg = dataclasses.replace(cfg, modes=["untargeted", "oracle", "ots-stability"])
    cfg.validate()
    path = Path(archive_path) if archive_path else Path(cfg.output) / "alignment.jsonl"
    archive = Archive(path, meta=dict(cfg.to_meta(), horizon=horizon))
    ctx = ClassifierContext(cfg)
    budget = PerturbationBudget(cfg.epsilon, cfg.budget)
    for base_seed in cfg.attack_seeds:
        for idx in range(len(ctx.instances)):
            image = ctx.instances.images[idx]
            y = int(ctx.instances.labels[idx])
            image_id = ctx.instances.image_id(idx)
            if (ctx.classifier_id, cfg.attack_id, "ots-stability", image_id, base_seed, "align") in archive:
                continue
            attack_seed = derive_attack_seed(base_seed, image_id)
            oracle_class, _ = oracle_probe(
                make_engine(cfg.attack_id, **cfg.attack_params), image, y, budget,
                ctx.fresh_oracle(), attack_seed, loss_family=cfg.loss_family,
                classifier_id=ctx.classifier_id, image_id=image_id,
            )
            grab = FinalImageGrabber()
            oracle_rec, eng = run_attack_full(
                make_engine(cfg.attack_id, **cfg.attack_params), OracleTarget(oracle_class),
                image, y, budget, ctx.fresh_oracle(), fresh_rng(attack_seed, "attack"),
                loss_family=cfg.loss_family, classifier_id=ctx.classifier_id,
                image_id=image_id, seed=base_seed, oracle_class=oracle_class,
                sweep_point="align", trace=grab,
            )
            delta_oracle = eng.current - image
            if not np.any(delta_oracle):
                continue  # degenerate: oracle run never moved
            archive.append(oracle_rec)
            for mode, policy in (
                ("untargeted", Untargeted()),
                ("ots-stability", RankStability(cfg.stability, cfg.count_rejected)),
            ):
                rec, _ = run_attack_full(
                    make_engine(cfg.attack_id, **cfg.attack_params), policy, image, y, budget,
                    ctx.fresh_oracle(), fresh_rng(attack_seed, "attack"),
                    loss_family=cfg.loss_family, classifier_id=ctx.classifier_id,
                    image_id=image_id, seed=base_seed, oracle_class=oracle_class,
                    sweep_point="align", mode=mode,
                    trace=CosineTrace(image, delta_oracle, horizon),
                )
                archive.append(rec)
    return archive


def run_ablation(cfg: ExperimentConfig, sweep_kind: str, values: list) -> dict[str, Archive]:
    """One sub-archive per sweep value; image set and per-image seeds are
    shared across sweep points so results pair."""
    if not values:
        raise ConfigurationError("sweep must be non-empty")
    if sweep_kind not in ("s", "t", "seed"):
        raise ConfigurationError(f"unknown sweep kind {sweep_kind!r}")
    ctx = ClassifierContext(cfg)
    out: dict[str, Archive] = {}
    for value in values:
        sub = dataclasses.replace(cfg)
        if sweep_kind == "s":
            sub.stability_s = int(value)
            tag = f"S={value}"
        elif sweep_kind == "t":
            sub.fixed_t = int(value)
            tag = f"T={value}"
        else:
            sub.attack_seeds = [int(value)]
            tag = f"seed={value}"
        path = Path(cfg.output) / f"records-{tag}.jsonl"
        out[tag] = run_experiment(sub, archive_path=path, sweep_point=tag, ctx=ctx)
    return out
