"""Deterministic synthetic classifiers with tunable attack difficulty.

Three families: a linear softmax model, a one-hidden-layer tanh MLP, and
an RBF prototype model whose multi-basin landscape makes the leading
adversarial class wander. Instance sets are rejection-sampled so every
instance is correctly classified, with per-instance clean margins tuned
(by blending toward a differently-classified reference point) to hit a
difficulty profile. Calibration constants live in
fixtures/zoo_calibration.json, measured once against the frozen attack
defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import _kernels
from .core import ClassifierOracle, fresh_rng
from .errors import ConfigurationError, ContractViolationError, GenerationError

FIXTURE_VERSION = 1
KINDS = ("linear", "mlp1", "rbf")


@dataclass
class ZooSpec:
    kind: str
    k: int
    shape: tuple[int, int, int]
    seed: int
    params: dict[str, np.ndarray] = field(default_factory=dict)
    scalars: dict[str, float] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        h, w, c = self.shape
        return h * w * c

    @property
    def classifier_id(self) -> str:
        return f"{self.kind}-k{self.k}-s{self.seed}"


def make_zoo(kind: str, k: int = 100, shape=(16, 16, 1), seed: int = 7, **kw) -> ZooSpec:
    """Generate a zoo classifier's weights deterministically from its seed."""
    if kind not in KINDS:
        raise ConfigurationError(f"unknown zoo kind {kind!r}")
    shape = tuple(int(s) for s in shape)
    d = int(np.prod(shape))
    rng = fresh_rng(seed, f"zoo-{kind}")
    spec = ZooSpec(kind=kind, k=k, shape=shape, seed=seed)
    if kind == "linear":
        spec.params["W"] = rng.normal(0.0, 1.0 / np.sqrt(d), (k, d))
        spec.params["b"] = rng.normal(0.0, 0.05, k)
    elif kind == "mlp1":
        hidden = int(kw.get("hidden", 64))
        spec.params["W1"] = rng.normal(0.0, 1.0 / np.sqrt(d), (hidden, d))
        spec.params["b1"] = rng.normal(0.0, 0.1, hidden)
        spec.params["W2"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), (k, hidden))
        spec.params["b2"] = rng.normal(0.0, 0.05, k)
        spec.scalars["hidden"] = float(hidden)
    else:  # rbf
        per_class = int(kw.get("prototypes_per_class", 2))
        spec.params["prototypes"] = rng.uniform(0.0, 1.0, (k, per_class, d))
        spec.scalars["gamma"] = float(kw.get("gamma", 1.0))
        spec.scalars["temperature"] = float(kw.get("temperature", 1.0))
    return spec


def zoo_eval(spec: ZooSpec, x: np.ndarray) -> np.ndarray:
    """Deterministic logits for one image."""
    if x.shape != spec.shape:
        raise ContractViolationError(f"image shape {x.shape} does not match zoo {spec.shape}")
    xf = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    return _eval_flat(spec, xf)


def _eval_flat(spec: ZooSpec, xf: np.ndarray) -> np.ndarray:
    p = spec.params
    if spec.kind == "linear":
        return _kernels.linear_logits(p["W"], p["b"], xf)
    if spec.kind == "mlp1":
        return _kernels.mlp_logits(p["W1"], p["b1"], p["W2"], p["b2"], xf)
    return _kernels.rbf_logits(
        p["prototypes"], spec.scalars["gamma"], spec.scalars["temperature"], xf
    )


class ZooOracle(ClassifierOracle):
    """Per-run query-counting oracle over a zoo spec."""

    def __init__(self, spec: ZooSpec):
        super().__init__()
        self.spec = spec
        self.num_classes = spec.k

    def _score(self, x: np.ndarray) -> np.ndarray:
        return _eval_flat(self.spec, np.ascontiguousarray(x, dtype=np.float64).reshape(-1))


# ------------------------------------------------------------- difficulty

def _load_calibration() -> dict:
    path = resources.files("driftlock").joinpath("fixtures/zoo_calibration.json")
    with path.open("r") as fh:
        data = json.load(fh)
    if data.get("version") != FIXTURE_VERSION:
        raise ConfigurationError("zoo_calibration.json version mismatch")
    return data


_CALIBRATION: Optional[dict] = None


def calibration() -> dict:
    global _CALIBRATION
    if _CALIBRATION is None:
        _CALIBRATION = _load_calibration()
    return _CALIBRATION


@dataclass(frozen=True)
class DifficultyProfile:
    """Clean-margin windows (logit units) defining a difficulty regime.

    `competitor_gap_max` caps the clean gap between the two leading
    non-true classes; a tight pack behind the leader is what makes the
    leading class wander under an untargeted attack."""

    name: str
    margin_lo: float = 0.0
    margin_hi: float = np.inf
    easy_margin_hi: float = 0.0
    hard_slack: float = 0.0
    easy_fraction: float = 0.5
    competitor_gap_max: float = np.inf
    competitor_gap_min: float = 0.0


def profile_from_name(name: str) -> DifficultyProfile:
    """Look up calibrated windows by fixture key. The key usually equals
    the regime tag; variant entries (e.g. the alignment experiment's
    entrenched-leader set) carry an explicit `regime` field."""
    if name == "uniform":
        return DifficultyProfile(name="uniform")
    entries = calibration()["profiles"]
    if name not in entries:
        raise ConfigurationError(f"unknown difficulty profile {name!r}")
    payload = dict(entries[name])
    regime = payload.pop("regime", name)
    return DifficultyProfile(name=regime, **payload)


@dataclass
class InstanceSet:
    images: np.ndarray  # (n, H, W, C)
    labels: np.ndarray  # (n,)
    profile: str
    seed: int
    clean_margins: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.labels)

    def image_id(self, i: int) -> str:
        return f"img-{i:03d}"

    def verify(self, spec: ZooSpec) -> None:
        """Re-check correct classification of every instance."""
        for i in range(len(self)):
            logits = zoo_eval(spec, self.images[i])
            if int(np.argmax(logits)) != int(self.labels[i]):
                raise GenerationError(f"instance {i} no longer correctly classified")


def _clean_margin(spec: ZooSpec, xf: np.ndarray, y: int) -> float:
    logits = _eval_flat(spec, xf)
    others = np.delete(logits, y)
    return float(logits[y] - others.max())


def _competitor_gap(spec: ZooSpec, xf: np.ndarray, y: int) -> float:
    """Gap between the top two non-true logits."""
    others = np.sort(np.delete(_eval_flat(spec, xf), y))
    return float(others[-1] - others[-2])


def _blend_into_window(spec, xf, y, zf, lo, hi, steps=80):
    """Bisect t in [0,1] on margin((1-t)x + t z) until it lands in [lo, hi].

    Precondition: margin at x is above hi and the blend target z is
    classified differently, so the margin crosses the window.
    """
    a, b = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (a + b)
        xm = (1.0 - mid) * xf + mid * zf
        m = _clean_margin(spec, xm, y)
        if lo <= m <= hi:
            return xm, m
        if m > hi:
            a = mid
        else:
            b = mid
    return None, None


def linear_infeasibility_slack(spec: ZooSpec, xf: np.ndarray, y: int, epsilon: float) -> float:
    """For a linear zoo: min over classes j of the margin left after the
    best possible eps-ball move toward j. Positive means no attack within
    the ball can flip the label, box constraints aside (conservative)."""
    w = spec.params["W"]
    logits = _eval_flat(spec, xf)
    gaps = logits[y] - logits  # f_y - f_j
    reach = epsilon * np.abs(w - w[y]).sum(axis=1)  # max increase of f_j - f_y
    slack = gaps - reach
    slack[y] = np.inf
    return float(slack.min())


def generate_instances(
    spec: ZooSpec,
    n: int,
    profile: str | DifficultyProfile = "uniform",
    seed: int = 42,
    epsilon: float = 8.0 / 255.0,
    max_tries: int = 400,
) -> InstanceSet:
    """Rejection-sample n correctly classified instances matching a profile."""
    if n < 1:
        raise ContractViolationError("n must be >= 1")
    prof = profile_from_name(profile) if isinstance(profile, str) else profile
    if prof.name == "bimodal" and spec.kind != "linear":
        raise ConfigurationError("bimodal profile requires a linear zoo (certified-infeasible side)")
    rng = fresh_rng(seed, "instances")
    d = spec.dim
    images, labels, margins = [], [], []
    want_hard = _bimodal_plan(prof, n, rng)
    tries = 0
    while len(images) < n:
        tries += 1
        if tries > max_tries * n:
            raise GenerationError(
                f"could not generate {n} instances for profile {prof.name} within the retry cap"
            )
        xf = rng.uniform(0.0, 1.0, d)
        logits = _eval_flat(spec, xf)
        y = int(np.argmax(logits))
        m = _clean_margin(spec, xf, y)
        if m <= 0.0:
            continue
        idx = len(images)
        if prof.name == "uniform":
            accepted = (xf, m)
        elif prof.name == "medium-heavy":
            accepted = _tune_to_window(
                spec, xf, y, m, prof.margin_lo, prof.margin_hi, rng,
                gap_max=prof.competitor_gap_max, gap_min=prof.competitor_gap_min,
            )
        else:  # bimodal
            if want_hard[idx]:
                accepted = _make_infeasible(spec, xf, y, epsilon, prof.hard_slack)
            else:
                accepted = _tune_to_window(
                    spec, xf, y, m, prof.margin_lo, prof.easy_margin_hi, rng
                )
        if accepted[0] is None:
            continue
        xf_ok, m_ok = accepted
        y_ok = int(np.argmax(_eval_flat(spec, xf_ok)))
        images.append(xf_ok.reshape(spec.shape))
        labels.append(y_ok)
        margins.append(m_ok)
    return InstanceSet(
        images=np.asarray(images),
        labels=np.asarray(labels, dtype=np.int64),
        profile=prof.name,
        seed=seed,
        clean_margins=np.asarray(margins),
    )


def _bimodal_plan(prof: DifficultyProfile, n: int, rng) -> np.ndarray:
    if prof.name != "bimodal":
        return np.zeros(n, dtype=bool)
    return rng.random(n) >= prof.easy_fraction


def _tune_to_window(spec, xf, y, m, lo, hi, rng, gap_max=np.inf, gap_min=0.0, z_tries=40):
    def gap_ok(xq):
        return gap_min <= _competitor_gap(spec, xq, y) <= gap_max

    if lo <= m <= hi and gap_ok(xf):
        return xf, m
    if m < lo:
        return None, None  # margins are only ever lowered; resample
    d = spec.dim
    for _ in range(z_tries):
        zf = rng.uniform(0.0, 1.0, d)
        if int(np.argmax(_eval_flat(spec, zf))) != y:
            got = _blend_into_window(spec, xf, y, zf, lo, hi)
            if got[0] is not None and gap_ok(got[0]):
                return got
    return None, None


def _make_infeasible(spec, xf, y, epsilon, slack):
    """Blend toward the box vertex that maximizes the true-class logit
    until the linear infeasibility certificate clears the slack."""
    w = spec.params["W"]
    vertex = (w[y] > 0.0).astype(np.float64)
    if linear_infeasibility_slack(spec, vertex, y, epsilon) < slack:
        return None, None
    if int(np.argmax(_eval_flat(spec, vertex))) != y:
        return None, None
    a, b = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (a + b)
        xm = (1.0 - mid) * xf + mid * vertex
        if (
            linear_infeasibility_slack(spec, xm, y, epsilon) >= slack
            and int(np.argmax(_eval_flat(spec, xm))) == y
        ):
            b = mid
        else:
            a = mid
    xm = (1.0 - b) * xf + b * vertex
    if linear_infeasibility_slack(spec, xm, y, epsilon) < slack:
        return None, None
    return xm, _clean_margin(spec, xm, y)


# ------------------------------------------------------------- fixtures

def save_zoo_fixture(spec: ZooSpec, path) -> None:
    """Plain-text numeric fixture; format documented in the README.

    Numbers are written with Python's shortest round-trip repr so any
    language with a correctly rounded decimal parser recovers identical
    float64 bits.
    """
    lines = [f"driftlock-zoo {FIXTURE_VERSION}"]
    lines.append(f"kind {spec.kind}")
    lines.append(f"seed {spec.seed}")
    lines.append(f"k {spec.k}")
    lines.append("shape " + " ".join(str(s) for s in spec.shape))
    for name, value in sorted(spec.scalars.items()):
        lines.append(f"param {name} {value!r}")
    for name, arr in sorted(spec.params.items()):
        dims = " ".join(str(s) for s in arr.shape)
        lines.append(f"array {name} {dims}")
        flat = arr.reshape(-1, arr.shape[-1])
        for row in flat:
            lines.append(" ".join(repr(float(v)) for v in row))
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_zoo_fixture(path) -> ZooSpec:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("driftlock-zoo "):
        raise ConfigurationError("not a zoo fixture file")
    if int(lines[0].split()[1]) != FIXTURE_VERSION:
        raise ConfigurationError("zoo fixture version mismatch")
    meta: dict = {}
    scalars: dict[str, float] = {}
    params: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        tag = parts[0]
        if tag == "end":
            break
        if tag in ("kind",):
            meta["kind"] = parts[1]
            i += 1
        elif tag in ("seed", "k"):
            meta[tag] = int(parts[1])
            i += 1
        elif tag == "shape":
            meta["shape"] = tuple(int(v) for v in parts[1:])
            i += 1
        elif tag == "param":
            scalars[parts[1]] = float(parts[2])
            i += 1
        elif tag == "array":
            name = parts[1]
            dims = tuple(int(v) for v in parts[2:])
            rows = int(np.prod(dims[:-1])) if len(dims) > 1 else 1
            data = []
            for r in range(rows):
                i += 1
                data.append([float(v) for v in lines[i].split()])
            params[name] = np.asarray(data).reshape(dims)
            i += 1
        else:
            raise ConfigurationError(f"unknown fixture line: {lines[i]!r}")
    spec = ZooSpec(
        kind=meta["kind"], k=meta["k"], shape=meta["shape"], seed=meta["seed"],
        params=params, scalars=scalars,
    )
    return spec
