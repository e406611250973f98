"""Command line entry point.

Subcommands: run, ablate, report, align, zoo gen, bridge check.
Exit codes: 0 success, 1 validation error, 2 runtime failure.
Flags override config-file values; DRIFTLOCK_OUT overrides the output root.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .bridge import BridgeConfig, bridge_handshake, bridge_score
from .errors import BridgeError, ConfigurationError, ContractViolationError
from .experiment import (
    DEFAULT_EPSILON,
    ExperimentConfig,
    load_config,
    run_ablation,
    run_alignment,
    run_experiment,
)
from .report import ReportSpec, report
from .zoo import make_zoo, save_zoo_fixture


def _experiment_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("-c", "--config", help="TOML experiment config")
    p.add_argument("--out", help="output directory (default from config)")
    p.add_argument("--budget", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--images", type=int, help="instance count")
    p.add_argument("--image-seed", type=int)
    p.add_argument("--seeds", help="comma-separated attack seeds")
    p.add_argument("--modes", help="comma-separated mode list")
    p.add_argument("--attack", choices=["simba", "square", "bandits"])
    p.add_argument("--loss", choices=["prob", "ce", "margin"])
    p.add_argument("--workers", type=int)
    p.add_argument("--stability-s", type=int, dest="stability_s")
    p.add_argument("--fixed-t", type=int, dest="fixed_t")
    return p


def _build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.out:
        cfg.output = args.out
    root = os.environ.get("DRIFTLOCK_OUT")
    if root:
        cfg.output = os.path.join(root, cfg.output)
    if args.budget is not None:
        cfg.budget = args.budget
    if args.epsilon is not None:
        cfg.epsilon = args.epsilon
    if args.images is not None:
        cfg.instance_count = args.images
    if getattr(args, "image_seed", None) is not None:
        cfg.instance_seed = args.image_seed
    if args.seeds:
        cfg.attack_seeds = [int(s) for s in args.seeds.split(",")]
    if args.modes:
        cfg.modes = args.modes.split(",")
    if args.attack:
        cfg.attack_id = args.attack
    if args.loss:
        cfg.loss_family = args.loss
    if args.workers is not None:
        cfg.workers = args.workers
    if args.stability_s is not None:
        cfg.stability_s = args.stability_s
    if args.fixed_t is not None:
        cfg.fixed_t = args.fixed_t
    return cfg.validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="driftlock")
    sub = parser.add_subparsers(dest="command", required=True)

    _experiment_parser(sub, "run", "run an experiment into a JSONL archive")

    p = _experiment_parser(sub, "ablate", "sweep S, T, or seeds")
    p.add_argument("--sweep", choices=["s", "t", "seed"], required=True)
    p.add_argument("--values", required=True, help="comma-separated sweep values")

    p = sub.add_parser("report", help="emit CSV/JSON tables from archives")
    p.add_argument("--archive", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", default="untargeted")

    p = _experiment_parser(sub, "align", "perturbation-alignment experiment")
    p.add_argument("--horizon", type=int, default=500)

    p = sub.add_parser("zoo", help="zoo utilities")
    zs = p.add_subparsers(dest="zoo_command", required=True)
    g = zs.add_parser("gen", help="write a zoo spec fixture file")
    g.add_argument("--kind", choices=["linear", "mlp1", "rbf"], default="linear")
    g.add_argument("--k", type=int, default=100)
    g.add_argument("--shape", default="16,16,1")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out", required=True)

    p = sub.add_parser("bridge", help="bridge utilities")
    bs = p.add_subparsers(dest="bridge_command", required=True)
    c = bs.add_parser("check", help="handshake with a sidecar and score a probe image")
    c.add_argument("--transport", choices=["stdio", "tcp"], default="stdio")
    c.add_argument("--cmd", help="sidecar command line (stdio)")
    c.add_argument("--host", default="127.0.0.1")
    c.add_argument("--port", type=int, default=0)
    c.add_argument("--k", type=int, default=0)
    c.add_argument("--timeout-ms", type=int, default=10000)
    c.add_argument("--shape", default="16,16,1")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigurationError, ContractViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BridgeError, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        archive = run_experiment(_build_config(args))
        print(f"archive: {archive.path} ({len(archive)} records)")
        return 0
    if args.command == "ablate":
        values = args.values.split(",")
        archives = run_ablation(_build_config(args), args.sweep, values)
        for tag, archive in archives.items():
            print(f"{tag}: {archive.path} ({len(archive)} records)")
        return 0
    if args.command == "report":
        summary = report(args.archive, args.out, ReportSpec(baseline_mode=args.baseline))
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0
    if args.command == "align":
        archive = run_alignment(_build_config(args), horizon=args.horizon)
        print(f"archive: {archive.path} ({len(archive)} records)")
        return 0
    if args.command == "zoo":
        shape = tuple(int(v) for v in args.shape.split(","))
        spec = make_zoo(args.kind, args.k, shape, args.seed)
        save_zoo_fixture(spec, args.out)
        print(f"wrote {args.out} ({spec.classifier_id})")
        return 0
    if args.command == "bridge":
        import shlex

        cfg = BridgeConfig(
            transport=args.transport,
            command=shlex.split(args.cmd) if args.cmd else None,
            host=args.host,
            port=args.port,
            k=args.k,
            timeout_ms=args.timeout_ms,
        )
        shape = tuple(int(v) for v in args.shape.split(","))
        with bridge_handshake(cfg) as session:
            rng = np.random.Generator(np.random.Philox(key=0))
            probe = rng.uniform(0, 1, shape)
            values = bridge_score(session, probe)
            print(
                json.dumps(
                    {
                        "k": session.k,
                        "kind": session.kind,
                        "version": session.version,
                        "probe_argmax": int(np.argmax(values)),
                        "requests_sent": session.requests_sent,
                        "finite": bool(np.isfinite(values).all()),
                    },
                    indent=2,
                )
            )
        return 0
    raise ConfigurationError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
