"""Aggregate archives into CSV/JSON data tables.

Every number here is recomputed from the archive records (plus the
archive's embedded config when clean-image rankings must be rebuilt);
nothing is carried over from run time. Incomplete pairings are reported
explicitly instead of silently dropped.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .archive import Archive
from .core import RunRecord
from .errors import ConfigurationError, EmptyPairingError
from .objectives import class_ranking, softmax
from .stats import (
    PairedSample,
    bonferroni,
    bootstrap_ci,
    censored_mean,
    censored_values,
    difficulty_histogram,
    lock_match_rate,
    paired_mean,
    pair_records,
    pearson_r,
    success_cdf,
    success_rate,
    target_overlap,
    wilcoxon_signed_rank,
)


@dataclass
class ReportSpec:
    baseline_mode: str = "untargeted"
    cdf_points: int = 48
    medium_zone: tuple[float, float] = (100.0, 1500.0)
    histogram_bins: int = 20
    bootstrap_level: float = 0.95
    bootstrap_resamples: int = 2000
    bootstrap_seed: int = 0
    overlap_k_tops: Sequence[int] = (1, 2, 3, 5, 10)
    alpha: float = 0.05


def _group(records):
    groups = defaultdict(list)
    for r in records:
        groups[(r.classifier_id, r.attack_id, r.mode_id, r.sweep_point)].append(r)
    return groups


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cdf_grid(budget: int, points: int) -> list[float]:
    grid = np.unique(np.geomspace(1, budget, points).round().astype(int))
    return [float(g) for g in grid]


def report(archive_paths: Sequence, out_dir, spec: Optional[ReportSpec] = None) -> dict:
    """Emit every table; returns a summary dict (also written as JSON)."""
    spec = spec or ReportSpec()
    archives = [Archive(p) for p in archive_paths]
    records = [r for a in archives for r in a.records()]
    if not records:
        raise ConfigurationError("report requested on an empty archive")
    meta = next((a.meta for a in archives if a.meta), None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = _group(records)
    summary: dict = {"n_records": len(records)}

    # -- success rates ----------------------------------------------------
    rows = []
    for (cid, aid, mode, sweep), recs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        rows.append([cid, aid, mode, sweep or "", len(recs),
                     sum(r.success for r in recs), f"{success_rate(recs):.6f}"])
    _write_csv(out / "success_rates.csv", ["classifier", "attack", "mode", "sweep", "n", "successes", "rate"], rows)

    # -- CDF curves --------------------------------------------------------
    rows = []
    for (cid, aid, mode, sweep), recs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        budget = recs[0].iteration_budget
        grid = _cdf_grid(budget, spec.cdf_points)
        if grid[-1] != budget:
            grid.append(float(budget))
        for t, rate in zip(grid, success_cdf(recs, grid)):
            rows.append([cid, aid, mode, sweep or "", int(t), f"{rate:.6f}"])
    _write_csv(out / "cdf.csv", ["classifier", "attack", "mode", "sweep", "iterations", "rate"], rows)

    # -- censored means with bootstrap CIs ----------------------------------
    rows = []
    for (cid, aid, mode, sweep), recs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        budget = recs[0].iteration_budget
        mean = censored_mean(recs, budget)
        lo, hi = bootstrap_ci(
            censored_values(recs, budget),
            spec.bootstrap_level,
            spec.bootstrap_resamples,
            spec.bootstrap_seed,
        )
        rows.append([cid, aid, mode, sweep or "", len(recs), f"{mean:.3f}", f"{lo:.3f}", f"{hi:.3f}"])
    _write_csv(out / "censored_means.csv",
               ["classifier", "attack", "mode", "sweep", "n", "censored_mean", "ci_lo", "ci_hi"], rows)

    # -- paired means and wilcoxon vs the baseline mode ---------------------
    paired_rows, wil_rows, raw_ps, incomplete = [], [], [], []
    comparisons = []
    by_cls = defaultdict(dict)
    for (cid, aid, mode, sweep), recs in groups.items():
        by_cls[(cid, aid, sweep)][mode] = recs
    for (cid, aid, sweep), modes in sorted(by_cls.items(), key=lambda kv: str(kv[0])):
        base = modes.get(spec.baseline_mode)
        if base is None:
            continue
        for mode, recs in sorted(modes.items()):
            if mode == spec.baseline_mode:
                continue
            pairs, missing = pair_records(base, recs)
            for k in missing:
                incomplete.append([cid, aid, mode, sweep or "", str(k)])
            try:
                mean_a, mean_b, n_pairs = paired_mean(base, recs)
                paired_rows.append([cid, aid, spec.baseline_mode, mode, sweep or "",
                                    n_pairs, f"{mean_a:.3f}", f"{mean_b:.3f}"])
            except EmptyPairingError:
                paired_rows.append([cid, aid, spec.baseline_mode, mode, sweep or "", 0, "", ""])
            budget = base[0].iteration_budget
            sample = PairedSample.from_records(base, recs, ceiling=budget)
            res = wilcoxon_signed_rank(sample)
            comparisons.append([cid, aid, spec.baseline_mode, mode, sweep or "",
                                res.n_used, f"{res.statistic:.1f}", res.p_value, res.method])
            raw_ps.append(res.p_value)
    adjusted = bonferroni(raw_ps) if raw_ps else []
    for row, p_adj in zip(comparisons, adjusted):
        wil_rows.append(row[:7] + [f"{row[7]:.6g}", f"{p_adj:.6g}", row[8]])
    _write_csv(out / "paired_means.csv",
               ["classifier", "attack", "mode_a", "mode_b", "sweep", "n_pairs", "mean_a", "mean_b"],
               paired_rows)
    _write_csv(out / "wilcoxon.csv",
               ["classifier", "attack", "mode_a", "mode_b", "sweep", "n_used", "w_plus",
                "p_raw", "p_bonferroni", "method"], wil_rows)
    if incomplete:
        _write_csv(out / "incomplete_pairings.csv",
                   ["classifier", "attack", "mode", "sweep", "missing_key"], incomplete)
    summary["n_comparisons"] = len(wil_rows)
    summary["incomplete_pairings"] = len(incomplete)

    # -- difficulty vs savings ----------------------------------------------
    sav_rows, xs, ys = [], [], []
    for (cid, aid, sweep), modes in sorted(by_cls.items(), key=lambda kv: str(kv[0])):
        base = modes.get(spec.baseline_mode)
        ots = modes.get("ots-stability") or modes.get("ots-fixed")
        if base is None or ots is None:
            continue
        budget = base[0].iteration_budget
        pairs, _ = pair_records(base, ots)
        for ra, rb in pairs:
            diff = (ra.iterations_used if ra.success else budget) - (
                rb.iterations_used if rb.success else budget
            )
            difficulty = ra.iterations_used if ra.success else budget
            sav_rows.append([cid, aid, ra.image_id, ra.seed, difficulty, diff])
            xs.append(difficulty)
            ys.append(diff)
    if sav_rows:
        _write_csv(out / "difficulty_savings.csv",
                   ["classifier", "attack", "image", "seed", "difficulty", "savings"], sav_rows)
        if len(xs) >= 3 and np.std(xs) > 0 and np.std(ys) > 0:
            r, p = pearson_r(xs, ys)
            summary["difficulty_savings_pearson"] = {"r": r, "p": p, "n": len(xs)}

    # -- lock metrics --------------------------------------------------------
    rows = []
    for (cid, aid, mode, sweep), recs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        lm = lock_match_rate(recs)
        if lm.locked:
            rows.append([cid, aid, mode, sweep or "", lm.locked, lm.matched, lm.unlocked,
                         f"{lm.rate:.6f}"])
    if rows:
        _write_csv(out / "lock_match.csv",
                   ["classifier", "attack", "mode", "sweep", "locked", "matched", "unlocked", "rate"],
                   rows)

    # -- target overlap vs clean rankings ------------------------------------
    rankings = _clean_rankings(meta)
    if rankings is not None:
        rows = []
        for (cid, aid, mode, sweep), recs in sorted(groups.items(), key=lambda kv: str(kv[0])):
            locked = [r for r in recs if r.locked_class is not None]
            if not locked:
                continue
            k_tops = [k for k in spec.overlap_k_tops if k <= len(next(iter(rankings.values())))]
            for k_top, rate in target_overlap(locked, rankings, k_tops).items():
                rows.append([cid, aid, mode, sweep or "", k_top, f"{rate:.6f}"])
        if rows:
            _write_csv(out / "target_overlap.csv",
                       ["classifier", "attack", "mode", "sweep", "k_top", "rate"], rows)

    # -- difficulty histograms -------------------------------------------------
    rows = []
    for (cid, aid, mode, sweep), recs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        budget = recs[0].iteration_budget
        bins = np.linspace(0, budget, spec.histogram_bins + 1)
        hist = difficulty_histogram(recs, bins, spec.medium_zone)
        for lo, hi, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            rows.append([cid, aid, mode, sweep or "", f"{lo:.1f}", f"{hi:.1f}", int(count)])
        summary.setdefault("medium_mass", {})[f"{cid}/{aid}/{mode}" + (f"/{sweep}" if sweep else "")] = hist.medium_mass
    _write_csv(out / "difficulty_hist.csv",
               ["classifier", "attack", "mode", "sweep", "bin_lo", "bin_hi", "count"], rows)

    # -- alignment curves (runs carrying cosine traces) --------------------------
    align = defaultdict(list)
    for r in records:
        if r.trace and all(len(e) == 2 for e in r.trace):
            align[(r.classifier_id, r.attack_id, r.mode_id)].append([e[1] for e in r.trace])
    if align:
        rows = []
        for (cid, aid, mode), traces in sorted(align.items()):
            horizon = max(len(t) for t in traces)
            from .stats import aggregate_alignment

            mean, std = aggregate_alignment(traces, horizon)
            for i in range(horizon):
                rows.append([cid, aid, mode, i + 1, f"{mean[i]:.6f}", f"{std[i]:.6f}"])
        _write_csv(out / "alignment.csv",
                   ["classifier", "attack", "mode", "iteration", "mean_cosine", "std_cosine"], rows)

    # -- lock-in traces (runs carrying ranking traces) ----------------------------
    rows = []
    for r in records:
        if r.trace and all(len(e) == 4 for e in r.trace):
            for it, leader, p_true, p_lead in r.trace:
                rows.append([r.classifier_id, r.attack_id, r.mode_id, r.image_id, r.seed,
                             int(it), int(leader), f"{p_true:.6f}", f"{p_lead:.6f}"])
    if rows:
        _write_csv(out / "lock_traces.csv",
                   ["classifier", "attack", "mode", "image", "seed", "iteration", "leader",
                    "p_true", "p_leader"], rows)

    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _clean_rankings(meta: Optional[dict]):
    """Rebuild clean-image non-true rankings from the archived config."""
    if not meta or meta.get("source") != "zoo":
        return None
    from .experiment import ExperimentConfig
    from .zoo import generate_instances, make_zoo, zoo_eval

    cfg = ExperimentConfig.from_meta(meta)
    spec = make_zoo(cfg.zoo_kind, cfg.zoo_k, cfg.zoo_shape, cfg.zoo_seed, **cfg.zoo_params)
    instances = generate_instances(
        spec, cfg.instance_count, cfg.profile, cfg.instance_seed, epsilon=cfg.epsilon
    )
    rankings = {}
    for i in range(len(instances)):
        probs = softmax(zoo_eval(spec, instances.images[i]))
        y = int(instances.labels[i])
        rankings[instances.image_id(i)] = class_ranking(probs, y, spec.k - 1)
    return rankings
