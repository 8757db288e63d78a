"""Seeded head-to-head comparison of variants on one shared configuration."""

from __future__ import annotations

import numpy as np

from .config import apply_overrides, from_dict
from .mine import ec_trace
from .trainer import mi_trace, train, updates_to_threshold


def run_variant(base, variant, seeds, threshold=0.9, run_root=None):
    """Train ``variant`` for each seed; returns per-seed summaries."""
    out = []
    for seed in seeds:
        cfg = from_dict(apply_overrides(base, [f"variant={variant}", f"seed={seed}"]))
        run_dir = None if run_root is None else run_root / variant / str(seed)
        res = train(cfg, run_dir=run_dir)
        trace = mi_trace(res.metrics)
        out.append({
            "seed": seed,
            "updates_to_threshold": updates_to_threshold(res.metrics, threshold),
            "mi": [(r.update, r.mi_nats) for r in trace],
            "ec": ec_trace(trace) if len(trace) >= 3 else None,
        })
    return out


def median_updates(runs):
    return float(np.median([r["updates_to_threshold"] for r in runs]))


def median_ec(runs):
    """Median peak step, peak value and final value over seeds."""
    ecs = [r["ec"] for r in runs]
    return {
        "peak_step": float(np.median([e["peak_step"] for e in ecs])),
        "peak_value": float(np.median([e["peak_value"] for e in ecs])),
        "final_value": float(np.median([e["final_value"] for e in ecs])),
        "final_probe": max(r["mi"][-1][0] for r in runs),
    }


def head_to_head(base, variants=("svib_uniform", "vanilla_a2c", "a2c_noise"), seeds=range(5), threshold=0.9, run_root=None):
    return {v: run_variant(base, v, list(seeds), threshold, run_root) for v in variants}
