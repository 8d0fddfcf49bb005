"""Run every (horizon, seed) cell of a config and write the artifacts."""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ExperimentConfig
from .io import (
    MANIFEST_SCHEMA,
    aggregate_stem,
    aggregate_to_json,
    output_dir,
    trial_stem,
    write_json,
    write_trial_csv,
)
from .simulator import Trial, aggregate, run_trial


def run_cell(cfg: ExperimentConfig, T: int, seed: int) -> Trial:
    model, env, agent = cfg.build(T)
    return run_trial(
        env, model, agent, T, seed,
        tail_tol=cfg.tail_tol,
        config_hash=cfg.config_hash(),
        env_id=cfg.name,
        n_probes=cfg.data["probes"]["count"],
    )


def run_grid(cfg: ExperimentConfig, horizons=None, seeds=None) -> dict[int, list]:
    """In-memory results ``{T: [ExperimentResult, ...]}`` without writing files."""
    horizons = cfg.horizons if horizons is None else horizons
    seeds = cfg.seeds if seeds is None else seeds
    return {T: [run_cell(cfg, T, s).result for s in seeds] for T in horizons}


def _cell_job(args):
    data, source, T, seed, out = args
    cfg = ExperimentConfig(data, source)
    started = time.time()
    try:
        trial = run_cell(cfg, T, seed)
    except Exception as exc:  # reported in the manifest; other cells carry on
        return {"T": T, "seed": seed, "error": f"{type(exc).__name__}: {exc}"}, None
    name = trial_stem(cfg.config_hash(), T, seed) + ".csv"
    write_trial_csv(Path(out) / name, trial.log, trial.result)
    cell = {"T": T, "seed": seed, "files": [name], "wall_clock": time.time() - started}
    return cell, trial.result


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_config(cfg: ExperimentConfig, root: str | None = None, workers: int | None = None, log=print) -> int:
    """Execute all cells; returns a process exit code."""
    out = output_dir(cfg.output, root)
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    write_json(out / "config.json", {"config_hash": h, "config": cfg.data})
    started = datetime.now(timezone.utc).isoformat()
    jobs = [(cfg.data, cfg.source, T, s, str(out)) for T in cfg.horizons for s in cfg.seeds]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell_job, jobs))
    else:
        outcomes = [_cell_job(j) for j in jobs]

    cells = [c for c, _ in outcomes]
    failed = [c for c in cells if "error" in c]
    for c in failed:
        log(f"cell T={c['T']} seed={c['seed']} failed: {c['error']}")
    for T in cfg.horizons:
        results = [r for (c, r) in outcomes if r is not None and c["T"] == T]
        if not results:
            continue
        summary = aggregate(results)
        doc = aggregate_to_json(summary, {
            "per_seed_final": [r.final_regret for r in results],
            "per_seed_q_bar": [r.q_bar for r in results],
            "min_hat_floor": min(r.diagnostics["min_hat_floor"] for r in results),
            "complete": len(results) == len(cfg.seeds),
        })
        name = aggregate_stem(h, T) + ".json"
        write_json(out / name, doc)
        for c in cells:
            if c["T"] == T and "files" in c:
                c.setdefault("aggregate", name)
        log(f"T={T}: mean R_T = {summary['final_mean']:.4f} +/- {summary['final_stderr']:.4f} "
            f"over {len(results)} seeds -> {out / name}")

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "config_hash": h,
        "version": __version__,
        "cells": cells,
        "timestamps": {"started": started, "finished": datetime.now(timezone.utc).isoformat()},
    }
    write_json(out / "manifest.json", manifest)
    return 1 if failed else 0
