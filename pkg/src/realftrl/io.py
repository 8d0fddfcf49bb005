"""Trial CSVs, aggregate JSON and the run manifest."""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

CSV_SCHEMA = "realftrl-trial-csv v1"
CSV_COLUMNS = ("t", "regret_cum", "regret_inst", "entropy", "beta", "gamma", "arm", "loss")
AGGREGATE_SCHEMA = "realftrl-aggregate v1"
MANIFEST_SCHEMA = "realftrl-manifest v1"
MAX_CURVE_POINTS = 10_000
OUTPUT_ROOT_ENV = "REALFTRL_OUTPUT_ROOT"


def output_dir(configured: str, root: str | None = None) -> Path:
    """Resolve a config's output directory, honouring the output-root override."""
    p = Path(configured)
    if p.is_absolute():
        return p
    root = root or os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) / p if root else p


def trial_stem(config_hash: str, T: int, seed: int) -> str:
    return f"{config_hash[:12]}_T{T}_s{seed}"


def aggregate_stem(config_hash: str, T: int) -> str:
    return f"{config_hash[:12]}_T{T}_aggregate"


def _fmt(v) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def write_trial_csv(path, log, result) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(result.T):
            w.writerow((
                i + 1,
                _fmt(result.regret[i]),
                _fmt(log.regret_inst[i]),
                _fmt(log.entropy[i]),
                _fmt(log.beta[i]),
                _fmt(log.gamma[i]),
                int(log.arm[i]),
                _fmt(log.loss[i]),
            ))


def read_trial_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
        if first != f"# {CSV_SCHEMA}":
            raise ValueError(f"{path}: unsupported CSV schema line {first!r}")
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    cols = {}
    for j, name in enumerate(header):
        kind = np.int64 if name in ("t", "arm") else np.float64
        cols[name] = np.array([r[j] for r in body], dtype=kind)
    return cols


def thin_index(T: int, max_points: int = MAX_CURVE_POINTS) -> np.ndarray:
    """Zero-based round indices kept in stored curves (always includes the last)."""
    if T <= max_points:
        return np.arange(T)
    return np.unique(np.linspace(0, T - 1, max_points).round().astype(np.int64))


def aggregate_to_json(summary: dict, extra: dict | None = None) -> dict:
    idx = thin_index(summary["T"])
    doc = {
        "schema": AGGREGATE_SCHEMA,
        "config_hash": summary["config_hash"],
        "agent": summary["agent"],
        "environment": summary["environment"],
        "T": summary["T"],
        "seeds": list(summary["seeds"]),
        "final_mean": summary["final_mean"],
        "final_stderr": summary["final_stderr"],
        "realized_final_mean": summary["realized_final_mean"],
        "realized_final_stderr": summary["realized_final_stderr"],
        "q_bar_mean": summary["q_bar_mean"],
        "q_bar_stderr": summary["q_bar_stderr"],
        "curve": {
            "t": (idx + 1).tolist(),
            "mean": summary["mean"][idx].tolist(),
            "stderr": summary["stderr"][idx].tolist(),
            "min": summary["min"][idx].tolist(),
            "max": summary["max"][idx].tolist(),
        },
    }
    if extra:
        doc.update(extra)
    return doc


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_aggregate(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"aggregate not found: {path}")
    doc = json.loads(path.read_text())
    if doc.get("schema") != AGGREGATE_SCHEMA:
        raise ValueError(f"{path}: not an aggregate file")
    return doc
