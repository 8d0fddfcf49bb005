"""Plot-ready data files (and optional PNG figures) from aggregate JSON."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import read_aggregate
from .simulator import fit_loglog

MODES = ("regret-vs-t", "regret-vs-sqrtT", "loglog")


def plot_table(docs: list[dict], mode: str):
    """Return ``(header, rows, footer)`` for the requested transformation.

    ``regret-vs-t`` and ``regret-vs-sqrtT`` use the curve of the first
    aggregate. ``loglog`` uses the final regret of each aggregate when given
    several horizons, or the curve itself for a single aggregate, and reports
    the least-squares slope in the footer.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    footer = []
    if mode in ("regret-vs-t", "regret-vs-sqrtT"):
        c = docs[0]["curve"]
        t = np.asarray(c["t"], dtype=np.float64)
        x = t if mode == "regret-vs-t" else np.sqrt(t)
        header = ("t" if mode == "regret-vs-t" else "sqrt_t", "mean_regret", "stderr")
        rows = np.column_stack([x, c["mean"], c["stderr"]])
        return header, rows, footer

    header = ("log_T", "log_mean_regret", "stderr_log")
    if len(docs) > 1:
        docs = sorted(docs, key=lambda d: d["T"])
        T = np.array([d["T"] for d in docs], dtype=np.float64)
        mean = np.array([d["final_mean"] for d in docs])
        se = np.array([d["final_stderr"] for d in docs])
    else:
        c = docs[0]["curve"]
        T = np.asarray(c["t"], dtype=np.float64)
        mean = np.asarray(c["mean"])
        se = np.asarray(c["stderr"])
    keep = mean > 0
    if not keep.any():
        raise ValueError("no positive regret values to take logarithms of")
    if not keep.all():
        footer.append(f"dropped {int((~keep).sum())} non-positive points")
    T, mean, se = T[keep], mean[keep], se[keep]
    rows = np.column_stack([np.log(T), np.log(mean), se / mean])
    if len(T) >= 2:
        slope, intercept = fit_loglog(T, mean)
        footer.append(f"slope = {slope!r}")
        footer.append(f"intercept = {intercept!r}")
    return header, rows, footer


def write_dat(path, header, rows, footer) -> None:
    with Path(path).open("w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for r in rows:
            fh.write(" ".join(repr(float(v)) for v in r) + "\n")
        for line in footer:
            fh.write(f"# {line}\n")


def render_figure(path, header, rows, mode: str, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x, y, err = rows[:, 0], rows[:, 1], rows[:, 2]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if mode == "loglog":
        ax.errorbar(x, y, yerr=err, fmt="o-" if len(x) <= 20 else "-", capsize=3)
    else:
        ax.plot(x, y, lw=1.5)
        ax.fill_between(x, y - err, y + err, alpha=0.3, lw=0)
    ax.set_xlabel(header[0].replace("_", " "))
    ax.set_ylabel(header[1].replace("_", " "))
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plotdata(paths, mode: str, out: str | None = None, figure: bool = True) -> Path:
    docs = [read_aggregate(p) for p in paths]
    header, rows, footer = plot_table(docs, mode)
    first = Path(paths[0])
    dat = Path(out) if out else first.with_name(f"{first.stem}.{mode}.dat")
    write_dat(dat, header, rows, footer)
    if figure:
        title = f"{docs[0]['agent']} / {docs[0]['environment']}"
        render_figure(dat.with_suffix(".png"), header, rows, mode, title)
    return dat

