"""Figure rendering for the report-producing CLI paths.

Uses matplotlib's object API with the Agg canvas directly so no global
backend or pyplot state is touched; output PNGs are byte-deterministic
for identical inputs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_METRIC_KEYS = ("psnr", "psnr_f", "psnr_nf", "hae")
_METRIC_LABELS = {
    "psnr": "PSNR (dB)",
    "psnr_f": "PSNR-F (dB)",
    "psnr_nf": "PSNR-NF (dB)",
    "hae": "HAE (deg)",
}


def save_loss_trace_figure(trace, path) -> None:
    """Loss-vs-iteration curve for one fit run."""
    fig = Figure(figsize=(6.0, 4.0))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)
    trace = np.asarray(list(trace), dtype=float)
    ax.plot(np.arange(trace.size), trace, lw=1.5)
    if trace.size and (trace > 0).all():
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title("LUT fit loss trace")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), format="png")


def save_metrics_figure(records, path) -> None:
    """Per-sample bars for the headline metrics of an evaluation run."""
    records = list(records)
    fig = Figure(figsize=(10.0, 7.0))
    FigureCanvasAgg(fig)
    names = [str(r.get("name", i)) for i, r in enumerate(records)]
    xs = np.arange(len(records))
    for slot, key in enumerate(_METRIC_KEYS, start=1):
        ax = fig.add_subplot(2, 2, slot)
        vals = np.array(
            [r[key] if r.get(key) is not None else np.nan for r in records], dtype=float
        )
        ax.bar(xs, np.nan_to_num(vals), color="#4878cf")
        ax.set_title(_METRIC_LABELS[key])
        ax.set_xticks(xs)
        ax.set_xticklabels(names, rotation=90, fontsize=6)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), format="png")
