"""Render experiment run directories: metric figures plus a text summary.

The delimited files written by the harness remain the machine contract;
this module only draws from them.  One PNG per (metric, model) lands next
to ``curves.csv``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import DataFormatError
from .harness.experiment import CurveRow

METRIC_LABELS = {
    "auc": "informativeness (AUC)",
    "cov": "concept coverage",
    "see": "estimate error",
}


def load_curves(run_dir: str | Path) -> list[CurveRow]:
    path = Path(run_dir) / "curves.csv"
    if not path.exists():
        raise DataFormatError("curves.csv not found", path=str(path))
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for raw in reader:
            rows.append(CurveRow(
                strategy=raw["strategy"], model=raw["model"],
                step=int(raw["step"]), metric=raw["metric"],
                mean=float(raw["mean"]), stderr=float(raw["stderr"]),
                n=int(raw["n"])))
    return rows


def render_figures(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """One figure per (metric, model): mean curves per strategy with stderr bands."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    curves = load_curves(run_dir)

    combos = sorted({(c.metric, c.model) for c in curves})
    written = []
    for metric, model in combos:
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        strategies = sorted({c.strategy for c in curves
                             if c.metric == metric and c.model == model})
        for strategy in strategies:
            rows = sorted((c for c in curves if c.metric == metric
                           and c.model == model and c.strategy == strategy),
                          key=lambda c: c.step)
            steps = [c.step for c in rows]
            means = [c.mean for c in rows]
            err = [c.stderr for c in rows]
            ax.plot(steps, means, marker="o", markersize=3, label=strategy)
            ax.fill_between(steps,
                            [m - e for m, e in zip(means, err)],
                            [m + e for m, e in zip(means, err)],
                            alpha=0.15)
        ax.set_xlabel("step")
        ax.set_ylabel(METRIC_LABELS.get(metric, metric))
        ax.set_title(f"{METRIC_LABELS.get(metric, metric)} under {model}")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        target = out / f"fig_{metric}_{model}.png"
        fig.savefig(target, dpi=150)
        plt.close(fig)
        written.append(target)
    return written


def summary_text(run_dir: str | Path) -> str:
    """Compact per-strategy table at the last step of each metric."""
    curves = load_curves(run_dir)
    if not curves:
        return "(empty run directory)"
    lines = []
    models = sorted({c.model for c in curves})
    for model in models:
        lines.append(f"model: {model}")
        for metric in sorted({c.metric for c in curves if c.model == model}):
            last_step = max(c.step for c in curves
                            if c.model == model and c.metric == metric)
            lines.append(f"  {METRIC_LABELS.get(metric, metric)} @ step {last_step}:")
            rows = [c for c in curves if c.model == model
                    and c.metric == metric and c.step == last_step]
            for c in sorted(rows, key=lambda c: -c.mean):
                lines.append(f"    {c.strategy:<6} {c.mean:.4f} +/- {c.stderr:.4f} (n={c.n})")
    return "\n".join(lines)
