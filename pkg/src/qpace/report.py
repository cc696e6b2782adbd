"""Aggregate experiment outputs into delimited summaries and figures.

Reads the per-(strategy, run) metrics CSVs written by ``qpace train`` plus
any scan CSVs, and renders mean/sem accuracy curves and phase-cut
probability plots as PNG files alongside the aggregated CSV output.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ArtifactError
from .persist import atomic_write_text

STRATEGY_COLORS = {
    "standard": "tab:blue",
    "random": "tab:gray",
    "easy": "tab:green",
    "hard": "tab:orange",
    "hardest": "tab:red",
    "higher_pg": "tab:purple",
    "lower_pg": "tab:brown",
}

PHASE_COLORS = ("#c6dbef", "#fdd0a2", "#c7e9c0", "#fcbba1")


def _collect_runs(exp_dir: Path) -> Dict[str, List[dict]]:
    from .cli import read_metrics_csv

    runs: Dict[str, List[dict]] = {}
    for path in sorted(exp_dir.glob("metrics_*_run*.csv")):
        data = read_metrics_csv(path)
        runs.setdefault(data["meta"]["strategy"], []).append(data)
    if not runs:
        raise ArtifactError(f"no metrics CSVs found under {exp_dir}")
    return runs


def _curves(rows_list: List[dict]):
    test = np.stack([[r["test_accuracy"] for r in d["rows"]] for d in rows_list])
    train = np.stack([[r["train_accuracy"] for r in d["rows"]] for d in rows_list])
    risk = np.stack([[r["train_risk"] for r in d["rows"]] for d in rows_list])
    epochs = np.array([r["epoch"] for r in rows_list[0]["rows"]])
    def sem(a):
        if a.shape[0] < 2:
            return np.zeros(a.shape[1])
        spread = a.max(axis=0) - a.min(axis=0)
        return np.where(spread == 0.0, 0.0, a.std(axis=0, ddof=1) / np.sqrt(a.shape[0]))
    return {
        "epochs": epochs,
        "test_mean": test.mean(axis=0), "test_sem": sem(test),
        "train_mean": train.mean(axis=0), "train_sem": sem(train),
        "risk_mean": risk.mean(axis=0),
    }


def _write_curves_csv(path: Path, c: dict) -> None:
    lines = ["epoch,test_mean,test_sem,train_mean,train_sem,train_risk_mean"]
    for i, ep in enumerate(c["epochs"]):
        lines.append(f"{ep},{c['test_mean'][i]!r},{c['test_sem'][i]!r},"
                     f"{c['train_mean'][i]!r},{c['train_sem'][i]!r},{c['risk_mean'][i]!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _accuracy_figure(path: Path, curves: Dict[str, dict], which: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, c in curves.items():
        color = STRATEGY_COLORS.get(name)
        mean, sem = c[f"{which}_mean"], c[f"{which}_sem"]
        ax.plot(c["epochs"], mean, label=name, color=color)
        ax.fill_between(c["epochs"], mean - sem, mean + sem, alpha=0.25, color=color,
                        linewidth=0)
    ax.set_xlabel("epoch")
    ax.set_ylabel(f"{which} accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _scan_figure(path: Path, scan_csv: Path) -> None:
    lines = scan_csv.read_text(encoding="utf-8").splitlines()
    header = lines[1].split(",")
    sweep_name = header[0]
    prob_cols = [i for i, h in enumerate(header) if h.startswith("p") and h[1:].isdigit()]
    values, true_phase, probs = [], [], []
    for line in lines[2:]:
        if not line.strip():
            continue
        parts = line.split(",")
        values.append(float(parts[0]))
        true_phase.append(int(parts[1]))
        probs.append([float(parts[i]) for i in prob_cols])
    values = np.array(values)
    true_phase = np.array(true_phase)
    probs = np.array(probs)

    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    # background shading encodes the labeled phase
    edges = np.concatenate([[values[0]], 0.5 * (values[1:] + values[:-1]), [values[-1]]])
    for i, phase in enumerate(true_phase):
        ax.axvspan(edges[i], edges[i + 1],
                   color=PHASE_COLORS[phase % len(PHASE_COLORS)], lw=0)
    for j in range(probs.shape[1]):
        ax.plot(values, probs[:, j], label=f"class {j}")
    ax.set_xlabel(sweep_name)
    ax.set_ylabel("class probability")
    ax.set_xlim(values[0], values[-1])
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"phase-cut scan ({scan_csv.stem})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(exp_dir: Path, cfg) -> Path:
    """Write aggregated curves, a summary table, and PNG figures under report/."""
    exp_dir = Path(exp_dir)
    report_dir = exp_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    runs = _collect_runs(exp_dir)
    curves = {name: _curves(rows) for name, rows in sorted(runs.items())}
    for name, c in curves.items():
        _write_curves_csv(report_dir / f"curves_{name}.csv", c)
    _accuracy_figure(report_dir / "accuracy_test.png", curves, "test",
                     f"{exp_dir.name}: test accuracy (mean over runs, sem band)")
    _accuracy_figure(report_dir / "accuracy_train.png", curves, "train",
                     f"{exp_dir.name}: train accuracy (mean over runs, sem band)")

    summary_path = exp_dir / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        lines = ["strategy,train_best_mean,test_best_mean,test_best_sem"]
        for name, row in summary["strategies"].items():
            lines.append(f"{name},{row['train_best_mean']!r},{row['test_best_mean']!r},"
                         f"{row['test_best_sem']!r}")
        atomic_write_text(report_dir / "summary_table.csv", "\n".join(lines) + "\n")

    for scan_csv in sorted(exp_dir.glob("scan_*.csv")):
        _scan_figure(report_dir / f"{scan_csv.stem}.png", scan_csv)
    return report_dir
