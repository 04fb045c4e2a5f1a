"""Run artifacts: versioned CSV files, a text summary, and rendered figures.

Every emitted file starts with one `#` comment carrying the schema version.
Floats are written with repr so re-parsing recovers the exact values; no
timestamps or hostnames, so identical runs emit identical bytes.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

SCHEMA_VERSION = "coassist-report-v1"

METRICS_COLUMNS = ("epoch", "n_episodes", "mean_human_reward", "mean_robot_reward",
                   "mean_task_reward", "mean_hit", "mean_force", "mean_high_force",
                   "success_rate")
CURVES_COLUMNS = ("epoch", "human_reward", "robot_reward", "task_reward", "hit",
                  "force", "high_force", "success_rate", "policy_loss_h",
                  "policy_loss_r", "value_loss_h", "value_loss_r",
                  "anticipation_mse", "gate")
POSTERIOR_COLUMNS = ("epoch", "updated", "pool_size", "w_hat_hit", "w_hat_force",
                     "w_hat_high_force", "chain_hit", "chain_force",
                     "chain_high_force", "acceptance_rate", "ess", "gate")
SWEEP_COLUMNS = ("axis", "value", "n_seeds", "n_failed", "human_reward", "hit",
                 "force", "high_force", "success_rate")
SWEEP_CELL_COLUMNS = ("axis", "value", "seed", "human_reward", "hit", "force",
                      "high_force", "success_rate", "error")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, kind: str, columns, rows: List[dict]) -> None:
    """Write rows (dicts keyed by column) under a schema version comment."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {SCHEMA_VERSION} {kind}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def read_csv(path) -> Tuple[str, List[Dict[str, float]]]:
    """Parse a report CSV back; returns (kind, rows with floats restored)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("# "):
            raise ValueError(f"{path} missing the schema comment line")
        parts = first[2:].split()
        if not parts or parts[0] != SCHEMA_VERSION:
            raise ValueError(f"{path} has schema {parts[:1]}, expected {SCHEMA_VERSION}")
        kind = parts[1] if len(parts) > 1 else ""
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for raw in reader:
            row: Dict[str, float] = {}
            for key, val in zip(header, raw):
                try:
                    row[key] = float(val)
                except ValueError:
                    row[key] = val
            rows.append(row)
    return kind, rows


def _eval_row(m) -> dict:
    return {
        "epoch": m.epoch, "n_episodes": m.n_episodes,
        "mean_human_reward": m.mean_human_reward,
        "mean_robot_reward": m.mean_robot_reward,
        "mean_task_reward": m.mean_task_reward,
        "mean_hit": m.mean_hit, "mean_force": m.mean_force,
        "mean_high_force": m.mean_high_force, "success_rate": m.success_rate,
    }


def write_summary(path, result) -> None:
    cfg = result.config
    lines = [
        f"# {SCHEMA_VERSION} summary",
        f"environment: {result.spec_string}",
        f"reward_mode: {cfg.reward_mode}",
        f"seed: {result.seed}",
        f"epochs: {cfg.total_epochs} x {cfg.episodes_per_epoch} episodes",
        f"evaluations: {len(result.evals)}",
        f"utility_cycles: {len(result.posterior_rows)}",
    ]
    if result.evals:
        last = result.evals[-1]
        lines += [
            f"final_mean_human_reward: {last.mean_human_reward!r}",
            f"final_success_rate: {last.success_rate!r}",
            f"final_mean_high_force: {last.mean_high_force!r}",
        ]
    if result.estimate is not None:
        w = result.estimate.w_hat.w
        lines.append("final_weight_estimate: "
                     + ", ".join(repr(float(v)) for v in w))
        lines.append(f"final_gate: {result.estimate.gate!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ figures
def render_curves_figure(path, curves: List[dict], evals: List) -> None:
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    epochs = [row["epoch"] for row in curves]

    ax = axes[0][0]
    ax.plot(epochs, [r["human_reward"] for r in curves], label="human", lw=1)
    ax.plot(epochs, [r["robot_reward"] for r in curves], label="robot", lw=1)
    if evals:
        ax.plot([m.epoch for m in evals], [m.mean_human_reward for m in evals],
                "o-", ms=3, label="human (eval)")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean episode reward")
    ax.legend(fontsize=8)

    ax = axes[0][1]
    ax.plot(epochs, [r["success_rate"] for r in curves], lw=1, label="train")
    if evals:
        ax.plot([m.epoch for m in evals], [m.success_rate for m in evals],
                "o-", ms=3, label="eval")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("epoch")
    ax.set_ylabel("success rate")
    ax.legend(fontsize=8)

    ax = axes[1][0]
    for key in ("hit", "force", "high_force"):
        ax.plot(epochs, [r[key] for r in curves], lw=1, label=key)
    ax.set_xlabel("epoch")
    ax.set_ylabel("penalty sum per episode")
    ax.legend(fontsize=8)

    ax = axes[1][1]
    mse = [(e, r["anticipation_mse"]) for e, r in zip(epochs, curves)
           if not math.isnan(r["anticipation_mse"])]
    if mse:
        ax.plot([p[0] for p in mse], [p[1] for p in mse], "o-", ms=3)
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("anticipation MSE")

    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_posterior_figure(path, rows: List[dict]) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    epochs = [r["epoch"] for r in rows]

    ax = axes[0]
    for key in ("w_hat_hit", "w_hat_force", "w_hat_high_force"):
        ax.plot(epochs, [r[key] for r in rows], "o-", ms=3,
                label=key.replace("w_hat_", ""))
    ax.set_xlabel("epoch")
    ax.set_ylabel("weight estimate")
    ax.legend(fontsize=8)

    ax = axes[1]
    acc = [(e, r["acceptance_rate"]) for e, r in zip(epochs, rows)
           if not math.isnan(r["acceptance_rate"])]
    if acc:
        ax.plot([p[0] for p in acc], [p[1] for p in acc], "o-", ms=3)
    ax.set_ylim(0, 1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("MCMC acceptance rate")

    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_sweep_figure(path, axis: str, rows: List[dict]) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [str(r["value"]) for r in rows]
    values = [r["human_reward"] for r in rows]
    ax.bar(range(len(rows)), values)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels)
    ax.set_xlabel(axis)
    ax.set_ylabel("mean human reward")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


# ------------------------------------------------------------------ emitters
def emit_report(out_dir, result, figures: bool = True) -> None:
    """Write all CSV artifacts, the summary, and figures for one run."""
    out_dir = Path(out_dir)
    write_csv(out_dir / "metrics.csv", "metrics", METRICS_COLUMNS,
              [_eval_row(m) for m in result.evals])
    write_csv(out_dir / "curves.csv", "curves", CURVES_COLUMNS, result.curves)
    write_csv(out_dir / "posterior.csv", "posterior", POSTERIOR_COLUMNS,
              result.posterior_rows)
    write_summary(out_dir / "summary.txt", result)
    if figures:
        if result.curves:
            render_curves_figure(out_dir / "curves.png", result.curves,
                                 result.evals)
        if result.posterior_rows:
            render_posterior_figure(out_dir / "posterior.png",
                                    result.posterior_rows)


def _cell_row(cell) -> dict:
    m = cell.metrics
    return {
        "axis": cell.axis, "value": cell.value, "seed": cell.seed,
        "human_reward": m.mean_human_reward if m else math.nan,
        "hit": m.mean_hit if m else math.nan,
        "force": m.mean_force if m else math.nan,
        "high_force": m.mean_high_force if m else math.nan,
        "success_rate": m.success_rate if m else math.nan,
        "error": cell.error,
    }


def aggregate_sweep(cells) -> List[dict]:
    """One row per axis value: metric means over the seeds that finished."""
    order = []
    for cell in cells:
        if cell.value not in order:
            order.append(cell.value)
    rows = []
    for value in order:
        group = [c for c in cells if c.value == value]
        ok = [c.metrics for c in group if c.metrics is not None]
        def mean(attr):
            return float(np.mean([getattr(m, attr) for m in ok])) if ok else math.nan
        rows.append({
            "axis": group[0].axis, "value": value,
            "n_seeds": len(group), "n_failed": sum(c.failed for c in group),
            "human_reward": mean("mean_human_reward"),
            "hit": mean("mean_hit"), "force": mean("mean_force"),
            "high_force": mean("mean_high_force"),
            "success_rate": mean("success_rate"),
        })
    return rows


def emit_sweep_report(out_dir, axis: str, cells, figures: bool = True) -> List[dict]:
    """Write per-cell and per-value sweep CSVs plus the comparison figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "sweep_cells.csv", "sweep_cells", SWEEP_CELL_COLUMNS,
              [_cell_row(c) for c in cells])
    rows = aggregate_sweep(cells)
    write_csv(out_dir / "sweep.csv", "sweep", SWEEP_COLUMNS, rows)
    if figures and rows:
        render_sweep_figure(out_dir / "sweep.png", axis, rows)
    return rows
