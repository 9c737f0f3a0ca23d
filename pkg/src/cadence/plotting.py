"""Figure rendering for reports and training logs (Agg backend, file output)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_beat_plot(time, velocity, dance_beats, music_beats, out_path) -> Path:
    """Kinetic-velocity curve with dance/music beat markers."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.plot(time, velocity, lw=1.2, color="tab:blue", label="kinetic velocity")
    for i, t in enumerate(np.asarray(dance_beats)):
        ax.axvline(t, color="tab:orange", lw=0.8, alpha=0.8,
                   label="dance beat" if i == 0 else None)
    for i, t in enumerate(np.asarray(music_beats)):
        ax.axvline(t, color="tab:green", lw=0.8, ls="--", alpha=0.8,
                   label="music beat" if i == 0 else None)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("kinetic velocity [m/s]")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def save_loss_curves(log_csv, out_path) -> Path:
    """Per-term training curves from a trainer CSV log."""
    out_path = Path(out_path)
    with open(log_csv) as fh:
        rows = list(csv.DictReader(fh))
    steps = [int(r["step"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for term in ("total", "simple", "pos_all", "pos_key", "rot_key"):
        ax.plot(steps, [float(r[term]) for r in rows], lw=1.0, label=term)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def save_metric_bars(report: dict, out_path) -> Path:
    """Single-report bar chart for the metric suite."""
    out_path = Path(out_path)
    keys = ["fid_k", "fid_g", "div_k", "div_g", "bas"]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(keys, [report[k] for k in keys], color="tab:blue")
    ax.set_ylabel("value")
    ax.set_title(f"evaluation over {report.get('clips', '?')} clips")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def save_sweep_plot(rows: list[dict], out_path) -> Path:
    """Metrics versus the SSR augmentation level."""
    out_path = Path(out_path)
    s = [r["s"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(10, 3))
    for ax, key in zip(axes, ("fid_k", "div_k", "bas")):
        ax.plot(s, [r[key] for r in rows], marker="o")
        ax.set_xlabel("augmentation step s")
        ax.set_title(key)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
