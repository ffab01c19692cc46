"""Report writers: delimited records plus matplotlib figures side by side.

Every CLI stage that produces a report writes the machine-readable file
(JSON/CSV) and a rendered figure next to it, so runs can be skimmed without
loading anything.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import __version__  # noqa: E402

FIG_DPI = 110


def _ensure(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def save_manifest(out_dir, command: str, seed: int, config_text: str = "",
                  extra: dict | None = None) -> Path:
    """Reproducibility record: config hash, seed, versions, arguments."""
    out = _ensure(out_dir)
    manifest = {
        "command": command,
        "seed": seed,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "versions": {
            "physweave": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def save_loss_trace(trace, out_dir) -> tuple[Path, Path]:
    """loss_trace.csv + loss_trace.png for a camera-optimization run."""
    out = _ensure(out_dir)
    csv_path = out / "loss_trace.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eval", "stage", "x", "y", "z", "loss"])
        for i, ev in enumerate(trace):
            writer.writerow([i, ev.stage, f"{ev.position[0]:.9g}",
                             f"{ev.position[1]:.9g}", f"{ev.position[2]:.9g}",
                             f"{ev.loss:.9g}"])
    fig, ax = plt.subplots(figsize=(7, 4))
    losses = [ev.loss for ev in trace]
    stages = [ev.stage for ev in trace]
    best = np.minimum.accumulate(losses)
    ax.plot(losses, ".", ms=3, alpha=0.5, label="evaluation")
    ax.plot(best, "-", lw=1.5, label="best so far")
    boundary = next((i for i, s in enumerate(stages) if s == "powell"), None)
    if boundary is not None:
        ax.axvline(boundary, color="gray", ls="--", lw=1,
                   label="global → local")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    png_path = out / "loss_trace.png"
    fig.savefig(png_path, dpi=FIG_DPI)
    plt.close(fig)
    return csv_path, png_path


def save_alignment_report(report, out_dir) -> tuple[Path, Path]:
    """alignment_report.json + alignment.png (per-attempt acceptance view)."""
    out = _ensure(out_dir)
    json_path = out / "alignment_report.json"
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    attempts = report.attempts
    if attempts:
        ks = [a.index for a in attempts]
        cos = [a.normal_dot_gravity for a in attempts]
        thr = [a.cos_threshold for a in attempts]
        colors = ["tab:green" if a.accepted else "tab:red" for a in attempts]
        axes[0].bar(ks, cos, color=colors)
        axes[0].plot(ks, thr, "k--", lw=1, label="acceptance threshold")
        axes[0].set_xlabel("attempt")
        axes[0].set_ylabel("|normal . gravity|")
        axes[0].set_ylim(0, 1.05)
        axes[0].legend(fontsize=8)
    else:
        axes[0].text(0.5, 0.5, "single-object path", ha="center", va="center")
        axes[0].set_axis_off()
    residual = report.residual_overlaps
    if residual:
        labels = ["-".join(map(str, r["pair"])) for r in residual]
        axes[1].bar(labels, [r["depth"] for r in residual], color="tab:red")
        axes[1].set_ylabel("residual overlap [m]")
    else:
        axes[1].text(0.5, 0.5, "no residual overlap", ha="center", va="center")
        axes[1].set_axis_off()
    fig.tight_layout()
    png_path = out / "alignment.png"
    fig.savefig(png_path, dpi=FIG_DPI)
    plt.close(fig)
    return json_path, png_path


def save_metrics_report(report, out_dir) -> tuple[Path, Path, Path]:
    """metrics.json + metrics.csv + metrics.png."""
    out = _ensure(out_dir)
    json_path = out / "metrics.json"
    json_path.write_text(report.to_json())
    csv_path = out / "metrics.csv"
    header, row = report.csv_row()
    csv_path.write_text(header + "\n" + row + "\n")
    data = {k: v for k, v in report.to_dict().items()
            if k != "flags" and v is not None}
    fig, ax = plt.subplots(figsize=(8, 4))
    if data:
        keys = list(data)
        vals = [data[k] for k in keys]
        ax.barh(keys, vals, color="tab:blue")
        for i, v in enumerate(vals):
            ax.text(v, i, f" {v:.3g}", va="center", fontsize=8)
        ax.set_xlabel("value")
        ax.invert_yaxis()
    else:
        ax.text(0.5, 0.5, "no metrics computed", ha="center", va="center")
        ax.set_axis_off()
    fig.tight_layout()
    png_path = out / "metrics.png"
    fig.savefig(png_path, dpi=FIG_DPI)
    plt.close(fig)
    return json_path, csv_path, png_path
