"""Matplotlib rendering of telemetry and report data to PNG files."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import ExperimentReport
from .model import LossTelemetry

_RC = {
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Empty metadata keeps PNG bytes stable across runs.
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def save_loss_curves(telemetries: dict[str, LossTelemetry], path: str | Path, title: str = "") -> Path:
    """Two panels of raw per-class loss per epoch, one line per run label."""
    with plt.rc_context(_RC):
        fig, (ax_bona, ax_spoof) = plt.subplots(1, 2, figsize=(9, 3.4), sharey=True)
        for label in sorted(telemetries):
            records = telemetries[label].records
            epochs = [r.epoch for r in records]
            bona = [r.loss_bonafide_raw if r.loss_bonafide_raw is not None else math.nan for r in records]
            spoof = [r.loss_spoof_raw if r.loss_spoof_raw is not None else math.nan for r in records]
            ax_bona.plot(epochs, bona, label=label)
            ax_spoof.plot(epochs, spoof, label=label)
        ax_bona.set_title("bonafide (raw loss)")
        ax_spoof.set_title("spoof (raw loss)")
        for ax in (ax_bona, ax_spoof):
            ax.set_xlabel("epoch")
        ax_bona.set_ylabel("mean loss")
        ax_bona.legend()
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path)


def save_eer_bars(report: ExperimentReport, path: str | Path) -> Path:
    """Grouped bar chart of EER (%) per configuration, one group per kind."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 3.4))
        kinds = sorted(report.results)
        configurations = sorted({cfg for by_cfg in report.results.values() for cfg in by_cfg})
        width = 0.8 / max(len(kinds), 1)
        for i, kind in enumerate(kinds):
            by_cfg = report.results[kind]
            xs = [j + i * width for j in range(len(configurations))]
            ys = [100.0 * by_cfg[cfg].eer if cfg in by_cfg else 0.0 for cfg in configurations]
            ax.bar(xs, ys, width=width, label=kind)
        ax.set_xticks([j + 0.4 - width / 2 for j in range(len(configurations))])
        ax.set_xticklabels(configurations)
        ax.set_ylabel("EER (%)")
        ax.set_title(report.label)
        if kinds:
            ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def save_loss_comparison(rows: list[tuple[str, float]], path: str | Path) -> Path:
    """Bar chart of EER (%) per training criterion."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        names = [name for name, _ in rows]
        ax.bar(range(len(rows)), [100.0 * eer for _, eer in rows], width=0.6)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(names)
        ax.set_ylabel("EER (%)")
        ax.set_title("criterion comparison (configuration O)")
        fig.tight_layout()
        return _save(fig, path)
