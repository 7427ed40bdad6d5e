"""Equal error rate, the intervention impact ratio, and report assembly."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import FloatArray


@dataclass(frozen=True)
class ScoreSet:
    """Detection scores split by ground truth; higher = more bonafide-like."""

    bonafide: FloatArray
    spoof: FloatArray

    def __post_init__(self) -> None:
        for name in ("bonafide", "spoof"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError(f"{name} scores must be a non-empty 1-D array")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} scores must be finite")
            object.__setattr__(self, name, arr)


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """EER and its threshold from sweeping all distinct scores.

    At threshold t, FRR(t) is the fraction of bonafide scores below t and
    FAR(t) the fraction of spoof scores at or above t. Operating points are
    evaluated at every distinct score plus one point past the maximum, and
    the crossing of the two piecewise-linear curves gives the EER. The value
    is invariant under strictly increasing transforms of the scores.
    """
    bona = np.sort(scores.bonafide)
    spoof = np.sort(scores.spoof)
    ts = np.unique(np.concatenate([bona, spoof]))
    ts = np.append(ts, ts[-1] + 1.0)
    frr = np.searchsorted(bona, ts, side="left") / bona.size
    far = 1.0 - np.searchsorted(spoof, ts, side="left") / spoof.size
    diff = frr - far
    # diff starts at -1 (no bonafide below the global min, every spoof at or
    # above it) and ends at +1 past the max, so a sign change always exists.
    k = int(np.argmax(diff >= 0.0))
    if diff[k] == 0.0:
        return float(frr[k]), float(ts[k])
    d_frr = frr[k] - frr[k - 1]
    d_far = far[k] - far[k - 1]
    lam = (far[k - 1] - frr[k - 1]) / (d_frr - d_far)
    eer = frr[k - 1] + lam * d_frr
    threshold = ts[k - 1] + lam * (ts[k] - ts[k - 1])
    return float(eer), float(threshold)


def intervention_ratio(eer_o: float, eer_te_b: float, eer_te_s: float) -> float:
    """|O - Te_B| / |O - Te_S|: above 1 means bonafide-side interventions move
    the error more. Te_S = O yields +inf; O = 0 leaves the relative changes
    undefined and is rejected."""
    for name, value in (("eer_o", eer_o), ("eer_te_b", eer_te_b), ("eer_te_s", eer_te_s)):
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"{name} must be a finite non-negative rate, got {value}")
    if eer_o == 0:
        raise ValueError("impact ratio is undefined when the original EER is 0")
    if eer_te_s == eer_o:
        return float("inf")
    return abs(eer_o - eer_te_b) / abs(eer_o - eer_te_s)


@dataclass(frozen=True)
class ConfigurationResult:
    """One configuration's outcome; paths are relative to the report file."""

    configuration: str
    eer: float
    checkpoint_path: str | None = None
    checkpoint_sha256: str | None = None
    telemetry_path: str | None = None


@dataclass
class ExperimentReport:
    """EERs per (intervention kind, configuration) plus impact ratios."""

    label: str
    results: dict[str, dict[str, ConfigurationResult]] = field(default_factory=dict)
    ratios: dict[str, float | None] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "results": {
                kind: {
                    cfg: {
                        "configuration": r.configuration,
                        "eer": r.eer,
                        "checkpoint_path": r.checkpoint_path,
                        "checkpoint_sha256": r.checkpoint_sha256,
                        "telemetry_path": r.telemetry_path,
                    }
                    for cfg, r in sorted(by_cfg.items())
                }
                for kind, by_cfg in sorted(self.results.items())
            },
            "ratios": dict(sorted(self.ratios.items())),
            "bonafide_more_affected": {
                kind: (None if ratio is None else bool(ratio > 1.0))
                for kind, ratio in sorted(self.ratios.items())
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentReport":
        results = {
            kind: {cfg: ConfigurationResult(**row) for cfg, row in by_cfg.items()}
            for kind, by_cfg in doc["results"].items()
        }
        return cls(label=doc["label"], results=results, ratios=dict(doc["ratios"]))

    def save_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load_json(cls, path: str | Path) -> "ExperimentReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def save_csv(self, path: str | Path) -> Path:
        """One row per intervention kind: System, O, Te_S, Te_B, Ratio.

        EERs are percent with two decimals; the ratio has two decimals, with
        "inf" for the +inf sentinel and "" where it is undefined.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["System", "O", "Te_S", "Te_B", "Ratio"])
            for kind in sorted(self.results):
                by_cfg = self.results[kind]
                def pct(cfg: str) -> str:
                    return f"{100.0 * by_cfg[cfg].eer:.2f}" if cfg in by_cfg else ""
                ratio = self.ratios.get(kind)
                if ratio is None:
                    ratio_cell = ""
                elif math.isinf(ratio):
                    ratio_cell = "inf"
                else:
                    ratio_cell = f"{ratio:.2f}"
                writer.writerow([f"{self.label}/{kind}", pct("O"), pct("Te_S"), pct("Te_B"), ratio_cell])
        return path


def assemble_report(label: str, results: dict[str, dict[str, ConfigurationResult]]) -> ExperimentReport:
    """Attach impact ratios wherever a kind has O, Te_B, and Te_S EERs.

    The ratio is None when any piece is missing or when O's EER is 0 (the
    relative-change reading breaks down); Te_S = O still yields +inf.
    """
    ratios: dict[str, float | None] = {}
    for kind, by_cfg in results.items():
        if {"O", "Te_B", "Te_S"} <= set(by_cfg) and by_cfg["O"].eer > 0:
            ratios[kind] = intervention_ratio(by_cfg["O"].eer, by_cfg["Te_B"].eer, by_cfg["Te_S"].eer)
        else:
            ratios[kind] = None
    return ExperimentReport(label=label, results=results, ratios=ratios)
