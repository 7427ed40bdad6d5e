"""Synthetic corpus generation, JSONL manifests, and asymmetric configurations.

A corpus is a directory of WAV files plus ``manifest.jsonl``. Each manifest
row has exactly the keys {id, audio_path, label, phase, intervened}, in that
order, with ``audio_path`` relative to the manifest's directory.

Configurations follow the asymmetric-intervention design: O leaves the
corpus untouched, and each of Tr_B, Tr_S, Te_B, Te_S applies the
intervention to exactly one (phase, class) subset, leaving labels, ids, and
counts unchanged.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import BONAFIDE, LABELS, SPOOF, SynthParams, Waveform, read_wav, synth_utterance, write_wav
from .interventions import Intervention, apply_intervention
from .rng import derive_seed, rng_from

PHASES = ("train", "test")
CONFIGURATIONS = ("O", "Tr_B", "Tr_S", "Te_B", "Te_S")
TRAIN_FRACTION = 0.8

_MANIFEST_KEYS = ("id", "audio_path", "label", "phase", "intervened")

# Which (phase, label) subset each configuration intervenes on.
_TARGET_SUBSET: dict[str, tuple[str, str] | None] = {
    "O": None,
    "Tr_B": ("train", BONAFIDE),
    "Tr_S": ("train", SPOOF),
    "Te_B": ("test", BONAFIDE),
    "Te_S": ("test", SPOOF),
}

_WORKERS_ENV = "SPOOFPROBE_WORKERS"


def _max_workers() -> int:
    raw = os.environ.get(_WORKERS_ENV, "")
    if raw:
        try:
            count = int(raw)
        except ValueError as exc:
            raise ValueError(f"{_WORKERS_ENV} must be an integer, got {raw!r}") from exc
        if count < 1:
            raise ValueError(f"{_WORKERS_ENV} must be >= 1, got {count}")
        return count
    return min(4, os.cpu_count() or 1)


def _map_indexed(fn, items):
    """Run fn over items, preserving order; thread count never changes results."""
    workers = _max_workers()
    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    audio_path: str
    label: str
    phase: str
    intervened: bool

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}, got {self.phase!r}")


@dataclass
class Manifest:
    """Ordered manifest rows plus the directory audio paths resolve against."""

    entries: list[ManifestEntry]
    root: Path

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.audio_path

    def subset(self, phase: str | None = None, label: str | None = None) -> list[ManifestEntry]:
        return [
            e
            for e in self.entries
            if (phase is None or e.phase == phase) and (label is None or e.label == label)
        ]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                row = {
                    "id": e.id,
                    "audio_path": e.audio_path,
                    "label": e.label,
                    "phase": e.phase,
                    "intervened": e.intervened,
                }
                fh.write(json.dumps(row) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                row = json.loads(line)
                if set(row) != set(_MANIFEST_KEYS):
                    raise ValueError(
                        f"{path}:{line_no}: manifest row keys {sorted(row)} != {sorted(_MANIFEST_KEYS)}"
                    )
                entries.append(ManifestEntry(**row))
        return cls(entries, path.parent)


@dataclass(frozen=True)
class BiasSpec:
    """Spurious cue injected at generation time.

    ``correlation`` is the fraction of ``target_label`` items that receive
    the cue; ``magnitude`` is milliseconds of prepended silence for
    ``silence_pad`` or a dB gain offset for ``loudness_offset``.
    """

    kind: str = "none"
    target_label: str = BONAFIDE
    correlation: float = 0.0
    magnitude: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "silence_pad", "loudness_offset"):
            raise ValueError(f"bias kind must be none, silence_pad, or loudness_offset, got {self.kind!r}")
        if self.target_label not in LABELS:
            raise ValueError(f"target_label must be one of {LABELS}, got {self.target_label!r}")
        if not 0.0 <= self.correlation <= 1.0:
            raise ValueError(f"correlation must be in [0, 1], got {self.correlation}")
        if self.kind == "silence_pad" and self.magnitude < 0:
            raise ValueError("silence_pad magnitude (ms) must be >= 0")


def _apply_bias(w: Waveform, bias: BiasSpec) -> Waveform:
    if bias.kind == "silence_pad":
        pad = int(round(bias.magnitude / 1000.0 * w.sample_rate_hz))
        return Waveform(np.concatenate([np.zeros(pad), w.samples]), w.sample_rate_hz)
    if bias.kind == "loudness_offset":
        gain = 10.0 ** (bias.magnitude / 20.0)
        return Waveform(np.clip(w.samples * gain, -1.0, 1.0), w.sample_rate_hz)
    return w


def generate_corpus(
    n_bonafide: int,
    n_spoof: int,
    synth: SynthParams,
    bias: BiasSpec,
    seed: int,
    out_dir: str | Path,
) -> Manifest:
    """Synthesize the corpus, write WAVs and manifest.jsonl, return the manifest.

    The split is stratified per class: the first floor(0.8 * n) items of a
    seeded permutation train, the rest test. Bias lands on a seeded choice of
    round(correlation * n) items of the target class, in both phases. The
    same seed always reproduces byte-identical audio and manifest.
    """
    if n_bonafide < 2 or n_spoof < 2:
        raise ValueError("need at least 2 items per class to split train/test")
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    jobs = []
    for label, count in ((BONAFIDE, n_bonafide), (SPOOF, n_spoof)):
        split_perm = rng_from(seed, "split", label).permutation(count)
        phase_of = {int(idx): ("train" if pos < int(TRAIN_FRACTION * count) else "test") for pos, idx in enumerate(split_perm)}
        biased: set[int] = set()
        if bias.kind != "none" and label == bias.target_label:
            bias_perm = rng_from(seed, "bias", label).permutation(count)
            biased = {int(i) for i in bias_perm[: int(round(bias.correlation * count))]}
        for i in range(count):
            item_id = f"{label}_{i:04d}"
            rel_path = f"audio/{item_id}.wav"
            entries.append(ManifestEntry(item_id, rel_path, label, phase_of[i], False))
            jobs.append((item_id, rel_path, label, i in biased))

    def render(job: tuple[str, str, str, bool]) -> None:
        item_id, rel_path, label, is_biased = job
        w = synth_utterance(synth, label, derive_seed(seed, "synth", item_id))
        if is_biased:
            w = _apply_bias(w, bias)
        write_wav(w, out_dir / rel_path)

    _map_indexed(render, jobs)
    manifest = Manifest(entries, out_dir)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest


def intervene_subsets(
    manifest: Manifest,
    subsets: tuple[tuple[str, str], ...],
    intervention: Intervention,
    seed: int,
    out_dir: str | Path,
) -> Manifest:
    """Materialize the manifest with the given (phase, label) subsets intervened.

    Intervened items get fresh WAVs under out_dir; untouched items keep their
    original audio via a relative path. Parameters are drawn per item from
    (seed, item id), so thread count and subset order cannot change bytes.
    """
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    targeted = {(phase, label) for phase, label in subsets}

    new_entries: list[ManifestEntry] = []
    jobs: list[ManifestEntry] = []
    for e in manifest.entries:
        if (e.phase, e.label) in targeted:
            new_entries.append(ManifestEntry(e.id, f"audio/{e.id}.wav", e.label, e.phase, True))
            jobs.append(e)
        else:
            rel = os.path.relpath(manifest.resolve(e), out_dir)
            new_entries.append(ManifestEntry(e.id, Path(rel).as_posix(), e.label, e.phase, e.intervened))

    def process(e: ManifestEntry) -> None:
        w = read_wav(manifest.resolve(e))
        out = apply_intervention(w, intervention, seed, item_id=e.id)
        write_wav(out, out_dir / "audio" / f"{e.id}.wav")

    _map_indexed(process, jobs)
    built = Manifest(new_entries, out_dir)
    built.save(out_dir / "manifest.jsonl")
    return built


def build_configuration(
    configuration: str,
    manifest: Manifest,
    intervention: Intervention,
    seed: int,
    out_dir: str | Path,
) -> Manifest:
    """Materialize one of the five configurations from an O corpus manifest.

    O returns the input manifest untouched (no copies). The other four
    intervene exactly their designated (phase, class) subset.
    """
    if configuration not in CONFIGURATIONS:
        raise ValueError(f"configuration must be one of {CONFIGURATIONS}, got {configuration!r}")
    target = _TARGET_SUBSET[configuration]
    if target is None:
        return manifest
    return intervene_subsets(manifest, (target,), intervention, seed, out_dir)
