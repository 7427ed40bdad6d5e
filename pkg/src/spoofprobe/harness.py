"""Experiment orchestration: config files, the configuration matrix, loss sweeps.

A run reads one TOML config plus a seed and materializes everything under an
output directory: corpus, per-configuration audio, checkpoints, telemetry
CSVs, report.json/report.csv, rendered figures, and files.json (content
hashes of every produced file). All persisted paths are relative to the
output root, so two runs with identical (config bytes, seed) produce
byte-identical reports, manifests, telemetry, and checkpoints regardless of
where the output lives.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .audio import LABELS, SynthParams, VadConfig, Waveform, analyze_silence, read_wav, trim_silence, write_wav
from .corpus import CONFIGURATIONS, BiasSpec, Manifest, build_configuration, generate_corpus, intervene_subsets
from .features import FeatureConfig
from .figures import save_eer_bars, save_loss_comparison, save_loss_curves
from .interventions import Intervention
from .losses import KINDS as LOSS_KINDS
from .losses import LossSpec
from .metrics import ConfigurationResult, ExperimentReport, ScoreSet, assemble_report, compute_eer
from .model import LossTelemetry, TrainConfig, checkpoint_sha256, save_checkpoint, score_manifest, train

TRIM_PHASES = ("none", "train", "test", "train_and_test")


class ConfigError(ValueError):
    """A config file problem: unknown key, missing value, or bad value."""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    label: str
    n_bonafide: int
    n_spoof: int
    synth: SynthParams
    bias: BiasSpec
    intervention: Intervention
    trim_phase: str
    vad: VadConfig
    features: FeatureConfig
    train: TrainConfig
    both_phases_target: str


def _build(cls, section: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(sorted(unknown))}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def _take_section(raw: dict, name: str) -> dict:
    section = raw.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(section)


def load_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate a TOML experiment config; unknown keys are errors."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    known_top = {"seed", "label", "corpus", "intervention", "trim", "features", "train", "matrix"}
    unknown = set(raw) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (config key 'seed' or --seed)")
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    corpus_sec = _take_section(raw, "corpus")
    unknown = set(corpus_sec) - {"n_bonafide", "n_spoof", "synth", "bias"}
    if unknown:
        raise ConfigError(f"[corpus] unknown key(s): {', '.join(sorted(unknown))}")
    try:
        n_bonafide = int(corpus_sec["n_bonafide"])
        n_spoof = int(corpus_sec["n_spoof"])
    except KeyError as exc:
        raise ConfigError(f"[corpus] missing required key {exc}") from exc
    synth = _build(SynthParams, corpus_sec.get("synth", {}), "corpus.synth")
    bias = _build(BiasSpec, corpus_sec.get("bias", {}), "corpus.bias")

    intervention_sec = _take_section(raw, "intervention")
    intervention_sec.setdefault("kind", "noise")
    intervention = _build(Intervention, intervention_sec, "intervention")

    trim_sec = _take_section(raw, "trim")
    trim_phase = trim_sec.pop("phase", "none")
    if trim_phase not in TRIM_PHASES:
        raise ConfigError(f"[trim] phase must be one of {TRIM_PHASES}, got {trim_phase!r}")
    vad = _build(VadConfig, trim_sec, "trim")

    features = _build(FeatureConfig, _take_section(raw, "features"), "features")

    train_sec = _take_section(raw, "train")
    loss_sec = train_sec.pop("loss", {})
    if "seed" in train_sec:
        raise ConfigError("[train] seed is set globally, not per section")
    loss_spec = _build(LossSpec, loss_sec, "train.loss")
    train_sec["loss"] = loss_spec
    train_sec["seed"] = seed
    tc = _build(TrainConfig, train_sec, "train")

    matrix_sec = _take_section(raw, "matrix")
    unknown = set(matrix_sec) - {"both_phases_target"}
    if unknown:
        raise ConfigError(f"[matrix] unknown key(s): {', '.join(sorted(unknown))}")
    both_target = matrix_sec.get("both_phases_target", "bonafide")
    if both_target not in LABELS:
        raise ConfigError(f"[matrix] both_phases_target must be one of {LABELS}")

    label = raw.get("label", f"mlp-{loss_spec.kind}")
    if not isinstance(label, str) or not label:
        raise ConfigError("label must be a non-empty string")

    return ExperimentConfig(
        seed=seed, label=label, n_bonafide=n_bonafide, n_spoof=n_spoof,
        synth=synth, bias=bias, intervention=intervention,
        trim_phase=trim_phase, vad=vad, features=features, train=tc,
        both_phases_target=both_target,
    )


# ---------------------------------------------------------------------------
# Pipeline pieces.


def materialize_trim(manifest: Manifest, vad: VadConfig, out_dir: str | Path) -> tuple[Manifest, dict]:
    """Write trimmed copies of every entry; returns the new manifest and a
    per-item audit {id: {trimmed, fully_silent, samples_removed}}."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    audit: dict[str, dict] = {}
    entries = []
    for e in manifest.entries:
        w = read_wav(manifest.resolve(e))
        analysis = analyze_silence(w, vad)
        trimmed = trim_silence(w, vad)
        write_wav(trimmed, out_dir / "audio" / f"{e.id}.wav")
        audit[e.id] = {
            "trimmed": True,
            "fully_silent": analysis.fully_silent,
            "samples_removed": int(w.samples.size - trimmed.samples.size),
        }
        entries.append(dataclasses.replace(e, audio_path=f"audio/{e.id}.wav"))
    built = Manifest(entries, out_dir)
    built.save(out_dir / "manifest.jsonl")
    return built, audit


def _phase_manifests(
    cfg: ExperimentConfig, built: Manifest, cfg_dir: Path
) -> tuple[Manifest, Manifest, dict]:
    """Split into train/test manifests, applying the configured trim per phase."""
    train_m = Manifest(built.subset("train"), built.root)
    test_m = Manifest(built.subset("test"), built.root)
    audit: dict[str, dict] = {}
    if cfg.trim_phase in ("train", "train_and_test"):
        train_m, train_audit = materialize_trim(train_m, cfg.vad, cfg_dir / "trimmed" / "train")
        audit.update(train_audit)
    if cfg.trim_phase in ("test", "train_and_test"):
        test_m, test_audit = materialize_trim(test_m, cfg.vad, cfg_dir / "trimmed" / "test")
        audit.update(test_audit)
    if audit:
        with open(cfg_dir / "trim_audit.json", "w", encoding="utf-8") as fh:
            json.dump(audit, fh, indent=2, sort_keys=True)
    return train_m, test_m, audit


def _eer_of(params, test_m: Manifest) -> float:
    scores, labels = score_manifest(params, test_m)
    return compute_eer(ScoreSet(scores[labels == 0], scores[labels == 1]))[0]


def _mark_failure(out_dir: Path, stage: str, exc: Exception) -> None:
    with open(out_dir / "FAILED.json", "w", encoding="utf-8") as fh:
        json.dump({"stage": stage, "error": f"{type(exc).__name__}: {exc}"}, fh, indent=2)


def write_file_hashes(out_dir: str | Path) -> Path:
    """files.json: sha256 of every file under the output root (sorted paths)."""
    out_dir = Path(out_dir)
    rows = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "files.json":
            rows[p.relative_to(out_dir).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    path = out_dir / "files.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
    return path


def run_matrix(cfg: ExperimentConfig, out_dir: str | Path) -> ExperimentReport:
    """Generate the corpus, run all five configurations, and write the report.

    O trains the reference model; Te_B and Te_S reuse it (their reported
    checkpoint hash is O's), while Tr_B and Tr_S train fresh models on their
    intervened train sets. Every configuration is evaluated on its own test
    set, which only Te_* touch. On failure a FAILED.json marker is written
    next to whatever partial results exist and the error propagates.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = cfg.intervention.kind
    results: dict[str, ConfigurationResult] = {}
    telemetries: dict[str, LossTelemetry] = {}
    o_state: dict | None = None

    corpus_manifest = generate_corpus(
        cfg.n_bonafide, cfg.n_spoof, cfg.synth, cfg.bias, cfg.seed, out_dir / "corpus"
    )

    for config_id in CONFIGURATIONS:
        try:
            cfg_dir = out_dir / "configurations" / config_id
            cfg_dir.mkdir(parents=True, exist_ok=True)
            built = build_configuration(config_id, corpus_manifest, cfg.intervention, cfg.seed, cfg_dir)
            train_m, test_m, _ = _phase_manifests(cfg, built, cfg_dir)

            if config_id in ("O", "Tr_B", "Tr_S"):
                params, telemetry = train(train_m, cfg.train, cfg.features)
                ck_path = save_checkpoint(params, cfg_dir / "checkpoint.json")
                tel_path = telemetry.write_csv(cfg_dir / "telemetry.csv")
                ck_rel = ck_path.relative_to(out_dir).as_posix()
                tel_rel = tel_path.relative_to(out_dir).as_posix()
                ck_hash = checkpoint_sha256(ck_path)
                telemetries[config_id] = telemetry
                if config_id == "O":
                    o_state = {"params": params, "ck_rel": ck_rel, "ck_hash": ck_hash, "tel_rel": tel_rel}
            else:
                assert o_state is not None  # CONFIGURATIONS puts O first
                params = o_state["params"]
                ck_rel, ck_hash, tel_rel = o_state["ck_rel"], o_state["ck_hash"], o_state["tel_rel"]

            results[config_id] = ConfigurationResult(
                configuration=config_id,
                eer=_eer_of(params, test_m),
                checkpoint_path=ck_rel,
                checkpoint_sha256=ck_hash,
                telemetry_path=tel_rel,
            )
        except Exception as exc:
            _mark_failure(out_dir, f"configuration {config_id}", exc)
            raise

    report = assemble_report(cfg.label, {kind: results})
    report.save_json(out_dir / "report.json")
    report.save_csv(out_dir / "report.csv")
    save_loss_curves(telemetries, out_dir / "figures" / "loss_curves.png", title=cfg.label)
    save_eer_bars(report, out_dir / "figures" / "eer_by_configuration.png")
    write_file_hashes(out_dir)
    return report


def run_both_phases(cfg: ExperimentConfig, out_dir: str | Path) -> ExperimentReport:
    """Intervene one class in both train and test, train on it, evaluate on it.

    This is the shortcut-capture probe: with the intervention perfectly
    correlated with ``both_phases_target`` in both phases, a model that
    latches onto the intervention separates the classes almost for free.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = cfg.both_phases_target
    config_id = "Both_B" if target == "bonafide" else "Both_S"
    kind = cfg.intervention.kind

    corpus_manifest = generate_corpus(
        cfg.n_bonafide, cfg.n_spoof, cfg.synth, cfg.bias, cfg.seed, out_dir / "corpus"
    )
    try:
        cfg_dir = out_dir / "configurations" / config_id
        built = intervene_subsets(
            corpus_manifest, (("train", target), ("test", target)), cfg.intervention, cfg.seed, cfg_dir
        )
        train_m, test_m, _ = _phase_manifests(cfg, built, cfg_dir)
        params, telemetry = train(train_m, cfg.train, cfg.features)
        ck_path = save_checkpoint(params, cfg_dir / "checkpoint.json")
        tel_path = telemetry.write_csv(cfg_dir / "telemetry.csv")
        result = ConfigurationResult(
            configuration=config_id,
            eer=_eer_of(params, test_m),
            checkpoint_path=ck_path.relative_to(out_dir).as_posix(),
            checkpoint_sha256=checkpoint_sha256(ck_path),
            telemetry_path=tel_path.relative_to(out_dir).as_posix(),
        )
    except Exception as exc:
        _mark_failure(out_dir, f"configuration {config_id}", exc)
        raise

    report = assemble_report(cfg.label, {kind: {config_id: result}})
    report.save_json(out_dir / "report.json")
    report.save_csv(out_dir / "report.csv")
    save_loss_curves({config_id: telemetry}, out_dir / "figures" / "loss_curves.png", title=cfg.label)
    save_eer_bars(report, out_dir / "figures" / "eer_by_configuration.png")
    write_file_hashes(out_dir)
    return report


def run_loss_comparison(
    cfg: ExperimentConfig, out_dir: str | Path, kinds: tuple[str, ...] = LOSS_KINDS
) -> list[tuple[str, float]]:
    """Train each criterion on the untouched corpus and report test EERs.

    Writes loss_compare.csv/json, per-criterion telemetry and checkpoints,
    and figures. Returns [(kind, eer), ...] in the order trained.
    """
    for k in kinds:
        if k not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {k!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_manifest = generate_corpus(
        cfg.n_bonafide, cfg.n_spoof, cfg.synth, cfg.bias, cfg.seed, out_dir / "corpus"
    )
    base_dir = out_dir / "losses"
    rows: list[tuple[str, float]] = []
    telemetries: dict[str, LossTelemetry] = {}
    records = []
    for k in kinds:
        try:
            loss_dir = base_dir / k
            loss_dir.mkdir(parents=True, exist_ok=True)
            train_m, test_m, _ = _phase_manifests(cfg, corpus_manifest, loss_dir)
            tc = dataclasses.replace(cfg.train, loss=dataclasses.replace(cfg.train.loss, kind=k))
            params, telemetry = train(train_m, tc, cfg.features)
            ck_path = save_checkpoint(params, loss_dir / "checkpoint.json")
            tel_path = telemetry.write_csv(loss_dir / "telemetry.csv")
            eer = _eer_of(params, test_m)
            rows.append((k, eer))
            telemetries[k] = telemetry
            records.append(
                {
                    "criterion": k,
                    "eer": eer,
                    "checkpoint_path": ck_path.relative_to(out_dir).as_posix(),
                    "checkpoint_sha256": checkpoint_sha256(ck_path),
                    "telemetry_path": tel_path.relative_to(out_dir).as_posix(),
                }
            )
        except Exception as exc:
            _mark_failure(out_dir, f"loss {k}", exc)
            raise

    with open(out_dir / "loss_compare.json", "w", encoding="utf-8") as fh:
        json.dump({"label": cfg.label, "criteria": records}, fh, indent=2, sort_keys=True)
    with open(out_dir / "loss_compare.csv", "w", encoding="utf-8") as fh:
        fh.write("Criterion,EER\n")
        for k, eer in rows:
            fh.write(f"{k},{100.0 * eer:.2f}\n")
    save_loss_comparison(rows, out_dir / "figures" / "loss_eer.png")
    save_loss_curves(telemetries, out_dir / "figures" / "loss_curves.png", title=cfg.label)
    write_file_hashes(out_dir)
    return rows


def render_outputs(out_dir: str | Path) -> None:
    """Re-render report.csv and figures from an existing report.json tree."""
    out_dir = Path(out_dir)
    report_path = out_dir / "report.json"
    if not report_path.exists():
        raise FileNotFoundError(f"{report_path} not found; run run-matrix first")
    report = ExperimentReport.load_json(report_path)
    report.save_csv(out_dir / "report.csv")
    telemetries: dict[str, LossTelemetry] = {}
    for by_cfg in report.results.values():
        for cfg_id, result in by_cfg.items():
            if result.telemetry_path and cfg_id not in telemetries:
                tel_file = out_dir / result.telemetry_path
                if tel_file.exists():
                    telemetries[cfg_id] = LossTelemetry.read_csv(tel_file)
    if telemetries:
        save_loss_curves(telemetries, out_dir / "figures" / "loss_curves.png", title=report.label)
    save_eer_bars(report, out_dir / "figures" / "eer_by_configuration.png")
    write_file_hashes(out_dir)
