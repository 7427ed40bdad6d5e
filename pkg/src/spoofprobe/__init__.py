"""Probes for class-wise robustness gaps in bonafide/spoof audio classifiers.

The package synthesizes a controlled two-class corpus, applies audio
interventions (additive noise, loudness normalization, a codec surrogate) to
chosen (phase, class) subsets, trains small classifiers under several loss
criteria, and reports how unevenly the same intervention moves each class's
error rate.
"""

from __future__ import annotations

from .audio import (
    BONAFIDE,
    LABELS,
    SAMPLE_RATE_HZ,
    SPOOF,
    SilenceAnalysis,
    SynthParams,
    VadConfig,
    Waveform,
    analyze_silence,
    read_wav,
    rms_dbfs,
    synth_utterance,
    trim_silence,
    write_wav,
)
from .corpus import (
    CONFIGURATIONS,
    PHASES,
    BiasSpec,
    Manifest,
    ManifestEntry,
    build_configuration,
    generate_corpus,
    intervene_subsets,
)
from .features import FeatureConfig, extract_features, mel_filterbank
from .harness import (
    ConfigError,
    ExperimentConfig,
    load_config,
    materialize_trim,
    run_both_phases,
    run_loss_comparison,
    run_matrix,
)
from .interventions import (
    Intervention,
    add_white_noise,
    apply_intervention,
    codec_degrade,
    draw_parameters,
    normalize_loudness,
    run_external_codec,
)
from .losses import LossSpec, cce, curricular, focal, gce, lambert_w, softmax, superloss
from .metrics import (
    ConfigurationResult,
    ExperimentReport,
    ScoreSet,
    assemble_report,
    compute_eer,
    intervention_ratio,
)
from .model import (
    LossTelemetry,
    ModelParams,
    TrainConfig,
    grad_check,
    init_model,
    load_checkpoint,
    save_checkpoint,
    score,
    score_manifest,
    train,
)
from .rng import derive_seed, rng_from

__version__ = "0.1.0"

__all__ = [
    "BONAFIDE",
    "CONFIGURATIONS",
    "LABELS",
    "PHASES",
    "SAMPLE_RATE_HZ",
    "SPOOF",
    "BiasSpec",
    "ConfigError",
    "ConfigurationResult",
    "ExperimentConfig",
    "ExperimentReport",
    "FeatureConfig",
    "Intervention",
    "LossSpec",
    "LossTelemetry",
    "Manifest",
    "ManifestEntry",
    "ModelParams",
    "ScoreSet",
    "SilenceAnalysis",
    "SynthParams",
    "TrainConfig",
    "VadConfig",
    "Waveform",
    "add_white_noise",
    "analyze_silence",
    "apply_intervention",
    "assemble_report",
    "build_configuration",
    "cce",
    "codec_degrade",
    "compute_eer",
    "curricular",
    "derive_seed",
    "draw_parameters",
    "extract_features",
    "focal",
    "gce",
    "generate_corpus",
    "grad_check",
    "init_model",
    "intervene_subsets",
    "intervention_ratio",
    "lambert_w",
    "load_checkpoint",
    "load_config",
    "materialize_trim",
    "mel_filterbank",
    "normalize_loudness",
    "read_wav",
    "rms_dbfs",
    "rng_from",
    "run_both_phases",
    "run_external_codec",
    "run_loss_comparison",
    "run_matrix",
    "save_checkpoint",
    "score",
    "score_manifest",
    "softmax",
    "superloss",
    "synth_utterance",
    "train",
    "trim_silence",
    "write_wav",
]
