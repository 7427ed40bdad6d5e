"""A small MLP over pooled log-mel features, trained with pluggable criteria.

The network is feature_dim -> 64 -> 32 with rectifier activations. The 32-d
second hidden layer is the embedding; two heads sit on top of it: an affine
logit head and a cosine head (normalized embedding against normalized class
vectors). Cross entropy, focal, generalized cross entropy, and the
confidence-weighted wrapper train through the affine head; the
adaptive-margin cosine criterion trains through the cosine head. The score
of a waveform is the bonafide logit minus the spoof logit of whichever head
the model was trained with.

Training is plain minibatch SGD with momentum, fixed epoch count, and a
seeded shuffle per epoch; with a fixed seed the run is bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses
from .audio import FloatArray, LABELS, Waveform, read_wav
from .corpus import Manifest
from .features import FeatureConfig, extract_features
from .losses import LossSpec, softmax
from .rng import derive_seed, rng_from

_HIDDEN = (64, 32)
_PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "class_vectors")


@dataclass
class ModelParams:
    feature_config: FeatureConfig
    feature_mean: FloatArray
    feature_std: FloatArray
    w1: FloatArray
    b1: FloatArray
    w2: FloatArray
    b2: FloatArray
    w3: FloatArray
    b3: FloatArray
    class_vectors: FloatArray
    active_head: str = "affine"
    cosine_scale: float = 8.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    loss: LossSpec = LossSpec()

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass(frozen=True)
class EpochRecord:
    """Per-epoch telemetry; raw means carry no class weights, None = class absent."""

    epoch: int
    loss_bonafide_raw: float | None
    loss_spoof_raw: float | None
    loss_weighted: float
    tau: float | None
    t: float | None


@dataclass
class LossTelemetry:
    records: list[EpochRecord] = field(default_factory=list)

    _COLUMNS = ("epoch", "loss_bona_raw", "loss_spf_raw", "loss_weighted", "tau", "t")

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        def cell(v: float | None) -> str:
            return "" if v is None else repr(v)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(self._COLUMNS) + "\n")
            for r in self.records:
                fh.write(
                    ",".join(
                        [str(r.epoch), cell(r.loss_bonafide_raw), cell(r.loss_spoof_raw),
                         repr(r.loss_weighted), cell(r.tau), cell(r.t)]
                    )
                    + "\n"
                )
        return path

    @classmethod
    def read_csv(cls, path: str | Path) -> "LossTelemetry":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != cls._COLUMNS:
                raise ValueError(f"{path}: unexpected telemetry columns {header}")
            records = []
            for line in fh:
                cells = line.rstrip("\n").split(",")
                opt = lambda s: None if s == "" else float(s)
                records.append(
                    EpochRecord(int(cells[0]), opt(cells[1]), opt(cells[2]),
                                float(cells[3]), opt(cells[4]), opt(cells[5]))
                )
        return cls(records)


@dataclass
class LossState:
    """Mutable criterion state carried across batches (tau for the
    confidence-weighted wrapper, t for the cosine margin curriculum)."""

    tau: float
    t: float = 0.0


def init_model(seed: int, feature_config: FeatureConfig = FeatureConfig()) -> ModelParams:
    """Seeded init: uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases,
    orthonormal cosine class vectors."""
    rng = np.random.default_rng(derive_seed(seed, "init"))
    dim = feature_config.dim

    def glorot(fan_out: int, fan_in: int) -> FloatArray:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, (fan_out, fan_in))

    w1 = glorot(_HIDDEN[0], dim)
    w2 = glorot(_HIDDEN[1], _HIDDEN[0])
    w3 = glorot(2, _HIDDEN[1])
    q, _ = np.linalg.qr(rng.standard_normal((_HIDDEN[1], 2)))
    return ModelParams(
        feature_config=feature_config,
        feature_mean=np.zeros(dim),
        feature_std=np.ones(dim),
        w1=w1, b1=np.zeros(_HIDDEN[0]),
        w2=w2, b2=np.zeros(_HIDDEN[1]),
        w3=w3, b3=np.zeros(2),
        class_vectors=q.T.copy(),
    )


@dataclass
class _Forward:
    xn: FloatArray
    h1: FloatArray
    h2: FloatArray
    logits: FloatArray
    e_norm: FloatArray
    u: FloatArray
    v_norm: FloatArray
    vhat: FloatArray
    cos: FloatArray


def _forward(p: ModelParams, x: FloatArray) -> _Forward:
    xn = (x - p.feature_mean) / p.feature_std
    h1 = np.maximum(xn @ p.w1.T + p.b1, 0.0)
    h2 = np.maximum(h1 @ p.w2.T + p.b2, 0.0)
    logits = h2 @ p.w3.T + p.b3
    e_norm = np.maximum(np.linalg.norm(h2, axis=1, keepdims=True), 1e-12)
    u = h2 / e_norm
    v_norm = np.maximum(np.linalg.norm(p.class_vectors, axis=1, keepdims=True), 1e-12)
    vhat = p.class_vectors / v_norm
    cos = np.clip(u @ vhat.T, -1.0, 1.0)
    return _Forward(xn, h1, h2, logits, e_norm, u, v_norm, vhat, cos)


def forward(p: ModelParams, x: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    """(affine logits, cosine logits, embedding) for a batch of feature rows."""
    fw = _forward(p, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return fw.logits, fw.cos, fw.h2


def _criterion(spec: LossSpec, state: LossState, fw: _Forward, y: np.ndarray):
    """Per-sample weighted and raw losses plus head gradients.

    Returns (weighted, raw, dlogits, dcos, aux) where aux is the batch mean
    base loss (tau EMA input) for the wrapper, the batch mean target cosine
    for the cosine criterion, and None otherwise.
    """
    w = np.asarray(spec.class_weights)
    if spec.kind == "cce":
        loss, grad = losses.cce(softmax(fw.logits), y, spec.class_weights)
        return loss, loss / w[y], grad, None, None
    if spec.kind == "focal":
        loss, grad = losses.focal(softmax(fw.logits), y, spec.class_weights, spec.focal_gamma)
        return loss, loss / w[y], grad, None, None
    if spec.kind == "gce":
        loss, grad = losses.gce(softmax(fw.logits), y, spec.class_weights, spec.gce_q)
        return loss, loss / w[y], grad, None, None
    if spec.kind == "super":
        base_raw, base_grad = losses.cce(softmax(fw.logits), y, (1.0, 1.0))
        value, sigma = losses.superloss(base_raw, state.tau, spec.super_lambda)
        weighted = w[y] * value
        grad = (w[y] * sigma)[:, None] * base_grad
        return weighted, value, grad, None, float(np.mean(base_raw))
    loss, gcos, mean_cy = losses.curricular(
        fw.cos, y, spec.class_weights, spec.curricular_margin, spec.curricular_scale, state.t
    )
    return loss, loss / w[y], None, gcos, mean_cy


def _param_grads(p: ModelParams, fw: _Forward, dlogits: FloatArray | None, dcos: FloatArray | None) -> dict[str, FloatArray]:
    grads = {name: np.zeros_like(getattr(p, name)) for name in _PARAM_NAMES}
    dh2 = np.zeros_like(fw.h2)
    if dlogits is not None:
        grads["w3"] = dlogits.T @ fw.h2
        grads["b3"] = dlogits.sum(axis=0)
        dh2 += dlogits @ p.w3
    if dcos is not None:
        # cos_ic = u_i . vhat_c; differentiate through both normalizations
        row_dot = (dcos * fw.cos).sum(axis=1, keepdims=True)
        dh2 += (dcos @ fw.vhat - row_dot * fw.u) / fw.e_norm
        col_dot = (dcos * fw.cos).sum(axis=0)[:, None]
        grads["class_vectors"] = (dcos.T @ fw.u - col_dot * fw.vhat) / fw.v_norm
    da2 = dh2 * (fw.h2 > 0)
    grads["w2"] = da2.T @ fw.h1
    grads["b2"] = da2.sum(axis=0)
    da1 = (da2 @ p.w2) * (fw.h1 > 0)
    grads["w1"] = da1.T @ fw.xn
    grads["b1"] = da1.sum(axis=0)
    return grads


def load_feature_matrix(manifest: Manifest, cfg: FeatureConfig) -> tuple[FloatArray, np.ndarray]:
    """Features and 0/1 labels (bonafide=0, spoof=1) for every manifest entry."""
    rows = [extract_features(read_wav(manifest.resolve(e)), cfg) for e in manifest.entries]
    y = np.array([LABELS.index(e.label) for e in manifest.entries], dtype=np.int64)
    return np.vstack(rows), y


def train(
    train_manifest: Manifest,
    tc: TrainConfig,
    feature_config: FeatureConfig = FeatureConfig(),
) -> tuple[ModelParams, LossTelemetry]:
    """Train on every entry of the manifest; returns (params, telemetry).

    Raw telemetry means per class never include class weights. The feature
    standardization (train-set mean/std) is stored on the returned params so
    scoring is self-contained.
    """
    spec = tc.loss
    if min(spec.class_weights) <= 0:
        raise ValueError("training requires strictly positive class weights")
    if not train_manifest.entries:
        raise ValueError("training manifest is empty")
    x, y = load_feature_matrix(train_manifest, feature_config)
    if np.unique(y).size < 2:
        raise ValueError("training requires both classes in the manifest")

    params = init_model(tc.seed, feature_config)
    params.feature_mean = x.mean(axis=0)
    params.feature_std = np.maximum(x.std(axis=0), 1e-8)
    params.active_head = "cosine" if spec.kind == "curricular" else "affine"
    params.cosine_scale = spec.curricular_scale

    state = LossState(tau=spec.super_tau_value)
    velocity = {name: np.zeros_like(getattr(params, name)) for name in _PARAM_NAMES}
    n = y.size
    telemetry = LossTelemetry()

    for epoch in range(tc.epochs):
        order = rng_from(tc.seed, "epoch", epoch).permutation(n)
        raw_all: list[FloatArray] = []
        label_all: list[np.ndarray] = []
        weighted_total = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            fw = _forward(params, x[idx])
            weighted, raw, dlogits, dcos, aux = _criterion(spec, state, fw, y[idx])
            inv_b = 1.0 / idx.size
            grads = _param_grads(
                params, fw,
                None if dlogits is None else dlogits * inv_b,
                None if dcos is None else dcos * inv_b,
            )
            for name in _PARAM_NAMES:
                velocity[name] = tc.momentum * velocity[name] + grads[name]
                getattr(params, name)[...] -= tc.learning_rate * velocity[name]
            raw_all.append(np.atleast_1d(raw))
            label_all.append(y[idx])
            weighted_total += float(np.sum(weighted))
            if spec.kind == "super" and spec.super_tau_mode == "ema":
                state.tau = spec.super_tau_decay * state.tau + (1.0 - spec.super_tau_decay) * aux
            elif spec.kind == "curricular":
                state.t = losses.update_hardness(state.t, aux, spec.curricular_alpha)
        bona_mean, spoof_mean = losses.per_class_mean(np.concatenate(raw_all), np.concatenate(label_all))
        telemetry.records.append(
            EpochRecord(
                epoch=epoch,
                loss_bonafide_raw=bona_mean,
                loss_spoof_raw=spoof_mean,
                loss_weighted=weighted_total / n,
                tau=state.tau if spec.kind == "super" else None,
                t=state.t if spec.kind == "curricular" else None,
            )
        )
    return params, telemetry


def score(params: ModelParams, w: Waveform) -> float:
    """Bonafide logit minus spoof logit; higher means more bonafide-like."""
    feats = extract_features(w, params.feature_config)
    logits, cos, _ = forward(params, feats[None, :])
    if params.active_head == "cosine":
        return float(params.cosine_scale * (cos[0, 0] - cos[0, 1]))
    return float(logits[0, 0] - logits[0, 1])


def score_manifest(params: ModelParams, manifest: Manifest) -> tuple[FloatArray, np.ndarray]:
    """Scores and 0/1 labels for every entry of the manifest, in order."""
    scores = np.array([score(params, read_wav(manifest.resolve(e))) for e in manifest.entries])
    y = np.array([LABELS.index(e.label) for e in manifest.entries], dtype=np.int64)
    return scores, y


def grad_check(
    params: ModelParams,
    x: FloatArray,
    y: np.ndarray,
    spec: LossSpec,
    state: LossState | None = None,
    h: float = 1e-5,
) -> float:
    """Worst per-tensor relative error of analytic vs central-difference grads.

    The criterion state is frozen during the check; the batch mean weighted
    loss is the function being differentiated.
    """
    state = state or LossState(tau=spec.super_tau_value)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))

    def total_loss() -> float:
        fw = _forward(params, x)
        weighted, *_ = _criterion(spec, state, fw, y)
        return float(np.mean(weighted))

    fw = _forward(params, x)
    weighted, raw, dlogits, dcos, _ = _criterion(spec, state, fw, y)
    inv_n = 1.0 / y.size
    analytic = _param_grads(
        params, fw,
        None if dlogits is None else dlogits * inv_n,
        None if dcos is None else dcos * inv_n,
    )

    worst = 0.0
    for name in _PARAM_NAMES:
        tensor = getattr(params, name)
        fd = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = total_loss()
            flat[i] = orig - h
            lo = total_loss()
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2.0 * h)
        denom = max(float(np.linalg.norm(analytic[name])), float(np.linalg.norm(fd)), 1e-12)
        err = float(np.linalg.norm(analytic[name] - fd)) / denom
        if float(np.linalg.norm(analytic[name])) < 1e-12 and float(np.linalg.norm(fd)) < 1e-12:
            err = 0.0
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints: versioned JSON, loading reproduces scores bit-exactly.

_CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format_version": _CHECKPOINT_VERSION,
        "feature_config": {
            "fft_size": params.feature_config.fft_size,
            "hop": params.feature_config.hop,
            "n_mel_bands": params.feature_config.n_mel_bands,
            "log_floor": params.feature_config.log_floor,
        },
        "active_head": params.active_head,
        "cosine_scale": params.cosine_scale,
        "feature_mean": params.feature_mean.tolist(),
        "feature_std": params.feature_std.tolist(),
        **{name: getattr(params, name).tolist() for name in _PARAM_NAMES},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
    return path


def load_checkpoint(path: str | Path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != _CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version!r}")
    return ModelParams(
        feature_config=FeatureConfig(**doc["feature_config"]),
        feature_mean=np.asarray(doc["feature_mean"], dtype=np.float64),
        feature_std=np.asarray(doc["feature_std"], dtype=np.float64),
        active_head=doc["active_head"],
        cosine_scale=doc["cosine_scale"],
        **{name: np.asarray(doc[name], dtype=np.float64) for name in _PARAM_NAMES},
    )


def checkpoint_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
