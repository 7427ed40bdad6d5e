"""Training criteria with analytic gradients, plus the Lambert W they need.

Five criteria are implemented: class-weighted cross entropy, focal loss,
generalized cross entropy, a confidence-weighting wrapper (SuperLoss-style,
driven by Lambert W), and an adaptive-margin cosine loss (CurricularFace
style). The probability-based losses take softmax outputs and return the
gradient with respect to the logits; the cosine loss takes cosine logits and
returns the gradient with respect to them.

Class weights enter cross entropy, focal, and generalized cross entropy
inside the definition; for the cosine and confidence-weighted losses they
multiply the final per-sample value. Batch functions accept either a single
sample (1-D probs, scalar label) or a batch (2-D probs, label vector).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]

PROB_FLOOR = 1e-12
KINDS = ("cce", "focal", "gce", "super", "curricular")

_BRANCH_POINT = -1.0 / math.e


def lambert_w(x: float | FloatArray) -> float | FloatArray:
    """Principal branch of the Lambert W function, Halley iteration.

    Defined for x >= -1/e. The initial guess is picked per region (branch
    point series, rational mid-range, log asymptote) and refined until the
    Newton step stalls at machine precision.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    v = np.atleast_1d(arr).astype(np.float64).copy()
    if np.any(np.isnan(v)) or np.any(v < _BRANCH_POINT - 1e-9):
        raise ValueError(f"lambert_w is defined for x >= -1/e, got min {v.min()}")
    np.clip(v, _BRANCH_POINT, None, out=v)

    w = np.empty_like(v)
    near = v < -0.3243
    big = v > 2.5
    mid = ~(near | big)
    p = np.sqrt(np.maximum(0.0, 2.0 * (np.e * v[near] + 1.0)))
    w[near] = -1.0 + p * (1.0 - p * (1.0 / 3.0 - 11.0 / 72.0 * p))
    w[mid] = v[mid] / (1.0 + v[mid])
    with np.errstate(divide="ignore", invalid="ignore"):
        lv = np.log(v[big])
        w[big] = lv - np.log(lv)

    for _ in range(64):
        ew = np.exp(w)
        f = w * ew - v
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0))
        step = np.where(np.isfinite(step), step, 0.0)
        w -= step
        if np.all(np.abs(step) <= 1e-16 * (1.0 + np.abs(w))):
            break
    return float(w[0]) if scalar else w


def softmax(logits: FloatArray) -> FloatArray:
    """Numerically stable softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_weights(weights: tuple[float, float] | FloatArray) -> FloatArray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (2,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError(f"weights must be two finite non-negative values, got {weights}")
    return w


def _check_probs(probs: FloatArray, labels) -> tuple[FloatArray, npt.NDArray[np.int64], bool]:
    p = np.asarray(probs, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError(f"probs must have shape (n, 2), got {p.shape}")
    if y.shape != (p.shape[0],):
        raise ValueError(f"labels shape {y.shape} does not match batch size {p.shape[0]}")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    if np.any(p < -1e-9) or np.any(p > 1.0 + 1e-9):
        raise ValueError("probabilities must lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("probability rows must sum to 1")
    return p, y, single


def _shaped(loss: FloatArray, grad: FloatArray, single: bool):
    if single:
        return float(loss[0]), grad[0]
    return loss, grad


def cce(probs, labels, weights=(0.9, 0.1)):
    """Class-weighted cross entropy: -w_label * log p_label, floored at 1e-12.

    Returns (per-sample loss, gradient with respect to the logits).
    """
    p, y, single = _check_probs(probs, labels)
    w = _check_weights(weights)
    rows = np.arange(p.shape[0])
    wy = w[y]
    loss = -wy * np.log(np.maximum(p[rows, y], PROB_FLOOR))
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0
    grad = wy[:, None] * (p - onehot)
    return _shaped(loss, grad, single)


def focal(probs, labels, weights=(0.9, 0.1), gamma: float = 2.0):
    """Focal loss: -w * (1 - p_label)**gamma * log p_label.

    gamma = 0 reduces exactly to cross entropy (value and gradient).
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0.0:
        return cce(probs, labels, weights)
    p, y, single = _check_probs(probs, labels)
    w = _check_weights(weights)
    rows = np.arange(p.shape[0])
    wy = w[y]
    u = np.maximum(p[rows, y], PROB_FLOOR)
    one_minus = 1.0 - u
    loss = wy * one_minus ** gamma * (-np.log(u))
    with np.errstate(divide="ignore", invalid="ignore"):
        dldu = gamma * one_minus ** (gamma - 1.0) * np.log(u) - one_minus ** gamma / u
    dldu = np.where(one_minus == 0.0, -1.0, dldu)
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0
    # chain rule through softmax: du/dz_j = u * (delta_jy - p_j)
    grad = (wy * dldu * u)[:, None] * (onehot - p)
    return _shaped(loss, grad, single)


def gce(probs, labels, weights=(0.9, 0.1), q: float = 0.7):
    """Generalized cross entropy: w * (1 - p_label**q) / q, q in (0, 1].

    The q -> 0 limit is cross entropy.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    p, y, single = _check_probs(probs, labels)
    w = _check_weights(weights)
    rows = np.arange(p.shape[0])
    wy = w[y]
    u = np.maximum(p[rows, y], PROB_FLOOR)
    loss = wy * (1.0 - u ** q) / q
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0
    grad = -(wy * u ** q)[:, None] * (onehot - p)
    return _shaped(loss, grad, single)


def superloss(sample_loss, tau: float, lam: float = 1.0):
    """Confidence weight and wrapped value for given base loss values.

    sigma* = exp(-W(max(-2/e, (loss - tau)/lam) / 2)) minimizes
    (loss - tau) * sigma + lam * log(sigma)**2; the wrapped per-sample value
    is that minimum. Returns (value, sigma*). The value is negative whenever
    the base loss is below tau; sigma* is non-increasing in the base loss.
    """
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    arr = np.asarray(sample_loss, dtype=np.float64)
    scalar = arr.ndim == 0
    ell = np.atleast_1d(arr)
    if np.any(~np.isfinite(ell)):
        raise ValueError("sample losses must be finite")
    beta = (ell - tau) / lam
    sigma = np.exp(-lambert_w(np.maximum(-2.0 / math.e, beta) / 2.0))
    value = (ell - tau) * sigma + lam * np.log(sigma) ** 2
    if scalar:
        return float(value[0]), float(sigma[0])
    return value, sigma


def curricular(
    cos_logits,
    labels,
    weights=(0.9, 0.1),
    margin: float = 0.2,
    scale: float = 8.0,
    t: float = 0.0,
):
    """Adaptive-margin cosine loss over (target, non-target) cosine logits.

    The target logit becomes scale * cos(theta_y + margin). A non-target
    cosine that exceeds the shifted target counts as hard and is re-mapped to
    cos_j * (t + cos_j); easy negatives pass through. Softmax cross entropy
    over the two modified, scaled logits gives the per-sample loss, which the
    class weight then multiplies. Returns (loss, gradient with respect to the
    cosine logits, mean target cosine) -- the caller folds the mean into the
    hardness state t.
    """
    if margin < 0 or margin >= math.pi / 2:
        raise ValueError(f"margin must be in [0, pi/2), got {margin}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    c = np.asarray(cos_logits, dtype=np.float64)
    single = c.ndim == 1
    c = np.atleast_2d(c)
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if c.shape[1] != 2 or y.shape != (c.shape[0],):
        raise ValueError(f"cos_logits must be (n, 2) with matching labels, got {c.shape}")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    if np.any(np.abs(c) > 1.0 + 1e-9):
        raise ValueError("cosine logits must lie in [-1, 1]")
    w = _check_weights(weights)

    rows = np.arange(c.shape[0])
    other = 1 - y
    cy = np.clip(c[rows, y], -1.0, 1.0)
    cj = np.clip(c[rows, other], -1.0, 1.0)
    sin_y = np.sqrt(np.maximum(1.0 - cy * cy, 1e-12))
    shifted = cy * math.cos(margin) - sin_y * math.sin(margin)
    hard = shifted < cj
    mapped = np.where(hard, cj * (t + cj), cj)

    zy = scale * shifted
    zj = scale * mapped
    hi = np.maximum(zy, zj)
    log_denom = hi + np.log(np.exp(zy - hi) + np.exp(zj - hi))
    raw = log_denom - zy
    wy = w[y]
    loss = wy * raw

    p_target = np.exp(zy - log_denom)
    p_other = np.exp(zj - log_denom)
    dshift_dcy = math.cos(margin) + math.sin(margin) * cy / sin_y
    dmapped_dcj = np.where(hard, t + 2.0 * cj, 1.0)
    grad = np.zeros_like(c)
    grad[rows, y] = wy * (p_target - 1.0) * scale * dshift_dcy
    grad[rows, other] = wy * p_other * scale * dmapped_dcj
    mean_target_cos = float(np.mean(cy))
    if single:
        return float(loss[0]), grad[0], mean_target_cos
    return loss, grad, mean_target_cos


def update_hardness(t: float, mean_target_cos: float, alpha: float = 0.01) -> float:
    """One EMA step of the cosine-loss hardness state: t0 = 0 at training start."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    return alpha * mean_target_cos + (1.0 - alpha) * t


def per_class_mean(values, labels) -> tuple[float | None, float | None]:
    """Mean of values per class; None when a class is absent from the batch."""
    v = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    out: list[float | None] = []
    for cls in (0, 1):
        mask = y == cls
        out.append(float(v[mask].mean()) if mask.any() else None)
    return out[0], out[1]


@dataclass(frozen=True)
class LossSpec:
    """Which criterion to train with, plus its hyperparameters.

    ``super_tau_mode`` is "fixed" (tau stays ``super_tau_value``, default
    log 2 for two classes) or "ema" (tau tracks the batch mean base loss with
    decay ``super_tau_decay``, starting from ``super_tau_value``).
    """

    kind: str = "cce"
    class_weights: tuple[float, float] = (0.9, 0.1)
    focal_gamma: float = 2.0
    gce_q: float = 0.7
    super_lambda: float = 1.0
    super_tau_mode: str = "ema"
    super_tau_value: float = math.log(2.0)
    super_tau_decay: float = 0.9
    curricular_margin: float = 0.2
    curricular_scale: float = 8.0
    curricular_alpha: float = 0.01

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        _check_weights(self.class_weights)
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if not 0.0 < self.gce_q <= 1.0:
            raise ValueError("gce_q must be in (0, 1]")
        if self.super_lambda <= 0:
            raise ValueError("super_lambda must be positive")
        if self.super_tau_mode not in ("fixed", "ema"):
            raise ValueError(f"super_tau_mode must be 'fixed' or 'ema', got {self.super_tau_mode!r}")
        if not 0.0 <= self.super_tau_decay < 1.0:
            raise ValueError("super_tau_decay must be in [0, 1)")
        if not 0.0 <= self.curricular_margin < math.pi / 2:
            raise ValueError("curricular_margin must be in [0, pi/2)")
        if self.curricular_scale <= 0:
            raise ValueError("curricular_scale must be positive")
        if not 0.0 < self.curricular_alpha <= 1.0:
            raise ValueError("curricular_alpha must be in (0, 1]")
