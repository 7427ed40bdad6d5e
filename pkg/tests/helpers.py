"""Shared test utilities: independent oracles and finite-difference helpers."""

from __future__ import annotations

import numpy as np

from spoofprobe.audio import Waveform


def make_tone(freq_hz: float = 440.0, duration_s: float = 1.0, amp: float = 0.3,
              rate: int = 16000) -> np.ndarray:
    t = np.arange(int(round(duration_s * rate))) / rate
    return amp * np.sin(2.0 * np.pi * freq_hz * t)


def wf(samples: np.ndarray, rate: int = 16000) -> Waveform:
    return Waveform(np.asarray(samples, dtype=np.float64), rate)


# ---------------------------------------------------------------------------
# EER oracle: plain-python threshold sweep with the same convention as the
# production code (FRR = frac(bonafide < t), FAR = frac(spoof >= t), linear
# interpolation at the crossing) but implemented with direct counting loops.


def oracle_eer(bona, spoof) -> float:
    bona = [float(b) for b in bona]
    spoof = [float(s) for s in spoof]
    cands = sorted(set(bona) | set(spoof))
    cands.append(cands[-1] + 1.0)
    pts = []
    for t in cands:
        frr = sum(1 for b in bona if b < t) / len(bona)
        far = sum(1 for s in spoof if s >= t) / len(spoof)
        pts.append((frr, far))
    for k, (frr, far) in enumerate(pts):
        if frr - far >= 0.0:
            if frr == far:
                return frr
            pf, pa = pts[k - 1]
            lam = (pa - pf) / ((frr - pf) - (far - pa))
            return pf + lam * (frr - pf)
    raise AssertionError("no crossing found")


# ---------------------------------------------------------------------------
# Trim oracle: independent frame walk computing the expected keep-mask.


def oracle_trim_mask(x: np.ndarray, rate: int, frame_ms: float = 25.0,
                     shift_ms: float = 8.0, threshold_offset_db: float = -30.0,
                     min_silence_ms: float = 50.0) -> np.ndarray:
    frame = int(round(frame_ms / 1000.0 * rate))
    shift = int(round(shift_ms / 1000.0 * rate))
    n = len(x)
    n_frames = (n - frame) // shift + 1
    energies = []
    for i in range(n_frames):
        seg = x[i * shift:i * shift + frame]
        energies.append(10.0 * np.log10(np.mean(np.square(seg)) + 1e-12))
    threshold = float(np.mean(energies)) + threshold_offset_db
    silent = [e < threshold for e in energies]
    keep = np.ones(n, dtype=bool)
    if all(silent):
        best = int(np.argmax(energies))
        keep[:] = False
        keep[best * shift:best * shift + frame] = True
        return keep
    min_run = min_silence_ms / 1000.0 * rate
    i = 0
    while i < n_frames:
        if not silent[i]:
            i += 1
            continue
        j = i
        while j + 1 < n_frames and silent[j + 1]:
            j += 1
        lo = 0 if i == 0 else i * shift
        hi = n if j == n_frames - 1 else j * shift + frame
        if hi - lo > min_run:
            keep[lo:hi] = False
        i = j + 1
    return keep


# ---------------------------------------------------------------------------
# Finite differences.


def softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def fd_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar f with respect to every element of x."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < 1e-12 and nb < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b)) / max(na, nb)
