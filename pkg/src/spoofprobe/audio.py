"""Waveform type, synthetic utterance generator, energy VAD, and WAV I/O.

All audio is mono float64 with samples in [-1, 1]. The synthesizer renders a
harmonic voiced core with formant-shaped noise between stretches of leading
and trailing silence. Spoof renders of the same seed start from the identical
signal and add two artifacts whose depth scales with ``artifact_strength``: a
spectral notch and phase discontinuities at 20 ms frame boundaries. Strength
zero bypasses both, so a spoof render is then bitwise equal to the bonafide
render of the same seed.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]

SAMPLE_RATE_HZ = 16000
BONAFIDE = "bonafide"
SPOOF = "spoof"
LABELS = (BONAFIDE, SPOOF)

# Spoof artifact anchors; per-item deviations come from the synthesis seed.
_NOTCH_CENTER_HZ = 3000.0
_NOTCH_CENTER_OCTAVE_JITTER = 0.3
_NOTCH_REL_HALF_WIDTH = 0.15
_NOTCH_DB_PER_STRENGTH = 40.0
_PHASE_FRAME_S = 0.020


@dataclass
class Waveform:
    """Mono audio buffer; samples float64 in [-1, 1]."""

    samples: FloatArray
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self) -> None:
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if samples.size and (samples.min() < -1.0 or samples.max() > 1.0):
            raise ValueError("samples must lie in [-1, 1]")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        self.samples = samples

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def rms_dbfs(w: Waveform) -> float:
    """RMS level in dB relative to full scale; -inf for all-zero input."""
    if w.samples.size == 0:
        raise ValueError("empty waveform")
    mean_sq = float(np.mean(np.square(w.samples)))
    if mean_sq == 0.0:
        return float("-inf")
    return 10.0 * float(np.log10(mean_sq))


# ---------------------------------------------------------------------------
# WAV I/O: RIFF PCM, mono, 16-bit signed little-endian.


def read_wav(path: str | Path) -> Waveform:
    """Read a mono 16-bit PCM WAV file; other encodings are rejected."""
    with wave.open(str(path), "rb") as fh:
        if fh.getcomptype() != "NONE":
            raise ValueError(
                f"{path}: compression type {fh.getcomptype()!r} not supported, need uncompressed PCM"
            )
        if fh.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise ValueError(
                f"{path}: expected 16-bit samples, got {8 * fh.getsampwidth()}-bit"
            )
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(w: Waveform, path: str | Path) -> None:
    """Write mono 16-bit PCM; values are rounded and clamped to int16 range."""
    ints = np.clip(np.rint(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate_hz)
        fh.writeframes(ints.tobytes())


# ---------------------------------------------------------------------------
# Synthesis.


@dataclass(frozen=True)
class SynthParams:
    """Knobs for one synthetic utterance.

    ``envelope`` gives attack/sustain/release as fractions of the voiced part
    and must sum to 1. ``artifact_strength`` in [0, 1] scales the spoof
    artifacts; it is ignored for bonafide renders.
    """

    duration_s: float = 1.0
    f0_hz: float = 140.0
    n_harmonics: int = 20
    formant_centers_hz: tuple[float, ...] = (500.0, 1500.0, 2700.0)
    envelope: tuple[float, float, float] = (0.1, 0.75, 0.15)
    artifact_strength: float = 0.7
    leading_silence_ms: float = 60.0
    trailing_silence_ms: float = 60.0

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.f0_hz <= 0:
            raise ValueError(f"f0_hz must be positive, got {self.f0_hz}")
        if self.n_harmonics < 1:
            raise ValueError(f"n_harmonics must be >= 1, got {self.n_harmonics}")
        if any(f <= 0 for f in self.formant_centers_hz):
            raise ValueError("formant centers must be positive")
        if min(self.envelope) < 0 or abs(sum(self.envelope) - 1.0) > 1e-6:
            raise ValueError(f"envelope fractions must be >= 0 and sum to 1, got {self.envelope}")
        if not 0.0 <= self.artifact_strength <= 1.0:
            raise ValueError(f"artifact_strength must be in [0, 1], got {self.artifact_strength}")
        if self.leading_silence_ms < 0 or self.trailing_silence_ms < 0:
            raise ValueError("silence padding must be >= 0")
        silence_s = (self.leading_silence_ms + self.trailing_silence_ms) / 1000.0
        if silence_s >= self.duration_s:
            raise ValueError("silence padding must leave room for the voiced part")


@dataclass(frozen=True)
class ArtifactProfile:
    """Per-seed spoof artifact placement (notch band, gain, phase rotation)."""

    notch_lo_hz: float
    notch_hi_hz: float
    notch_gain: float
    phase_rotation_rad: float


@dataclass(frozen=True)
class _Variation:
    f0_mult: float
    rolloff: float
    phases: FloatArray
    formant_gains: FloatArray
    target_rms_db: float
    noise: FloatArray
    notch_center_hz: float
    phase_depth: float


def _draw_variation(params: SynthParams, seed: int, n_voiced: int) -> _Variation:
    # Draw order is part of the reproducibility contract; do not reorder.
    rng = np.random.default_rng(seed)
    return _Variation(
        f0_mult=float(rng.uniform(0.9, 1.1)),
        rolloff=float(rng.uniform(0.8, 1.2)),
        phases=rng.uniform(0.0, 2.0 * np.pi, params.n_harmonics),
        formant_gains=rng.uniform(0.5, 1.0, len(params.formant_centers_hz)),
        target_rms_db=float(rng.uniform(-26.0, -20.0)),
        noise=rng.standard_normal(n_voiced),
        notch_center_hz=float(_NOTCH_CENTER_HZ * 2.0 ** rng.uniform(-_NOTCH_CENTER_OCTAVE_JITTER, _NOTCH_CENTER_OCTAVE_JITTER)),
        phase_depth=float(rng.uniform(0.6, 1.0)),
    )


def _voiced_sample_counts(params: SynthParams, sample_rate_hz: int) -> tuple[int, int, int]:
    total = int(round(params.duration_s * sample_rate_hz))
    lead = int(round(params.leading_silence_ms / 1000.0 * sample_rate_hz))
    trail = int(round(params.trailing_silence_ms / 1000.0 * sample_rate_hz))
    if lead + trail >= total:
        raise ValueError("silence padding leaves no voiced samples")
    return total, lead, trail


def artifact_profile(params: SynthParams, seed: int, sample_rate_hz: int = SAMPLE_RATE_HZ) -> ArtifactProfile:
    """Spoof artifact placement the given seed would produce."""
    total, lead, trail = _voiced_sample_counts(params, sample_rate_hz)
    var = _draw_variation(params, seed, total - lead - trail)
    center = var.notch_center_hz
    return ArtifactProfile(
        notch_lo_hz=center * (1.0 - _NOTCH_REL_HALF_WIDTH),
        notch_hi_hz=center * (1.0 + _NOTCH_REL_HALF_WIDTH),
        notch_gain=10.0 ** (-_NOTCH_DB_PER_STRENGTH * params.artifact_strength / 20.0),
        phase_rotation_rad=params.artifact_strength * (np.pi / 2.0) * var.phase_depth,
    )


def _envelope_curve(n: int, fractions: tuple[float, float, float]) -> FloatArray:
    attack = int(round(n * fractions[0]))
    release = int(round(n * fractions[2]))
    attack = min(attack, n)
    release = min(release, n - attack)
    env = np.ones(n)
    if attack:
        env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    if release:
        env[n - release:] = 0.5 + 0.5 * np.cos(np.pi * np.arange(release) / release)
    return env


def _formant_noise(noise: FloatArray, centers: tuple[float, ...], gains: FloatArray, sample_rate_hz: int) -> FloatArray:
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(noise.size, d=1.0 / sample_rate_hz)
    shape = np.full(freqs.size, 10.0 ** (-35.0 / 20.0))  # broadband floor
    for center, gain in zip(centers, gains):
        shape = shape + gain * np.exp(-0.5 * ((freqs - center) / 150.0) ** 2)
    shaped = np.fft.irfft(spectrum * shape, noise.size)
    rms = float(np.sqrt(np.mean(np.square(shaped))))
    return shaped / rms if rms > 0 else shaped


def _apply_phase_jumps(x: FloatArray, sample_rate_hz: int, rotation_rad: float) -> FloatArray:
    """Rotate the phase of every other 20 ms frame, leaving magnitudes intact."""
    frame = int(round(_PHASE_FRAME_S * sample_rate_hz))
    if frame < 4 or x.size < 2 * frame:
        return x
    out = x.copy()
    rot = np.exp(1j * rotation_rad)
    for k in range(1, x.size // frame, 2):
        seg = out[k * frame:(k + 1) * frame]
        spectrum = np.fft.rfft(seg)
        spectrum[1:-1] *= rot  # DC and Nyquist stay real
        out[k * frame:(k + 1) * frame] = np.fft.irfft(spectrum, frame)
    return out


def _apply_notch(x: FloatArray, sample_rate_hz: int, lo_hz: float, hi_hz: float, gain: float) -> FloatArray:
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1.0 / sample_rate_hz)
    band = (freqs >= lo_hz) & (freqs <= hi_hz)
    spectrum[band] *= gain
    return np.fft.irfft(spectrum, x.size)


def synth_utterance(
    params: SynthParams,
    label: str,
    seed: int,
    sample_rate_hz: int = SAMPLE_RATE_HZ,
) -> Waveform:
    """Render one utterance deterministically from (params, label, seed).

    Bonafide and spoof renders of the same seed share every random draw; the
    spoof render then applies the seed's artifact profile unless
    ``artifact_strength`` is zero.
    """
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}, got {label!r}")
    total, lead, trail = _voiced_sample_counts(params, sample_rate_hz)
    n_voiced = total - lead - trail
    var = _draw_variation(params, seed, n_voiced)

    t = np.arange(n_voiced) / sample_rate_hz
    f0 = params.f0_hz * var.f0_mult
    voiced = np.zeros(n_voiced)
    for k in range(1, params.n_harmonics + 1):
        if k * f0 >= sample_rate_hz / 2:
            break
        voiced += k ** (-var.rolloff) * np.sin(2.0 * np.pi * k * f0 * t + var.phases[k - 1])
    voiced /= max(1.0, float(np.max(np.abs(voiced))))
    voiced += 0.15 * _formant_noise(var.noise, params.formant_centers_hz, var.formant_gains, sample_rate_hz)
    voiced *= _envelope_curve(n_voiced, params.envelope)

    rms = float(np.sqrt(np.mean(np.square(voiced))))
    if rms > 0:
        voiced *= 10.0 ** (var.target_rms_db / 20.0) / rms

    x = np.concatenate([np.zeros(lead), voiced, np.zeros(trail)])

    if label == SPOOF and params.artifact_strength > 0.0:
        profile = ArtifactProfile(
            notch_lo_hz=var.notch_center_hz * (1.0 - _NOTCH_REL_HALF_WIDTH),
            notch_hi_hz=var.notch_center_hz * (1.0 + _NOTCH_REL_HALF_WIDTH),
            notch_gain=10.0 ** (-_NOTCH_DB_PER_STRENGTH * params.artifact_strength / 20.0),
            phase_rotation_rad=params.artifact_strength * (np.pi / 2.0) * var.phase_depth,
        )
        x = _apply_phase_jumps(x, sample_rate_hz, profile.phase_rotation_rad)
        x = _apply_notch(x, sample_rate_hz, profile.notch_lo_hz, profile.notch_hi_hz, profile.notch_gain)

    return Waveform(np.clip(x, -1.0, 1.0), sample_rate_hz)


# ---------------------------------------------------------------------------
# Energy VAD and silence trimming.


@dataclass(frozen=True)
class VadConfig:
    """Energy VAD settings.

    ``energy_threshold_db`` is an offset added to the mean frame energy (in
    dB) to form the silence threshold; frames strictly below it are silent.
    Runs of silent frames spanning more than ``min_silence_ms`` are excised,
    shorter runs are kept verbatim.
    """

    frame_ms: float = 25.0
    shift_ms: float = 8.0
    energy_threshold_db: float = -30.0
    min_silence_ms: float = 50.0

    def __post_init__(self) -> None:
        if self.frame_ms <= 0 or self.shift_ms <= 0:
            raise ValueError("frame_ms and shift_ms must be positive")
        if self.min_silence_ms < 0:
            raise ValueError("min_silence_ms must be >= 0")


@dataclass(frozen=True)
class SilenceAnalysis:
    """Frame-level VAD verdicts plus the sample spans a trim would excise."""

    frame_energies_db: FloatArray
    threshold_db: float
    silent_frames: npt.NDArray[np.bool_]
    removed_spans: tuple[tuple[int, int], ...]
    fully_silent: bool


def frame_energies(w: Waveform, frame_ms: float = 25.0, shift_ms: float = 8.0) -> FloatArray:
    """Per-frame energy 10*log10(mean square + 1e-12), frame grid anchored at 0.

    Frame count is floor((n - frame) / shift) + 1; the input must be at least
    one frame long.
    """
    frame = int(round(frame_ms / 1000.0 * w.sample_rate_hz))
    shift = int(round(shift_ms / 1000.0 * w.sample_rate_hz))
    if frame < 1 or shift < 1:
        raise ValueError("frame and shift must be at least one sample")
    n = w.samples.size
    if n < frame:
        raise ValueError(f"waveform ({n} samples) shorter than one frame ({frame} samples)")
    n_frames = (n - frame) // shift + 1
    csum = np.concatenate([[0.0], np.cumsum(np.square(w.samples))])
    starts = np.arange(n_frames) * shift
    sums = csum[starts + frame] - csum[starts]
    return 10.0 * np.log10(sums / frame + 1e-12)


def analyze_silence(w: Waveform, cfg: VadConfig = VadConfig()) -> SilenceAnalysis:
    """Classify frames against the mean-relative threshold and plan the trim.

    A silent run covering frames [a, b] maps to the sample span
    [a*shift, b*shift + frame); a run touching the first frame starts at
    sample 0 and one touching the last frame extends to the end of the
    signal. If every frame is silent, everything except the highest-energy
    frame is planned for removal and ``fully_silent`` is set.
    """
    energies = frame_energies(w, cfg.frame_ms, cfg.shift_ms)
    frame = int(round(cfg.frame_ms / 1000.0 * w.sample_rate_hz))
    shift = int(round(cfg.shift_ms / 1000.0 * w.sample_rate_hz))
    n = w.samples.size
    threshold = float(np.mean(energies)) + cfg.energy_threshold_db
    silent = energies < threshold

    if bool(silent.all()):
        keep = int(np.argmax(energies))
        lo, hi = keep * shift, min(keep * shift + frame, n)
        spans = tuple(s for s in ((0, lo), (hi, n)) if s[0] < s[1])
        return SilenceAnalysis(energies, threshold, silent, spans, True)

    min_run_samples = cfg.min_silence_ms / 1000.0 * w.sample_rate_hz
    spans: list[tuple[int, int]] = []
    i = 0
    m = silent.size
    while i < m:
        if not silent[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and silent[j + 1]:
            j += 1
        lo = 0 if i == 0 else i * shift
        hi = n if j == m - 1 else j * shift + frame
        if hi - lo > min_run_samples:
            spans.append((lo, hi))
        i = j + 1
    return SilenceAnalysis(energies, threshold, silent, tuple(spans), False)


def trim_silence(w: Waveform, cfg: VadConfig = VadConfig()) -> Waveform:
    """Remove silence runs longer than ``cfg.min_silence_ms``; see analyze_silence."""
    analysis = analyze_silence(w, cfg)
    keep = np.ones(w.samples.size, dtype=bool)
    for lo, hi in analysis.removed_spans:
        keep[lo:hi] = False
    if not keep.any():
        # Overlapping excisions swallowed every speech frame; keep the loudest frame.
        frame = int(round(cfg.frame_ms / 1000.0 * w.sample_rate_hz))
        shift = int(round(cfg.shift_ms / 1000.0 * w.sample_rate_hz))
        best = int(np.argmax(analysis.frame_energies_db))
        keep[:] = False
        keep[best * shift:best * shift + frame] = True
    return Waveform(w.samples[keep], w.sample_rate_hz)
