"""Signal-level interventions: additive noise, loudness normalization, codec surrogate.

Every intervention preserves sample count and sample rate. Parameter values
for a given item are drawn uniformly from the configured ranges using a
stream derived from (seed, item id), so re-running a materialization is
reproducible item by item.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, rms_dbfs, read_wav, write_wav
from .rng import rng_from

KINDS = ("noise", "loudness", "codec")

_FIR_TAPS = 255
# A 255-tap Hann-windowed sinc cannot shape anything once its transition band
# would extend past Nyquist; above this fraction the filter stage is a pure
# delay and only quantization applies.
_PASSTHROUGH_NYQUIST_FRACTION = 0.985


@dataclass(frozen=True)
class Intervention:
    """One intervention kind plus the parameter ranges it samples from."""

    kind: str
    snr_db_range: tuple[float, float] = (10.0, 40.0)
    target_dbfs_range: tuple[float, float] = (-30.0, -20.0)
    cutoff_hz_range: tuple[float, float] = (3000.0, 7000.0)
    bit_depth_choices: tuple[int, ...] = (8, 10, 12)
    external_codec_cmd: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("snr_db_range", "target_dbfs_range", "cutoff_hz_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"{name} must be a finite (lo, hi) with lo <= hi, got ({lo}, {hi})")
        if self.cutoff_hz_range[0] <= 0:
            raise ValueError("cutoff_hz_range must be positive")
        if not self.bit_depth_choices:
            raise ValueError("bit_depth_choices must be non-empty")
        for bits in self.bit_depth_choices:
            if not 2 <= bits <= 16:
                raise ValueError(f"bit depths must be in [2, 16], got {bits}")


def add_white_noise(w: Waveform, snr_db: float, seed: int) -> Waveform:
    """Add white Gaussian noise at the given SNR; output is clamped to [-1, 1].

    snr_db may be +inf, which returns the input unchanged. An all-zero input
    has no defined signal power and is rejected.
    """
    if math.isnan(snr_db) or snr_db == float("-inf"):
        raise ValueError(f"snr_db must be a real number or +inf, got {snr_db}")
    if not np.any(w.samples):
        raise ValueError("cannot set an SNR against an all-zero signal")
    if math.isinf(snr_db):
        return Waveform(w.samples.copy(), w.sample_rate_hz)
    signal_power = float(np.mean(np.square(w.samples)))
    sigma = math.sqrt(signal_power / 10.0 ** (snr_db / 10.0))
    noise = sigma * np.random.default_rng(seed).standard_normal(w.samples.size)
    return Waveform(np.clip(w.samples + noise, -1.0, 1.0), w.sample_rate_hz)


def normalize_loudness(w: Waveform, target_dbfs: float) -> tuple[Waveform, int]:
    """Scale to the target RMS level; returns (waveform, clipped sample count)."""
    if not math.isfinite(target_dbfs):
        raise ValueError(f"target_dbfs must be finite, got {target_dbfs}")
    level = rms_dbfs(w)
    if level == float("-inf"):
        raise ValueError("cannot normalize an all-zero signal")
    gain = 10.0 ** ((target_dbfs - level) / 20.0)
    scaled = w.samples * gain
    n_clipped = int(np.count_nonzero(np.abs(scaled) > 1.0))
    return Waveform(np.clip(scaled, -1.0, 1.0), w.sample_rate_hz), n_clipped


def _lowpass_taps(cutoff_hz: float, sample_rate_hz: int) -> np.ndarray:
    mid = (_FIR_TAPS - 1) // 2
    n = np.arange(_FIR_TAPS) - mid
    wc = 2.0 * np.pi * cutoff_hz / sample_rate_hz
    with np.errstate(invalid="ignore", divide="ignore"):
        taps = np.sin(wc * n) / (np.pi * n)
    taps[mid] = wc / np.pi
    taps *= np.hanning(_FIR_TAPS)
    return taps / taps.sum()  # unity gain at DC


def _quantize_mid_rise(x: np.ndarray, bits: int) -> np.ndarray:
    step = 2.0 ** (1 - bits)
    idx = np.floor(x / step)
    np.clip(idx, -(2 ** (bits - 1)), 2 ** (bits - 1) - 1, out=idx)
    return (idx + 0.5) * step


def codec_degrade(w: Waveform, cutoff_hz: float, bits: int) -> Waveform:
    """Codec stand-in: linear-phase low-pass then mid-rise requantization.

    The low-pass is a 255-tap Hann-windowed sinc applied with its group delay
    compensated, so the output stays aligned with the input. Cutoffs above
    98.5% of Nyquist skip the filter (see module note). Quantization snaps to
    2**bits mid-rise levels and dequantizes back to [-1, 1].
    """
    nyquist = w.sample_rate_hz / 2.0
    if not 0.0 < cutoff_hz < nyquist:
        raise ValueError(f"cutoff_hz must be in (0, {nyquist}), got {cutoff_hz}")
    if not 2 <= int(bits) <= 16:
        raise ValueError(f"bits must be in [2, 16], got {bits}")
    x = w.samples
    if cutoff_hz <= _PASSTHROUGH_NYQUIST_FRACTION * nyquist:
        mid = (_FIR_TAPS - 1) // 2
        x = np.convolve(x, _lowpass_taps(cutoff_hz, w.sample_rate_hz))[mid:mid + x.size]
    return Waveform(np.clip(_quantize_mid_rise(x, int(bits)), -1.0, 1.0), w.sample_rate_hz)


def run_external_codec(w: Waveform, command_template: str, timeout_s: float = 120.0) -> Waveform:
    """Round-trip the waveform through an external command.

    The template must contain ``{in}`` and ``{out}`` placeholders for the
    temporary WAV paths. The output is re-read and length-aligned to the
    input: longer outputs are truncated, shorter ones padded with their last
    sample (codecs often shave or add a few frames). The sample rate must
    survive the round trip.
    """
    if "{in}" not in command_template or "{out}" not in command_template:
        raise ValueError("command template must contain {in} and {out} placeholders")
    with tempfile.TemporaryDirectory(prefix="spoofprobe_codec_") as tmp:
        src = Path(tmp) / "in.wav"
        dst = Path(tmp) / "out.wav"
        write_wav(w, src)
        command = command_template.replace("{in}", str(src)).replace("{out}", str(dst))
        proc = subprocess.run(
            shlex.split(command), capture_output=True, text=True, timeout=timeout_s
        )
        if proc.returncode != 0:
            raise RuntimeError(
                f"external codec failed with exit {proc.returncode}: {proc.stderr.strip()}"
            )
        if not dst.exists():
            raise RuntimeError("external codec produced no output file")
        out = read_wav(dst)
    if out.sample_rate_hz != w.sample_rate_hz:
        raise RuntimeError(
            f"external codec changed the sample rate: {w.sample_rate_hz} -> {out.sample_rate_hz}"
        )
    if not out.samples.size:
        raise RuntimeError("external codec produced an empty signal")
    if out.samples.size > w.samples.size:
        out = Waveform(out.samples[: w.samples.size], w.sample_rate_hz)
    elif out.samples.size < w.samples.size:
        pad = np.full(w.samples.size - out.samples.size, out.samples[-1])
        out = Waveform(np.concatenate([out.samples, pad]), w.sample_rate_hz)
    return out


def draw_parameters(intervention: Intervention, seed: int, item_id: str = "") -> dict[str, float | int]:
    """Sample this item's intervention parameters; stable given (seed, item_id)."""
    rng = rng_from(seed, "intervention", item_id)
    if intervention.kind == "noise":
        return {
            "snr_db": float(rng.uniform(*intervention.snr_db_range)),
            "noise_seed": int(rng.integers(2 ** 63)),
        }
    if intervention.kind == "loudness":
        return {"target_dbfs": float(rng.uniform(*intervention.target_dbfs_range))}
    return {
        "cutoff_hz": float(rng.uniform(*intervention.cutoff_hz_range)),
        "bits": int(rng.choice(np.asarray(intervention.bit_depth_choices))),
    }


def apply_intervention(w: Waveform, intervention: Intervention, seed: int, item_id: str = "") -> Waveform:
    """Apply the intervention with per-item parameters drawn from (seed, item_id)."""
    params = draw_parameters(intervention, seed, item_id)
    if intervention.kind == "noise":
        return add_white_noise(w, params["snr_db"], params["noise_seed"])
    if intervention.kind == "loudness":
        out, _ = normalize_loudness(w, params["target_dbfs"])
        return out
    if intervention.external_codec_cmd:
        return run_external_codec(w, intervention.external_codec_cmd)
    return codec_degrade(w, params["cutoff_hz"], params["bits"])
