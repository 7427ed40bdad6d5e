"""Pooled log-mel-band energy features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import FloatArray, Waveform


@dataclass(frozen=True)
class FeatureConfig:
    """Log-mel front end; the feature vector is concat(mean, std) per band."""

    fft_size: int = 512
    hop: int = 160
    n_mel_bands: int = 24
    log_floor: float = 1e-10

    def __post_init__(self) -> None:
        if self.fft_size < 2 or self.hop < 1:
            raise ValueError("fft_size must be >= 2 and hop >= 1")
        if self.n_mel_bands < 1:
            raise ValueError("n_mel_bands must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def dim(self) -> int:
        return 2 * self.n_mel_bands


def _hz_to_mel(f: FloatArray) -> FloatArray:
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _mel_to_hz(m: FloatArray) -> FloatArray:
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_filterbank(n_bands: int, fft_size: int, sample_rate_hz: int) -> FloatArray:
    """Triangular mel filters over the rfft bins, 0 Hz to Nyquist."""
    n_bins = fft_size // 2 + 1
    edges_hz = _mel_to_hz(np.linspace(0.0, float(_hz_to_mel(np.asarray(sample_rate_hz / 2.0))), n_bands + 2))
    bin_freqs = np.arange(n_bins) * sample_rate_hz / fft_size
    fb = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        lo, mid, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        rising = (bin_freqs - lo) / max(mid - lo, 1e-9)
        falling = (hi - bin_freqs) / max(hi - mid, 1e-9)
        fb[b] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return fb


def extract_features(w: Waveform, cfg: FeatureConfig = FeatureConfig()) -> FloatArray:
    """Frame, window, and mel-pool the waveform into a 2 * n_mel_bands vector.

    Frames are Hann-windowed with the configured hop; mel energies are floored
    at ``log_floor`` before the natural log; mean and std pool over frames.
    Input must be at least one FFT frame long.
    """
    x = w.samples
    if x.size < cfg.fft_size:
        raise ValueError(
            f"waveform ({x.size} samples) shorter than one FFT frame ({cfg.fft_size})"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.fft_size)[:: cfg.hop]
    spectra = np.fft.rfft(frames * np.hanning(cfg.fft_size), axis=1)
    power = np.abs(spectra) ** 2
    fb = mel_filterbank(cfg.n_mel_bands, cfg.fft_size, w.sample_rate_hz)
    log_energies = np.log(np.maximum(power @ fb.T, cfg.log_floor))
    return np.concatenate([log_energies.mean(axis=0), log_energies.std(axis=0)])
