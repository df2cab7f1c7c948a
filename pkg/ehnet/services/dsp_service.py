"""Time-frequency analysis and overlap-add synthesis

All arithmetic here is float64; the functions are pure and safe to call from
several workers at once.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ehnet.core.exceptions import InputDataError
from ehnet.models.schemas import StftConfig
from ehnet.models.tensors import Spectrogram, Waveform
from ehnet.utils.windows import make_window

# overlap-added squared window below this is treated as an uncovered sample
_ENVELOPE_FLOOR = 1e-10


def frame_count(num_samples: int, cfg: StftConfig) -> int:
    """t = floor((len - fft_size) / hop) + 1"""
    return (num_samples - cfg.fft_size) // cfg.hop_size + 1


def output_length(frames: int, cfg: StftConfig) -> int:
    """Synthesis length (t - 1) * hop + fft_size"""
    return (frames - 1) * cfg.hop_size + cfg.fft_size


def stft(w: Waveform, cfg: StftConfig) -> Spectrogram:
    """Windowed one-sided DFT per frame; keeps the first bins_kept bins as magnitude/phase"""
    if len(w) < cfg.fft_size:
        raise InputDataError("insufficient samples", samples=len(w), fft_size=cfg.fft_size)

    window = make_window(cfg.window, cfg.fft_size)
    frames = sliding_window_view(w.samples, cfg.fft_size)[:: cfg.hop_size]
    spectrum = np.fft.rfft(frames * window, axis=1).T  # (fft/2 + 1) x t

    kept = spectrum[: cfg.bins_kept]
    magnitudes = np.abs(kept)
    phases = np.angle(kept)
    # np.angle gives [-pi, pi]; fold -pi onto pi
    phases[phases <= -np.pi] = np.pi
    residual = spectrum[cfg.bins_kept:].copy()
    return Spectrogram(magnitudes=magnitudes, phases=phases, config=cfg, residual=residual)


def istft(s: Spectrogram, sample_rate: int = 16000) -> Waveform:
    """Weighted overlap-add with squared-window normalization"""
    s.validate()
    cfg = s.config
    window = make_window(cfg.window, cfg.fft_size)

    frames = np.fft.irfft(s.complex_bins(), n=cfg.fft_size, axis=0).T * window
    length = output_length(s.frames, cfg)
    signal_sum = np.zeros(length, dtype=np.float64)
    envelope = np.zeros(length, dtype=np.float64)
    squared = window**2
    for idx in range(s.frames):
        start = idx * cfg.hop_size
        signal_sum[start:start + cfg.fft_size] += frames[idx]
        envelope[start:start + cfg.fft_size] += squared

    covered = envelope > _ENVELOPE_FLOOR
    samples = np.zeros(length, dtype=np.float64)
    samples[covered] = signal_sum[covered] / envelope[covered]
    return Waveform(samples=samples, sample_rate=sample_rate)


def reconstruct_with_phase(clean_mag: np.ndarray, noisy: Spectrogram, sample_rate: int = 16000) -> Waveform:
    """Synthesize predicted magnitudes with the noisy phase

    Bins beyond bins_kept take the per-frame gain of the highest kept bin.
    """
    clean_mag = np.asarray(clean_mag, dtype=np.float64)
    if clean_mag.shape != noisy.magnitudes.shape:
        raise InputDataError("predicted magnitudes do not match the noisy spectrogram",
                             predicted=clean_mag.shape, noisy=noisy.magnitudes.shape)

    residual = None
    if noisy.residual is not None and noisy.residual.size:
        edge_noisy = noisy.magnitudes[-1]
        gain = np.divide(clean_mag[-1], edge_noisy, out=np.zeros_like(edge_noisy), where=edge_noisy > 0)
        residual = noisy.residual * gain[np.newaxis, :]

    enhanced = Spectrogram(
        magnitudes=np.maximum(clean_mag, 0.0),
        phases=noisy.phases,
        config=noisy.config,
        residual=residual,
    )
    return istft(enhanced, sample_rate=sample_rate)
