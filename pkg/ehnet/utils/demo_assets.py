"""Hermetic demo set: tones and chirps as speech stand-ins, white/pink noise, exponential-decay RIRs"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np
from scipy import signal

from ehnet.core.logging import get_logger
from ehnet.models.schemas import DatasetManifest
from ehnet.models.tensors import Waveform
from ehnet.services.data_service import plan_manifest, record_rng
from ehnet.utils.manifest_io import write_manifest
from ehnet.utils.wav_io import write_wav

logger = get_logger(__name__)

DEMO_RATE = 16000
DEMO_SECONDS = 1.0
DEMO_RECORDS = 6
MANIFEST_NAME = "manifest.tsv"


@dataclass
class DemoAssets:
    root: Path
    clean_files: List[Path] = field(default_factory=list)
    noise_files: List[Path] = field(default_factory=list)
    rir_files: List[Path] = field(default_factory=list)


def _time(seconds: float, rate: int) -> np.ndarray:
    return np.arange(int(round(seconds * rate))) / rate


def tone(freq_hz: float, seconds: float = DEMO_SECONDS, rate: int = DEMO_RATE, amplitude: float = 0.3) -> Waveform:
    """Sine with 10 ms raised-cosine fades"""
    t = _time(seconds, rate)
    samples = amplitude * np.sin(2 * np.pi * freq_hz * t)
    fade = min(len(t) // 2, int(0.01 * rate))
    if fade:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
        samples[:fade] *= ramp
        samples[-fade:] *= ramp[::-1]
    return Waveform(samples, rate)


def chirp(f0_hz: float, f1_hz: float, seconds: float = DEMO_SECONDS, rate: int = DEMO_RATE,
          amplitude: float = 0.3) -> Waveform:
    t = _time(seconds, rate)
    return Waveform(amplitude * signal.chirp(t, f0=f0_hz, t1=t[-1], f1=f1_hz, method="logarithmic"), rate)


def white_noise(rng: np.random.Generator, seconds: float = DEMO_SECONDS, rate: int = DEMO_RATE,
                rms: float = 0.1) -> Waveform:
    samples = rng.standard_normal(int(round(seconds * rate)))
    return Waveform(samples * (rms / np.sqrt(np.mean(samples**2))), rate)


def pink_noise(rng: np.random.Generator, seconds: float = DEMO_SECONDS, rate: int = DEMO_RATE,
               rms: float = 0.1) -> Waveform:
    """White noise shaped to a 1/f power spectrum"""
    n = int(round(seconds * rate))
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n)
    shaping = np.ones_like(freqs)
    shaping[1:] = 1.0 / np.sqrt(freqs[1:])
    shaping[0] = 0.0
    samples = np.fft.irfft(spectrum * shaping, n=n)
    return Waveform(samples * (rms / np.sqrt(np.mean(samples**2))), rate)


def exponential_rir(rng: np.random.Generator, rt60: float, rate: int = DEMO_RATE) -> Waveform:
    """Direct path plus a Gaussian tail decaying 60 dB over rt60 seconds, peak-normalized"""
    t = _time(rt60, rate)
    tail = rng.standard_normal(t.size) * np.exp(-6.9078 * t / rt60) * 0.3
    tail[0] = 1.0
    return Waveform(tail / np.max(np.abs(tail)), rate)


def write_demo_assets(data_dir: Path, seed: int = 0) -> DemoAssets:
    root = Path(data_dir) / "demo"
    rng = record_rng(seed)
    assets = DemoAssets(root=root)
    for name, wave in (
        ("tone_440", tone(440.0)),
        ("tone_1000", tone(1000.0)),
        ("chirp_200_3000", chirp(200.0, 3000.0)),
    ):
        assets.clean_files.append(write_wav(root / "clean" / f"{name}.wav", wave))
    for name, wave in (("white", white_noise(rng)), ("pink", pink_noise(rng))):
        assets.noise_files.append(write_wav(root / "noise" / f"{name}.wav", wave))
    for name, rt60 in (("room_small", 0.2), ("room_large", 0.5)):
        assets.rir_files.append(write_wav(root / "rir" / f"{name}.wav", exponential_rir(rng, rt60)))
    logger.info("demo assets written", root=str(root), clean=len(assets.clean_files),
                noise=len(assets.noise_files), rir=len(assets.rir_files))
    return assets


def demo_manifest(assets: DemoAssets, seed: int = 0, split: str = "demo") -> DatasetManifest:
    return plan_manifest(assets.clean_files, assets.noise_files, assets.rir_files,
                         count=DEMO_RECORDS, seed=seed, split=split, sample_rate=DEMO_RATE)


def write_demo_manifest(data_dir: Path, seed: int = 0) -> Path:
    """Demo assets plus a 6-record manifest next to them"""
    assets = write_demo_assets(data_dir, seed)
    return write_manifest(assets.root / MANIFEST_NAME, demo_manifest(assets, seed))
