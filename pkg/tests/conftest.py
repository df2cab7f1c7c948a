"""Shared fixtures: tiny architectures, seeded generators, synthetic audio"""

from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from ehnet.core.config import reload_settings
from ehnet.models.schemas import ArchitectureConfig, StftConfig
from ehnet.models.tensors import Waveform
from ehnet.services.gradcheck_service import tiny_architecture
from ehnet.utils.wav_io import write_wav


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch: pytest.MonkeyPatch, tmp_path: Path):
    """Keep EHNET_* variables and .env files of the host out of every test"""
    for name in ("EHNET_CONFIG", "EHNET_WORKERS", "EHNET_LOG_LEVEL", "EHNET_LOG_FORMAT", "EHNET_LOG_FILE_PATH"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    reload_settings()
    yield
    reload_settings()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.Philox(1234))


@pytest.fixture
def tiny_arch() -> ArchitectureConfig:
    return tiny_architecture()


@pytest.fixture
def tiny_stft() -> StftConfig:
    """16-point frames, 8 kept bins: matches tiny_arch.d"""
    return StftConfig(fft_size=16, hop_size=8, window="hann", bins_kept=8)


@pytest.fixture
def default_stft() -> StftConfig:
    return StftConfig()


@pytest.fixture
def random_wave(rng: np.random.Generator) -> Callable[..., Waveform]:
    def make(samples: int = 4096, rate: int = 16000, scale: float = 0.3) -> Waveform:
        return Waveform(samples=scale * rng.uniform(-1.0, 1.0, size=samples), sample_rate=rate)

    return make


@pytest.fixture
def wav_file(tmp_path: Path, random_wave: Callable[..., Waveform]) -> Callable[..., Path]:
    def make(name: str, samples: int = 8000, rate: int = 16000, bits: int = 16) -> Path:
        return write_wav(tmp_path / name, random_wave(samples, rate), bits=bits)

    return make
