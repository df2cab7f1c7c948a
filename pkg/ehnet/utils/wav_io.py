"""Mono WAV reading and writing through soundfile"""

from pathlib import Path
from typing import Optional

import numpy as np
import soundfile as sf

from ehnet.core.exceptions import InputDataError
from ehnet.models.tensors import Waveform

SUBTYPES = {16: "PCM_16", 24: "PCM_24"}


def read_wav(path: Path, expected_rate: Optional[int] = None) -> Waveform:
    """Read a mono WAV; 16/24-bit PCM and float files come back as float64 in [-1, 1]"""
    path = Path(path)
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError, sf.SoundFileError) as e:
        raise InputDataError(f"cannot read WAV file: {e}", path=str(path)) from e
    if data.shape[1] != 1:
        raise InputDataError("multichannel audio is not supported", path=str(path), channels=data.shape[1])
    if expected_rate is not None and rate != expected_rate:
        raise InputDataError("sample rate mismatch", path=str(path), rate=rate, expected=expected_rate)
    return Waveform(samples=data[:, 0], sample_rate=int(rate))


def write_wav(path: Path, wave: Waveform, bits: int = 16) -> Path:
    """Write PCM; samples outside [-1, 1] are clipped"""
    if bits not in SUBTYPES:
        raise InputDataError("only 16- and 24-bit PCM are supported", bits=bits)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples = np.clip(wave.samples, -1.0, 1.0)
    try:
        sf.write(str(path), samples, wave.sample_rate, subtype=SUBTYPES[bits], format="WAV")
    except (RuntimeError, OSError, sf.SoundFileError) as e:
        raise InputDataError(f"cannot write WAV file: {e}", path=str(path)) from e
    return path

