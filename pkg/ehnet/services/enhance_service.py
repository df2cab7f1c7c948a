"""Inference pipeline: STFT, network prediction, resynthesis with the noisy phase"""

from pathlib import Path
from typing import Optional

import numpy as np

from ehnet.core.exceptions import ConfigurationError
from ehnet.core.logging import LoggerMixin, log_execution_time
from ehnet.models.schemas import StftConfig
from ehnet.models.tensors import ModelParams, Waveform
from ehnet.services.dsp_service import reconstruct_with_phase, stft
from ehnet.services.model_service import forward
from ehnet.utils.wav_io import read_wav, write_wav

SAMPLE_RATE = 16000


def enhance_waveform(params: ModelParams, wave: Waveform, stft_cfg: StftConfig) -> Waveform:
    if params.hyper.d != stft_cfg.bins_kept:
        raise ConfigurationError("model input size does not match the STFT bins",
                                 d=params.hyper.d, bins_kept=stft_cfg.bins_kept)
    noisy = stft(wave, stft_cfg)
    scale = params.hyper.feature_scale
    predicted = forward(noisy.magnitudes * scale, params).astype(np.float64) / scale
    return reconstruct_with_phase(predicted, noisy, sample_rate=wave.sample_rate)


class Enhancer(LoggerMixin):
    """Enhances WAV files with one loaded model"""

    def __init__(self, params: ModelParams, stft_cfg: StftConfig, allow_any_rate: bool = False):
        super().__init__()
        self.params = params
        self.stft_cfg = stft_cfg
        self.allow_any_rate = allow_any_rate

    @log_execution_time("enhance_file")
    def enhance_file(self, in_path: Path, out_path: Path) -> Waveform:
        expected: Optional[int] = None if self.allow_any_rate else SAMPLE_RATE
        wave = read_wav(in_path, expected_rate=expected)
        enhanced = enhance_waveform(self.params, wave, self.stft_cfg)
        write_wav(out_path, enhanced)
        self.log_info("enhanced", source=str(in_path), target=str(out_path),
                      input_seconds=round(wave.duration, 3), output_seconds=round(enhanced.duration, 3))
        return enhanced
