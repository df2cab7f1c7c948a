"""Objective metrics: SNR, segmental SNR, log-spectral distortion, time-domain MSE"""

import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ehnet.core.exceptions import DegenerateSourceError, EHNetError, InputDataError
from ehnet.core.logging import LoggerMixin, log_execution_time
from ehnet.models.schemas import EvalRecord, EvalReport, IndexEntry, StftConfig
from ehnet.models.tensors import Spectrogram, Waveform
from ehnet.services.dsp_service import stft
from ehnet.utils.wav_io import read_wav

SNR_CAP_DB = 100.0
LSD_FLOOR = 1e-8
SEGMENT_LENGTH = 256
SEGMENT_RANGE_DB = (-10.0, 35.0)
DEFAULT_ALIGN_TOLERANCE = 512

Signal = Union[Waveform, np.ndarray]
Magnitudes = Union[Spectrogram, np.ndarray]


def _samples(x: Signal) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64).reshape(-1)


def _magnitudes(x: Magnitudes) -> np.ndarray:
    return x.magnitudes if isinstance(x, Spectrogram) else np.asarray(x, dtype=np.float64)


def align(reference: Signal, estimate: Signal,
          tolerance: int = DEFAULT_ALIGN_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
    """Trim both signals to their common length; no lag search"""
    ref, est = _samples(reference), _samples(estimate)
    if abs(ref.size - est.size) > tolerance:
        raise InputDataError("length mismatch beyond aligner tolerance",
                             reference=ref.size, estimate=est.size, tolerance=tolerance)
    n = min(ref.size, est.size)
    return ref[:n], est[:n]


def snr_db(reference: Signal, estimate: Signal, tolerance: int = DEFAULT_ALIGN_TOLERANCE) -> float:
    """10 log10(sum ref^2 / sum (ref - est)^2), capped at +100 dB"""
    ref, est = align(reference, estimate, tolerance)
    signal_power = math.fsum(ref**2)
    if signal_power == 0.0:
        raise DegenerateSourceError("reference has zero power")
    residual = math.fsum((ref - est) ** 2)
    if residual == 0.0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * math.log10(signal_power / residual))


def segmental_snr_db(reference: Signal, estimate: Signal, segment: int = SEGMENT_LENGTH,
                     tolerance: int = DEFAULT_ALIGN_TOLERANCE) -> float:
    """Mean of per-segment SNRs, each clipped to [-10, 35] dB"""
    ref, est = align(reference, estimate, tolerance)
    lo, hi = SEGMENT_RANGE_DB
    count = max(1, ref.size // segment)
    values = []
    for idx in range(count):
        window = slice(idx * segment, ref.size if count == 1 else (idx + 1) * segment)
        power = float(np.sum(ref[window] ** 2))
        residual = float(np.sum((ref[window] - est[window]) ** 2))
        if residual == 0.0:
            values.append(hi)
        elif power == 0.0:
            values.append(lo)
        else:
            values.append(min(hi, max(lo, 10.0 * math.log10(power / residual))))
    return math.fsum(values) / len(values)


def snr_improvement(clean: Signal, noisy: Signal, enhanced: Signal) -> float:
    return snr_db(clean, enhanced) - snr_db(clean, noisy)


def lsd(reference: Magnitudes, estimate: Magnitudes) -> float:
    """Frame mean of sqrt(bin mean of (20 log10((ref + 1e-8) / (est + 1e-8)))^2)"""
    ref, est = _magnitudes(reference), _magnitudes(estimate)
    if ref.shape != est.shape:
        raise InputDataError("spectrogram shapes differ", reference=ref.shape, estimate=est.shape)
    log_ratio = 20.0 * np.log10((ref + LSD_FLOOR) / (est + LSD_FLOOR))
    per_frame = np.sqrt(np.mean(log_ratio**2, axis=0))
    return float(np.mean(per_frame))


def time_mse(reference: Signal, estimate: Signal, tolerance: int = DEFAULT_ALIGN_TOLERANCE) -> float:
    ref, est = align(reference, estimate, tolerance)
    return float(np.mean((ref - est) ** 2))


def evaluate_pair(pair_id: str, reference: Waveform, estimate: Waveform, stft_cfg: StftConfig) -> EvalRecord:
    """All metrics for one file; LSD uses the STFT of the aligned signals"""
    tolerance = stft_cfg.fft_size
    ref, est = align(reference, estimate, tolerance)
    ref_wave = Waveform(samples=ref, sample_rate=reference.sample_rate)
    est_wave = Waveform(samples=est, sample_rate=estimate.sample_rate)
    return EvalRecord(
        id=pair_id,
        snr_db=snr_db(ref_wave, est_wave, tolerance),
        segmental_snr_db=segmental_snr_db(ref_wave, est_wave, tolerance=tolerance),
        lsd=lsd(stft(ref_wave, stft_cfg), stft(est_wave, stft_cfg)),
        time_mse=time_mse(ref_wave, est_wave, tolerance),
    )


class EvaluationService(LoggerMixin):
    """Scores enhanced files `<enhanced_dir>/<pair_id>.wav` against the clean side of an index"""

    def __init__(self, stft_cfg: Optional[StftConfig] = None, workers: int = 1):
        super().__init__()
        self.stft_cfg = stft_cfg or StftConfig()
        self.workers = max(1, workers)

    def _score(self, entry: IndexEntry, enhanced_dir: Path) -> Union[EvalRecord, str]:
        enhanced_path = enhanced_dir / f"{entry.pair_id}.wav"
        if not enhanced_path.is_file():
            return f"{entry.pair_id}: missing enhanced file {enhanced_path}"
        try:
            reference = read_wav(entry.clean_path)
            estimate = read_wav(enhanced_path)
            return evaluate_pair(entry.pair_id, reference, estimate, self.stft_cfg)
        except EHNetError as e:
            return f"{entry.pair_id}: {e.message}"

    @log_execution_time("evaluate_corpus")
    def evaluate(self, entries: Sequence[IndexEntry], enhanced_dir: Path) -> EvalReport:
        enhanced_dir = Path(enhanced_dir)
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(lambda e: self._score(e, enhanced_dir), entries))
        else:
            results = [self._score(e, enhanced_dir) for e in entries]

        report = EvalReport()
        for result in results:
            if isinstance(result, EvalRecord):
                report.records.append(result)
            else:
                self.log_warning("evaluation failed", detail=result)
                report.errors.append(result)
        self.log_info("evaluation finished", files=len(report.records), errors=len(report.errors), **report.means)
        return report


def evaluate_corpus(entries: Sequence[IndexEntry], enhanced_dir: Path,
                    stft_cfg: Optional[StftConfig] = None, workers: int = 1) -> EvalReport:
    return EvaluationService(stft_cfg, workers).evaluate(entries, enhanced_dir)


def write_report(report: EvalReport, path: Path) -> Path:
    """Tab-separated per-file rows followed by a `mean` row"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ("snr_db", "segmental_snr_db", "lsd", "time_mse")
    lines: List[str] = ["\t".join(("id",) + columns)]
    for record in report.records:
        lines.append("\t".join([record.id] + [f"{getattr(record, c):.6f}" for c in columns]))
    means = report.means
    lines.append("\t".join(["mean"] + [f"{means[c]:.6f}" for c in columns]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
