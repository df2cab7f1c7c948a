"""Synthetic corpus generation: reverberation, SNR-controlled mixing, manifests"""

import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal

from ehnet.core.exceptions import CorpusAbortError, DegenerateSourceError, EHNetError, InputDataError
from ehnet.core.logging import LoggerMixin, log_execution_time
from ehnet.models.schemas import CorpusSummary, DatasetManifest, IndexEntry, MixSpec
from ehnet.models.tensors import Waveform
from ehnet.services.metrics_service import snr_db
from ehnet.utils.manifest_io import write_index
from ehnet.utils.wav_io import read_wav, write_wav

SKIP_LIMIT = 0.10
PEAK_LIMIT = 0.99
INDEX_NAME = "index.tsv"


def record_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a record seed"""
    return np.random.Generator(np.random.Philox(seed))


def fit_noise(noise: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    """Random crop of a longer noise, or a loop from a random offset of a shorter one"""
    if noise.size >= length:
        start = int(rng.integers(0, noise.size - length + 1))
        return noise[start:start + length]
    offset = int(rng.integers(0, noise.size))
    return noise[(offset + np.arange(length)) % noise.size]


def mix_at_snr(
    clean: Waveform,
    noise: Waveform,
    snr_db_target: float,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Waveform, Waveform]:
    """noisy = clean + alpha * noise with 10 log10(P_clean / P_scaled_noise) = target

    Power is the mean square over the whole clean utterance. +inf disables mixing.
    """
    if clean.sample_rate != noise.sample_rate:
        raise InputDataError("sample rates differ", clean=clean.sample_rate, noise=noise.sample_rate)
    clean_power = clean.power()
    if clean_power == 0.0:
        raise DegenerateSourceError("degenerate source", source="clean")
    if math.isinf(snr_db_target) and snr_db_target > 0:
        return (Waveform(samples=clean.samples.copy(), sample_rate=clean.sample_rate),
                Waveform(samples=np.zeros(len(clean)), sample_rate=clean.sample_rate))

    rng = rng if rng is not None else record_rng(0)
    segment = fit_noise(noise.samples, len(clean), rng)
    noise_power = float(np.mean(segment**2))
    if noise_power == 0.0:
        raise DegenerateSourceError("degenerate source", source="noise")
    alpha = math.sqrt(clean_power / (noise_power * 10.0 ** (snr_db_target / 10.0)))
    scaled = alpha * segment
    return (Waveform(samples=clean.samples + scaled, sample_rate=clean.sample_rate),
            Waveform(samples=scaled, sample_rate=clean.sample_rate))


def apply_rir(clean: Waveform, rir: Union[Waveform, np.ndarray]) -> Waveform:
    """Linear convolution truncated to the clean length, rescaled to the clean RMS"""
    if isinstance(rir, Waveform):
        if rir.sample_rate != clean.sample_rate:
            raise InputDataError("sample rates differ", clean=clean.sample_rate, rir=rir.sample_rate)
        taps = rir.samples
    else:
        taps = np.asarray(rir, dtype=np.float64).reshape(-1)
    if taps.size == 0:
        raise DegenerateSourceError("empty room impulse response")

    wet = signal.convolve(clean.samples, taps, mode="full")[: len(clean)]
    clean_rms = math.sqrt(clean.power())
    wet_rms = math.sqrt(float(np.mean(wet**2)))
    if clean_rms == 0.0:
        raise DegenerateSourceError("degenerate source", source="clean")
    if wet_rms == 0.0:
        raise DegenerateSourceError("room impulse response silences the source")
    return Waveform(samples=wet * (clean_rms / wet_rms), sample_rate=clean.sample_rate)


# ===================== Manifests =====================


def _names(paths: Iterable[Path]) -> set:
    return {Path(p).name for p in paths}


def ensure_disjoint_noise(noise_files: Iterable[Path], reference: Union[DatasetManifest, Iterable[Path]]) -> None:
    """Reject noise files whose names appear in the reference (training) noise list"""
    if isinstance(reference, DatasetManifest):
        reference = [spec.noise_path for spec in reference.specs]
    overlap = sorted(_names(noise_files) & _names(reference))
    if overlap:
        raise InputDataError("noise files overlap the training noise list", files=overlap)


def plan_manifest(
    clean_files: Sequence[Path],
    noise_files: Sequence[Path],
    rir_files: Sequence[Path] = (),
    count: int = 1,
    seed: int = 0,
    split: str = "train",
    snr_range: Tuple[float, float] = (0.0, 30.0),
    forbidden_noise: Optional[Iterable[Path]] = None,
    sample_rate: int = 16000,
    dry_target: bool = False,
) -> DatasetManifest:
    """Seeded random pairing of sources with SNRs drawn uniformly from snr_range"""
    if not clean_files or not noise_files:
        raise InputDataError("clean and noise file lists must be non-empty")
    if count < 1:
        raise InputDataError("count must be positive", count=count)
    if forbidden_noise is not None:
        ensure_disjoint_noise(noise_files, forbidden_noise)
    lo, hi = snr_range
    rng = record_rng(seed)
    specs = []
    for _ in range(count):
        clean = clean_files[int(rng.integers(0, len(clean_files)))]
        noise = noise_files[int(rng.integers(0, len(noise_files)))]
        rir = rir_files[int(rng.integers(0, len(rir_files)))] if rir_files else None
        specs.append(MixSpec(
            clean_path=Path(clean),
            noise_path=Path(noise),
            rir_path=Path(rir) if rir is not None else None,
            target_snr_db=float(rng.uniform(lo, hi)),
            seed=int(rng.integers(0, 2**31 - 1)),
        ))
    return DatasetManifest(split=split, sample_rate=sample_rate, dry_target=dry_target, specs=specs)


# ===================== Corpus generation =====================


class CorpusGenerator(LoggerMixin):
    """Renders a manifest into paired noisy/clean WAV files plus an index"""

    def __init__(self, out_dir: Path, workers: int = 1, bits: int = 16):
        super().__init__()
        self.out_dir = Path(out_dir)
        self.workers = max(1, workers)
        self.bits = bits

    def pair_id(self, manifest: DatasetManifest, position: int) -> str:
        return f"{manifest.split}_{position:05d}"

    def render(self, manifest: DatasetManifest, spec: MixSpec) -> Tuple[Waveform, Waveform]:
        """(noisy, clean target) for one record, before writing"""
        noisy, target, _ = self._render(manifest, spec)
        return noisy, target

    def _render(self, manifest: DatasetManifest, spec: MixSpec) -> Tuple[Waveform, Waveform, Waveform]:
        """noisy, target and the source the noise was scaled against, all with gain applied"""
        rate = manifest.sample_rate
        rng = record_rng(spec.seed)
        clean = read_wav(spec.clean_path, expected_rate=rate)
        noise = read_wav(spec.noise_path, expected_rate=rate)
        source = clean
        if spec.rir_path is not None:
            source = apply_rir(clean, read_wav(spec.rir_path, expected_rate=rate))
        target = clean if manifest.dry_target else source
        noisy, _ = mix_at_snr(source, noise, spec.target_snr_db, rng)

        gain = 10.0 ** (spec.gain_db / 20.0)
        noisy_samples = noisy.samples * gain
        target_samples = target.samples * gain
        source_samples = source.samples * gain
        peak = max(float(np.max(np.abs(noisy_samples))), float(np.max(np.abs(target_samples))))
        if peak > PEAK_LIMIT:
            self.log_warning("joint peak renormalization", clean=str(spec.clean_path), peak=peak)
            noisy_samples = noisy_samples * (PEAK_LIMIT / peak)
            target_samples = target_samples * (PEAK_LIMIT / peak)
            source_samples = source_samples * (PEAK_LIMIT / peak)
        return Waveform(noisy_samples, rate), Waveform(target_samples, rate), Waveform(source_samples, rate)

    def _process(self, manifest: DatasetManifest, position: int, spec: MixSpec) -> Optional[IndexEntry]:
        pair_id = self.pair_id(manifest, position)
        try:
            noisy, target, source = self._render(manifest, spec)
            noisy_path = write_wav(self.out_dir / "noisy" / f"{pair_id}.wav", noisy, self.bits)
            clean_path = write_wav(self.out_dir / "clean" / f"{pair_id}.wav", target, self.bits)
            # the noise was scaled against the source, which differs from a dry target under reverb
            reference = source if manifest.dry_target else read_wav(clean_path)
            achieved = snr_db(reference, read_wav(noisy_path))
        except EHNetError as e:
            self.log_warning("skipping manifest record", pair_id=pair_id, reason=e.message, context=e.context)
            return None
        return IndexEntry(pair_id=pair_id, noisy_path=noisy_path, clean_path=clean_path,
                          achieved_snr_db=achieved, target_snr_db=spec.target_snr_db)

    @log_execution_time("generate_corpus")
    def generate(self, manifest: DatasetManifest) -> CorpusSummary:
        if not manifest.specs:
            raise InputDataError("empty manifest", split=manifest.split)
        jobs = list(enumerate(manifest.specs))
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(lambda job: self._process(manifest, *job), jobs))
        else:
            results = [self._process(manifest, *job) for job in jobs]

        entries: List[IndexEntry] = [entry for entry in results if entry is not None]
        skipped = len(results) - len(entries)
        if skipped > SKIP_LIMIT * len(results):
            self.log_error("corpus generation aborted", skipped=skipped, total=len(results))
            raise CorpusAbortError("too many manifest records skipped", skipped=skipped, total=len(results))

        index_path = write_index(self.out_dir / INDEX_NAME, entries, header={
            "split": manifest.split,
            "sample_rate": str(manifest.sample_rate),
            "rng": manifest.rng,
            "dry_target": str(manifest.dry_target).lower(),
        })
        summary = CorpusSummary(split=manifest.split, written=len(entries), skipped=skipped,
                                entries=entries, index_path=index_path)
        self.log_info("corpus written", split=manifest.split, written=len(entries), skipped=skipped,
                      index=str(index_path))
        return summary


def generate_corpus(manifest: DatasetManifest, out_dir: Path, workers: int = 1) -> CorpusSummary:
    return CorpusGenerator(out_dir, workers).generate(manifest)
