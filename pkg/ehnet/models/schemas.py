"""Pydantic schemas - configuration records, manifests, logs and reports"""

import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from ehnet.utils.windows import WindowName, is_cola_pair


class BaseSchema(BaseModel):
    """Base schema configuration"""

    model_config = {
        "validate_default": True,
        "extra": "forbid",
    }


def _split_list(value: Any) -> Any:
    """Accept comma-separated strings from flat config files"""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


# ===================== DSP =====================


class StftConfig(BaseSchema):
    """STFT framing; the default keeps bins 0..255 of a 512-point transform"""

    fft_size: int = Field(default=512, description="FFT size in samples (power of two)")
    hop_size: int = Field(default=256, description="Hop in samples")
    window: WindowName = Field(default="hann", description="Analysis window")
    bins_kept: int = Field(default=256, description="Frequency bins retained (d)")

    @field_validator("fft_size")
    def validate_fft_size(cls, v: int) -> int:
        if v < 2 or v & (v - 1):
            raise ValueError("fft_size must be a power of two")
        return v

    @model_validator(mode="after")
    def validate_framing(self) -> "StftConfig":
        if not 0 < self.hop_size <= self.fft_size:
            raise ValueError("hop_size must satisfy 0 < hop_size <= fft_size")
        if not 1 <= self.bins_kept <= self.fft_size // 2 + 1:
            raise ValueError("bins_kept must lie in [1, fft_size/2 + 1]")
        if not is_cola_pair(self.window, self.fft_size, self.hop_size):
            raise ValueError(
                f"window {self.window!r} with hop {self.hop_size} is not constant-overlap-add"
            )
        return self

    @property
    def total_bins(self) -> int:
        return self.fft_size // 2 + 1


# ===================== Model =====================


class ArchitectureConfig(BaseSchema):
    """Network shape; defaults are the full-scale architecture"""

    d: int = Field(default=256, ge=1, description="Frequency bins of the input spectrogram")
    num_kernels: int = Field(default=256, ge=1, description="Convolution kernels (k)")
    kernel_height: int = Field(default=32, ge=1, description="Kernel height in bins (b)")
    kernel_width: int = Field(default=11, ge=1, description="Kernel width in frames (w)")
    freq_stride: int = Field(default=16, ge=1, description="Stride along frequency")
    hidden_sizes: List[int] = Field(default=[1024, 1024], description="Hidden units per BiLSTM layer")
    feature_scale: float = Field(default=1.0, gt=0, description="Global input/target scale (1.0 = off)")

    @field_validator("hidden_sizes", mode="before")
    def parse_hidden_sizes(cls, v: Any) -> Any:
        return _split_list(v)

    @field_validator("kernel_width")
    def validate_kernel_width(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("kernel width must be odd")
        return v

    @field_validator("hidden_sizes")
    def validate_hidden_sizes(cls, v: List[int]) -> List[int]:
        if not v or any(h < 1 for h in v):
            raise ValueError("hidden_sizes must be a non-empty list of positive sizes")
        return v

    @model_validator(mode="after")
    def validate_shape(self) -> "ArchitectureConfig":
        if self.d < self.kernel_height:
            raise ValueError(f"d = {self.d} is smaller than the kernel height {self.kernel_height}")
        return self

    @property
    def positions(self) -> int:
        """p = floor((d - b) / stride) + 1"""
        return (self.d - self.kernel_height) // self.freq_stride + 1

    @property
    def num_layers(self) -> int:
        return len(self.hidden_sizes)

    @property
    def lstm_input_size(self) -> int:
        return self.positions * self.num_kernels

    @property
    def q(self) -> int:
        return 2 * self.hidden_sizes[-1]

    def parameter_count(self) -> int:
        count = self.num_kernels * self.kernel_height * self.kernel_width
        n_in = self.lstm_input_size
        for hidden in self.hidden_sizes:
            count += 2 * (4 * hidden * n_in + 4 * hidden * hidden + 3 * hidden)
            n_in = 2 * hidden
        return count + self.d * self.q + self.d

    def warnings(self) -> List[str]:
        notes = []
        if (self.d - self.kernel_height) % self.freq_stride:
            notes.append(
                f"stride {self.freq_stride} does not divide d - b = {self.d - self.kernel_height}; "
                f"the last {(self.d - self.kernel_height) % self.freq_stride} bins are never covered"
            )
        return notes

    def describe(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "k": self.num_kernels,
            "kernel": f"{self.kernel_height}x{self.kernel_width}",
            "stride": f"{self.freq_stride}x1",
            "p": self.positions,
            "lstm_input_size": self.lstm_input_size,
            "hidden_sizes": list(self.hidden_sizes),
            "q": self.q,
            "parameters": self.parameter_count(),
        }


# ===================== Training =====================


class TrainConfig(BaseSchema):
    """Training protocol"""

    epochs: int = Field(default=200, ge=1, description="Number of epochs")
    schedule: List[Tuple[int, float]] = Field(
        default=[(0, 1.0), (60, 0.1), (120, 0.01)],
        description="(epoch threshold, step multiplier) pairs",
    )
    crop_length: int = Field(default=256, ge=1, description="Training crop length in frames")
    batch_size: int = Field(default=4, ge=1, description="Utterances per minibatch")
    seed: int = Field(default=0, description="Seed for init, shuffling and cropping")
    patience: int = Field(default=0, ge=0, description="Early-stopping patience in validations (0 = unlimited)")
    val_every: int = Field(default=1, ge=1, description="Validation cadence in epochs")
    rho: float = Field(default=0.95, gt=0.0, lt=1.0, description="AdaDelta decay")
    eps: float = Field(default=1e-6, gt=0.0, description="AdaDelta epsilon")
    workers: int = Field(default=1, ge=1, description="Gradient workers per minibatch")
    precision: str = Field(default="single", description="Model arithmetic: single or double")

    @field_validator("schedule", mode="before")
    def parse_schedule(cls, v: Any) -> Any:
        if isinstance(v, str):
            pairs = []
            for item in _split_list(v):
                epoch, _, multiplier = item.partition(":")
                pairs.append((int(epoch), float(multiplier)))
            return pairs
        return v

    @field_validator("schedule")
    def validate_schedule(cls, v: List[Tuple[int, float]]) -> List[Tuple[int, float]]:
        if not v or v[0][0] != 0:
            raise ValueError("schedule must start at epoch 0")
        thresholds = [epoch for epoch, _ in v]
        if thresholds != sorted(set(thresholds)):
            raise ValueError("schedule thresholds must be strictly increasing")
        if any(m <= 0 or not math.isfinite(m) for _, m in v):
            raise ValueError("schedule multipliers must be positive")
        return v

    @field_validator("precision")
    def validate_precision(cls, v: str) -> str:
        v = v.lower()
        if v not in ("single", "double"):
            raise ValueError("precision must be 'single' or 'double'")
        return v


class PathsConfig(BaseSchema):
    """File locations; relative entries are resolved against the config file"""

    data_dir: Path = Field(default=Path("data"), description="Demo assets and corpora")
    train_index: Optional[Path] = Field(default=None, description="Training corpus index")
    val_index: Optional[Path] = Field(default=None, description="Validation corpus index")
    out_dir: Path = Field(default=Path("runs/default"), description="Checkpoints and training log")


class ExperimentConfig(BaseSchema):
    """Everything a run needs"""

    stft: StftConfig = Field(default_factory=StftConfig)
    model: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @model_validator(mode="after")
    def validate_chain(self) -> "ExperimentConfig":
        if self.model.d != self.stft.bins_kept:
            raise ValueError(
                f"model.d = {self.model.d} does not match stft.bins_kept = {self.stft.bins_kept}"
            )
        if self.train.crop_length < self.model.kernel_width:
            raise ValueError("train.crop_length must be at least model.kernel_width")
        return self


# ===================== Data =====================


class MixSpec(BaseSchema):
    """One synthetic mixture"""

    clean_path: Path = Field(description="Clean speech WAV")
    noise_path: Path = Field(description="Noise WAV")
    rir_path: Optional[Path] = Field(default=None, description="Room impulse response WAV")
    target_snr_db: float = Field(description="Target SNR in dB (+inf disables mixing)")
    seed: int = Field(description="Per-record seed")
    gain_db: float = Field(default=0.0, description="Overall level offset in dB")

    @field_validator("target_snr_db")
    def validate_snr(cls, v: float) -> float:
        if math.isnan(v) or v == -math.inf:
            raise ValueError("target_snr_db must be finite or +inf")
        return v

    @field_validator("gain_db")
    def validate_gain(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("gain_db must be finite")
        return v


class DatasetManifest(BaseSchema):
    """A reproducible synthetic corpus definition"""

    split: str = Field(default="train", description="Split name")
    sample_rate: int = Field(default=16000, gt=0, description="Global sample rate in Hz")
    rng: str = Field(default="philox", description="Counter-based RNG algorithm")
    dry_target: bool = Field(default=False, description="Use the dry source as regression target")
    specs: List[MixSpec] = Field(default_factory=list, description="Records")

    @field_validator("rng")
    def validate_rng(cls, v: str) -> str:
        if v != "philox":
            raise ValueError("only the 'philox' generator is supported")
        return v


class IndexEntry(BaseSchema):
    """One generated (noisy, clean) pair"""

    pair_id: str = Field(description="Pair identifier")
    noisy_path: Path = Field(description="Noisy WAV")
    clean_path: Path = Field(description="Clean target WAV")
    achieved_snr_db: float = Field(description="SNR re-measured from the written files")
    target_snr_db: float = Field(description="Requested SNR")


class CorpusSummary(BaseSchema):
    """Result of corpus generation"""

    split: str
    written: int
    skipped: int
    entries: List[IndexEntry] = Field(default_factory=list)
    index_path: Optional[Path] = None

    def snr_histogram(self, edges: Tuple[float, ...] = (0, 5, 10, 15, 20, 25, 30)) -> Dict[str, int]:
        """Counts of achieved SNR per bin; the last bin is closed"""
        counts = {f"[{lo:g},{hi:g})": 0 for lo, hi in zip(edges[:-1], edges[1:])}
        counts["other"] = 0
        labels = list(counts)
        for entry in self.entries:
            snr = entry.achieved_snr_db
            for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
                if lo <= snr < hi or (i == len(edges) - 2 and snr == hi):
                    counts[labels[i]] += 1
                    break
            else:
                counts["other"] += 1
        return counts


# ===================== Logs and reports =====================


class TrainLogRecord(BaseSchema):
    """One line of the training log"""

    epoch: int
    step: int
    train_loss: float
    val_loss: Optional[float] = None
    lr_multiplier: float
    wall_time_ms: float

    def deterministic_view(self) -> Dict[str, Any]:
        return self.model_dump(exclude={"wall_time_ms"})


class EvalRecord(BaseSchema):
    """Per-file metrics"""

    id: str
    snr_db: float
    segmental_snr_db: float
    lsd: float
    time_mse: float


class EvalReport(BaseSchema):
    """Per-file records plus corpus means"""

    records: List[EvalRecord] = Field(default_factory=list)
    errors: List[str] = Field(default_factory=list)

    @property
    def means(self) -> Dict[str, float]:
        keys = ("snr_db", "segmental_snr_db", "lsd", "time_mse")
        if not self.records:
            return {key: math.nan for key in keys}
        return {key: math.fsum(getattr(r, key) for r in self.records) / len(self.records) for key in keys}

    @property
    def ok(self) -> bool:
        return not self.errors


class TensorCheck(BaseSchema):
    """Gradient-check outcome for one tensor"""

    name: str
    max_rel_error: float
    checked: int
    resampled: int = 0
    passed: bool


class GradCheckReport(BaseSchema):
    """Outcome of a finite-difference gradient check"""

    trials: int
    tolerance: float
    step: float
    precision: str
    tensors: List[TensorCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.tensors) and all(t.passed for t in self.tensors)

    def failures(self) -> List[str]:
        return [t.name for t in self.tensors if not t.passed]
