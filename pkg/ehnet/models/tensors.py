"""Numpy-backed containers for signals, spectrograms, parameters and gradients"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ehnet.core.exceptions import ConfigurationError, InputDataError
from ehnet.models.schemas import ArchitectureConfig, StftConfig

# ===================== Signals =====================


@dataclass
class Waveform:
    """Mono PCM audio as float64 samples nominally in [-1, 1]"""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise InputDataError("sample_rate must be positive", sample_rate=self.sample_rate)
        if self.samples.size < 1:
            raise InputDataError("waveform is empty")
        if not np.all(np.isfinite(self.samples)):
            raise InputDataError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def power(self) -> float:
        """Mean squared amplitude"""
        return float(np.mean(self.samples**2))


@dataclass
class Spectrogram:
    """Magnitude/phase pair, d bins x t frames

    residual holds the complex bins beyond bins_kept (the Nyquist bin with the
    default config) so synthesis of an untouched spectrogram is exact.
    """

    magnitudes: np.ndarray
    phases: np.ndarray
    config: StftConfig
    residual: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.magnitudes.ndim != 2 or self.magnitudes.shape != self.phases.shape:
            raise InputDataError(
                "magnitudes and phases must be matrices of the same shape",
                magnitudes=self.magnitudes.shape, phases=self.phases.shape,
            )
        if self.magnitudes.shape[0] != self.config.bins_kept:
            raise InputDataError("bin count does not match the STFT config",
                                 rows=self.magnitudes.shape[0], bins_kept=self.config.bins_kept)
        if self.frames < 1:
            raise InputDataError("spectrogram has no frames")
        if not np.all(np.isfinite(self.magnitudes)) or np.any(self.magnitudes < 0):
            raise InputDataError("magnitudes must be finite and nonnegative")
        if self.residual is not None:
            expected = (self.config.total_bins - self.config.bins_kept, self.frames)
            if self.residual.shape != expected:
                raise InputDataError("residual bins have the wrong shape",
                                     residual=self.residual.shape, expected=expected)

    @property
    def d(self) -> int:
        return int(self.magnitudes.shape[0])

    @property
    def frames(self) -> int:
        return int(self.magnitudes.shape[1])

    def complex_bins(self) -> np.ndarray:
        """Full one-sided spectrum (fft_size/2 + 1 bins x t)"""
        kept = self.magnitudes * np.exp(1j * self.phases)
        tail_rows = self.config.total_bins - self.config.bins_kept
        if self.residual is not None:
            tail = self.residual
        else:
            tail = np.zeros((tail_rows, self.frames), dtype=np.complex128)
        return np.vstack([kept, tail])


# ===================== Network parameters =====================


@dataclass
class FeatureTensor:
    """Post-ReLU feature maps, k x p x t"""

    values: np.ndarray

    @property
    def shape(self) -> Tuple[int, int, int]:
        k, p, t = self.values.shape
        return k, p, t


@dataclass
class ConvParams:
    """k kernels of size b x w, cross-correlated with stride freq_stride along frequency"""

    kernels: np.ndarray
    freq_stride: int

    def __post_init__(self) -> None:
        if self.kernels.ndim != 3:
            raise ConfigurationError("conv kernels must have shape (k, b, w)", shape=self.kernels.shape)
        if self.kernel_width % 2 == 0:
            raise ConfigurationError("kernel width must be odd", kernel_width=self.kernel_width)
        if self.freq_stride < 1:
            raise ConfigurationError("freq_stride must be at least 1")

    @property
    def count(self) -> int:
        return int(self.kernels.shape[0])

    @property
    def kernel_height(self) -> int:
        return int(self.kernels.shape[1])

    @property
    def kernel_width(self) -> int:
        return int(self.kernels.shape[2])


GATE_INPUT = ("W_xi", "W_xf", "W_xc", "W_xo")
GATE_RECURRENT = ("W_hi", "W_hf", "W_hc", "W_ho")
PEEPHOLES = ("w_ci", "w_cf", "w_co")
DIRECTION_TENSORS = GATE_INPUT + GATE_RECURRENT + PEEPHOLES


@dataclass
class LstmDirectionParams:
    """One scan direction of a peephole LSTM layer; peepholes are diagonal"""

    W_xi: np.ndarray
    W_xf: np.ndarray
    W_xc: np.ndarray
    W_xo: np.ndarray
    W_hi: np.ndarray
    W_hf: np.ndarray
    W_hc: np.ndarray
    W_ho: np.ndarray
    w_ci: np.ndarray
    w_cf: np.ndarray
    w_co: np.ndarray

    def __post_init__(self) -> None:
        hidden, n_in = self.W_xi.shape
        for name in GATE_INPUT:
            self._expect(name, (hidden, n_in))
        for name in GATE_RECURRENT:
            self._expect(name, (hidden, hidden))
        for name in PEEPHOLES:
            self._expect(name, (hidden,))

    def _expect(self, name: str, shape: Tuple[int, ...]) -> None:
        actual = getattr(self, name).shape
        if actual != shape:
            raise ConfigurationError("LSTM tensor shape mismatch", tensor=name, shape=actual, expected=shape)

    @property
    def hidden_size(self) -> int:
        return int(self.W_xi.shape[0])

    @property
    def input_size(self) -> int:
        return int(self.W_xi.shape[1])

    def tensors(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in DIRECTION_TENSORS:
            yield name, getattr(self, name)


@dataclass
class LstmLayerParams:
    """Bidirectional layer: forward and backward scan weights"""

    fwd: LstmDirectionParams
    bwd: LstmDirectionParams

    def __post_init__(self) -> None:
        if (self.fwd.hidden_size, self.fwd.input_size) != (self.bwd.hidden_size, self.bwd.input_size):
            raise ConfigurationError("forward and backward directions disagree in shape")

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    @property
    def input_size(self) -> int:
        return self.fwd.input_size

    @property
    def output_size(self) -> int:
        return 2 * self.hidden_size


@dataclass
class OutputParams:
    """Truncated linear regression layer"""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ConfigurationError("output layer shapes are inconsistent", W=self.W.shape, b=self.b.shape)


@dataclass
class ModelParams:
    """All trainable tensors plus the architecture they were built for"""

    conv: ConvParams
    lstm_layers: List[LstmLayerParams]
    output: OutputParams
    hyper: ArchitectureConfig

    def __post_init__(self) -> None:
        self.validate_chain()

    def validate_chain(self) -> None:
        """Layer-to-layer dimensions must chain: p*k -> 2h_1 -> ... -> q -> d"""
        h = self.hyper
        problems = []
        if self.conv.kernels.shape != (h.num_kernels, h.kernel_height, h.kernel_width):
            problems.append(f"conv kernels {self.conv.kernels.shape}")
        if self.conv.freq_stride != h.freq_stride:
            problems.append(f"conv stride {self.conv.freq_stride}")
        if len(self.lstm_layers) != h.num_layers:
            problems.append(f"{len(self.lstm_layers)} LSTM layers for {h.num_layers} configured")
        n_in = h.lstm_input_size
        for idx, (layer, hidden) in enumerate(zip(self.lstm_layers, h.hidden_sizes)):
            if layer.input_size != n_in or layer.hidden_size != hidden:
                problems.append(f"lstm.{idx} is {layer.input_size}->{layer.hidden_size}, "
                                f"expected {n_in}->{hidden}")
            n_in = 2 * hidden
        if self.output.W.shape != (h.d, h.q):
            problems.append(f"output.W {self.output.W.shape}, expected {(h.d, h.q)}")
        if problems:
            raise ConfigurationError("dimension chain mismatch", problems=problems)

    @property
    def dtype(self) -> np.dtype:
        return self.conv.kernels.dtype

    def named_tensors(self) -> Dict[str, np.ndarray]:
        """Name -> array references, in a fixed order"""
        tensors: Dict[str, np.ndarray] = {"conv.kernels": self.conv.kernels}
        for idx, layer in enumerate(self.lstm_layers):
            for direction, params in (("fwd", layer.fwd), ("bwd", layer.bwd)):
                for name, array in params.tensors():
                    tensors[f"lstm.{idx}.{direction}.{name}"] = array
        tensors["output.W"] = self.output.W
        tensors["output.b"] = self.output.b
        return tensors

    @classmethod
    def from_named(cls, hyper: ArchitectureConfig, tensors: Dict[str, np.ndarray]) -> "ModelParams":
        try:
            conv = ConvParams(kernels=tensors["conv.kernels"], freq_stride=hyper.freq_stride)
            layers = []
            for idx in range(hyper.num_layers):
                directions = {
                    direction: LstmDirectionParams(
                        **{name: tensors[f"lstm.{idx}.{direction}.{name}"] for name in DIRECTION_TENSORS}
                    )
                    for direction in ("fwd", "bwd")
                }
                layers.append(LstmLayerParams(**directions))
            output = OutputParams(W=tensors["output.W"], b=tensors["output.b"])
        except KeyError as e:
            raise ConfigurationError(f"missing tensor {e.args[0]}") from None
        return cls(conv=conv, lstm_layers=layers, output=output, hyper=hyper)

    def copy(self) -> "ModelParams":
        return ModelParams.from_named(self.hyper, {k: v.copy() for k, v in self.named_tensors().items()})

    def astype(self, dtype: np.dtype) -> "ModelParams":
        return ModelParams.from_named(
            self.hyper, {k: v.astype(dtype, copy=True) for k, v in self.named_tensors().items()}
        )

    def parameter_count(self) -> int:
        return sum(int(v.size) for v in self.named_tensors().values())


@dataclass
class GradientSet:
    """Partial derivatives, keyed and shaped like ModelParams.named_tensors()"""

    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "GradientSet":
        return cls({k: np.zeros_like(v) for k, v in params.named_tensors().items()})

    def check_congruent(self, params: ModelParams) -> None:
        reference = params.named_tensors()
        if list(reference) != list(self.tensors):
            raise InputDataError("gradient names do not match the parameters")
        for name, array in reference.items():
            if self.tensors[name].shape != array.shape:
                raise InputDataError("gradient shape mismatch", tensor=name)

    def add_(self, other: "GradientSet", scale: float = 1.0) -> "GradientSet":
        for name, array in other.tensors.items():
            self.tensors[name] += scale * array
        return self

    def scale_(self, factor: float) -> "GradientSet":
        for array in self.tensors.values():
            array *= factor
        return self

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(v))) for v in self.tensors.values())

    def non_finite(self) -> List[str]:
        return [name for name, v in self.tensors.items() if not np.all(np.isfinite(v))]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]
