"""Forward pass: strided conv + ReLU, feature stacking, deep peephole BiLSTM, truncated linear output"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ehnet.core.exceptions import InputDataError, NumericError
from ehnet.core.logging import get_logger
from ehnet.models.schemas import ArchitectureConfig
from ehnet.models.tensors import (
    ConvParams,
    FeatureTensor,
    LstmDirectionParams,
    LstmLayerParams,
    ModelParams,
    OutputParams,
)

logger = get_logger(__name__)

CELL_CLIP = 50.0


# ===================== Convolutional component =====================


def pad_time(x: np.ndarray, w: int) -> np.ndarray:
    """Zero-pad floor(w/2) frames on both sides so a width-w kernel preserves t"""
    if w % 2 == 0:
        raise InputDataError("kernel width must be odd", kernel_width=w)
    half = w // 2
    return np.pad(x, ((0, 0), (half, half)))


def _patches(x_padded: np.ndarray, b: int, w: int, stride: int) -> np.ndarray:
    """View of shape (p, t, b, w): patch[u, v] = x_padded[u*stride : u*stride+b, v : v+w]"""
    return sliding_window_view(x_padded, (b, w))[::stride]


def conv_pre_activation(x_mag: np.ndarray, cp: ConvParams) -> Tuple[np.ndarray, np.ndarray]:
    """Cross-correlation without kernel flip; returns (pre-activation k x p x t, patch view)"""
    d = x_mag.shape[0]
    if d < cp.kernel_height:
        raise InputDataError("input has fewer bins than the kernel height", d=d, b=cp.kernel_height)
    patches = _patches(pad_time(x_mag, cp.kernel_width), cp.kernel_height, cp.kernel_width, cp.freq_stride)
    pre = np.tensordot(cp.kernels, patches, axes=([1, 2], [2, 3]))
    return pre, patches


def conv_forward(x_mag: np.ndarray, cp: ConvParams) -> FeatureTensor:
    """h_z(x) = max(x * z, 0) for every kernel; output k x p x t"""
    pre, _ = conv_pre_activation(np.asarray(x_mag), cp)
    return FeatureTensor(values=np.maximum(pre, 0))


def stack_features(f: FeatureTensor) -> np.ndarray:
    """Vertical concatenation of the k maps: row j*p + r holds map j, position r"""
    k, p, t = f.shape
    return f.values.reshape(k * p, t)


# ===================== Recurrent component =====================


def lstm_cell_step(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    params: LstmDirectionParams,
) -> Tuple[np.ndarray, np.ndarray]:
    """One peephole LSTM step without biases"""
    i = expit(params.W_xi @ x_t + params.W_hi @ h_prev + params.w_ci * c_prev)
    f = expit(params.W_xf @ x_t + params.W_hf @ h_prev + params.w_cf * c_prev)
    c = f * c_prev + i * np.tanh(params.W_xc @ x_t + params.W_hc @ h_prev)
    c = np.clip(c, -CELL_CLIP, CELL_CLIP)
    o = expit(params.W_xo @ x_t + params.W_ho @ h_prev + params.w_co * c)
    h = o * np.tanh(c)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericError("numeric overflow in cell")
    return h, c


@dataclass
class ScanCache:
    """Per-step intermediates of one direction, columns indexed in scan order"""

    inputs: np.ndarray
    h: np.ndarray  # hidden x (T + 1), column 0 is the zero initial state
    c: np.ndarray  # hidden x (T + 1)
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray
    clip_mask: np.ndarray  # 1 where the cell state was inside the clip range


def scan_direction(inputs: np.ndarray, params: LstmDirectionParams) -> ScanCache:
    """Run the cell over the columns of inputs in order, from a zero state"""
    hidden = params.hidden_size
    steps = inputs.shape[1]
    dtype = np.result_type(inputs, params.W_xi)

    # input projections for every step at once
    proj_i = params.W_xi @ inputs
    proj_f = params.W_xf @ inputs
    proj_c = params.W_xc @ inputs
    proj_o = params.W_xo @ inputs

    h = np.zeros((hidden, steps + 1), dtype=dtype)
    c = np.zeros((hidden, steps + 1), dtype=dtype)
    gates = {name: np.empty((hidden, steps), dtype=dtype) for name in ("i", "f", "g", "o", "tanh_c")}
    clip_mask = np.ones((hidden, steps), dtype=dtype)
    clipped = 0

    for t in range(steps):
        h_prev, c_prev = h[:, t], c[:, t]
        i = expit(proj_i[:, t] + params.W_hi @ h_prev + params.w_ci * c_prev)
        f = expit(proj_f[:, t] + params.W_hf @ h_prev + params.w_cf * c_prev)
        g = np.tanh(proj_c[:, t] + params.W_hc @ h_prev)
        c_raw = f * c_prev + i * g
        outside = np.abs(c_raw) > CELL_CLIP
        if outside.any():
            clipped += int(outside.sum())
            clip_mask[outside, t] = 0
            c_raw = np.clip(c_raw, -CELL_CLIP, CELL_CLIP)
        o = expit(proj_o[:, t] + params.W_ho @ h_prev + params.w_co * c_raw)
        tanh_c = np.tanh(c_raw)
        h[:, t + 1] = o * tanh_c
        c[:, t + 1] = c_raw
        gates["i"][:, t], gates["f"][:, t], gates["g"][:, t] = i, f, g
        gates["o"][:, t], gates["tanh_c"][:, t] = o, tanh_c

    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericError("numeric overflow in cell")
    if clipped:
        logger.debug("cell state clipped", entries=clipped, limit=CELL_CLIP)
    return ScanCache(inputs=inputs, h=h, c=c, clip_mask=clip_mask, **gates)


@dataclass
class LayerCache:
    fwd: ScanCache
    bwd: ScanCache  # built on the time-reversed input


def bilstm_layer(inputs: np.ndarray, layer: LstmLayerParams) -> Tuple[np.ndarray, LayerCache]:
    """[forward scan ; time-reversed backward scan], 2*hidden x T"""
    if inputs.shape[0] != layer.input_size:
        raise InputDataError("LSTM input size mismatch", rows=inputs.shape[0], expected=layer.input_size)
    fwd = scan_direction(inputs, layer.fwd)
    bwd = scan_direction(inputs[:, ::-1], layer.bwd)
    out = np.vstack([fwd.h[:, 1:], bwd.h[:, 1:][:, ::-1]])
    return out, LayerCache(fwd=fwd, bwd=bwd)


def bilstm_forward(H: np.ndarray, layers: List[LstmLayerParams]) -> np.ndarray:
    """Deep BiLSTM; returns the last layer's concatenated hidden states (q x t)"""
    out, _ = _bilstm_with_cache(H, layers)
    return out


def _bilstm_with_cache(H: np.ndarray, layers: List[LstmLayerParams]) -> Tuple[np.ndarray, List[LayerCache]]:
    if H.ndim != 2 or H.shape[1] < 1:
        raise InputDataError("BiLSTM input must be a matrix with at least one column")
    caches = []
    out = H
    for layer in layers:
        out, cache = bilstm_layer(out, layer)
        caches.append(cache)
    return out, caches


# ===================== Output component =====================


def output_pre_activation(Htilde: np.ndarray, op: OutputParams) -> np.ndarray:
    if Htilde.shape[0] != op.W.shape[1]:
        raise InputDataError("output layer input size mismatch", rows=Htilde.shape[0], expected=op.W.shape[1])
    return op.W @ Htilde + op.b[:, np.newaxis]


def output_forward(Htilde: np.ndarray, op: OutputParams) -> np.ndarray:
    """y_t = max(0, W H_t + b)"""
    return np.maximum(output_pre_activation(Htilde, op), 0)


# ===================== Whole network =====================


@dataclass
class ForwardCache:
    """Everything backward() needs"""

    x: np.ndarray
    patches: np.ndarray
    conv_pre: np.ndarray
    stacked: np.ndarray
    layers: List[LayerCache]
    htilde: np.ndarray
    out_pre: np.ndarray
    prediction: np.ndarray
    params: ModelParams = field(repr=False)


def forward(x_mag: np.ndarray, m: ModelParams) -> np.ndarray:
    """Predict a d x t clean magnitude spectrogram (inference mode, nothing cached)"""
    x = _check_input(x_mag, m)
    stacked = stack_features(conv_forward(x, m.conv))
    return output_forward(bilstm_forward(stacked, m.lstm_layers), m.output)


def _check_input(x_mag: np.ndarray, m: ModelParams) -> np.ndarray:
    x = np.asarray(x_mag, dtype=m.dtype)
    if x.ndim != 2 or x.shape[0] != m.hyper.d:
        raise InputDataError("input must be a d x t matrix", shape=x.shape, d=m.hyper.d)
    if x.shape[1] < 1:
        raise InputDataError("input has no frames")
    return x


def forward_with_cache(x_mag: np.ndarray, m: ModelParams) -> Tuple[np.ndarray, ForwardCache]:
    """Training-mode forward pass that keeps every intermediate"""
    x = _check_input(x_mag, m)
    conv_pre, patches = conv_pre_activation(x, m.conv)
    stacked = stack_features(FeatureTensor(values=np.maximum(conv_pre, 0)))
    htilde, layers = _bilstm_with_cache(stacked, m.lstm_layers)
    out_pre = output_pre_activation(htilde, m.output)
    prediction = np.maximum(out_pre, 0)
    cache = ForwardCache(
        x=x, patches=patches, conv_pre=conv_pre, stacked=stacked, layers=layers,
        htilde=htilde, out_pre=out_pre, prediction=prediction, params=m,
    )
    return prediction, cache


# ===================== Initialization =====================


def _glorot(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int,
            dtype: np.dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _init_direction(rng: np.random.Generator, n_in: int, hidden: int, dtype: np.dtype) -> LstmDirectionParams:
    tensors = {}
    for name in ("W_xi", "W_xf", "W_xc", "W_xo"):
        tensors[name] = _glorot(rng, (hidden, n_in), n_in, hidden, dtype)
    for name in ("W_hi", "W_hf", "W_hc", "W_ho"):
        tensors[name] = _glorot(rng, (hidden, hidden), hidden, hidden, dtype)
    for name in ("w_ci", "w_cf", "w_co"):
        tensors[name] = np.zeros(hidden, dtype=dtype)
    return LstmDirectionParams(**tensors)


def init_params(arch: ArchitectureConfig, seed: int = 0, dtype: np.dtype = np.float32,
                rng: Optional[np.random.Generator] = None) -> ModelParams:
    """Glorot-uniform weights, zero peepholes and zero output bias"""
    dtype = np.dtype(dtype)
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(seed))
    for note in arch.warnings():
        logger.warning("architecture warning", note=note)

    receptive = arch.kernel_height * arch.kernel_width
    conv = ConvParams(
        kernels=_glorot(rng, (arch.num_kernels, arch.kernel_height, arch.kernel_width),
                        receptive, receptive * arch.num_kernels, dtype),
        freq_stride=arch.freq_stride,
    )
    layers = []
    n_in = arch.lstm_input_size
    for hidden in arch.hidden_sizes:
        layers.append(LstmLayerParams(fwd=_init_direction(rng, n_in, hidden, dtype),
                                      bwd=_init_direction(rng, n_in, hidden, dtype)))
        n_in = 2 * hidden
    output = OutputParams(W=_glorot(rng, (arch.d, arch.q), arch.q, arch.d, dtype),
                          b=np.zeros(arch.d, dtype=dtype))
    return ModelParams(conv=conv, lstm_layers=layers, output=output, hyper=arch)
