"""Loss and hand-derived gradients: output truncation, BPTT through every BiLSTM layer, strided conv kernels

Subgradients at ReLU/truncation kinks are taken as 0 at exactly 0.
"""

from typing import Dict, Optional, Tuple

import numpy as np

from ehnet.core.exceptions import InputDataError
from ehnet.models.tensors import GradientSet, LstmDirectionParams
from ehnet.services.model_service import ForwardCache, ScanCache


def _frame_weights(frame_mask: Optional[np.ndarray], frames: int) -> Optional[np.ndarray]:
    if frame_mask is None:
        return None
    weights = np.asarray(frame_mask, dtype=np.float64).reshape(-1)
    if weights.size != frames:
        raise InputDataError("frame mask length does not match the frame count",
                             mask=weights.size, frames=frames)
    return weights


def mse_loss(pred: np.ndarray, target: np.ndarray, frame_mask: Optional[np.ndarray] = None) -> float:
    """1/2 * sum of squared differences, accumulated in float64; masked frames contribute nothing"""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise InputDataError("prediction and target shapes differ", pred=pred.shape, target=target.shape)
    sq = (pred.astype(np.float64) - target.astype(np.float64)) ** 2
    weights = _frame_weights(frame_mask, pred.shape[-1])
    if weights is not None:
        sq = sq * weights[np.newaxis, :]
    return 0.5 * float(np.sum(sq, dtype=np.float64))


def backward(
    cache: ForwardCache,
    target: np.ndarray,
    scale: float = 1.0,
    frame_mask: Optional[np.ndarray] = None,
) -> GradientSet:
    """Exact gradient of scale * mse_loss(forward(x), target) w.r.t. every tensor"""
    params = cache.params
    target = np.asarray(target)
    if target.shape != cache.prediction.shape:
        raise InputDataError("target does not match the cached forward pass",
                             target=target.shape, prediction=cache.prediction.shape)
    dtype = params.dtype
    grads: Dict[str, np.ndarray] = {}

    # output layer
    d_pred = (cache.prediction - target.astype(dtype)) * dtype.type(scale)
    weights = _frame_weights(frame_mask, target.shape[1])
    if weights is not None:
        d_pred = d_pred * weights.astype(dtype)[np.newaxis, :]
    d_out = d_pred * (cache.out_pre > 0)
    grads["output.W"] = d_out @ cache.htilde.T
    grads["output.b"] = d_out.sum(axis=1)
    d_hidden = params.output.W.T @ d_out

    # recurrent layers, last to first
    lstm_grads: Dict[str, np.ndarray] = {}
    for idx in reversed(range(len(params.lstm_layers))):
        layer = params.lstm_layers[idx]
        layer_cache = cache.layers[idx]
        hidden = layer.hidden_size
        d_in_fwd, g_fwd = _scan_backward(layer_cache.fwd, d_hidden[:hidden], layer.fwd)
        d_in_bwd, g_bwd = _scan_backward(layer_cache.bwd, d_hidden[hidden:, ::-1], layer.bwd)
        for name, value in g_fwd.items():
            lstm_grads[f"lstm.{idx}.fwd.{name}"] = value
        for name, value in g_bwd.items():
            lstm_grads[f"lstm.{idx}.bwd.{name}"] = value
        d_hidden = d_in_fwd + d_in_bwd[:, ::-1]

    # un-stack to per-map gradients, then through the ReLU and the strided correlation
    k, p, t = cache.conv_pre.shape
    d_maps = d_hidden.reshape(k, p, t) * (cache.conv_pre > 0)
    grads["conv.kernels"] = np.tensordot(d_maps, cache.patches, axes=([1, 2], [0, 1]))

    ordered = {}
    for name in params.named_tensors():
        value = grads.get(name, lstm_grads.get(name))
        ordered[name] = np.asarray(value, dtype=dtype)
    return GradientSet(ordered)


def _scan_backward(
    sc: ScanCache, d_h_out: np.ndarray, params: LstmDirectionParams
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """BPTT for one direction; d_h_out and the returned input gradient are in scan order"""
    hidden, steps = d_h_out.shape
    dtype = sc.h.dtype
    da_i = np.zeros((hidden, steps), dtype=dtype)
    da_f = np.zeros_like(da_i)
    da_g = np.zeros_like(da_i)
    da_o = np.zeros_like(da_i)
    dh_next = np.zeros(hidden, dtype=dtype)
    dc_next = np.zeros(hidden, dtype=dtype)

    for t in reversed(range(steps)):
        i, f, g, o = sc.i[:, t], sc.f[:, t], sc.g[:, t], sc.o[:, t]
        tanh_c = sc.tanh_c[:, t]
        c_prev = sc.c[:, t]

        dh = d_h_out[:, t] + dh_next
        a_o = dh * tanh_c * o * (1 - o)
        dc = dc_next + dh * o * (1 - tanh_c**2) + a_o * params.w_co
        dc = dc * sc.clip_mask[:, t]
        a_i = dc * g * i * (1 - i)
        a_g = dc * i * (1 - g**2)
        a_f = dc * c_prev * f * (1 - f)

        dc_next = dc * f + a_i * params.w_ci + a_f * params.w_cf
        dh_next = params.W_hi.T @ a_i + params.W_hf.T @ a_f + params.W_hc.T @ a_g + params.W_ho.T @ a_o
        da_i[:, t], da_f[:, t], da_g[:, t], da_o[:, t] = a_i, a_f, a_g, a_o

    x = sc.inputs
    h_prev = sc.h[:, :steps]
    c_prev_all = sc.c[:, :steps]
    c_all = sc.c[:, 1:]
    grads = {
        "W_xi": da_i @ x.T,
        "W_xf": da_f @ x.T,
        "W_xc": da_g @ x.T,
        "W_xo": da_o @ x.T,
        "W_hi": da_i @ h_prev.T,
        "W_hf": da_f @ h_prev.T,
        "W_hc": da_g @ h_prev.T,
        "W_ho": da_o @ h_prev.T,
        "w_ci": np.sum(da_i * c_prev_all, axis=1),
        "w_cf": np.sum(da_f * c_prev_all, axis=1),
        "w_co": np.sum(da_o * c_all, axis=1),
    }
    d_inputs = params.W_xi.T @ da_i + params.W_xf.T @ da_f + params.W_xc.T @ da_g + params.W_xo.T @ da_o
    return d_inputs, grads
