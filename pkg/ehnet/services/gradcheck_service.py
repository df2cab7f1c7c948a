"""Finite-difference verification of backward() on tiny models"""

from typing import Dict, List, Literal, Optional

import numpy as np

from ehnet.core.logging import get_logger
from ehnet.models.schemas import ArchitectureConfig, GradCheckReport, TensorCheck
from ehnet.models.tensors import (
    DIRECTION_TENSORS,
    PEEPHOLES,
    ConvParams,
    GradientSet,
    LstmDirectionParams,
    LstmLayerParams,
    ModelParams,
    OutputParams,
)
from ehnet.services.backprop_service import backward, mse_loss
from ehnet.services.model_service import ForwardCache, forward_with_cache

logger = get_logger(__name__)

FaultName = Literal["sign-flip"]
PRECISIONS = {"double": np.float64, "single": np.float32}

TINY_FRAMES = 6


def tiny_architecture(**overrides: object) -> ArchitectureConfig:
    """d=8, k=3, 4x3 kernels, stride 2, one BiLSTM layer of 5 units"""
    values: Dict[str, object] = dict(d=8, num_kernels=3, kernel_height=4, kernel_width=3,
                                     freq_stride=2, hidden_sizes=[5])
    values.update(overrides)
    return ArchitectureConfig.model_validate(values)


def random_params(arch: ArchitectureConfig, rng: np.random.Generator, dtype: np.dtype = np.float64) -> ModelParams:
    """Normal weights (std 0.5) with a positive output bias so most outputs sit above the truncation"""

    def normal(*shape: int) -> np.ndarray:
        return rng.normal(0.0, 0.5, size=shape).astype(dtype)

    conv = ConvParams(kernels=normal(arch.num_kernels, arch.kernel_height, arch.kernel_width),
                      freq_stride=arch.freq_stride)
    layers = []
    n_in = arch.lstm_input_size
    for hidden in arch.hidden_sizes:
        directions = {}
        for direction in ("fwd", "bwd"):
            tensors = {}
            for name in DIRECTION_TENSORS:
                if name in PEEPHOLES:
                    tensors[name] = normal(hidden)
                elif name.startswith("W_x"):
                    tensors[name] = normal(hidden, n_in)
                else:
                    tensors[name] = normal(hidden, hidden)
            directions[direction] = LstmDirectionParams(**tensors)
        layers.append(LstmLayerParams(**directions))
        n_in = 2 * hidden
    output = OutputParams(W=normal(arch.d, arch.q), b=rng.uniform(0.1, 0.5, size=arch.d).astype(dtype))
    return ModelParams(conv=conv, lstm_layers=layers, output=output, hyper=arch)


def degenerate_params(arch: ArchitectureConfig, rng: np.random.Generator, dtype: np.dtype = np.float64) -> ModelParams:
    """Identity-like conv, all-zero recurrent and output weights; the model reduces to max(0, b)"""
    kernels = np.zeros((arch.num_kernels, arch.kernel_height, arch.kernel_width), dtype=dtype)
    for j in range(arch.num_kernels):
        kernels[j, j % arch.kernel_height, arch.kernel_width // 2] = 1.0
    zeros = random_params(arch, rng, dtype)
    for array in zeros.named_tensors().values():
        array[...] = 0
    zeros.conv.kernels[...] = kernels
    zeros.output.b[...] = rng.uniform(0.5, 1.0, size=arch.d)
    return zeros


def closed_form_gradients(params: ModelParams, target: np.ndarray) -> GradientSet:
    """Gradient of the degenerate model: only the bias moves the loss, d/db = sum_t (b - y_t)"""
    grads = GradientSet.zeros_like(params)
    b = params.output.b.astype(np.float64)
    active = b > 0
    grads.tensors["output.b"][...] = np.where(active, (b[:, np.newaxis] - target).sum(axis=1), 0.0)
    return grads


def _masks(cache: ForwardCache) -> List[np.ndarray]:
    masks = [cache.conv_pre > 0, cache.out_pre > 0]
    for layer in cache.layers:
        masks += [layer.fwd.clip_mask, layer.bwd.clip_mask]
    return masks


def _loss_and_masks(params: ModelParams, x: np.ndarray, target: np.ndarray):
    prediction, cache = forward_with_cache(x, params)
    return mse_loss(prediction, target), _masks(cache)


def _relative_error(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor, 1e-8)


def _inject(grads: GradientSet, fault: Optional[FaultName]) -> GradientSet:
    if fault == "sign-flip":
        grads.scale_(-1.0)
    elif fault is not None:
        raise ValueError(f"unknown fault: {fault}")
    return grads


def grad_check(
    arch: Optional[ArchitectureConfig] = None,
    n_trials: int = 1,
    tolerance: float = 1e-4,
    step: float = 1e-4,
    precision: str = "double",
    frames: int = TINY_FRAMES,
    coords_per_tensor: int = 8,
    inject_fault: Optional[FaultName] = None,
    seed: int = 0,
    linear_only: bool = False,
) -> GradCheckReport:
    """Compare backward() with central differences on random (params, input, target) draws

    Coordinates whose +/- step flips a ReLU, truncation or clip mask are resampled.
    A tensor passes when its worst relative error is strictly below `tolerance`.
    """
    arch = arch or tiny_architecture()
    dtype = np.dtype(PRECISIONS[precision])
    worst: Dict[str, float] = {}
    checked: Dict[str, int] = {}
    resampled: Dict[str, int] = {}

    for trial in range(n_trials):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))
        if linear_only:
            params = degenerate_params(arch, rng, dtype)
        else:
            params = random_params(arch, rng, dtype)
        x = rng.uniform(0.1, 1.0, size=(arch.d, frames)).astype(dtype)
        target = rng.uniform(0.0, 1.0, size=(arch.d, frames))

        _, cache = forward_with_cache(x, params)
        grads = _inject(backward(cache, target), inject_fault)

        if linear_only:
            reference = closed_form_gradients(params, target)
            for name, analytic in grads.tensors.items():
                expected = reference[name].astype(np.float64).ravel()
                actual = analytic.astype(np.float64).ravel()
                floor = 1e-2 * float(np.max(np.abs(actual))) if actual.size else 0.0
                errors = [_relative_error(a, e, floor) for a, e in zip(actual, expected)]
                worst[name] = max(worst.get(name, 0.0), max(errors, default=0.0))
                checked[name] = checked.get(name, 0) + actual.size
                resampled.setdefault(name, 0)
            continue

        base_masks = _masks(cache)
        for name, tensor in params.named_tensors().items():
            analytic = grads[name].astype(np.float64)
            floor = 1e-2 * float(np.max(np.abs(analytic)))
            flat = tensor.reshape(-1)
            taken = skipped = 0
            for idx in rng.permutation(flat.size):
                if taken >= coords_per_tensor:
                    break
                original = flat[idx]
                flat[idx] = original + dtype.type(step)
                loss_plus, masks_plus = _loss_and_masks(params, x, target)
                flat[idx] = original - dtype.type(step)
                loss_minus, masks_minus = _loss_and_masks(params, x, target)
                flat[idx] = original
                kinked = any(
                    not (np.array_equal(b, p) and np.array_equal(b, m))
                    for b, p, m in zip(base_masks, masks_plus, masks_minus)
                )
                if kinked:
                    skipped += 1
                    continue
                numeric = (loss_plus - loss_minus) / (2.0 * step)
                error = _relative_error(float(analytic.reshape(-1)[idx]), numeric, floor)
                worst[name] = max(worst.get(name, 0.0), error)
                taken += 1
            checked[name] = checked.get(name, 0) + taken
            resampled[name] = resampled.get(name, 0) + skipped
            worst.setdefault(name, 0.0)

    tensors = [
        TensorCheck(
            name=name,
            max_rel_error=worst[name],
            checked=checked[name],
            resampled=resampled[name],
            passed=bool(checked[name] > 0 and worst[name] < tolerance),
        )
        for name in worst
    ]
    report = GradCheckReport(trials=n_trials, tolerance=tolerance, step=step, precision=precision, tensors=tensors)
    if report.passed:
        logger.info("gradient check passed", trials=n_trials, tensors=len(tensors))
    else:
        logger.warning("gradient check failed", failures=report.failures(), tolerance=tolerance)
    return report
