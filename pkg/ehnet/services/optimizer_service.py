"""AdaDelta with a scheduled step multiplier"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ehnet.core.exceptions import InputDataError, NumericError
from ehnet.core.logging import get_logger
from ehnet.models.tensors import GradientSet, ModelParams

logger = get_logger(__name__)


class LearningRateSchedule:
    """Piecewise-constant multiplier: the last threshold <= epoch wins"""

    def __init__(self, steps: Sequence[Tuple[int, float]]):
        if not steps or steps[0][0] != 0:
            raise InputDataError("schedule must start at epoch 0")
        self.steps: List[Tuple[int, float]] = sorted((int(e), float(m)) for e, m in steps)

    def multiplier(self, epoch: int) -> float:
        current = self.steps[0][1]
        for threshold, value in self.steps:
            if epoch >= threshold:
                current = value
            else:
                break
        return current

    def trace(self, epochs: int) -> List[float]:
        return [self.multiplier(e) for e in range(epochs)]


@dataclass
class OptimizerState:
    """Running averages E[g^2] and E[dx^2] per tensor"""

    rho: float = 0.95
    eps: float = 1e-6
    eg2: Dict[str, np.ndarray] = field(default_factory=dict)
    edx2: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise InputDataError("rho must lie in (0, 1)", rho=self.rho)
        if self.eps <= 0:
            raise InputDataError("eps must be positive", eps=self.eps)

    @classmethod
    def for_params(cls, params: ModelParams, rho: float = 0.95, eps: float = 1e-6) -> "OptimizerState":
        tensors = params.named_tensors()
        return cls(
            rho=rho,
            eps=eps,
            eg2={k: np.zeros(v.shape, dtype=np.float64) for k, v in tensors.items()},
            edx2={k: np.zeros(v.shape, dtype=np.float64) for k, v in tensors.items()},
        )


def adadelta_step(
    params: ModelParams,
    grads: GradientSet,
    state: OptimizerState,
    lr_multiplier: float = 1.0,
) -> Tuple[ModelParams, OptimizerState]:
    """One AdaDelta update, applied in place; a non-finite gradient rejects the whole step"""
    grads.check_congruent(params)
    bad = grads.non_finite()
    if bad:
        logger.error("optimizer step rejected", non_finite=bad, step=state.steps)
        raise NumericError("non-finite gradient", tensors=bad)

    rho, eps = state.rho, state.eps
    for name, value in params.named_tensors().items():
        g = grads[name].astype(np.float64)
        eg2 = state.eg2.setdefault(name, np.zeros(value.shape, dtype=np.float64))
        edx2 = state.edx2.setdefault(name, np.zeros(value.shape, dtype=np.float64))

        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        delta = -(np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps)) * g * lr_multiplier
        edx2 *= rho
        edx2 += (1.0 - rho) * delta * delta
        value += delta.astype(value.dtype)

    state.steps += 1
    return params, state
