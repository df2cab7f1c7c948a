import math

import numpy as np
import pytest

from ehnet.core.exceptions import InputDataError, NumericError
from ehnet.models.schemas import TrainConfig
from ehnet.models.tensors import GradientSet
from ehnet.services.backprop_service import backward, mse_loss
from ehnet.services.gradcheck_service import random_params, tiny_architecture
from ehnet.services.model_service import forward_with_cache
from ehnet.services.optimizer_service import LearningRateSchedule, OptimizerState, adadelta_step


@pytest.fixture
def params(tiny_arch, rng):
    return random_params(tiny_arch, rng)


def _constant_grads(params, value):
    return GradientSet({k: np.full_like(v, value) for k, v in params.named_tensors().items()})


class TestSchedule:
    def test_default_trace(self):
        schedule = LearningRateSchedule(TrainConfig().schedule)
        assert schedule.trace(200) == [1.0] * 60 + [0.1] * 60 + [0.01] * 80

    def test_thresholds(self):
        schedule = LearningRateSchedule([(0, 1.0), (60, 0.1), (120, 0.01)])
        assert schedule.multiplier(0) == 1.0
        assert schedule.multiplier(59) == 1.0
        assert schedule.multiplier(60) == 0.1
        assert schedule.multiplier(120) == 0.01
        assert schedule.multiplier(10_000) == 0.01

    def test_must_start_at_zero(self):
        with pytest.raises(InputDataError):
            LearningRateSchedule([(5, 1.0)])

    def test_parsed_from_text(self):
        assert TrainConfig(schedule="0:1.0, 30:0.1").schedule == [(0, 1.0), (30, 0.1)]

    def test_unsorted_text_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(schedule="0:1.0, 30:0.1, 10:0.01")


class TestAdadelta:
    def test_first_scalar_step(self, params):
        grads = _constant_grads(params, 1.0)
        before = params.output.b.astype(np.float64).copy()
        state = OptimizerState.for_params(params)
        adadelta_step(params, grads, state, lr_multiplier=1.0)
        expected = -math.sqrt(1e-6) / math.sqrt(0.05 * 1.0 + 1e-6)
        assert expected == pytest.approx(-4.47209e-3, abs=1e-7)
        np.testing.assert_allclose(params.output.b - before, expected, atol=1e-12)
        assert state.steps == 1

    def test_zero_gradient_decays_accumulators(self, params):
        state = OptimizerState.for_params(params)
        state.eg2 = {k: np.ones_like(v) for k, v in state.eg2.items()}
        state.edx2 = {k: np.full_like(v, 2.0) for k, v in state.edx2.items()}
        snapshot = {k: v.copy() for k, v in params.named_tensors().items()}
        adadelta_step(params, _constant_grads(params, 0.0), state)
        for name, value in params.named_tensors().items():
            np.testing.assert_array_equal(value, snapshot[name])
            np.testing.assert_allclose(state.eg2[name], 0.95)
            np.testing.assert_allclose(state.edx2[name], 1.9)

    @pytest.mark.parametrize("factor", [0.1, 10.0])
    def test_update_sign_follows_gradient(self, tiny_arch, rng, factor):
        params = random_params(tiny_arch, rng)
        grads = GradientSet({k: factor * rng.normal(size=v.shape) for k, v in params.named_tensors().items()})
        before = {k: v.copy() for k, v in params.named_tensors().items()}
        adadelta_step(params, grads, OptimizerState.for_params(params))
        for name, value in params.named_tensors().items():
            delta = value - before[name]
            moved = grads[name] != 0
            assert np.all(np.sign(delta[moved]) == -np.sign(grads[name][moved]))

    @pytest.mark.parametrize("c", [0.1, 10.0])
    def test_loss_scaling_keeps_the_step_direction(self, tiny_arch, rng, c):
        params = random_params(tiny_arch, rng)
        x = rng.uniform(0.1, 1.0, size=(tiny_arch.d, 6))
        target = rng.uniform(0.0, 1.0, size=(tiny_arch.d, 6))
        plain, scaled = OptimizerState.for_params(params), OptimizerState.for_params(params)
        for _ in range(3):
            _, cache = forward_with_cache(x, params)
            grads = backward(cache, target)
            other = params.copy()
            adadelta_step(other, GradientSet({k: c * v for k, v in grads.tensors.items()}), scaled)
            before = {k: v.copy() for k, v in params.named_tensors().items()}
            adadelta_step(params, grads, plain)
            for name, value in params.named_tensors().items():
                np.testing.assert_allclose(scaled.eg2[name], c**2 * plain.eg2[name], rtol=1e-12, atol=0)
                moved = np.abs(grads[name]) > 1e-12
                step = (value - before[name])[moved]
                scaled_step = (other.named_tensors()[name] - before[name])[moved]
                np.testing.assert_array_equal(np.sign(scaled_step), np.sign(step))

    def test_lr_multiplier_scales_the_first_step(self, tiny_arch, rng):
        first = random_params(tiny_arch, rng)
        second = first.copy()
        start = first.output.b.copy()
        adadelta_step(first, _constant_grads(first, 1.0), OptimizerState.for_params(first), 1.0)
        adadelta_step(second, _constant_grads(second, 1.0), OptimizerState.for_params(second), 0.1)
        np.testing.assert_allclose(second.output.b - start, 0.1 * (first.output.b - start), rtol=1e-9)

    def test_non_finite_gradient_rejects_the_step(self, params):
        grads = _constant_grads(params, 1.0)
        grads.tensors["conv.kernels"][0, 0, 0] = np.nan
        snapshot = {k: v.copy() for k, v in params.named_tensors().items()}
        state = OptimizerState.for_params(params)
        with pytest.raises(NumericError, match="non-finite gradient"):
            adadelta_step(params, grads, state)
        assert state.steps == 0
        for name, value in params.named_tensors().items():
            np.testing.assert_array_equal(value, snapshot[name])

    def test_incongruent_gradients(self, params):
        grads = _constant_grads(params, 1.0)
        del grads.tensors["output.b"]
        with pytest.raises(InputDataError):
            adadelta_step(params, grads, OptimizerState.for_params(params))

    def test_invalid_hyperparameters(self):
        with pytest.raises(InputDataError):
            OptimizerState(rho=1.0)
        with pytest.raises(InputDataError):
            OptimizerState(eps=0.0)


def _full_batch_losses(seed: int, steps: int = 50):
    """Loss before and after each of `steps` AdaDelta updates on one fixed utterance

    random_params init; targets sit above the prediction range so the run stays far from a minimum.
    """
    arch = tiny_architecture()
    rng = np.random.Generator(np.random.Philox(seed))
    params = random_params(arch, rng)
    x = rng.uniform(0.1, 1.0, size=(arch.d, 6))
    target = rng.uniform(4.0, 5.0, size=(arch.d, 6))
    state = OptimizerState.for_params(params)
    losses = []
    for _ in range(steps):
        prediction, cache = forward_with_cache(x, params)
        losses.append(mse_loss(prediction, target))
        adadelta_step(params, backward(cache, target), state)
    prediction, _ = forward_with_cache(x, params)
    losses.append(mse_loss(prediction, target))
    return losses


def test_full_batch_loss_is_non_increasing():
    seeds = range(20)
    monotone = 0
    for seed in seeds:
        losses = _full_batch_losses(seed)
        if all(later <= earlier * (1.0 + 1e-12) for earlier, later in zip(losses, losses[1:])):
            monotone += 1
    assert monotone >= 0.95 * len(seeds)
