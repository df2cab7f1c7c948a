import warnings

import numpy as np
import pytest

from ehnet.models.tensors import GradientSet
from ehnet.services.backprop_service import backward
from ehnet.services.gradcheck_service import (
    closed_form_gradients,
    degenerate_params,
    grad_check,
    tiny_architecture,
)
from ehnet.services.model_service import forward, forward_with_cache


def test_tiny_architecture_shape():
    arch = tiny_architecture()
    assert (arch.d, arch.num_kernels, arch.kernel_height, arch.kernel_width) == (8, 3, 4, 3)
    assert arch.freq_stride == 2 and arch.hidden_sizes == [5]
    assert tiny_architecture(hidden_sizes=[2, 3]).num_layers == 2


def test_default_check_passes():
    report = grad_check(seed=0)
    assert report.passed, report.failures()
    names = {check.name for check in report.tensors}
    assert "conv.kernels" in names and "lstm.0.bwd.w_co" in names and "output.W" in names
    assert all(check.checked > 0 for check in report.tensors)


def test_report_builds_without_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("error", DeprecationWarning)
        report = grad_check(seed=2, coords_per_tensor=2)
    assert all(type(check.passed) is bool for check in report.tensors)


def test_two_layer_model_passes():
    report = grad_check(arch=tiny_architecture(hidden_sizes=[4, 3]), seed=5)
    assert report.passed, report.failures()


@pytest.mark.slow
def test_twenty_seeds_pass():
    report = grad_check(n_trials=20, seed=11)
    assert report.passed, report.failures()
    assert max(check.max_rel_error for check in report.tensors) <= 1e-4


def test_zero_tolerance_fails_every_tensor():
    report = grad_check(tolerance=0.0)
    assert not report.passed
    assert report.failures() == [check.name for check in report.tensors]


def test_sign_flip_is_detected():
    report = grad_check(inject_fault="sign-flip")
    assert not report.passed


def test_linear_only_matches_closed_form():
    report = grad_check(linear_only=True, n_trials=3)
    assert report.passed
    assert all(check.max_rel_error <= 1e-10 for check in report.tensors)


def test_linear_only_sign_flip_is_detected():
    assert not grad_check(linear_only=True, inject_fault="sign-flip").passed


def test_degenerate_model_reduces_to_bias(rng):
    arch = tiny_architecture()
    params = degenerate_params(arch, rng)
    x = rng.uniform(0.1, 1.0, size=(8, 4))
    prediction = forward(x, params)
    np.testing.assert_array_equal(prediction, np.repeat(params.output.b[:, np.newaxis], 4, axis=1))

    target = rng.uniform(size=(8, 4))
    _, cache = forward_with_cache(x, params)
    analytic = backward(cache, target)
    expected = closed_form_gradients(params, target)
    for name in analytic.tensors:
        np.testing.assert_allclose(analytic[name], expected[name], atol=1e-12)


def test_unknown_precision():
    with pytest.raises(KeyError):
        grad_check(precision="half")


def test_single_precision_reports_its_precision():
    report = grad_check(precision="single", tolerance=1.0, step=1e-2, coords_per_tensor=2)
    assert report.precision == "single"
    assert isinstance(report.tensors[0].max_rel_error, float)


def test_closed_form_is_congruent(rng):
    params = degenerate_params(tiny_architecture(), rng)
    grads = closed_form_gradients(params, np.zeros((8, 2)))
    assert isinstance(grads, GradientSet)
    grads.check_congruent(params)
