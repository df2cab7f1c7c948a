import struct

import numpy as np
import pytest

from ehnet.core.exceptions import CheckpointError
from ehnet.models.schemas import StftConfig
from ehnet.services.gradcheck_service import random_params, tiny_architecture
from ehnet.services.model_service import forward, init_params
from ehnet.services.optimizer_service import OptimizerState
from ehnet.utils.checkpoint import MAGIC, load_checkpoint, save_checkpoint


@pytest.fixture
def params(tiny_arch):
    return init_params(tiny_arch, seed=5)


def test_round_trip_gives_identical_forward(params, tiny_stft, rng, tmp_path):
    path = save_checkpoint(tmp_path / "model.ehn", params, tiny_stft, meta={"epoch": 3})
    loaded = load_checkpoint(path)
    x = rng.uniform(size=(8, 9)).astype(np.float32)
    np.testing.assert_array_equal(forward(x, loaded.params), forward(x, params))
    assert loaded.params.hyper == params.hyper
    assert loaded.stft == tiny_stft
    assert loaded.meta["epoch"] == "3"
    assert loaded.optimizer is None


def test_file_starts_with_magic(params, tiny_stft, tmp_path):
    data = save_checkpoint(tmp_path / "m.ehn", params, tiny_stft).read_bytes()
    assert data[:4] == MAGIC
    assert struct.unpack_from("<I", data, 4) == (1,)


def test_double_params_are_stored_as_single(tiny_arch, tiny_stft, rng, tmp_path):
    params = random_params(tiny_arch, rng, dtype=np.float64)
    loaded = load_checkpoint(save_checkpoint(tmp_path / "m.ehn", params, tiny_stft))
    assert loaded.params.dtype == np.float32
    np.testing.assert_array_equal(loaded.params.output.W, params.output.W.astype(np.float32))


def test_optimizer_state_round_trip(params, tiny_stft, tmp_path):
    state = OptimizerState.for_params(params, rho=0.9, eps=1e-5)
    state.eg2["output.b"][...] = 0.25
    state.steps = 12
    loaded = load_checkpoint(save_checkpoint(tmp_path / "m.ehn", params, tiny_stft, optimizer=state))
    assert loaded.optimizer is not None
    assert loaded.optimizer.rho == 0.9 and loaded.optimizer.eps == 1e-5 and loaded.optimizer.steps == 12
    np.testing.assert_array_equal(loaded.optimizer.eg2["output.b"], 0.25)
    assert set(loaded.optimizer.edx2) == set(params.named_tensors())


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ehn"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(CheckpointError, match="not an EHN1"):
        load_checkpoint(path)


def test_truncated_file(params, tiny_stft, tmp_path):
    path = save_checkpoint(tmp_path / "m.ehn", params, tiny_stft)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes(params, tiny_stft, tmp_path):
    path = save_checkpoint(tmp_path / "m.ehn", params, tiny_stft)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_tensors_must_match_the_architecture(tiny_stft, rng, tmp_path):
    wide = random_params(tiny_architecture(hidden_sizes=[6]), rng)
    path = save_checkpoint(tmp_path / "m.ehn", wide, tiny_stft)
    data = path.read_bytes()
    # claim hidden size 5 in the hyperparameter text; same byte length keeps the framing intact
    patched = data.replace(b"model.hidden_sizes=6", b"model.hidden_sizes=5")
    path.write_bytes(patched)
    with pytest.raises(CheckpointError, match="does not match its architecture"):
        load_checkpoint(path)


def test_unsupported_version(params, tiny_stft, tmp_path):
    path = save_checkpoint(tmp_path / "m.ehn", params, tiny_stft)
    data = bytearray(path.read_bytes())
    data[4:8] = struct.pack("<I", 2)
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ehn")


def test_stft_is_kept(params, tmp_path):
    cfg = StftConfig(fft_size=16, hop_size=8, window="sqrt_hann", bins_kept=8)
    assert load_checkpoint(save_checkpoint(tmp_path / "m.ehn", params, cfg)).stft.window == "sqrt_hann"
