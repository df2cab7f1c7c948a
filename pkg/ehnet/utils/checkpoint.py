"""EHN1 checkpoint files

Layout (little-endian): magic "EHN1", version u32, u32-length-prefixed key=value
hyperparameter text, u32 tensor count, then per tensor: name length u16, name bytes,
rank u8, dims u32 each, float32 data row-major.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from ehnet.core.exceptions import CheckpointError, ConfigurationError
from ehnet.core.logging import get_logger
from ehnet.models.schemas import ArchitectureConfig, StftConfig
from ehnet.models.tensors import ModelParams
from ehnet.services.optimizer_service import OptimizerState

logger = get_logger(__name__)

MAGIC = b"EHN1"
VERSION = 1
_OPT_PREFIXES = ("opt.eg2.", "opt.edx2.")


@dataclass
class Checkpoint:
    params: ModelParams
    stft: StftConfig
    meta: Dict[str, str] = field(default_factory=dict)
    optimizer: Optional[OptimizerState] = None


def _hyper_text(params: ModelParams, stft_cfg: StftConfig, meta: Dict[str, Any],
                optimizer: Optional[OptimizerState]) -> bytes:
    lines = []
    for key, value in params.hyper.model_dump().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"model.{key}={value}")
    for key, value in stft_cfg.model_dump().items():
        lines.append(f"stft.{key}={value}")
    if optimizer is not None:
        lines += [f"opt.rho={optimizer.rho!r}", f"opt.eps={optimizer.eps!r}", f"opt.steps={optimizer.steps}"]
    for key, value in meta.items():
        lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    return "\n".join(lines).encode("utf-8")


def _tensor_record(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    head = struct.pack("<H", len(encoded)) + encoded + struct.pack("<B", array.ndim)
    head += struct.pack(f"<{array.ndim}I", *array.shape)
    return head + np.ascontiguousarray(array, dtype="<f4").tobytes()


def save_checkpoint(
    path: Path,
    params: ModelParams,
    stft_cfg: StftConfig,
    meta: Optional[Dict[str, Any]] = None,
    optimizer: Optional[OptimizerState] = None,
) -> Path:
    """Write parameters (and optionally AdaDelta accumulators) to an EHN1 file"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: List[Tuple[str, np.ndarray]] = list(params.named_tensors().items())
    if optimizer is not None:
        for name, _ in list(tensors):
            tensors.append((f"opt.eg2.{name}", optimizer.eg2[name]))
            tensors.append((f"opt.edx2.{name}", optimizer.edx2[name]))

    hyper = _hyper_text(params, stft_cfg, meta or {}, optimizer)
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(hyper)), hyper,
              struct.pack("<I", len(tensors))]
    chunks += [_tensor_record(name, array) for name, array in tensors]

    # atomic replace
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)
    logger.debug("checkpoint saved", path=str(path), tensors=len(tensors))
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, fmt: str) -> Tuple[Any, ...]:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise CheckpointError("truncated checkpoint", path=str(self.path), offset=self.offset)
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def raw(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError("truncated checkpoint", path=str(self.path), offset=self.offset)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk


def _split_hyper(text: str) -> Tuple[Dict[str, str], Dict[str, str], Dict[str, str], Dict[str, str]]:
    model: Dict[str, str] = {}
    stft_values: Dict[str, str] = {}
    opt: Dict[str, str] = {}
    meta: Dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        section, dot, rest = key.partition(".")
        target = {"model": model, "stft": stft_values, "opt": opt}.get(section) if dot else None
        if target is None:
            meta[key] = value
        else:
            target[rest] = value
    return model, stft_values, opt, meta


def load_checkpoint(path: Path) -> Checkpoint:
    """Read an EHN1 file; rejects bad magic, truncation and dimension-chain mismatches"""
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint: {e.strerror}", path=str(path)) from e

    if reader.raw(4) != MAGIC:
        raise CheckpointError("not an EHN1 checkpoint", path=str(path))
    (version,) = reader.take("<I")
    if version != VERSION:
        raise CheckpointError("unsupported checkpoint version", path=str(path), version=version)
    (hyper_len,) = reader.take("<I")
    model_values, stft_values, opt_values, meta = _split_hyper(reader.raw(hyper_len).decode("utf-8"))

    try:
        hyper = ArchitectureConfig.model_validate(model_values)
        stft_cfg = StftConfig.model_validate(stft_values)
    except ValidationError as e:
        raise CheckpointError("invalid hyperparameters in checkpoint", path=str(path),
                              problems=[err["msg"] for err in e.errors()]) from e

    (count,) = reader.take("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.take("<H")
        name = reader.raw(name_len).decode("utf-8")
        (rank,) = reader.take("<B")
        dims = reader.take(f"<{rank}I") if rank else ()
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        data = np.frombuffer(reader.raw(4 * size), dtype="<f4").reshape(dims)
        tensors[name] = data.astype(np.float32)
    if reader.offset != len(reader.data):
        raise CheckpointError("trailing bytes after the last tensor", path=str(path))

    model_tensors = {k: v for k, v in tensors.items() if not k.startswith(_OPT_PREFIXES)}
    try:
        params = ModelParams.from_named(hyper, model_tensors)
    except ConfigurationError as e:
        raise CheckpointError(f"checkpoint does not match its architecture: {e.message}",
                              path=str(path), **e.context) from e

    optimizer = None
    if opt_values:
        optimizer = OptimizerState(
            rho=float(opt_values.get("rho", 0.95)),
            eps=float(opt_values.get("eps", 1e-6)),
            eg2={n: tensors[f"opt.eg2.{n}"].astype(np.float64) for n in model_tensors if f"opt.eg2.{n}" in tensors},
            edx2={n: tensors[f"opt.edx2.{n}"].astype(np.float64) for n in model_tensors if f"opt.edx2.{n}" in tensors},
            steps=int(opt_values.get("steps", 0)),
        )
    return Checkpoint(params=params, stft=stft_cfg, meta=meta, optimizer=optimizer)
