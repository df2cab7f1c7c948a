"""Magnitude matrix dumps: CSV (rows = bins, columns = frames) and raw float32 with a (d, t) header"""

import struct
from pathlib import Path

import numpy as np

from ehnet.core.exceptions import InputDataError

_HEADER = struct.Struct("<II")


def _target(path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputDataError(f"cannot create output directory: {e.strerror}", path=str(path)) from e
    return path


def write_binary(path: Path, magnitudes: np.ndarray) -> Path:
    matrix = np.ascontiguousarray(magnitudes, dtype="<f4")
    if matrix.ndim != 2:
        raise InputDataError("spectrogram dump expects a matrix", shape=matrix.shape)
    path = _target(path)
    d, t = matrix.shape
    try:
        path.write_bytes(_HEADER.pack(d, t) + matrix.tobytes())
    except OSError as e:
        raise InputDataError(f"cannot write spectrogram: {e.strerror}", path=str(path)) from e
    return path


def read_binary(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InputDataError("spectrogram file is shorter than its header", path=str(path))
    d, t = _HEADER.unpack_from(data)
    body = data[_HEADER.size:]
    if len(body) != 4 * d * t:
        raise InputDataError("spectrogram size does not match its header", path=str(path), d=d, t=t)
    return np.frombuffer(body, dtype="<f4").reshape(d, t).astype(np.float32)


def write_csv(path: Path, magnitudes: np.ndarray) -> Path:
    matrix = np.asarray(magnitudes, dtype=np.float64)
    if matrix.ndim != 2:
        raise InputDataError("spectrogram dump expects a matrix", shape=matrix.shape)
    path = _target(path)
    try:
        np.savetxt(path, matrix, delimiter=",", fmt="%.9g")
    except OSError as e:
        raise InputDataError(f"cannot write spectrogram: {e.strerror}", path=str(path)) from e
    return path


def read_csv(path: Path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", ndmin=2)
