"""Analysis/synthesis windows and their overlap-add checks"""

from typing import Literal

import numpy as np
from scipy import signal

WindowName = Literal["hann", "sqrt_hann", "hamming", "rect"]

_SCIPY_NAMES = {"hann": "hann", "hamming": "hamming", "rect": "boxcar"}


def make_window(name: str, fft_size: int) -> np.ndarray:
    """Periodic (DFT-even) window of length fft_size, float64"""
    if name == "sqrt_hann":
        return np.sqrt(signal.get_window("hann", fft_size, fftbins=True))
    try:
        scipy_name = _SCIPY_NAMES[name]
    except KeyError:
        raise ValueError(f"unknown window: {name}") from None
    return np.asarray(signal.get_window(scipy_name, fft_size, fftbins=True), dtype=np.float64)


def squared_overlap_add(window: np.ndarray, hop_size: int) -> np.ndarray:
    """One period of the overlap-added squared window"""
    envelope = np.zeros(hop_size, dtype=np.float64)
    squared = window**2
    for start in range(0, len(window), hop_size):
        chunk = squared[start:start + hop_size]
        envelope[: len(chunk)] += chunk
    return envelope


def is_cola_pair(name: str, fft_size: int, hop_size: int) -> bool:
    """True when the window or its square is COLA for the hop and NOLA holds"""
    window = make_window(name, fft_size)
    noverlap = fft_size - hop_size
    cola = signal.check_COLA(window, fft_size, noverlap, tol=1e-6) or signal.check_COLA(
        window**2, fft_size, noverlap, tol=1e-6
    )
    return bool(cola and signal.check_NOLA(window, fft_size, noverlap))
