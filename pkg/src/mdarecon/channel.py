"""QPSK / heterodyne channel at the binary level, for reverse reconciliation.

Every binary position is one quadrature: Alice sends ``x = +-1/sqrt(2)``,
Bob receives ``y = x + z`` with ``z ~ N(0, sigma^2 / 2)``.  Bob's raw key is
``sgn(y)`` (bit 0 for ``y >= 0``) and ``|y|`` is his side information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

AMPLITUDE = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class ChannelParams:
    """Physical parameters in shot-noise units."""

    V_A: float
    T: float
    xi: float = 0.01
    nu_el: float = 0.1
    eta: float = 0.5

    def __post_init__(self):
        if not (self.V_A > 0 and 0 < self.T <= 1 and self.eta > 0):
            raise ValueError("need V_A > 0, 0 < T <= 1, eta > 0")
        if self.xi < 0 or self.nu_el < 0:
            raise ValueError("xi and nu_el must be non-negative")

    @property
    def snr(self) -> float:
        return snr_from_params(self)

    @property
    def sigma(self) -> float:
        return 1.0 / math.sqrt(self.snr)


def snr_from_params(p: ChannelParams) -> float:
    noise = p.T * p.xi + 2.0 * (1.0 + p.nu_el) / p.eta
    if noise <= 0:
        raise ValueError("non-positive noise term")
    return p.T * p.V_A / noise


def sigma_from_snr(snr: float) -> float:
    if snr <= 0:
        raise ValueError("snr must be positive")
    return 1.0 / math.sqrt(snr)


def mutual_info(snr: float) -> float:
    """Gaussian-channel capacity per heterodyne symbol, in bits."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    return math.log1p(snr) / math.log(2.0)


@dataclass
class FrameData:
    """One frame plus its reserve positions for raptor extension.

    All arrays have length ``n_bits + reserve``; the first ``n_bits`` are
    the frame proper.
    """

    alice_symbols: np.ndarray
    y: np.ndarray
    n_bits: int

    @property
    def raw_key(self) -> np.ndarray:
        return (self.y < 0).astype(np.uint8)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.y)

    @property
    def reserve(self) -> int:
        return self.y.shape[0] - self.n_bits

    @property
    def n_symbols(self) -> int:
        return self.n_bits // 2


def simulate_frame(n_bits: int, reserve: int, sigma: float, rng: np.random.Generator) -> FrameData:
    if n_bits % 2:
        raise ValueError("n_bits must be even (two bits per QPSK symbol)")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    total = n_bits + reserve
    x = np.where(rng.integers(0, 2, size=total) == 0, AMPLITUDE, -AMPLITUDE)
    z = rng.standard_normal(total) * (sigma / math.sqrt(2.0))
    return FrameData(alice_symbols=x, y=x + z, n_bits=n_bits)


def channel_llrs(alice_symbols, magnitudes, sigma: float) -> np.ndarray:
    """Alice's LLRs for Bob's raw-key bits: ``4 x |y| / sigma^2``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(alice_symbols, dtype=np.float64)
    a = np.asarray(magnitudes, dtype=np.float64)
    if x.shape != a.shape:
        raise ValueError("alice_symbols and magnitudes must have equal length")
    return 4.0 * x * a / (sigma * sigma)


def frame_llrs(frame: FrameData, sigma: float) -> np.ndarray:
    return channel_llrs(frame.alice_symbols, frame.magnitudes, sigma)
