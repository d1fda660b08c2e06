"""Rate lowering between decoding attempts.

Two schemes achieve the minimal extra leakage ``2 (r_before - r_after)``:

* raptor extension: uncover ``d`` more rows and columns of the total
  matrix and send the ``d`` new syndrome bits;
* bit revelation: publish ``d`` randomly chosen positions with their values.

``d`` is always rounded towards more redundancy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .pcm import PCMWindow, syndrome

_EPS = 1e-12


@dataclass(frozen=True)
class RevelationRecord:
    positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.positions.shape != self.values.shape:
            raise ValueError("positions and values must have equal length")
        if self.positions.size > 1 and np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly increasing")

    def __len__(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class RateStep:
    scheme: str
    r_before: float
    r_after: float
    d: int

    @property
    def extra_leakage(self) -> float:
        return leakage_step(self.r_before, self.r_after)


def d_for_target_raptor(base_n: int, base_m: int, r_target: float, max_d: int | None = None) -> int:
    """Smallest ``d`` with ``(base_n - base_m) / (base_n + d) <= r_target``."""
    r0 = (base_n - base_m) / base_n
    if not 0 < r_target:
        raise ValueError("target rate must be positive")
    if r_target > r0 + _EPS:
        raise ValueError(f"target rate {r_target} above window rate {r0}")
    d = max(0, math.ceil((base_n - base_m) / r_target - base_n - 1e-9))
    if max_d is not None and d > max_d:
        raise ValueError(f"target rate {r_target} needs d={d} > available {max_d}")
    return d


def d_for_target_reveal(n: int, m: int, r_target: float) -> int:
    """Smallest ``d`` with ``(n - m - d) / n <= r_target``."""
    r0 = (n - m) / n
    if r_target > r0 + _EPS:
        raise ValueError(f"target rate {r_target} above current rate {r0}")
    d = max(0, math.ceil((n - m) - n * r_target - 1e-9))
    if d >= n - m:
        raise ValueError(f"target rate {r_target} leaves no information bits")
    return d


def reveal_bits(frame, d: int, rng: np.random.Generator) -> RevelationRecord:
    frame = np.asarray(frame, dtype=np.uint8)
    if not 0 <= d <= frame.shape[0]:
        raise ValueError(f"cannot reveal {d} of {frame.shape[0]} bits")
    # permutation prefix: equal generator states give nested sets for growing d
    positions = np.sort(rng.permutation(frame.shape[0])[:d]).astype(np.int64)
    return RevelationRecord(positions, frame[positions].copy())


def apply_revelation(llrs, rec: RevelationRecord, reveal_llr_mag: float) -> np.ndarray:
    """Overwrite revealed positions with ``+-reveal_llr_mag`` (bit 0 -> +)."""
    out = np.array(llrs, dtype=np.float64, copy=True)
    if len(rec):
        if rec.positions[-1] >= out.shape[0] or rec.positions[0] < 0:
            raise ValueError("revealed position out of range")
        out[rec.positions] = np.where(rec.values == 0, reveal_llr_mag, -reveal_llr_mag)
    return out


def extend_raptor(w: PCMWindow, d_extra: int, extra_key_bits,
                  full_frame_syndrome_provider: Callable[[PCMWindow, np.ndarray], np.ndarray] | np.ndarray
                  ) -> tuple[PCMWindow, np.ndarray]:
    """Deepen ``w`` by ``d_extra`` and return the new syndrome bits only.

    ``full_frame_syndrome_provider`` is either the frame (the ``w.n`` key
    bits already covered) or a callable ``(window, bits) -> syndrome``
    wrapping it; in the latter case it receives the deepened window and
    the concatenated frame.
    """
    extra = np.asarray(extra_key_bits, dtype=np.uint8)
    if extra.shape != (d_extra,):
        raise ValueError("extra_key_bits length must equal d_extra")
    if w.d + d_extra > w.parent.max_d:
        raise ValueError(f"cannot deepen window beyond d={w.parent.max_d}")
    deeper = w.deepen(d_extra)
    if callable(full_frame_syndrome_provider):
        full = full_frame_syndrome_provider(deeper, extra)
    else:
        frame = np.concatenate([np.asarray(full_frame_syndrome_provider, dtype=np.uint8), extra])
        full = syndrome(deeper, frame)
    return deeper, np.asarray(full[w.m:], dtype=np.uint8)


def leakage_step(r_before: float, r_after: float) -> float:
    """Minimal extra leakage per symbol of a rate step."""
    if r_after > r_before:
        raise ValueError("rate step must not increase the rate")
    return 2.0 * (r_before - r_after)
