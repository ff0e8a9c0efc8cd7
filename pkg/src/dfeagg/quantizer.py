"""Fixed-point codec between real weights and small non-negative integers.

A client value ``x`` maps to ``round_half_even(x / delta) + offset`` with
``offset = 2**(bits - 1)``, so every client encode lies in ``[0, 2**bits)``
and a sum of ``k`` encodes lies below ``k * 2**bits``, which bounds the
discrete-log search on the aggregator side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import QuantizationRangeError


@dataclass(frozen=True)
class QuantScheme:
    delta: float = 2.0 ** -10
    bits_b: int = 16
    max_participants: int = 64

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.bits_b < 2:
            raise ValueError("bits_b must be >= 2")
        if self.max_participants < 1:
            raise ValueError("max_participants must be >= 1")

    @property
    def offset(self) -> int:
        return 1 << (self.bits_b - 1)

    @property
    def levels(self) -> int:
        return 1 << self.bits_b

    @property
    def dlog_bound(self) -> int:
        return self.max_participants * self.levels

    def bound_for(self, k_prime: int) -> int:
        return k_prime * self.levels

    @property
    def representable_range(self) -> tuple[float, float]:
        return -self.offset * self.delta, (self.offset - 1) * self.delta


@dataclass(frozen=True)
class QuantizedVector:
    values: tuple[int, ...]
    scheme: QuantScheme | None = None
    participant_count_at_encode: int = 1
    clamp_count: int = 0

    def __len__(self):
        return len(self.values)

    def check_range(self):
        if self.scheme is None:
            return
        hi = self.participant_count_at_encode * self.scheme.levels
        bad = [i for i, v in enumerate(self.values) if not 0 <= v < hi]
        if bad:
            raise QuantizationRangeError(
                f"{len(bad)} coordinate(s) outside [0, {hi}), first at index {bad[0]}"
            )


def quantize(x: Sequence[float] | np.ndarray, s: QuantScheme) -> QuantizedVector:
    """Encode reals; out-of-range inputs are clamped and counted, not rejected."""
    arr = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(arr)):
        raise QuantizationRangeError("cannot quantize non-finite values")
    steps = np.rint(arr / s.delta)  # numpy rint is round-half-even
    lo, hi = -s.offset, s.offset - 1
    clamped = int(np.count_nonzero((steps < lo) | (steps > hi)))
    steps = np.clip(steps, lo, hi).astype(np.int64) + s.offset
    return QuantizedVector(tuple(int(v) for v in steps), s, 1, clamped)


def dequantize_aggregate(v: QuantizedVector | Sequence[int], k_prime: int, s: QuantScheme) -> np.ndarray:
    values = np.asarray(v.values if isinstance(v, QuantizedVector) else v, dtype=np.int64)
    if k_prime < 1:
        raise ValueError("k_prime must be >= 1")
    # An aggregate of k' encodes lies in [0, k'(2^b - 1)]; anything else means
    # the participant count does not match what was summed.
    if values.size and (values.min() < 0 or values.max() > k_prime * (s.levels - 1)):
        raise QuantizationRangeError(
            f"aggregate outside the range of {k_prime} client encodes; participant-count mismatch?"
        )
    return (values - k_prime * s.offset).astype(np.float64) * s.delta
