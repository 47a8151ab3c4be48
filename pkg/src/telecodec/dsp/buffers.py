from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput, InvalidRt60, RateMismatch

SAMPLE_RATE = 16000
MAX_RT60 = 2.0


def _as_samples(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(f"expected mono 1-D samples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("samples contain NaN or Inf")
    return arr


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono waveform at 16 kHz.

    Samples are stored as float64 and are guaranteed finite.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_samples(self.samples))
        if self.sample_rate != SAMPLE_RATE:
            raise RateMismatch(f"sample rate must be {SAMPLE_RATE}, got {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0

    def with_samples(self, samples) -> AudioBuffer:
        return AudioBuffer(samples, self.sample_rate)


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    """Room impulse response, optionally tagged with its analytic RT60 and room id."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    nominal_rt60: float | None = None
    room_id: int | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_samples(self.samples))
        if self.sample_rate != SAMPLE_RATE:
            raise RateMismatch(f"sample rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        if self.nominal_rt60 is not None and not 0.0 < self.nominal_rt60 <= MAX_RT60:
            raise InvalidRt60(f"nominal_rt60 must lie in (0, {MAX_RT60}], got {self.nominal_rt60}")

    def __len__(self) -> int:
        return self.samples.shape[0]

    def with_samples(self, samples) -> ImpulseResponse:
        return ImpulseResponse(samples, self.sample_rate, self.nominal_rt60, self.room_id)
