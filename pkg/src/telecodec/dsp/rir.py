"""Room impulse response synthesis, preprocessing and convolution."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve

from ..errors import DegenerateRir, InvalidInput, InvalidRt60, RateMismatch
from .buffers import MAX_RT60, SAMPLE_RATE, AudioBuffer, ImpulseResponse

# ln(10**3): amplitude drops by 1e-3 (-60 dB) after exactly rt60 seconds
DECAY_CONSTANT = 6.9078
RIR_PEAK = 0.25
TAIL_AMPLITUDE = 0.5


def decay_envelope(t, rt60: float) -> np.ndarray:
    """Amplitude envelope exp(-6.9078 t / rt60) of the synthetic reverb tail."""
    return np.exp(-DECAY_CONSTANT * np.asarray(t, dtype=np.float64) / rt60)


def synth_rir(rt60: float, duration: float, seed: int, room_id: int | None = None) -> ImpulseResponse:
    """Synthesize an exponentially decaying noise RIR with a known RT60.

    Sample 0 is a unit direct path. Every later sample is uniform white noise
    in [-0.5, 0.5) shaped by :func:`decay_envelope`, so the direct path is
    always the magnitude peak.

    Args:
        rt60: Target reverberation time in seconds, in (0, 2].
        duration: Length of the response in seconds, at least ``2 * rt60``.
        seed: Seed for the noise realization.
        room_id: Optional identifier carried on the result.

    Returns:
        ImpulseResponse with ``nominal_rt60 == rt60``.
    """
    if not np.isfinite(rt60) or not 0.0 < rt60 <= MAX_RT60:
        raise InvalidRt60(f"rt60 must lie in (0, {MAX_RT60}] s, got {rt60}")
    if duration < 2.0 * rt60 - 1e-12:
        raise InvalidInput(f"duration {duration} s is shorter than 2*rt60 = {2 * rt60} s")
    n = int(round(duration * SAMPLE_RATE))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / SAMPLE_RATE
    h = rng.uniform(-TAIL_AMPLITUDE, TAIL_AMPLITUDE, size=n) * decay_envelope(t, rt60)
    h[0] = 1.0
    return ImpulseResponse(h, SAMPLE_RATE, nominal_rt60=float(rt60), room_id=room_id)


def preprocess_rir(raw: ImpulseResponse) -> ImpulseResponse:
    """Drop pre-echoes before the magnitude peak and rescale the peak to 0.25."""
    mag = np.abs(raw.samples)
    if mag.size == 0 or not np.any(mag > 0):
        raise DegenerateRir("impulse response has no nonzero sample")
    start = int(np.argmax(mag))
    trimmed = raw.samples[start:]
    return raw.with_samples(trimmed / mag[start] * RIR_PEAK)


def peak_normalize(x: AudioBuffer, peak: float = 1.0) -> AudioBuffer:
    """Scale ``x`` so its largest magnitude equals ``peak``; silence is returned as-is."""
    m = x.peak
    if m == 0.0:
        return x
    return x.with_samples(x.samples / m * peak)


def convolve_rir(speech: AudioBuffer, rir: ImpulseResponse) -> AudioBuffer:
    """Reverberate ``speech`` with ``rir``; the result keeps the speech length."""
    if len(speech) == 0 or len(rir) == 0:
        raise InvalidInput("convolve_rir needs non-empty speech and rir")
    if speech.sample_rate != rir.sample_rate:
        raise RateMismatch(f"{speech.sample_rate} Hz speech vs {rir.sample_rate} Hz rir")
    n = len(speech)
    # method='auto' goes direct for short kernels, FFT otherwise
    y = convolve(speech.samples, rir.samples[:n], method="auto")[:n]
    return speech.with_samples(y)
