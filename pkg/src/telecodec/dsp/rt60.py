"""Reverberation time estimation.

Two estimators live here: a Schroeder-integration T20 fit for impulse
responses with a known shape, and a blind free-decay estimator that works
directly on reverberant speech.
"""

from __future__ import annotations

import numpy as np

from ..errors import InsufficientDecay, InvalidInput
from .buffers import AudioBuffer, ImpulseResponse

FIT_START_DB = -5.0
FIT_END_DB = -25.0
MIN_FIT_POINTS = 8

BLIND_FRAME = 0.020
BLIND_HOP = 0.010
BLIND_MIN_RUN = 8
BLIND_FLOOR_DB = -80.0
BLIND_PERCENTILE = 10.0
BLIND_BANDS = 16
BLIND_BAND_LO = 100.0
BLIND_BAND_HI = 6000.0
BLIND_SMOOTH = 3


def schroeder_edc_db(h: np.ndarray) -> np.ndarray:
    """Energy decay curve in dB re. total energy (backward-integrated h**2)."""
    energy = np.cumsum(np.square(h)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / energy[0])


def estimate_rt60(h: ImpulseResponse) -> float:
    """RT60 of an impulse response from a -5..-25 dB line fit to its EDC.

    Raises:
        InsufficientDecay: if the EDC never reaches -25 dB, or the fit range
            holds too few samples to fit a line.
    """
    samples = h.samples
    if samples.size == 0 or not np.any(samples):
        raise InsufficientDecay("impulse response carries no energy")
    edc = schroeder_edc_db(samples)
    below_end = np.flatnonzero(edc <= FIT_END_DB)
    if below_end.size == 0:
        raise InsufficientDecay(f"energy decay curve never reaches {FIT_END_DB} dB")
    start = int(np.flatnonzero(edc <= FIT_START_DB)[0])
    stop = int(below_end[0])
    seg = edc[start:stop + 1]
    seg_ok = np.isfinite(seg)
    if np.count_nonzero(seg_ok) < MIN_FIT_POINTS:
        raise InsufficientDecay("too few samples between -5 dB and -25 dB")
    t = (np.arange(start, stop + 1) / h.sample_rate)[seg_ok]
    slope, _ = np.polyfit(t, seg[seg_ok], 1)
    if slope >= 0:
        raise InsufficientDecay("energy decay curve does not decay")
    return float(-60.0 / slope)


def band_energy_envelope_db(x: np.ndarray, sample_rate: int) -> np.ndarray:
    """Short-time level in dB, averaged over log-spaced frequency bands.

    Frames are 20 ms Hann windows at a 10 ms hop. Each band's energy is
    smoothed over ``BLIND_SMOOTH`` frames and expressed in dB relative to
    that band's maximum (floored at -80 dB) before averaging. Averaging log
    levels across bands suppresses the deep fades a narrowband reverberant
    tail shows in a single broadband envelope.
    """
    frame = int(round(BLIND_FRAME * sample_rate))
    hop = int(round(BLIND_HOP * sample_rate))
    n_frames = 1 + (x.size - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    n_fft = 1 << (frame - 1).bit_length()
    power = np.abs(np.fft.rfft(x[idx] * np.hanning(frame), n=n_fft, axis=1)) ** 2
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    edges = np.geomspace(BLIND_BAND_LO, BLIND_BAND_HI, BLIND_BANDS + 1)
    bands = np.stack(
        [power[:, (freqs >= lo) & (freqs < hi)].sum(axis=1) for lo, hi in zip(edges[:-1], edges[1:])],
        axis=1,
    )
    if BLIND_SMOOTH > 1:
        kernel = np.ones(BLIND_SMOOTH) / BLIND_SMOOTH
        pad = (BLIND_SMOOTH // 2, BLIND_SMOOTH - 1 - BLIND_SMOOTH // 2)
        bands = np.stack(
            [np.convolve(np.pad(b, pad, mode="edge"), kernel, mode="valid") for b in bands.T], axis=1
        )
    peak = bands.max(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 10.0 * np.log10(bands / np.where(peak > 0, peak, 1.0))
    db = np.where(np.isfinite(db), db, BLIND_FLOOR_DB)
    return np.maximum(db, BLIND_FLOOR_DB).mean(axis=1)


def decay_slopes(x: AudioBuffer) -> np.ndarray:
    """Fitted slopes (dB/s) of every monotone free-decay run in ``x``.

    A run starts at a local peak of the level envelope and lasts while the
    level keeps falling; runs with fewer than ``BLIND_MIN_RUN`` decreasing
    frames are discarded, and frames sitting on the floor are not fitted.
    """
    db = band_energy_envelope_db(x.samples, x.sample_rate)
    falling = np.diff(db) < 0
    slopes = []
    i = 0
    n = falling.size
    while i < n:
        if not falling[i]:
            i += 1
            continue
        j = i
        while j < n and falling[j]:
            j += 1
        # frames i..j form a strictly decreasing run of j - i steps
        seg = db[i:j + 1]
        seg = seg[seg > BLIND_FLOOR_DB]
        if j - i >= BLIND_MIN_RUN and seg.size >= 3:
            t = np.arange(seg.size) * BLIND_HOP
            slopes.append(np.polyfit(t, seg, 1)[0])
        i = j
    return np.asarray(slopes, dtype=np.float64)


def blind_rt60(x: AudioBuffer) -> float:
    """Blind RT60 of a reverberant recording from its steepest free decays.

    The room's own decay bounds how quickly energy can fall after a sound
    stops, so the steep end of the slope distribution (10th percentile)
    tracks the room.

    Raises:
        InvalidInput: if ``x`` is shorter than one second.
        InsufficientDecay: if no decay run is found (e.g. silence).
    """
    if x.duration < 1.0:
        raise InvalidInput(f"blind_rt60 needs at least 1 s of audio, got {x.duration:.3f} s")
    slopes = decay_slopes(x)
    slopes = slopes[slopes < 0]
    if slopes.size == 0:
        raise InsufficientDecay("no free-decay segment found")
    slope = np.percentile(slopes, BLIND_PERCENTILE)
    return float(-60.0 / slope)
