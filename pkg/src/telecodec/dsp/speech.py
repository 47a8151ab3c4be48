"""Parametric source-filter speech stand-in.

Each speaker id fixes a base f0, a three-formant vocal tract and a glottal
tilt; each utterance seed fixes the syllable timing, pitch accents and the
per-syllable vowel colour. The result is speech-shaped enough to carry
speaker identity through a long-term spectrum and to expose free decays at
syllable offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .buffers import SAMPLE_RATE, AudioBuffer

_SPEAKER_SALT = 0x5EED_5BEA
_UTTERANCE_SALT = 0x0077_E7A5
OUTPUT_PEAK = 0.9
MIN_PAUSE = 0.1


@dataclass(frozen=True)
class SpeakerVoice:
    f0: float
    formants: tuple[float, float, float]
    bandwidths: tuple[float, float, float]
    tilt: float
    breathiness: float


def speaker_voice(speaker_id: int) -> SpeakerVoice:
    """Voice parameters derived deterministically from ``speaker_id``."""
    rng = np.random.default_rng([_SPEAKER_SALT, int(speaker_id) & 0xFFFF_FFFF, int(speaker_id) >> 32])
    f0 = rng.uniform(90.0, 250.0)
    # vocal-tract length scaling shifts all formants together
    scale = rng.uniform(0.85, 1.2)
    formants = (
        scale * rng.uniform(450.0, 750.0),
        scale * rng.uniform(1100.0, 1800.0),
        scale * rng.uniform(2300.0, 3100.0),
    )
    bandwidths = (rng.uniform(60, 110), rng.uniform(80, 150), rng.uniform(120, 220))
    return SpeakerVoice(
        f0=float(f0),
        formants=tuple(float(f) for f in formants),
        bandwidths=tuple(float(b) for b in bandwidths),
        tilt=float(rng.uniform(0.85, 0.97)),
        breathiness=float(rng.uniform(0.01, 0.06)),
    )


def _resonator(freq: float, bw: float, fs: int):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = [1.0, -2 * r * np.cos(theta), r * r]
    b = [1.0 - r]
    return b, a


def _syllable_plan(duration: float, rng: np.random.Generator):
    """List of (onset, length) syllables in seconds with phrase pauses."""
    plan = []
    t = rng.uniform(0.02, 0.12)
    # guarantee one pause of at least MIN_PAUSE near the middle of the clip
    forced_pause_at = duration * rng.uniform(0.35, 0.6)
    forced_done = False
    in_phrase = 0
    phrase_len = rng.integers(2, 5)
    while t < duration:
        length = rng.uniform(0.12, 0.3)
        plan.append((t, length))
        t += length
        in_phrase += 1
        if not forced_done and t >= forced_pause_at:
            t += rng.uniform(0.2, 0.4)
            forced_done = True
            in_phrase = 0
        elif in_phrase >= phrase_len:
            t += rng.uniform(0.15, 0.4)
            in_phrase = 0
            phrase_len = rng.integers(2, 5)
        else:
            t += rng.uniform(0.015, 0.06)
    return plan


def _envelope(n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    attack = min(n // 3, int(fs * rng.uniform(0.01, 0.025)))
    release = min(n // 3, int(fs * rng.uniform(0.015, 0.03)))
    env = np.ones(n)
    if attack:
        env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    if release:
        env[n - release:] = 0.5 + 0.5 * np.cos(np.pi * (np.arange(release) + 1) / release)
    # mild stress shape inside the syllable
    env *= 1.0 + 0.25 * np.sin(np.pi * np.arange(n) / n)
    return env


def synth_speech(duration: float, speaker_id: int, utterance_seed: int) -> AudioBuffer:
    """Generate ``duration`` seconds of synthetic speech peak-normalized to 0.9."""
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    fs = SAMPLE_RATE
    n_total = int(round(duration * fs))
    voice = speaker_voice(speaker_id)
    rng = np.random.default_rng([_UTTERANCE_SALT, int(speaker_id) & 0xFFFF_FFFF, int(utterance_seed) & 0xFFFF_FFFF])
    out = np.zeros(n_total)
    n_syll = 0
    for onset, length in _syllable_plan(duration, rng):
        start = int(onset * fs)
        n = min(int(length * fs), n_total - start)
        if n < 64:
            continue
        n_syll += 1
        # pitch contour: accent plus a linear glide
        accent = rng.uniform(0.85, 1.2)
        glide = rng.uniform(-0.12, 0.08)
        f0 = voice.f0 * accent * (1.0 + glide * np.linspace(0.0, 1.0, n))
        f0 *= 1.0 + 0.01 * rng.standard_normal() * np.sin(2 * np.pi * 5.5 * np.arange(n) / fs)
        phase = np.cumsum(f0 / fs) + rng.uniform()
        pulses = np.diff(np.floor(phase), prepend=np.floor(phase[0])).astype(np.float64)
        # one-pole glottal tilt shapes the pulse train spectrum
        source = lfilter([1.0], [1.0, -voice.tilt], pulses)
        source -= lfilter([1.0], [1.0, -0.995], source) * (1 - 0.995)
        source += voice.breathiness * rng.standard_normal(n)
        vowel = rng.uniform(0.75, 1.3, size=3)
        vowel[2] = rng.uniform(0.92, 1.08)
        voiced = np.zeros(n)
        for k in range(3):
            freq = min(voice.formants[k] * vowel[k], 0.45 * fs)
            b, a = _resonator(freq, voice.bandwidths[k], fs)
            voiced += lfilter(b, a, source) * (1.0, 0.6, 0.35)[k]
        voiced *= _envelope(n, fs, rng)
        if rng.uniform() < 0.4:
            # fricative onset: high-passed noise burst leading into the vowel
            burst = min(n, int(fs * rng.uniform(0.03, 0.08)))
            noise = np.diff(rng.standard_normal(burst + 1))
            ramp = np.sin(np.pi * np.arange(burst) / burst)
            voiced[:burst] += 0.04 * rng.uniform(0.5, 1.5) * noise * ramp * np.abs(voiced).max()
        out[start:start + n] += voiced
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= OUTPUT_PEAK / peak
    return AudioBuffer(out, fs)
