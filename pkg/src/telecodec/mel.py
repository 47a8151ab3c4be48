"""Mel filterbank and log-mel spectrogram helpers shared by the loss and metrics."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

LOG_FLOOR = 1e-5


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filterbank(n_fft: int, n_mels: int, sample_rate: int = 16000,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-scale filters, shape ``[n_mels, n_fft // 2 + 1]``.

    Filters are interpolated on the continuous frequency axis, so even a
    band narrower than one FFT bin keeps a nonzero weight.
    """
    fmax = sample_rate / 2 if fmax is None else fmax
    freqs = np.linspace(0.0, sample_rate / 2, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lower) / (center - lower)
    down = (upper - freqs[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(up, down))
    empty = fb.sum(axis=1) == 0
    if np.any(empty):
        # give degenerate filters the nearest bin so no band is silent
        nearest = np.abs(freqs[None, :] - center[empty]).argmin(axis=1)
        fb[np.flatnonzero(empty), nearest] = 1.0
    fb.setflags(write=False)
    return fb


def log_mel_spectrogram(x: np.ndarray, n_fft: int = 512, win_length: int = 400,
                        hop: int = 160, n_mels: int = 64, sample_rate: int = 16000) -> np.ndarray:
    """Natural-log mel magnitude spectrogram ``[frames, n_mels]`` (Hann window, centered frames)."""
    x = np.asarray(x, dtype=np.float64)
    pad = n_fft // 2
    xp = np.pad(x, (pad, pad), mode="reflect" if x.size > pad else "constant")
    n_frames = 1 + (xp.size - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    window = np.zeros(n_fft)
    offset = (n_fft - win_length) // 2
    window[offset:offset + win_length] = np.hanning(win_length + 1)[:-1]
    mag = np.abs(np.fft.rfft(xp[idx] * window, axis=1))
    mel = mag @ mel_filterbank(n_fft, n_mels, sample_rate).T
    return np.log(np.maximum(mel, LOG_FLOOR))
