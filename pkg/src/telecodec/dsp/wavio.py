"""16-bit PCM mono WAV I/O at 16 kHz."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from ..errors import IoError, RateMismatch
from .buffers import SAMPLE_RATE, AudioBuffer, ImpulseResponse

PCM_SCALE = 32768.0


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * PCM_SCALE), -32768, 32767).astype("<i2")


def from_pcm16(pcm: np.ndarray) -> np.ndarray:
    return pcm.astype(np.float64) / PCM_SCALE


def write_wav(path, audio) -> Path:
    """Write an AudioBuffer or ImpulseResponse as 16-bit PCM."""
    path = Path(path)
    if audio.sample_rate != SAMPLE_RATE:
        raise RateMismatch(f"only {SAMPLE_RATE} Hz is supported")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(SAMPLE_RATE)
            fh.writeframes(to_pcm16(audio.samples).tobytes())
    except OSError as exc:
        raise IoError(path, str(exc)) from exc
    return path


def read_pcm16(path) -> np.ndarray:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
                raise IoError(path, "expected mono 16-bit PCM")
            if fh.getframerate() != SAMPLE_RATE:
                raise RateMismatch(f"{path}: {fh.getframerate()} Hz, expected {SAMPLE_RATE}")
            data = fh.readframes(fh.getnframes())
    except (OSError, EOFError, wave.Error) as exc:
        raise IoError(path, str(exc)) from exc
    return np.frombuffer(data, dtype="<i2")


def read_wav(path) -> AudioBuffer:
    return AudioBuffer(from_pcm16(read_pcm16(path)), SAMPLE_RATE)


def read_rir(path, nominal_rt60: float | None = None, room_id: int | None = None) -> ImpulseResponse:
    return ImpulseResponse(from_pcm16(read_pcm16(path)), SAMPLE_RATE, nominal_rt60, room_id)
