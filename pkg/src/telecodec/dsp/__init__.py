"""Deterministic DSP primitives: buffers, RIRs, synthetic speech and RT60."""

from .buffers import SAMPLE_RATE, AudioBuffer, ImpulseResponse
from .rir import convolve_rir, decay_envelope, peak_normalize, preprocess_rir, synth_rir
from .rt60 import blind_rt60, estimate_rt60, schroeder_edc_db
from .speech import speaker_voice, synth_speech
from .wavio import read_rir, read_wav, write_wav

__all__ = [
    "SAMPLE_RATE",
    "AudioBuffer",
    "ImpulseResponse",
    "blind_rt60",
    "convolve_rir",
    "decay_envelope",
    "estimate_rt60",
    "peak_normalize",
    "preprocess_rir",
    "read_rir",
    "read_wav",
    "schroeder_edc_db",
    "speaker_voice",
    "synth_rir",
    "synth_speech",
    "write_wav",
]
