from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from ..errors import ValidationError


@dataclass(frozen=True)
class ModelConfig:
    """Architecture constants of the split-latent codec.

    ``n_quantizers`` is the number of RVQ stages per stream (0 disables
    quantization) and ``downsample_factor`` pools the acoustic stream over
    time before quantization.
    """

    sample_rate: int = 16000
    strides: tuple[int, ...] = (2, 4, 5, 8)
    channels: tuple[int, ...] = (16, 32, 64, 96, 128)
    latent_dim: int = 128
    speech_dim: int = 64
    acoustic_dim: int = 64
    codebook_size: int = 1024
    n_quantizers: int = 8
    downsample_factor: int = 1
    lstm_layers: int = 1
    ema_decay: float = 0.99
    dead_code_threshold: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        self.validate()

    @property
    def hop(self) -> int:
        return math.prod(self.strides)

    def validate(self) -> None:
        if self.sample_rate != 16000:
            raise ValidationError("sample_rate must be 16000")
        if self.speech_dim + self.acoustic_dim != self.latent_dim:
            raise ValidationError("speech_dim + acoustic_dim must equal latent_dim")
        if self.hop != 320:
            raise ValidationError(f"product of strides must be 320, got {self.hop}")
        if len(self.channels) != len(self.strides) + 1:
            raise ValidationError("channels needs one entry per stage plus the input width")
        if self.codebook_size != 1024:
            raise ValidationError("codebook_size is fixed at 1024")
        if self.n_quantizers < 0:
            raise ValidationError("n_quantizers must be >= 0")
        if self.downsample_factor < 1:
            raise ValidationError("downsample_factor must be >= 1")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValidationError("ema_decay must lie in (0, 1)")

    def frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop)

    def acoustic_frames(self, n_frames: int) -> int:
        return -(-n_frames // self.downsample_factor)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strides"] = list(self.strides)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)
