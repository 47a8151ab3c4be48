"""Reconstruction and quantization losses."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..codec.quantizer import commitment_loss
from ..errors import ShapeError, ValidationError
from ..mel import LOG_FLOOR, mel_filterbank

__all__ = [
    "LossWeights",
    "commitment_loss",
    "multiscale_mel_loss",
    "reconstruction_loss",
    "time_domain_loss",
]

MEL_SCALES = (64, 128, 256, 512, 1024, 2048)
MELS_AT_LARGEST = 64


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights; reconstruction terms default to 0.1."""

    time_domain: float = 0.1
    multi_spectral: float = 0.1
    commitment: float = 1.0
    adversarial: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValidationError(f"loss weight {name} must be >= 0, got {value}")


_fb_cache: dict = {}


def _mel_fb(n_fft: int, dtype) -> torch.Tensor:
    key = (n_fft, dtype)
    if key not in _fb_cache:
        n_mels = max(1, MELS_AT_LARGEST * n_fft // MEL_SCALES[-1])
        _fb_cache[key] = torch.tensor(np.array(mel_filterbank(n_fft, n_mels)), dtype=dtype)
    return _fb_cache[key]


def log_mel(x: torch.Tensor, n_fft: int) -> torch.Tensor:
    """Log mel magnitudes ``[B, frames, mels]`` at one analysis scale (hop = n_fft / 4)."""
    window = torch.hann_window(n_fft, dtype=x.dtype)
    spec = torch.stft(x, n_fft, hop_length=n_fft // 4, window=window, center=True,
                      pad_mode="reflect", return_complex=True)
    # tiny offset keeps the gradient of |.| finite at exact zeros
    mag = torch.sqrt(spec.real ** 2 + spec.imag ** 2 + 1e-12).transpose(1, 2)
    return torch.log(torch.clamp(mag @ _mel_fb(n_fft, x.dtype).t(), min=LOG_FLOOR))


def multiscale_mel_loss(x_hat: torch.Tensor, x: torch.Tensor, scales=MEL_SCALES) -> torch.Tensor:
    """Mean over scales of the L1 distance between log-mel magnitudes."""
    terms = [torch.mean(torch.abs(log_mel(x_hat, n) - log_mel(x, n))) for n in scales]
    return torch.stack(terms).mean()


def time_domain_loss(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    return torch.mean(torch.abs(x_hat - x))


def reconstruction_loss(x_hat: torch.Tensor, x: torch.Tensor, weights: LossWeights = LossWeights()):
    """Weighted time-domain L1 plus multi-scale log-mel L1.

    Returns:
        ``(total, terms)`` where ``terms`` maps ``"time"``/``"mel"`` to the
        unweighted components.
    """
    if x_hat.shape != x.shape:
        raise ShapeError(f"reconstruction_loss shapes differ: {tuple(x_hat.shape)} vs {tuple(x.shape)}")
    if x.dim() == 1:
        x_hat, x = x_hat[None], x[None]
    t = time_domain_loss(x_hat, x)
    m = multiscale_mel_loss(x_hat, x)
    total = weights.time_domain * t + weights.multi_spectral * m
    return total, {"time": t, "mel": m}
