"""Convolutional split-latent codec.

SEANet-style encoder/decoder: strided 1-D convolutions with residual units,
plus a residual LSTM at frame rate on both sides of the bottleneck so the
decoder can synthesize reverberant tails far longer than its convolutional
receptive field. The 128-channel encoder output is split into a speech half
and an acoustic half, each with its own residual vector quantizer.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .latents import downsample_acoustic, upsample_acoustic
from .quantizer import ResidualVQ
from ..errors import InputTooShort, ShapeError


class ResidualUnit(nn.Module):
    def __init__(self, channels: int, dilation: int = 1):
        super().__init__()
        hidden = max(channels // 2, 1)
        self.conv1 = nn.Conv1d(channels, hidden, 3, dilation=dilation, padding=dilation)
        self.conv2 = nn.Conv1d(hidden, channels, 1)

    def forward(self, x):
        return x + self.conv2(F.elu(self.conv1(F.elu(x))))


class DownBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int):
        super().__init__()
        self.stride = stride
        self.res = nn.Sequential(ResidualUnit(c_in, 1), ResidualUnit(c_in, 3))
        self.conv = nn.Conv1d(c_in, c_out, 2 * stride, stride=stride)

    def forward(self, x):
        x = F.elu(self.res(x))
        # asymmetric padding keeps out_len == in_len / stride for odd strides too
        x = F.pad(x, ((self.stride + 1) // 2, self.stride // 2))
        return self.conv(x)


class UpBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int):
        super().__init__()
        self.stride = stride
        self.conv = nn.ConvTranspose1d(c_in, c_out, 2 * stride, stride=stride)
        self.res = nn.Sequential(ResidualUnit(c_out, 1), ResidualUnit(c_out, 3))

    def forward(self, x):
        n = x.shape[-1] * self.stride
        x = self.conv(F.elu(x))
        trim = (self.stride + 1) // 2
        return self.res(x[..., trim:trim + n])


class FrameLSTM(nn.Module):
    """Residual LSTM over the frame axis of a ``[B, C, T]`` tensor."""

    def __init__(self, channels: int, layers: int):
        super().__init__()
        self.lstm = nn.LSTM(channels, channels, num_layers=layers, batch_first=True)

    def forward(self, x):
        y, _ = self.lstm(x.transpose(1, 2))
        return x + y.transpose(1, 2)


class Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        ch = cfg.channels
        self.conv_in = nn.Conv1d(1, ch[0], 7, padding=3)
        self.blocks = nn.ModuleList(DownBlock(ch[i], ch[i + 1], s) for i, s in enumerate(cfg.strides))
        self.lstm = FrameLSTM(ch[-1], cfg.lstm_layers) if cfg.lstm_layers else nn.Identity()
        self.conv_out = nn.Conv1d(ch[-1], cfg.latent_dim, 3, padding=1)

    def forward(self, wav):
        x = self.conv_in(wav[:, None, :])
        for block in self.blocks:
            x = block(x)
        x = self.lstm(x)
        return self.conv_out(F.elu(x))


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        ch = cfg.channels
        self.conv_in = nn.Conv1d(cfg.latent_dim, ch[-1], 7, padding=3)
        self.lstm = FrameLSTM(ch[-1], cfg.lstm_layers) if cfg.lstm_layers else nn.Identity()
        self.blocks = nn.ModuleList(
            UpBlock(ch[i + 1], ch[i], s) for i, s in reversed(list(enumerate(cfg.strides)))
        )
        self.conv_out = nn.Conv1d(ch[0], 1, 7, padding=3)

    def forward(self, z):
        x = self.lstm(self.conv_in(z))
        for block in self.blocks:
            x = block(x)
        return self.conv_out(F.elu(x))[:, 0, :]


class CodecModel(nn.Module):
    """Encoder, two RVQs and decoder.

    Tensor conventions: waveforms ``[B, samples]``; embeddings
    ``[B, frames, dim]``.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)
        if cfg.n_quantizers > 0:
            kw = dict(decay=cfg.ema_decay, dead_code_threshold=cfg.dead_code_threshold)
            self.speech_rvq = ResidualVQ(cfg.n_quantizers, cfg.codebook_size, cfg.speech_dim, **kw)
            self.acoustic_rvq = ResidualVQ(cfg.n_quantizers, cfg.codebook_size, cfg.acoustic_dim, **kw)
        else:
            self.speech_rvq = None
            self.acoustic_rvq = None
        self.register_buffer("step", torch.zeros((), dtype=torch.long))

    @property
    def hop(self) -> int:
        return self.cfg.hop

    def pad_to_hop(self, wav: torch.Tensor) -> torch.Tensor:
        n = wav.shape[-1]
        if n < self.hop:
            raise InputTooShort(f"input has {n} samples, need at least {self.hop}")
        target = self.cfg.frames(n) * self.hop
        return F.pad(wav, (0, target - n)) if target != n else wav

    def encode_continuous(self, wav: torch.Tensor):
        """Unquantized ``(speech [B, T, 64], acoustic [B, ceil(T/d), 64])``."""
        z = self.encoder(self.pad_to_hop(wav)).transpose(1, 2)
        speech = z[..., : self.cfg.speech_dim]
        acoustic = downsample_acoustic(z[..., self.cfg.speech_dim:], self.cfg.downsample_factor)
        return speech, acoustic

    def quantize(self, speech, acoustic, update: bool | None = None, generator=None):
        """Run both RVQs; returns quantized tensors, tokens and summed commitment loss."""
        if self.speech_rvq is None:
            zero = speech.new_zeros(())
            return speech, acoustic, None, None, zero
        s_q, s_tok, s_commit = self.speech_rvq(speech, update=update, generator=generator)
        h_q, h_tok, h_commit = self.acoustic_rvq(acoustic, update=update, generator=generator)
        return s_q, h_q, s_tok, h_tok, s_commit + h_commit

    def decode_continuous(self, speech: torch.Tensor, acoustic: torch.Tensor) -> torch.Tensor:
        frames = speech.shape[-2]
        if speech.shape[-1] != self.cfg.speech_dim or acoustic.shape[-1] != self.cfg.acoustic_dim:
            raise ShapeError("embedding widths do not match the model config")
        acoustic = upsample_acoustic(acoustic, self.cfg.downsample_factor, frames)
        z = torch.cat([speech, acoustic], dim=-1).transpose(1, 2)
        return self.decoder(z)

    def forward(self, wav: torch.Tensor):
        """Plain autoencoding pass: returns ``(reconstruction, commitment)``."""
        s, h = self.encode_continuous(wav)
        s_q, h_q, _, _, commit = self.quantize(s, h)
        return self.decode_continuous(s_q, h_q)[..., : wav.shape[-1]], commit


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
