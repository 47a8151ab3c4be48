"""Split-latent container and the embedding manipulations used for
dereverberation and teleportation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ShapeError


def downsample_acoustic(emb, d: int):
    """Mean-pool ``[T, D]`` (or ``[B, T, D]``) over non-overlapping blocks of ``d`` frames.

    The last block may be partial and is averaged over its actual size.
    Works on numpy arrays and torch tensors alike.
    """
    if d < 1:
        raise ValueError(f"downsample factor must be >= 1, got {d}")
    if d == 1:
        return emb
    is_np = isinstance(emb, np.ndarray)
    x = torch.as_tensor(emb)
    t = x.shape[-2]
    n_out = -(-t // d)
    pad = n_out * d - t
    if pad:
        x_pad = torch.cat([x, x.new_zeros(*x.shape[:-2], pad, x.shape[-1])], dim=-2)
    else:
        x_pad = x
    sums = x_pad.reshape(*x.shape[:-2], n_out, d, x.shape[-1]).sum(dim=-2)
    counts = torch.full((n_out,), float(d), dtype=x.dtype)
    counts[-1] = d - pad
    out = sums / counts[:, None]
    return out.numpy() if is_np else out


def upsample_acoustic(emb, d: int, target_frames: int):
    """Repeat each acoustic frame ``d`` times: output row t is input row t // d."""
    t_h = emb.shape[-2]
    if t_h != -(-target_frames // d):
        raise ShapeError(f"{t_h} acoustic frames cannot cover {target_frames} frames at factor {d}")
    if d == 1:
        return emb
    idx = np.arange(target_frames) // d
    if isinstance(emb, np.ndarray):
        return emb[..., idx, :]
    return emb[..., torch.as_tensor(idx), :]


@dataclass(frozen=True, eq=False)
class LatentPair:
    """Speech embedding ``[frames, 64]`` and acoustic embedding ``[frames_h, 64]``.

    ``speech_tokens``/``acoustic_tokens`` are present when the embeddings
    came out of the quantizers.
    """

    speech_emb: np.ndarray
    acoustic_emb: np.ndarray
    downsample_factor: int = 1
    speech_tokens: np.ndarray | None = None
    acoustic_tokens: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.speech_emb)
        h = np.asarray(self.acoustic_emb)
        if s.ndim != 2 or h.ndim != 2:
            raise ShapeError("latent embeddings must be 2-D [frames, dim]")
        if h.shape[0] != -(-s.shape[0] // self.downsample_factor):
            raise ShapeError(
                f"acoustic frames {h.shape[0]} inconsistent with {s.shape[0]} speech frames "
                f"at factor {self.downsample_factor}"
            )
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(h))):
            raise ShapeError("latent embeddings must be finite")
        object.__setattr__(self, "speech_emb", s)
        object.__setattr__(self, "acoustic_emb", h)

    @property
    def frames(self) -> int:
        return self.speech_emb.shape[0]

    def compatible_with(self, other: LatentPair) -> bool:
        return (
            self.speech_emb.shape == other.speech_emb.shape
            and self.acoustic_emb.shape == other.acoustic_emb.shape
            and self.downsample_factor == other.downsample_factor
        )


def zero_acoustic(latents: LatentPair) -> LatentPair:
    """Replace the acoustic embedding by zeros; the speech side is untouched."""
    return LatentPair(
        latents.speech_emb,
        np.zeros_like(latents.acoustic_emb),
        latents.downsample_factor,
        latents.speech_tokens,
        None,
    )


def swap_acoustic(a: LatentPair, b: LatentPair) -> tuple[LatentPair, LatentPair]:
    """Return (speech of a + acoustic of b, speech of b + acoustic of a)."""
    if not a.compatible_with(b):
        raise ShapeError(
            f"cannot swap acoustic embeddings between shapes "
            f"{a.speech_emb.shape}/{a.acoustic_emb.shape} and {b.speech_emb.shape}/{b.acoustic_emb.shape}"
        )
    return (
        LatentPair(a.speech_emb, b.acoustic_emb, a.downsample_factor, a.speech_tokens, b.acoustic_tokens),
        LatentPair(b.speech_emb, a.acoustic_emb, b.downsample_factor, b.speech_tokens, a.acoustic_tokens),
    )
