"""Split-latent codec: model, quantizers, latent manipulation and inference."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .inference import decode, dereverb, encode, export_tokens, reconstruct, teleport, tokens_to_latents
from .latents import LatentPair, downsample_acoustic, swap_acoustic, upsample_acoustic, zero_acoustic
from .model import CodecModel, count_parameters
from .quantizer import ResidualVQ, commitment_loss, rvq_dequantize, rvq_quantize

__all__ = [
    "CodecModel",
    "LatentPair",
    "ModelConfig",
    "ResidualVQ",
    "commitment_loss",
    "count_parameters",
    "decode",
    "dereverb",
    "downsample_acoustic",
    "encode",
    "export_tokens",
    "load_checkpoint",
    "reconstruct",
    "rvq_dequantize",
    "rvq_quantize",
    "save_checkpoint",
    "swap_acoustic",
    "teleport",
    "tokens_to_latents",
    "upsample_acoustic",
    "zero_acoustic",
]
