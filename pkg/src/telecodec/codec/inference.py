"""Inference API: encode, decode, teleport and token export on a frozen model."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..dsp.buffers import AudioBuffer
from ..errors import InputTooShort, IoError, ShapeError
from .latents import LatentPair, swap_acoustic, zero_acoustic
from .model import CodecModel
from .quantizer import rvq_dequantize


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)


@torch.no_grad()
def encode(x, model: CodecModel, quantize: bool | None = None) -> LatentPair:
    """Encode one waveform into its speech/acoustic latent pair.

    Args:
        x: ``AudioBuffer`` or 1-D array at 16 kHz, at least one hop long.
        model: Codec in any mode; it is not modified.
        quantize: Pass the embeddings through the RVQs. Defaults to ``True``
            whenever the model has quantizers.
    """
    wav = _samples(x)
    if wav.ndim != 1:
        raise ShapeError(f"encode expects a 1-D waveform, got shape {wav.shape}")
    if wav.shape[0] < model.hop:
        raise InputTooShort(f"input has {wav.shape[0]} samples, need at least {model.hop}")
    was_training = model.training
    model.eval()
    try:
        s, h = model.encode_continuous(torch.as_tensor(wav, dtype=torch.float32)[None])
        s_tok = h_tok = None
        if quantize is None:
            quantize = model.speech_rvq is not None
        if quantize and model.speech_rvq is not None:
            s, h, s_tok, h_tok, _ = model.quantize(s, h, update=False)
            s_tok, h_tok = s_tok[0].numpy(), h_tok[0].numpy()
    finally:
        model.train(was_training)
    return LatentPair(s[0].double().numpy(), h[0].double().numpy(), model.cfg.downsample_factor,
                      s_tok, h_tok)


@torch.no_grad()
def decode(latents: LatentPair, model: CodecModel) -> AudioBuffer:
    """Decode a latent pair to ``frames * hop`` samples."""
    cfg = model.cfg
    if latents.downsample_factor != cfg.downsample_factor:
        raise ShapeError(
            f"latents use downsample factor {latents.downsample_factor}, model uses {cfg.downsample_factor}"
        )
    if latents.speech_emb.shape[1] != cfg.speech_dim or latents.acoustic_emb.shape[1] != cfg.acoustic_dim:
        raise ShapeError("latent widths do not match the model config")
    was_training = model.training
    model.eval()
    try:
        s = torch.as_tensor(latents.speech_emb, dtype=torch.float32)[None]
        h = torch.as_tensor(latents.acoustic_emb, dtype=torch.float32)[None]
        y = model.decode_continuous(s, h)[0]
    finally:
        model.train(was_training)
    return AudioBuffer(y.double().numpy())


def reconstruct(x, model: CodecModel) -> AudioBuffer:
    """``decode(encode(x))`` trimmed to the input length."""
    n = len(_samples(x))
    return AudioBuffer(decode(encode(x, model), model).samples[:n])


def dereverb(x, model: CodecModel) -> AudioBuffer:
    """Decode with the acoustic embedding zeroed, trimmed to the input length."""
    n = len(_samples(x))
    return AudioBuffer(decode(zero_acoustic(encode(x, model)), model).samples[:n])


def teleport(x1, x2, model: CodecModel) -> tuple[AudioBuffer, AudioBuffer]:
    """Swap the acoustic embeddings of two utterances.

    Returns ``(speech of x1 in the room of x2, speech of x2 in the room of
    x1)``, each trimmed to the length of the utterance supplying its speech.
    """
    a, b = encode(x1, model), encode(x2, model)
    ab, ba = swap_acoustic(a, b)
    y1 = decode(ab, model).samples[: len(_samples(x1))]
    y2 = decode(ba, model).samples[: len(_samples(x2))]
    return AudioBuffer(y1), AudioBuffer(y2)


def tokens_to_latents(speech_tokens, acoustic_tokens, model: CodecModel) -> LatentPair:
    """Rebuild quantized embeddings from exported token streams."""
    if model.speech_rvq is None:
        raise ShapeError("model has no quantizers; token streams are undefined")
    s = rvq_dequantize(np.asarray(speech_tokens), model.speech_rvq.codebooks.numpy())
    h = rvq_dequantize(np.asarray(acoustic_tokens), model.acoustic_rvq.codebooks.numpy())
    return LatentPair(s.double().numpy(), h.double().numpy(), model.cfg.downsample_factor,
                      np.asarray(speech_tokens), np.asarray(acoustic_tokens))


def export_tokens(latents: LatentPair, path) -> None:
    """Write the token streams of ``latents`` as JSON for inspection."""
    if latents.speech_tokens is None or latents.acoustic_tokens is None:
        raise ShapeError("latents carry no tokens (encode with quantization enabled)")
    doc = {
        "downsample_factor": latents.downsample_factor,
        "speech_tokens": np.asarray(latents.speech_tokens).tolist(),
        "acoustic_tokens": np.asarray(latents.acoustic_tokens).tolist(),
    }
    try:
        Path(path).write_text(json.dumps(doc))
    except OSError as exc:
        raise IoError(path, f"cannot write tokens: {exc}") from exc


def load_tokens(path) -> tuple[np.ndarray, np.ndarray, int]:
    try:
        doc = json.loads(Path(path).read_text())
        s = np.asarray(doc["speech_tokens"], dtype=np.int64)
        h = np.asarray(doc["acoustic_tokens"], dtype=np.int64)
        return s, h, int(doc["downsample_factor"])
    except (OSError, ValueError, KeyError) as exc:
        raise IoError(path, f"cannot read tokens: {exc}") from exc
