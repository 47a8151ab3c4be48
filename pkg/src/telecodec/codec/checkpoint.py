"""Single-file versioned checkpoints."""

from __future__ import annotations

from pathlib import Path

import torch

from ..errors import IoError, ValidationError
from .config import ModelConfig
from .model import CodecModel

FORMAT_VERSION = 1


def save_checkpoint(path, model: CodecModel, step: int | None = None, extra: dict | None = None) -> Path:
    """Write config, parameters, codebooks and step counter to ``path``."""
    path = Path(path)
    if step is not None:
        model.step.fill_(int(step))
    payload = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "step": int(model.step),
        "extra": extra or {},
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        torch.save(payload, tmp)
        tmp.replace(path)
    except OSError as exc:
        raise IoError(path, f"cannot write checkpoint: {exc}") from exc
    return path


def load_checkpoint(path) -> tuple[CodecModel, dict]:
    """Rebuild a model from ``path``; returns ``(model, payload)`` with the model in eval mode."""
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, EOFError) as exc:
        raise IoError(path, f"cannot read checkpoint: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ValidationError(f"{path} is not a codec checkpoint")
    if payload["format_version"] != FORMAT_VERSION:
        raise ValidationError(
            f"unsupported checkpoint format {payload['format_version']} (expected {FORMAT_VERSION})"
        )
    cfg = ModelConfig.from_dict(payload["model_config"])
    model = CodecModel(cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
