"""Finite-difference check of the training loss gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..codec.model import CodecModel
from .losses import LossWeights
from .tasks import TaskBatch


@dataclass(frozen=True)
class GradEntry:
    name: str
    index: tuple
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        if scale < 1e-12:
            return 0.0
        return abs(self.analytic - self.numeric) / scale


def gradient_check(model: CodecModel, batch: TaskBatch, weights: LossWeights | None = None,
                   n_params: int = 10, step: float = 1e-5, seed: int = 0,
                   prefixes: tuple[str, ...] | None = None) -> list[GradEntry]:
    """Compare autograd against central differences on random scalar parameters.

    Codebook updates are disabled so the loss is a fixed function of the
    parameters. Run the model in float64 for a meaningful comparison.

    Args:
        prefixes: Restrict the draw to parameters whose name starts with one
            of these (e.g. ``("decoder.",)`` when quantization makes the
            encoder path piecewise constant).
    """
    weights = weights or LossWeights()
    from .loop import task_forward

    named = [(k, p) for k, p in model.named_parameters()
             if prefixes is None or k.startswith(prefixes)]
    sizes = np.array([p.numel() for _, p in named])
    rng = np.random.default_rng(seed)
    flat = rng.choice(int(sizes.sum()), size=n_params, replace=False)
    bounds = np.cumsum(sizes)

    def loss() -> torch.Tensor:
        return task_forward(model, batch, weights, update_codebooks=False)[0]

    model.zero_grad(set_to_none=True)
    loss().backward()
    out = []
    for f in flat:
        t = int(np.searchsorted(bounds, f, side="right"))
        name, p = named[t]
        idx = np.unravel_index(int(f - (bounds[t] - sizes[t])), tuple(p.shape))
        analytic = float(p.grad[idx]) if p.grad is not None else 0.0
        with torch.no_grad():
            orig = p[idx].item()
            p[idx] = orig + step
            up = loss().item()
            p[idx] = orig - step
            down = loss().item()
            p[idx] = orig
        out.append(GradEntry(name, tuple(int(i) for i in idx), analytic, (up - down) / (2 * step)))
    model.zero_grad(set_to_none=True)
    return out
