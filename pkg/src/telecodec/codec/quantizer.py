"""Residual vector quantization with EMA codebooks."""

from __future__ import annotations

import torch
from torch import nn

from ..errors import InvalidStageCount, InvalidToken, ShapeError


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x)


def nearest_codeword(x: torch.Tensor, codebook: torch.Tensor) -> torch.Tensor:
    """Index of the closest codeword (Euclidean) for every row of ``x``.

    Ties resolve to the lowest index (``torch.argmin`` returns the first
    minimum).
    """
    dist = (
        x.pow(2).sum(-1, keepdim=True)
        - 2.0 * x @ codebook.t()
        + codebook.pow(2).sum(-1)[None, :]
    )
    return dist.argmin(dim=-1)


def rvq_quantize(emb, codebooks, n: int | None = None):
    """Quantize rows of ``emb`` with the first ``n`` RVQ stages.

    Args:
        emb: ``[T, D]`` (or ``[..., D]``) embeddings.
        codebooks: ``[N, K, D]`` stacked stage codebooks.
        n: Number of stages to use, ``1 <= n <= N``; defaults to ``N``.

    Returns:
        ``(tokens, quantized)`` where ``tokens`` is ``[..., n]`` int64 and
        ``quantized`` is the per-row sum of the selected codewords.
    """
    emb = _as_tensor(emb)
    codebooks = _as_tensor(codebooks).to(emb.dtype)
    n_stages = codebooks.shape[0]
    if n is None:
        n = n_stages
    if not 1 <= n <= n_stages:
        raise InvalidStageCount(f"n must lie in [1, {n_stages}], got {n}")
    if emb.shape[-1] != codebooks.shape[-1]:
        raise ShapeError(f"embedding dim {emb.shape[-1]} != codebook dim {codebooks.shape[-1]}")
    lead = emb.shape[:-1]
    flat = emb.reshape(-1, emb.shape[-1])
    residual = flat
    quantized = torch.zeros_like(flat)
    tokens = []
    for stage in range(n):
        idx = nearest_codeword(residual, codebooks[stage])
        chosen = codebooks[stage][idx]
        quantized = quantized + chosen
        residual = residual - chosen
        tokens.append(idx)
    tokens = torch.stack(tokens, dim=-1).reshape(*lead, n)
    return tokens, quantized.reshape(*lead, emb.shape[-1])


def rvq_dequantize(tokens, codebooks) -> torch.Tensor:
    """Sum the codewords addressed by ``tokens`` (``[..., n]``) across stages."""
    tokens = _as_tensor(tokens).long()
    codebooks = _as_tensor(codebooks)
    n = tokens.shape[-1]
    if n > codebooks.shape[0]:
        raise InvalidStageCount(f"{n} stages of tokens but only {codebooks.shape[0]} codebooks")
    size = codebooks.shape[1]
    if tokens.numel() and (int(tokens.min()) < 0 or int(tokens.max()) >= size):
        raise InvalidToken(f"token indices must lie in [0, {size})")
    out = torch.zeros(*tokens.shape[:-1], codebooks.shape[-1], dtype=codebooks.dtype)
    for stage in range(n):
        out = out + codebooks[stage][tokens[..., stage]]
    return out


class ResidualVQ(nn.Module):
    """Stack of EMA-updated codebooks with straight-through gradients.

    Codebooks live in buffers, not parameters: they are moved by
    exponential moving averages of their assigned vectors, and codes whose
    smoothed usage falls below ``dead_code_threshold`` are reseeded from
    random rows of the current batch residual.
    """

    def __init__(self, n_stages: int, codebook_size: int, dim: int, decay: float = 0.99,
                 dead_code_threshold: float = 0.01, eps: float = 1e-5):
        super().__init__()
        self.n_stages = n_stages
        self.codebook_size = codebook_size
        self.dim = dim
        self.decay = decay
        self.dead_code_threshold = dead_code_threshold
        self.eps = eps
        self.register_buffer("codebooks", torch.randn(n_stages, codebook_size, dim) * 0.1)
        self.register_buffer("cluster_size", torch.ones(n_stages, codebook_size))
        self.register_buffer("embed_sum", self.codebooks.clone())
        self.register_buffer("initialized", torch.zeros((), dtype=torch.bool))

    @torch.no_grad()
    def _init_from_data(self, flat: torch.Tensor, generator: torch.Generator | None):
        residual = flat
        for stage in range(self.n_stages):
            pick = torch.randint(0, residual.shape[0], (self.codebook_size,), generator=generator)
            jitter = 1e-3 * torch.randn(self.codebook_size, self.dim, generator=generator)
            self.codebooks[stage] = residual[pick] + jitter
            self.embed_sum[stage] = self.codebooks[stage].clone()
            self.cluster_size[stage].fill_(1.0)
            idx = nearest_codeword(residual, self.codebooks[stage])
            residual = residual - self.codebooks[stage][idx]
        self.initialized.fill_(True)

    @torch.no_grad()
    def _ema_update(self, stage: int, residual: torch.Tensor, idx: torch.Tensor,
                    generator: torch.Generator | None):
        onehot = torch.zeros(residual.shape[0], self.codebook_size, dtype=residual.dtype)
        onehot.scatter_(1, idx[:, None], 1.0)
        counts = onehot.sum(0)
        self.cluster_size[stage].mul_(self.decay).add_(counts, alpha=1 - self.decay)
        self.embed_sum[stage].mul_(self.decay).add_(onehot.t() @ residual, alpha=1 - self.decay)
        total = self.cluster_size[stage].sum()
        smoothed = (self.cluster_size[stage] + self.eps) / (total + self.codebook_size * self.eps) * total
        self.codebooks[stage] = self.embed_sum[stage] / smoothed[:, None]
        dead = self.cluster_size[stage] < self.dead_code_threshold
        n_dead = int(dead.sum())
        if n_dead:
            pick = torch.randint(0, residual.shape[0], (n_dead,), generator=generator)
            self.codebooks[stage][dead] = residual[pick]
            self.embed_sum[stage][dead] = residual[pick]
            self.cluster_size[stage][dead] = 1.0

    def forward(self, emb: torch.Tensor, n: int | None = None, update: bool | None = None,
                generator: torch.Generator | None = None):
        """Quantize ``emb`` (``[..., dim]``).

        Returns:
            ``(quantized_st, tokens, commitment)``: the straight-through
            quantized tensor, int64 tokens ``[..., n]`` and the commitment
            loss (MSE between ``emb`` and the detached quantized value).
        """
        n = self.n_stages if n is None else n
        if not 1 <= n <= self.n_stages:
            raise InvalidStageCount(f"n must lie in [1, {self.n_stages}], got {n}")
        update = self.training if update is None else update
        flat = emb.reshape(-1, self.dim)
        if update and not bool(self.initialized):
            self._init_from_data(flat.detach(), generator)
        residual = flat.detach()
        quantized = torch.zeros_like(residual)
        tokens = []
        for stage in range(n):
            idx = nearest_codeword(residual, self.codebooks[stage])
            if update:
                self._ema_update(stage, residual, idx, generator)
            chosen = self.codebooks[stage][idx]
            quantized = quantized + chosen
            residual = residual - chosen
            tokens.append(idx)
        quantized = quantized.reshape(emb.shape)
        tokens = torch.stack(tokens, dim=-1).reshape(*emb.shape[:-1], n)
        commitment = commitment_loss(emb, quantized)
        quantized_st = emb + (quantized - emb).detach()
        return quantized_st, tokens, commitment


def commitment_loss(emb: torch.Tensor, quantized: torch.Tensor) -> torch.Tensor:
    """Mean squared distance between ``emb`` and the gradient-detached ``quantized``."""
    if emb.shape != quantized.shape:
        raise ShapeError(f"commitment_loss shapes differ: {tuple(emb.shape)} vs {tuple(quantized.shape)}")
    return torch.mean((emb - quantized.detach()) ** 2)
