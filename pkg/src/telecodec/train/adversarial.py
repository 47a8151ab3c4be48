"""Optional multi-resolution spectrogram discriminator (hinge GAN losses).

Disabled unless the adversarial loss weight is positive.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

RESOLUTIONS = (256, 512, 1024)


class _SpecBranch(nn.Module):
    def __init__(self, n_fft: int, width: int = 16):
        super().__init__()
        self.n_fft = n_fft
        self.net = nn.Sequential(
            nn.Conv2d(1, width, (3, 9), padding=(1, 4)),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, width, (3, 9), stride=(1, 2), padding=(1, 4)),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, width, (3, 3), padding=(1, 1)),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, 1, (3, 3), padding=(1, 1)),
        )

    def forward(self, x):
        window = torch.hann_window(self.n_fft, dtype=x.dtype)
        spec = torch.stft(x, self.n_fft, hop_length=self.n_fft // 4, window=window, return_complex=True)
        mag = torch.log1p(spec.abs())[:, None]
        return self.net(mag)


class SpectrogramDiscriminator(nn.Module):
    """One discriminator over several STFT resolutions, with its own Adam optimizer."""

    def __init__(self, resolutions=RESOLUTIONS, lr: float = 3e-4, seed: int = 0):
        super().__init__()
        gen = torch.random.get_rng_state()
        torch.manual_seed(seed + 1)
        self.branches = nn.ModuleList(_SpecBranch(n) for n in resolutions)
        torch.random.set_rng_state(gen)
        self.optimizer = torch.optim.Adam(self.parameters(), lr=lr, betas=(0.5, 0.9))

    def forward(self, x):
        return [b(x) for b in self.branches]

    def generator_loss(self, y_hat: torch.Tensor) -> torch.Tensor:
        """Hinge generator loss; gradients flow into ``y_hat`` only."""
        for p in self.parameters():
            p.requires_grad_(False)
        try:
            return torch.stack([F.relu(1 - s).mean() for s in self(y_hat)]).mean()
        finally:
            for p in self.parameters():
                p.requires_grad_(True)

    def step(self, fake: torch.Tensor, real: torch.Tensor) -> float:
        """One hinge-loss discriminator update; returns the loss value."""
        self.optimizer.zero_grad(set_to_none=True)
        loss = torch.stack([
            F.relu(1 - r).mean() + F.relu(1 + f).mean()
            for r, f in zip(self(real), self(fake))
        ]).mean()
        loss.backward()
        self.optimizer.step()
        return float(loss.detach())
