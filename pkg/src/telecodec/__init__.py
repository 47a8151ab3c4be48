"""Acoustic teleportation with a split-latent neural audio codec."""

__version__ = "0.1.0"
