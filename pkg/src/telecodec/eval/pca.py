"""Standardize-then-PCA fitted on a training set and applied to held-out data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientSamples, ShapeError

N_COMPONENTS = 10


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    scale: np.ndarray
    axes: np.ndarray  # [k, dim], rows orthonormal
    explained_variance_ratio: np.ndarray
    fit_on_train: bool = True
    n_train: int = 0

    @property
    def n_components(self) -> int:
        return self.axes.shape[0]


def pca_fit(train, n_components: int = N_COMPONENTS) -> PcaModel:
    """Fit per-dimension standardization and the top principal axes.

    Constant dimensions get scale 1 so they stay at zero after centring
    instead of dividing by zero.

    Raises:
        InsufficientSamples: with ``n_components`` or fewer training rows.
    """
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"pca_fit expects [items, dim], got shape {x.shape}")
    if x.shape[0] <= n_components:
        raise InsufficientSamples(f"need more than {n_components} training vectors, got {x.shape[0]}")
    k = min(n_components, x.shape[1])
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    z = (x - mean) / scale
    cov = z.T @ z / (z.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    axes = evecs[:, order[:k]].T
    # fix the sign so the largest-magnitude loading of every axis is positive
    flip = np.sign(axes[np.arange(k), np.abs(axes).argmax(axis=1)])
    axes = axes * flip[:, None]
    total = evals.sum()
    ratio = evals[:k] / total if total > 0 else np.zeros(k)
    return PcaModel(mean, scale, axes, ratio, True, x.shape[0])


def pca_project(model: PcaModel, vectors) -> np.ndarray:
    """Coordinates ``[items, k]`` of ``vectors`` using the train-fitted transform."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.shape[1] != model.mean.shape[0]:
        raise ShapeError(f"vectors have dim {x.shape[1]}, model expects {model.mean.shape[0]}")
    return ((x - model.mean) / model.scale) @ model.axes.T
