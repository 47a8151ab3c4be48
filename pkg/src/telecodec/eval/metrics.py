"""Signal-quality proxies and small statistics helpers."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from ..dsp.buffers import AudioBuffer
from ..errors import DegenerateReference, DegenerateVariance, InvalidInput, ShapeError
from ..mel import log_mel_spectrogram

SI_SDR_CAP = 60.0


def _arr(x) -> np.ndarray:
    return x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)


def si_sdr(reference, estimate) -> float:
    """Scale-invariant SDR in dB, clipped to ``[-60, 60]``.

    The estimate is projected onto the reference; the projection counts as
    target and the remainder as distortion.

    Raises:
        DegenerateReference: if the reference is all zeros.
        ShapeError: on a length mismatch.
    """
    ref, est = _arr(reference), _arr(estimate)
    if ref.shape != est.shape:
        raise ShapeError(f"si_sdr lengths differ: {ref.shape} vs {est.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise DegenerateReference("si_sdr reference is all zeros")
    target = (np.dot(est, ref) / ref_energy) * ref
    noise = est - target
    t, n = float(np.dot(target, target)), float(np.dot(noise, noise))
    if t == 0.0:
        return -SI_SDR_CAP
    if n == 0.0:
        return SI_SDR_CAP
    return float(np.clip(10.0 * math.log10(t / n), -SI_SDR_CAP, SI_SDR_CAP))


def log_mel_distance(a, b) -> float:
    """Mean absolute difference of 64-band log-mel spectrograms (25 ms / 10 ms)."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ShapeError(f"log_mel_distance lengths differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(log_mel_spectrogram(a) - log_mel_spectrogram(b))))


def pearson(x, y) -> float:
    """Sample Pearson correlation.

    Raises:
        InvalidInput: on unequal lengths or fewer than 3 points.
        DegenerateVariance: if either argument is constant.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise InvalidInput(f"pearson needs equal lengths, got {x.size} and {y.size}")
    if x.size < 3:
        raise InvalidInput("pearson needs at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(np.dot(dx, dx)), math.sqrt(np.dot(dy, dy))
    # spreads at rounding level (e.g. projections of identical rows) count as constant
    tol = 1e-10 * math.sqrt(x.size)
    if sx <= tol * np.max(np.abs(x)) or sy <= tol * np.max(np.abs(y)):
        raise DegenerateVariance("pearson input has zero variance")
    return float(np.clip(np.dot(dx, dy) / (sx * sy), -1.0, 1.0))


def welch_t_test(a, b) -> tuple[float, float, float]:
    """Two-sided Welch t-test.

    Returns:
        ``(t, df, p)`` with Welch-Satterthwaite degrees of freedom.

    Raises:
        InvalidInput: if a sample has fewer than 2 values.
        DegenerateVariance: if a sample has zero variance.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise InvalidInput("welch_t_test needs at least 2 values per sample")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 or vb == 0.0:
        raise DegenerateVariance("welch_t_test sample has zero variance")
    qa, qb = va / a.size, vb / b.size
    t = (a.mean() - b.mean()) / math.sqrt(qa + qb)
    df = (qa + qb) ** 2 / (qa**2 / (a.size - 1) + qb**2 / (b.size - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return float(t), float(df), float(min(1.0, p))
