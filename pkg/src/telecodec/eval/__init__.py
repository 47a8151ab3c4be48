"""Metrics, PCA and model-level evaluations."""

from .metrics import log_mel_distance, pearson, si_sdr, welch_t_test
from .pca import PcaModel, pca_fit, pca_project

__all__ = ["PcaModel", "log_mel_distance", "pca_fit", "pca_project", "pearson", "si_sdr", "welch_t_test"]
