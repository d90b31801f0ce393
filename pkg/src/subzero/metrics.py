"""Reconstruction quality metrics and dictionary-matching parameter fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dictionary import SignalDictionary
from .errors import DegenerateDataError, DomainError

FIT_MAGNITUDE_THRESHOLD = 0.05  # fraction of peak voxel magnitude


@dataclass(frozen=True)
class EvalReport:
    """Per-echo normalized RMSE plus an optional relaxation-map error."""

    per_echo_rmse: list
    mean_rmse: float
    map_error: float | None = field(default=None)

    def __post_init__(self):
        if abs(self.mean_rmse - float(np.mean(self.per_echo_rmse))) > 1e-12:
            raise DomainError("mean_rmse must equal the mean of per_echo_rmse")


def rmse_per_echo(recon: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Normalized magnitude RMSE per echo: ||  |recon| - |ref| || / || |ref| ||."""
    recon, ref = np.asarray(recon), np.asarray(ref)
    if recon.shape != ref.shape:
        raise DomainError(f"shape mismatch {recon.shape} vs {ref.shape}")
    mag_recon = np.abs(recon).astype(np.float64)
    mag_ref = np.abs(ref).astype(np.float64)
    num = np.linalg.norm((mag_recon - mag_ref).reshape(-1, ref.shape[-1]), axis=0)
    den = np.linalg.norm(mag_ref.reshape(-1, ref.shape[-1]), axis=0)
    if np.any(den == 0):
        raise DegenerateDataError("reference echo with zero norm")
    return num / den


def evaluate(recon, ref, map_error: float | None = None) -> EvalReport:
    per_echo = rmse_per_echo(recon, ref)
    return EvalReport(per_echo.tolist(), float(np.mean(per_echo)), map_error)


def fit_relaxation_map(
    x: np.ndarray,
    dictionary: SignalDictionary,
    threshold: float = FIT_MAGNITUDE_THRESHOLD,
) -> np.ndarray:
    """Per-voxel dictionary matching; returns the matched grid value map.

    The match maximizes |<x_voxel, atom>| over atoms (atoms are unit norm,
    so this is the normalized correlation up to the voxel's own norm).
    Voxels whose signal norm falls below `threshold` times the peak voxel
    norm are masked out and set to 0.
    """
    x = np.asarray(x)
    if x.shape[-1] != dictionary.atoms.shape[0]:
        raise DomainError(
            f"echo count {x.shape[-1]} != dictionary length "
            f"{dictionary.atoms.shape[0]}"
        )
    flat = x.reshape(-1, x.shape[-1])
    norms = np.linalg.norm(flat, axis=1)
    keep = norms > threshold * norms.max()
    fitted = np.zeros(flat.shape[0])
    if keep.any():
        scores = np.abs(flat[keep] @ dictionary.atoms)  # (voxels, K)
        fitted[keep] = dictionary.grid.values[np.argmax(scores, axis=1)]
    return fitted.reshape(x.shape[:-1])


def map_error(fitted: np.ndarray, truth: np.ndarray, support: np.ndarray) -> float:
    """Median absolute relative error of the fitted map over the support."""
    support = np.asarray(support, dtype=bool)
    if not support.any():
        raise DegenerateDataError("empty support")
    f = np.asarray(fitted)[support]
    t = np.asarray(truth)[support]
    if np.any(t <= 0):
        raise DomainError("truth map must be positive over the support")
    return float(np.median(np.abs(f - t) / t))
