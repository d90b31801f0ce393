"""Synthetic multi-echo phantom: parameter maps, coils, noisy k-space.

Everything here is numpy, including a private centered FFT, so phantom
k-space is produced by a route fully independent of the torch operators it
is later used to validate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import EchoTiming, SignalModel, simulate_signal
from .errors import DomainError

T2_CLASS_VALUES_MS = (40.0, 80.0, 120.0, 200.0)
T1_CLASS_VALUES_MS = (400.0, 800.0, 1200.0, 2000.0)

DEFAULT_SHAPE = (64, 64)
DEFAULT_ECHOES = 8
DEFAULT_COILS = 4
DEFAULT_DELTA_TE_MS = 11.5
DEFAULT_NOISE_FRACTION = 0.005  # of peak k-space magnitude


@dataclass(frozen=True)
class ParameterMaps:
    """Piecewise-constant tissue maps; relax is 0 outside the support."""

    m0: np.ndarray
    relax: np.ndarray
    support: np.ndarray
    model: SignalModel

    def __post_init__(self):
        if np.any(self.relax[self.support] <= 0):
            raise DomainError("relax must be positive inside the support")
        if np.any(self.m0[~self.support] != 0):
            raise DomainError("m0 must vanish outside the support")


def _ellipse(M, N, cy, cx, ry, rx, angle) -> np.ndarray:
    """Boolean ellipse mask in normalized [-1, 1] coordinates."""
    y, x = np.meshgrid(np.linspace(-1, 1, M), np.linspace(-1, 1, N), indexing="ij")
    c, s = np.cos(angle), np.sin(angle)
    u = c * (x - cx) + s * (y - cy)
    v = -s * (x - cx) + c * (y - cy)
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def make_phantom(
    M: int, N: int, model: SignalModel = SignalModel.T2_DECAY, seed: int = 0
) -> ParameterMaps:
    """Ellipse phantom with four tissue classes, deterministic given seed.

    An outer ellipse defines background tissue; four inner ellipses sit in
    the quadrants with jittered centers and carry the remaining class
    values, so every value of the class set appears.
    """
    if M < 16 or N < 16:
        raise DomainError("phantom needs M, N >= 16")
    values = np.array(
        T2_CLASS_VALUES_MS if model is SignalModel.T2_DECAY else T1_CLASS_VALUES_MS
    )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(values))

    support = _ellipse(M, N, 0.0, 0.0, 0.85, 0.8, 0.0)
    relax = np.where(support, values[order[0]], 0.0)
    m0 = np.where(support, 0.8, 0.0)

    # Quadrant centers keep the inner ellipses disjoint after jitter.
    quadrants = [(-0.35, -0.35), (-0.35, 0.35), (0.35, -0.35), (0.35, 0.35)]
    inner_values = list(values[order[1:]]) + [rng.choice(values)]
    for (cy, cx), value in zip(quadrants, inner_values):
        cy += rng.uniform(-0.08, 0.08)
        cx += rng.uniform(-0.08, 0.08)
        ry, rx = rng.uniform(0.12, 0.24, size=2)
        blob = _ellipse(M, N, cy, cx, ry, rx, rng.uniform(0, np.pi)) & support
        relax[blob] = value
        m0[blob] = rng.uniform(0.7, 1.0)
    return ParameterMaps(m0, relax, support, model)


def simulate_coils(M: int, N: int, C: int, seed: int = 0) -> np.ndarray:
    """Smooth complex coil maps (M, N, C) with sum-of-squares exactly 1.

    Magnitudes are Gaussian envelopes centered on a ring around the FOV,
    phases low-order polynomials; both vary slowly on the pixel scale.
    """
    if C < 1:
        raise DomainError("need at least one coil")
    rng = np.random.default_rng(seed)
    y, x = np.meshgrid(np.linspace(-1, 1, M), np.linspace(-1, 1, N), indexing="ij")
    sens = np.zeros((M, N, C), dtype=np.complex128)
    for c in range(C):
        angle = 2 * np.pi * c / C + rng.uniform(-0.2, 0.2)
        cy, cx = 1.3 * np.sin(angle), 1.3 * np.cos(angle)
        width = rng.uniform(1.1, 1.5)
        mag = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * width**2))
        p = rng.uniform(-1, 1, size=4)
        phase = p[0] + p[1] * x + p[2] * y + p[3] * x * y
        sens[:, :, c] = mag * np.exp(1j * phase)
    sos = np.sqrt(np.sum(np.abs(sens) ** 2, axis=2, keepdims=True))
    return sens / sos


def fft2c_np(img: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2D FFT over the first two axes (numpy route)."""
    shifted = np.fft.ifftshift(img, axes=(0, 1))
    k = np.fft.fft2(shifted, axes=(0, 1), norm="ortho")
    return np.fft.fftshift(k, axes=(0, 1))


def ifft2c_np(ksp: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2c_np`."""
    shifted = np.fft.ifftshift(ksp, axes=(0, 1))
    img = np.fft.ifft2(shifted, axes=(0, 1), norm="ortho")
    return np.fft.fftshift(img, axes=(0, 1))


def simulate_kspace(
    maps: ParameterMaps,
    timing: EchoTiming,
    sens: np.ndarray,
    noise_sigma: float | None = None,
    seed: int = 0,
) -> tuple:
    """Fully sampled noisy k-space and the underlying echo images.

    Returns (y_full (M, N, C, T) complex, x_true (M, N, T) complex). With
    noise_sigma=None the noise std per real/imag component defaults to 0.5%
    of the peak noiseless k-space magnitude; pass an absolute value to
    override, 0 to disable.
    """
    relax_safe = np.where(maps.support, maps.relax, 1.0)
    x_true = simulate_signal(maps.m0, relax_safe, timing).astype(np.complex128)
    coil_imgs = sens[:, :, :, None] * x_true[:, :, None, :]  # (M, N, C, T)
    y_full = fft2c_np(coil_imgs)
    if noise_sigma is None:
        noise_sigma = DEFAULT_NOISE_FRACTION * np.max(np.abs(y_full))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, noise_sigma, size=y_full.shape + (2,))
        y_full = y_full + noise[..., 0] + 1j * noise[..., 1]
    return y_full, x_true


def default_timing(model: SignalModel, T: int = DEFAULT_ECHOES) -> EchoTiming:
    """Desk-scale protocols: T2 echoes at multiples of 11.5 ms, T1 100-2000."""
    if model is SignalModel.T2_DECAY:
        times = DEFAULT_DELTA_TE_MS * np.arange(1, T + 1)
    else:
        times = np.linspace(100.0, 2000.0, T)
    return EchoTiming(times, model)


def make_dataset(
    M: int = DEFAULT_SHAPE[0],
    N: int = DEFAULT_SHAPE[1],
    T: int = DEFAULT_ECHOES,
    C: int = DEFAULT_COILS,
    model: SignalModel = SignalModel.T2_DECAY,
    noise_sigma: float | None = None,
    seed: int = 0,
) -> dict:
    """One self-contained simulated scan, keyed for the array container."""
    maps = make_phantom(M, N, model, seed)
    sens = simulate_coils(M, N, C, seed + 1)
    timing = default_timing(model, T)
    y_full, x_true = simulate_kspace(maps, timing, sens, noise_sigma, seed + 2)
    return {
        "kspace": y_full,
        "sens": sens,
        "x_true": x_true,
        "m0": maps.m0,
        "relax": maps.relax,
        "times": timing.times,
    }
