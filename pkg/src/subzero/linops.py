"""Subspace-constrained multi-echo encoding chain and its solvers.

The forward model maps coefficient maps alpha (M, N, B) to k-space
y (M, N, C, T) through basis expansion, coil weighting, a centered
orthonormal 2D FFT, and the sampling mask:

    y = mask * fft2c(sens * (phi @ alpha))

All operators are torch functions, differentiable end to end, and accept
either real masks or booleans.
"""

from __future__ import annotations

import torch

from .errors import DomainError

CG_RESIDUAL_TOL = 1e-9


def as_complex_tensor(arr, dtype=torch.complex64) -> torch.Tensor:
    """Convert array-like (numpy or tensor, real or complex) to complex."""
    t = arr if isinstance(arr, torch.Tensor) else torch.as_tensor(arr)
    return t.to(dtype)


def _mask_like(mask, ref: torch.Tensor) -> torch.Tensor:
    mask = torch.as_tensor(mask) if not isinstance(mask, torch.Tensor) else mask
    return mask.to(device=ref.device, dtype=ref.real.dtype)


def fft2c(img: torch.Tensor) -> torch.Tensor:
    """Centered orthonormal 2D FFT over the first two axes."""
    shifted = torch.fft.ifftshift(img, dim=(0, 1))
    k = torch.fft.fft2(shifted, dim=(0, 1), norm="ortho")
    return torch.fft.fftshift(k, dim=(0, 1))


def ifft2c(ksp: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`fft2c`."""
    shifted = torch.fft.ifftshift(ksp, dim=(0, 1))
    img = torch.fft.ifft2(shifted, dim=(0, 1), norm="ortho")
    return torch.fft.fftshift(img, dim=(0, 1))


def expand_subspace(alpha: torch.Tensor, phi: torch.Tensor) -> torch.Tensor:
    """Per-voxel basis expansion x_t = sum_b phi[t, b] alpha[..., b].

    alpha is (M, N, B), phi is (T, B); returns echo images (M, N, T).
    """
    if alpha.shape[-1] != phi.shape[-1]:
        raise DomainError(
            f"coefficient count {alpha.shape[-1]} != basis size {phi.shape[-1]}"
        )
    return torch.einsum("mnb,tb->mnt", alpha, phi)


def project_subspace(x: torch.Tensor, phi: torch.Tensor) -> torch.Tensor:
    """Adjoint of :func:`expand_subspace`: (M, N, T) -> (M, N, B)."""
    if x.shape[-1] != phi.shape[0]:
        raise DomainError(f"echo count {x.shape[-1]} != basis length {phi.shape[0]}")
    return torch.einsum("mnt,tb->mnb", x, phi.conj())


def _check_chain(sens: torch.Tensor, phi: torch.Tensor, mask) -> None:
    M, N, C = sens.shape
    if mask.shape[0] != M or mask.shape[1] != N or mask.shape[2] != phi.shape[0]:
        raise DomainError(
            f"mask {tuple(mask.shape)} inconsistent with sens {tuple(sens.shape)} "
            f"and basis length {phi.shape[0]}"
        )


def forward(
    alpha: torch.Tensor, sens: torch.Tensor, phi: torch.Tensor, mask
) -> torch.Tensor:
    """Apply the encoding chain; returns masked k-space (M, N, C, T)."""
    _check_chain(sens, phi, mask)
    x = expand_subspace(alpha, phi)  # (M, N, T)
    coil_imgs = sens[:, :, :, None] * x[:, :, None, :]  # (M, N, C, T)
    ksp = fft2c(coil_imgs)
    return ksp * _mask_like(mask, ksp)[:, :, None, :]


def adjoint(
    y: torch.Tensor, sens: torch.Tensor, phi: torch.Tensor, mask
) -> torch.Tensor:
    """Adjoint chain: mask, inverse FFT, coil combine, basis projection."""
    _check_chain(sens, phi, mask)
    if y.shape != (*sens.shape, phi.shape[0]):
        raise DomainError(f"kspace shape {tuple(y.shape)} inconsistent with chain")
    masked = y * _mask_like(mask, y)[:, :, None, :]
    coil_imgs = ifft2c(masked)
    x = torch.sum(sens.conj()[:, :, :, None] * coil_imgs, dim=2)  # (M, N, T)
    return project_subspace(x, phi)


def normal(
    alpha: torch.Tensor, sens: torch.Tensor, phi: torch.Tensor, mask
) -> torch.Tensor:
    """Gram operator A^H A of the encoding chain."""
    return adjoint(forward(alpha, sens, phi, mask), sens, phi, mask)


def _inner(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.sum(a.conj() * b).real


def cg_solve_dc(
    z: torch.Tensor,
    y: torch.Tensor,
    mu,
    iters: int,
    sens: torch.Tensor,
    phi: torch.Tensor,
    mask,
) -> torch.Tensor:
    """Data-consistency update by conjugate gradient.

    Solves (A^H A + mu I) alpha = A^H y + mu z for the encoding chain A,
    initialized at z. mu may be a python float or a scalar tensor (kept in
    the autograd graph, so a learnable penalty trains through the solver).
    Stops after `iters` iterations or when the residual norm falls below
    1e-9 relative to the right-hand side.

    Parameters
    ----------
    z : (M, N, B) complex tensor
        Regularizer output, also the prox anchor.
    y : (M, N, C, T) complex tensor
        Acquired k-space (consistency enforced on `mask` entries only).
    """
    if iters < 1:
        raise DomainError("cg iteration count must be >= 1")
    mu_val = float(mu.detach()) if isinstance(mu, torch.Tensor) else float(mu)
    if mu_val <= 0:
        raise DomainError("penalty mu must be positive")
    _check_chain(sens, phi, mask)

    b = adjoint(y, sens, phi, mask) + mu * z
    x = z
    r = b - (normal(x, sens, phi, mask) + mu * x)
    p = r
    rs_old = _inner(r, r)
    threshold = (CG_RESIDUAL_TOL * torch.sqrt(_inner(b, b).detach())) ** 2
    for _ in range(iters):
        if rs_old <= threshold:
            break
        ap = normal(p, sens, phi, mask) + mu * p
        step = rs_old / _inner(p, ap)
        x = x + step * p
        r = r - step * ap
        rs_new = _inner(r, r)
        p = r + (rs_new / rs_old) * p
        rs_old = rs_new
    return x
