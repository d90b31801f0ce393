"""Unrolled reconstruction network with SE-attention ResNet regularizer.

One parameter set serves every unroll and both parallel sub-networks: the
module is simply evaluated once per sub-network with that sub-network's
data-consistency mask. Coefficient maps are complex (M, N, B) at the
interface and packed to 2B real channels inside the CNN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import linops
from .errors import DomainError, NumericsError

DEFAULT_FEATURES = 64
DEFAULT_KERNEL = 3
DEFAULT_RESNET_BLOCKS = 10
DEFAULT_SE_REDUCTION = 8
DEFAULT_UNROLLS = 5
DEFAULT_CG_ITERS = 5
DEFAULT_MU_INIT = 0.05


@dataclass(frozen=True)
class SEBlockConfig:
    channels: int
    reduction: int = DEFAULT_SE_REDUCTION

    def __post_init__(self):
        if not self.channels >= self.reduction >= 1:
            raise DomainError("need channels >= reduction >= 1")

    @property
    def bottleneck(self) -> int:
        return math.ceil(self.channels / self.reduction)


@dataclass(frozen=True)
class RegularizerConfig:
    basis_size: int
    resnet_blocks: int = DEFAULT_RESNET_BLOCKS
    features: int = DEFAULT_FEATURES
    kernel: int = DEFAULT_KERNEL
    se_reduction: int = DEFAULT_SE_REDUCTION
    se_everywhere: bool = False
    use_se: bool = True

    def __post_init__(self):
        if self.resnet_blocks < 1:
            raise DomainError("resnet_blocks must be >= 1")
        if self.features < self.in_channels:
            raise DomainError("features must be >= in_channels (2 * basis_size)")

    @property
    def in_channels(self) -> int:
        return 2 * self.basis_size


@dataclass(frozen=True)
class UnrollConfig:
    unrolls: int = DEFAULT_UNROLLS
    cg_iters: int = DEFAULT_CG_ITERS
    mu_init: float = DEFAULT_MU_INIT
    share_weights_across_unrolls: bool = True
    fixed_mu: float | None = None

    def __post_init__(self):
        if self.unrolls < 1 or self.cg_iters < 1:
            raise DomainError("unrolls and cg_iters must be >= 1")
        if self.mu_init <= 0:
            raise DomainError("mu_init must be positive")
        if self.fixed_mu is not None and self.fixed_mu <= 0:
            raise DomainError("fixed_mu must be positive")


def se_squeeze(feature_map: torch.Tensor) -> torch.Tensor:
    """Spatial mean per channel; (H, W, F) -> (F,)."""
    if feature_map.ndim != 3:
        raise DomainError(f"expected (H, W, F), got shape {tuple(feature_map.shape)}")
    return feature_map.mean(dim=(0, 1))


def se_excite(descriptor, w1, b1, w2, b2) -> torch.Tensor:
    """Two dense layers with a sigmoid gate: scale in (0, 1) per channel."""
    hidden = F.relu(F.linear(descriptor, w1, b1))
    return torch.sigmoid(F.linear(hidden, w2, b2))


def pack_coefficients(alpha: torch.Tensor) -> torch.Tensor:
    """Complex (M, N, B) -> real (1, 2B, M, N), channel order (b, re/im)."""
    parts = torch.view_as_real(alpha)  # (M, N, B, 2)
    M, N, B, _ = parts.shape
    return parts.permute(2, 3, 0, 1).reshape(1, 2 * B, M, N)


def unpack_coefficients(channels: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`pack_coefficients`."""
    _, C, M, N = channels.shape
    parts = channels.reshape(C // 2, 2, M, N).permute(2, 3, 0, 1).contiguous()
    return torch.view_as_complex(parts)


class SEBlock(nn.Module):
    """Channel attention: squeeze to a descriptor, excite to gates, rescale."""

    def __init__(self, cfg: SEBlockConfig):
        super().__init__()
        self.fc1 = nn.Linear(cfg.channels, cfg.bottleneck)
        self.fc2 = nn.Linear(cfg.bottleneck, cfg.channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        descriptor = x.mean(dim=(2, 3))  # (batch, F)
        scale = se_excite(
            descriptor, self.fc1.weight, self.fc1.bias, self.fc2.weight, self.fc2.bias
        )
        return x * scale[:, :, None, None]


class SEResNetBlock(nn.Module):
    """conv -> ReLU -> conv -> SE recalibration -> skip connection."""

    def __init__(self, features: int, kernel: int, reduction: int, se_everywhere: bool):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv2d(features, features, kernel, padding=pad)
        self.conv2 = nn.Conv2d(features, features, kernel, padding=pad)
        self.se1 = SEBlock(SEBlockConfig(features, reduction)) if se_everywhere else None
        self.se2 = SEBlock(SEBlockConfig(features, reduction))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(x)
        if self.se1 is not None:
            h = self.se1(h)
        h = self.conv2(F.relu(h))
        return x + self.se2(h)


class PlainResNetBlock(nn.Module):
    """conv -> ReLU -> conv -> skip; the no-attention ablation block."""

    def __init__(self, features: int, kernel: int):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv2d(features, features, kernel, padding=pad)
        self.conv2 = nn.Conv2d(features, features, kernel, padding=pad)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.relu(self.conv1(x)))


class Regularizer(nn.Module):
    """Residual CNN denoiser acting on packed coefficient channels.

    The output convolution is zero-initialized, so a fresh instance is the
    identity map and the unrolled iteration starts from the pure
    data-consistent solution.
    """

    def __init__(self, cfg: RegularizerConfig):
        super().__init__()
        self.cfg = cfg
        pad = cfg.kernel // 2
        self.in_conv = nn.Conv2d(cfg.in_channels, cfg.features, cfg.kernel, padding=pad)
        self.in_se = (
            SEBlock(SEBlockConfig(cfg.features, cfg.se_reduction))
            if cfg.use_se and cfg.se_everywhere
            else None
        )
        if cfg.use_se:
            self.blocks = nn.ModuleList(
                SEResNetBlock(
                    cfg.features, cfg.kernel, cfg.se_reduction, cfg.se_everywhere
                )
                for _ in range(cfg.resnet_blocks)
            )
        else:
            self.blocks = nn.ModuleList(
                PlainResNetBlock(cfg.features, cfg.kernel)
                for _ in range(cfg.resnet_blocks)
            )
        self.out_conv = nn.Conv2d(cfg.features, cfg.in_channels, cfg.kernel, padding=pad)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(self, alpha: torch.Tensor) -> torch.Tensor:
        h = self.in_conv(pack_coefficients(alpha))
        if self.in_se is not None:
            h = self.in_se(h)
        for block in self.blocks:
            h = block(h)
        update = unpack_coefficients(self.out_conv(h))
        z = alpha + update
        if not torch.isfinite(torch.view_as_real(z)).all():
            raise NumericsError(
                f"regularizer produced non-finite values "
                f"(|alpha| max {alpha.abs().max().item():.3e})"
            )
        return z


class UnrolledModel(nn.Module):
    """Alternation of the CNN regularizer and CG data consistency.

    forward(y, theta, sens, phi) starts from the adjoint of the
    theta-masked data and runs `unrolls` rounds of z-update / alpha-update.
    mu is learnable as exp(nu) unless a fixed override is configured.
    Evaluate the same instance once per sub-network to share weights.
    """

    def __init__(
        self, reg_cfg: RegularizerConfig, unroll_cfg: UnrollConfig = UnrollConfig()
    ):
        super().__init__()
        self.cfg = unroll_cfg
        n_regs = 1 if unroll_cfg.share_weights_across_unrolls else unroll_cfg.unrolls
        self.regularizers = nn.ModuleList(
            Regularizer(reg_cfg) for _ in range(n_regs)
        )
        self.nu = nn.Parameter(torch.tensor(math.log(unroll_cfg.mu_init)))

    @property
    def mu(self) -> torch.Tensor:
        if self.cfg.fixed_mu is not None:
            return torch.tensor(self.cfg.fixed_mu, device=self.nu.device)
        return torch.exp(self.nu)

    def regularize(self, alpha: torch.Tensor, unroll: int = 0) -> torch.Tensor:
        reg = self.regularizers[0 if len(self.regularizers) == 1 else unroll]
        return reg(alpha)

    def forward(self, y, theta, sens, phi):
        mask = theta if isinstance(theta, torch.Tensor) else torch.as_tensor(theta)
        alpha = linops.adjoint(y, sens, phi, mask)
        mu = self.mu
        for i in range(self.cfg.unrolls):
            z = self.regularize(alpha, i)
            alpha = linops.cg_solve_dc(z, y, mu, self.cfg.cg_iters, sens, phi, mask)
        return alpha, linops.expand_subspace(alpha, phi)
