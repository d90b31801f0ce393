"""Zero-shot scan-specific training with parallel sub-networks.

One scan is its own training set: every step redraws the (theta, lambda)
divisions, runs the shared-weight model once per sub-network, and minimizes

    L = L_recon_1 + L_recon_2 + lambda_diff * L_diff

while a held-out k-space subset gamma drives automated early stopping.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, replace

import numpy as np
import torch

from . import linops
from .errors import DegenerateDataError, NumericsError
from .model import RegularizerConfig, UnrollConfig, UnrolledModel
from .sampling import MaskSet, SamplingConfig, make_masks, redraw_divisions

DEFAULT_MAX_EPOCHS = 200
DEFAULT_LR = 5e-4
DEFAULT_PATIENCE = 15


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = DEFAULT_MAX_EPOCHS
    lr: float = DEFAULT_LR
    patience: int = DEFAULT_PATIENCE
    seed: int = 0
    lambda_diff: float = 1.0
    redraw_every: int = 1
    n_subnets: int = 2
    augment: bool = True
    mse_recon: bool = False
    diff_in_image_space: bool = False
    exclude_gamma_from_delta: bool = False

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.redraw_every < 1:
            raise ValueError("max_epochs, patience, redraw_every must be >= 1")
        if self.lr <= 0 or self.lambda_diff < 0 or self.n_subnets < 1:
            raise ValueError("need lr > 0, lambda_diff >= 0, n_subnets >= 1")


@dataclass
class LossReport:
    epoch: int
    recon1: float
    recon2: float
    diff: float
    total: float
    gamma_val: float
    stopped_early: bool = False


def recon_loss(y_pred, y_true, lam_mask, mse: bool = False) -> torch.Tensor:
    """Self-supervision loss on the lambda-masked k-space residual.

    Default is the normalized mixed norm ||r||_2 / ||y||_2 + ||r||_1 / ||y||_1
    with all norms restricted to lambda; mse=True switches to plain mean
    squared error over the lambda entries.
    """
    lam = torch.as_tensor(np.asarray(lam_mask)).to(y_true.real.dtype)[:, :, None, :]
    target = y_true * lam
    resid = y_pred * lam - target
    if mse:
        count = lam.sum() * y_true.shape[2]
        if count == 0:
            raise DegenerateDataError("empty lambda mask")
        return torch.sum(torch.abs(resid) ** 2) / count
    l2 = torch.linalg.vector_norm(target)
    l1 = torch.sum(torch.abs(target))
    if float(l2) == 0:
        raise DegenerateDataError("lambda mask covers no acquired signal")
    return torch.linalg.vector_norm(resid) / l2 + torch.sum(torch.abs(resid)) / l1


def diff_loss(
    x1, x2, delta_mask, sens, in_image_space: bool = False
) -> torch.Tensor:
    """Consistency penalty between the two sub-network reconstructions.

    Computed as the mean squared residual of the coil k-space projections
    F(S x) on the delta entries (delta indexes k-space). With
    in_image_space=True it is a plain image-domain MSE over all voxels and
    delta is ignored. Empty delta returns 0 with a warning.
    """
    if in_image_space:
        return torch.mean(torch.abs(x1 - x2) ** 2)
    delta = torch.as_tensor(np.asarray(delta_mask)).to(x1.real.dtype)
    count = float(delta.sum())
    if count == 0:
        warnings.warn("empty delta mask; consistency loss is 0", stacklevel=2)
        return torch.zeros((), dtype=x1.real.dtype)
    d = x1 - x2
    k = linops.fft2c(sens[:, :, :, None] * d[:, :, None, :])
    k = k * delta[:, :, None, :]
    return torch.sum(torch.abs(k) ** 2) / (count * sens.shape[2])


def _effective_delta(masks: MaskSet, cfg: TrainConfig) -> np.ndarray:
    if cfg.exclude_gamma_from_delta:
        return masks.delta & ~masks.gamma
    return masks.delta


def _gamma_eval(model, y, masks, sens, phi, mse: bool) -> float:
    """Validation loss on gamma with data consistency on omega minus gamma."""
    rest = masks.omega & ~masks.gamma
    with torch.no_grad():
        alpha, _ = model(y, torch.as_tensor(rest), sens, phi)
        pred = linops.forward(alpha, sens, phi, torch.as_tensor(masks.gamma))
        return float(recon_loss(pred, y, masks.gamma, mse=mse))


def train(
    y,
    sens,
    phi,
    mask_cfg: SamplingConfig,
    reg_cfg: RegularizerConfig,
    unroll_cfg: UnrollConfig = UnrollConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    masks: MaskSet | None = None,
) -> tuple:
    """Train on a single scan; returns (model, history, masks).

    y may be fully sampled or already masked; it is restricted to omega
    before use. Data is normalized to unit peak magnitude internally, the
    losses are reported on that scale, and :func:`infer` applies the same
    normalization, so trained weights transfer directly.
    """
    torch.manual_seed(train_cfg.seed)
    y = linops.as_complex_tensor(np.asarray(y))
    sens = linops.as_complex_tensor(np.asarray(sens))
    phi = linops.as_complex_tensor(np.asarray(phi))
    M, N, C, T = y.shape

    if masks is None:
        masks = make_masks(
            M, N, T, mask_cfg, n_subnets=train_cfg.n_subnets, augment=train_cfg.augment
        )
    y = y * torch.as_tensor(masks.omega).to(y.real.dtype)[:, :, None, :]
    scale = torch.max(torch.abs(y))
    if float(scale) == 0:
        raise DegenerateDataError("acquired k-space is identically zero")
    y = y / scale

    model = UnrolledModel(reg_cfg, unroll_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    rest = masks.omega & ~masks.gamma
    delta = _effective_delta(masks, train_cfg)
    thetas, lams = masks.theta, masks.lam

    history = []
    best_val, best_epoch = float("inf"), 0
    best_state = copy.deepcopy(model.state_dict())
    for epoch in range(train_cfg.max_epochs):
        if epoch % train_cfg.redraw_every == 0 and epoch > 0:
            thetas, lams = redraw_divisions(
                rest,
                mask_cfg.r,
                train_cfg.seed * 100003 + epoch,
                train_cfg.n_subnets,
                train_cfg.augment,
                mask_cfg.acs_lines,
            )

        parts, images = [], []
        for k in range(train_cfg.n_subnets):
            alpha, x = model(y, torch.as_tensor(thetas[k]), sens, phi)
            pred = linops.forward(alpha, sens, phi, torch.as_tensor(lams[k]))
            parts.append(recon_loss(pred, y, lams[k], mse=train_cfg.mse_recon))
            images.append(x)
        if train_cfg.n_subnets >= 2 and train_cfg.lambda_diff > 0:
            dloss = diff_loss(
                images[0], images[1], delta, sens, train_cfg.diff_in_image_space
            )
        else:
            dloss = torch.zeros(())
        total = sum(parts) + train_cfg.lambda_diff * dloss
        if not torch.isfinite(total):
            raise NumericsError(
                f"non-finite loss at epoch {epoch}: "
                f"recon={[float(p.detach()) for p in parts]}, "
                f"diff={float(dloss.detach())}"
            )
        opt.zero_grad()
        total.backward()
        opt.step()
        assert float(model.mu.detach()) > 0

        gamma_val = _gamma_eval(model, y, masks, sens, phi, train_cfg.mse_recon)
        recon2 = float(parts[1].detach()) if len(parts) > 1 else 0.0
        history.append(
            LossReport(
                epoch,
                float(parts[0].detach()),
                recon2,
                float(dloss.detach()),
                float(total.detach()),
                gamma_val,
            )
        )
        if gamma_val < best_val:
            best_val, best_epoch = gamma_val, epoch
            best_state = copy.deepcopy(model.state_dict())
        elif epoch - best_epoch >= train_cfg.patience:
            history[-1].stopped_early = True
            break

    model.load_state_dict(best_state)
    return model, history, masks


def infer(model: UnrolledModel, y, sens, phi, omega) -> tuple:
    """Reconstruct with data consistency on all acquired samples.

    Returns (alpha, x) as numpy arrays on the scale of the input k-space.
    Weights are shared across sub-networks, so a single pass suffices.
    """
    y = linops.as_complex_tensor(np.asarray(y))
    sens = linops.as_complex_tensor(np.asarray(sens))
    phi = linops.as_complex_tensor(np.asarray(phi))
    omega_t = torch.as_tensor(np.asarray(omega))
    y = y * omega_t.to(y.real.dtype)[:, :, None, :]
    scale = torch.max(torch.abs(y))
    if float(scale) == 0:
        raise DegenerateDataError("acquired k-space is identically zero")
    model.eval()
    with torch.no_grad():
        alpha, x = model(y / scale, omega_t, sens, phi)
    alpha = (alpha * scale).numpy()
    x = (x * scale).numpy()
    return alpha, x


def zero_filled(y, sens, phi, omega) -> tuple:
    """Adjoint-only baseline path shared by training comparisons."""
    y = linops.as_complex_tensor(np.asarray(y))
    sens = linops.as_complex_tensor(np.asarray(sens))
    phi = linops.as_complex_tensor(np.asarray(phi))
    alpha = linops.adjoint(y, sens, phi, torch.as_tensor(np.asarray(omega)))
    return alpha.numpy(), linops.expand_subspace(alpha, phi).numpy()


def single_subnet_config(cfg: TrainConfig) -> TrainConfig:
    """The ablation twin: one sub-network, no redraw pooling, no diff term."""
    return replace(cfg, n_subnets=1, augment=False, lambda_diff=0.0)
