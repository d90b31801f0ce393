"""Reconstruction method roster: linear baselines and trained variants.

Every trained method runs through the one trainer; a MethodSpec only sets
the toggles (subspace on/off, parallel sub-networks, SE attention, online
augmentation), so ablations are single-toggle edits and the all-off
configuration is executable as the predecessor method itself.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
import torch

from . import linops
from .dictionary import SubspaceBasis
from .errors import DomainError
from .model import RegularizerConfig, UnrollConfig
from .sampling import MaskSet, SamplingConfig
from .trainer import TrainConfig, infer, train

LINEAR_CG_ITERS = 30
LINEAR_TIKHONOV = 1e-6


class Method(enum.Enum):
    ZERO_FILLED = "zero_filled"
    SENSE = "sense"
    SUBSPACE = "subspace"
    ZSSS = "zsss"
    ZSSSSUB = "zssssub"
    SUBZERO = "subzero"


@dataclass(frozen=True)
class MethodSpec:
    name: Method
    use_subspace: bool
    parallel: bool
    se_conv: bool
    augment: bool

    @property
    def trained(self) -> bool:
        return self.name in (Method.ZSSS, Method.ZSSSSUB, Method.SUBZERO)


_CANONICAL = {
    Method.ZERO_FILLED: (False, False, False, False),
    Method.SENSE: (False, False, False, False),
    Method.SUBSPACE: (True, False, False, False),
    Method.ZSSS: (False, False, False, False),
    Method.ZSSSSUB: (True, False, False, False),
    Method.SUBZERO: (True, True, True, True),
}


def method_spec(
    name: Method,
    use_subspace: bool | None = None,
    parallel: bool | None = None,
    se_conv: bool | None = None,
    augment: bool | None = None,
) -> MethodSpec:
    """Canonical toggles for a method, with optional single-toggle overrides
    for the ablation variants (e.g. ZSSSSUB with se_conv=True)."""
    base = _CANONICAL[name]
    picked = [
        base[i] if v is None else v
        for i, v in enumerate((use_subspace, parallel, se_conv, augment))
    ]
    return MethodSpec(name, *picked)


@dataclass
class BaselineResult:
    images: np.ndarray  # (M, N, T) complex
    history: list  # LossReports for trained methods, [] otherwise


def _to_tensors(y, sens, phi):
    return (
        linops.as_complex_tensor(np.asarray(y)),
        linops.as_complex_tensor(np.asarray(sens)),
        linops.as_complex_tensor(np.asarray(phi)),
    )


def zero_filled_recon(y, sens, omega) -> np.ndarray:
    """Coil-combined inverse FFT of the omega-masked data."""
    y_t, sens_t, phi_t = _to_tensors(y, sens, np.eye(np.asarray(y).shape[-1]))
    alpha = linops.adjoint(y_t, sens_t, phi_t, torch.as_tensor(np.asarray(omega)))
    return alpha.numpy()


def linear_recon(
    y, sens, phi, omega, mu: float = LINEAR_TIKHONOV, iters: int = LINEAR_CG_ITERS
) -> np.ndarray:
    """Tikhonov-regularized CG least squares in the given basis."""
    y_t, sens_t, phi_t = _to_tensors(y, sens, phi)
    omega_t = torch.as_tensor(np.asarray(omega))
    z = torch.zeros(
        (*sens_t.shape[:2], phi_t.shape[1]), dtype=y_t.dtype, device=y_t.device
    )
    alpha = linops.cg_solve_dc(z, y_t, mu, iters, sens_t, phi_t, omega_t)
    return linops.expand_subspace(alpha, phi_t).numpy()


def build_train_config(spec: MethodSpec, base: TrainConfig) -> TrainConfig:
    """Translate method toggles into trainer settings.

    Online augmentation means fresh pooled divisions every step; without it
    the initial per-echo-ratio division stays fixed for the whole run.
    """
    return replace(
        base,
        n_subnets=2 if spec.parallel else 1,
        lambda_diff=base.lambda_diff if spec.parallel else 0.0,
        augment=spec.augment,
        redraw_every=base.redraw_every if spec.augment else base.max_epochs,
    )


def build_reg_config(spec: MethodSpec, base: RegularizerConfig, T: int):
    cfg = replace(base, use_se=spec.se_conv)
    if not spec.use_subspace:
        cfg = replace(cfg, basis_size=T)
    return cfg


def run_baseline(
    spec: MethodSpec | Method,
    y,
    sens,
    phi,
    masks: MaskSet,
    mask_cfg: SamplingConfig = SamplingConfig(),
    reg_cfg: RegularizerConfig | None = None,
    unroll_cfg: UnrollConfig = UnrollConfig(),
    train_cfg: TrainConfig = TrainConfig(),
) -> BaselineResult:
    """Reconstruct one scan with the requested method.

    phi is the subspace basis (T, B); methods that do not use the subspace
    replace it with the identity internally. Trained methods run the full
    zero-shot loop on the masks provided and reconstruct with data
    consistency on all of omega.
    """
    if isinstance(spec, Method):
        spec = method_spec(spec)
    y = np.asarray(y)
    T = y.shape[-1]
    eye = SubspaceBasis.identity(T).phi

    if spec.name is Method.ZERO_FILLED:
        return BaselineResult(zero_filled_recon(y, sens, masks.omega), [])
    if spec.name is Method.SENSE:
        return BaselineResult(linear_recon(y, sens, eye, masks.omega), [])
    if spec.name is Method.SUBSPACE:
        return BaselineResult(linear_recon(y, sens, phi, masks.omega), [])
    if not spec.trained:
        raise DomainError(f"unknown method {spec.name}")

    phi_used = np.asarray(phi) if spec.use_subspace else eye
    if reg_cfg is None:
        reg_cfg = RegularizerConfig(basis_size=phi_used.shape[1])
    reg_cfg = build_reg_config(spec, reg_cfg, T)
    t_cfg = build_train_config(spec, train_cfg)
    model, history, masks = train(
        y, sens, phi_used, mask_cfg, reg_cfg, unroll_cfg, t_cfg, masks=masks
    )
    _, x = infer(model, y, sens, phi_used, masks.omega)
    return BaselineResult(x, history)
