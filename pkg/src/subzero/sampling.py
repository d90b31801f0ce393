"""Acquisition masks and self-supervised k-space divisions.

The acquired set Omega is a phase-encode line pattern with a fully sampled
calibration block. Training splits Omega into a fixed early-stopping subset
Gamma and, per sub-network and per step, a data-consistency subset Theta and
a loss subset Lambda with global ratio |Lambda| / |Omega \\ Gamma| = r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

DEFAULT_DIVISION_RATIO = 0.4
DEFAULT_GAMMA_RATIO = 0.2
DEFAULT_ACS_LINES = 8
DEFAULT_SHIFT_STEP = 1
N_SUBNETS = 2


@dataclass(frozen=True)
class SamplingConfig:
    """Acquisition and division parameters."""

    R: int = 8
    acs_lines: int = DEFAULT_ACS_LINES
    r: float = DEFAULT_DIVISION_RATIO
    gamma_ratio: float = DEFAULT_GAMMA_RATIO
    seed: int = 0
    shift_step: int = DEFAULT_SHIFT_STEP

    def __post_init__(self):
        if self.R < 1:
            raise DomainError("acceleration R must be >= 1")
        if not 0 < self.r < 1:
            raise DomainError("division ratio r must be in (0, 1)")
        if not 0 < self.gamma_ratio < 1:
            raise DomainError("gamma_ratio must be in (0, 1)")
        if self.acs_lines < 0:
            raise DomainError("acs_lines must be >= 0")


@dataclass(frozen=True)
class MaskSet:
    """All masks for one training run, each boolean of shape (M, N, T).

    theta/lam hold one division per sub-network; delta is the complement
    Omega \\ (Theta_k ∪ Lambda_k), identical for every k because each pair
    partitions Omega \\ Gamma.
    """

    omega: np.ndarray
    gamma: np.ndarray
    theta: list
    lam: list
    delta: np.ndarray

    def __post_init__(self):
        if np.any(self.gamma & ~self.omega):
            raise DomainError("gamma must be a subset of omega")
        for th, la in zip(self.theta, self.lam):
            if np.any((th | la) & ~self.omega) or np.any(th & la):
                raise DomainError("theta/lam must be disjoint subsets of omega")
            if np.any((th | la) & self.gamma):
                raise DomainError("theta/lam must not overlap gamma")


def acs_indicator(N: int, acs_lines: int) -> np.ndarray:
    """Boolean (N,) marking the contiguous center calibration lines."""
    ind = np.zeros(N, dtype=bool)
    if acs_lines > 0:
        start = N // 2 - acs_lines // 2
        ind[start : start + acs_lines] = True
    return ind


def _as_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise DomainError(f"mask must be (M, N, T), got shape {mask.shape}")
    return mask.astype(bool)


def generate_omega(M: int, N: int, T: int, cfg: SamplingConfig) -> np.ndarray:
    """Draw the acquisition mask, boolean (M, N, T).

    Per echo, floor(N / R) phase-encode lines are on: the calibration block
    always, the remainder uniformly at random without replacement from the
    non-calibration lines. Echoes draw independently from one seeded stream;
    apply :func:`shift_mask_across_echoes` for the shifted-pattern variant.
    """
    n_lines = N // cfg.R
    if n_lines < cfg.acs_lines + 1 and cfg.R > 1:
        raise DomainError(
            f"R={cfg.R} with acs_lines={cfg.acs_lines} leaves no random lines "
            f"({n_lines} per echo)"
        )
    if cfg.R == 1:
        return np.ones((M, N, T), dtype=bool)
    rng = np.random.default_rng(cfg.seed)
    acs = acs_indicator(N, cfg.acs_lines)
    candidates = np.flatnonzero(~acs)
    mask = np.zeros((M, N, T), dtype=bool)
    for t in range(T):
        cols = rng.choice(candidates, size=n_lines - cfg.acs_lines, replace=False)
        mask[:, cols, t] = True
        mask[:, acs, t] = True
    return mask


def shift_mask_across_echoes(
    omega: np.ndarray, shift_step: int, acs_lines: int = 0
) -> np.ndarray:
    """Rebuild echoes t > 0 as echo 0's lines rolled by t * shift_step.

    The roll happens within the index space of non-calibration lines, so
    shifted lines never collide with the calibration block and per-echo
    counts are preserved exactly.
    """
    omega = _as_mask(omega)
    if shift_step == 0:
        return omega.copy()
    M, N, T = omega.shape
    acs = acs_indicator(N, acs_lines)
    free = np.flatnonzero(~acs)
    base = omega[0, free, 0]  # line indicator of echo 0 outside calibration
    out = np.zeros_like(omega)
    out[:, acs, :] = omega[:, acs, 0:1]
    for t in range(T):
        out[:, free[np.roll(base, t * shift_step)], t] = True
    return out


def split_gamma(
    omega: np.ndarray, gamma_ratio: float, seed: int, acs_lines: int = 0
) -> tuple:
    """Split off the early-stopping subset; returns (gamma, rest).

    gamma is a uniform random subset of the sampled non-calibration points
    with |gamma| = round(gamma_ratio * their count); rest = omega \\ gamma.
    """
    if not 0 < gamma_ratio < 1:
        raise DomainError("gamma_ratio must be in (0, 1)")
    omega = _as_mask(omega)
    acs = acs_indicator(omega.shape[1], acs_lines)
    eligible = omega & ~acs[None, :, None]
    count = int(round(gamma_ratio * eligible.sum()))
    gamma = np.zeros_like(omega)
    if count > 0:
        flat = np.flatnonzero(eligible)
        rng = np.random.default_rng(seed)
        picked = rng.choice(flat, size=count, replace=False)
        gamma.ravel()[picked] = True
    rest = omega & ~gamma
    if not rest.any():
        raise DomainError("gamma split left no points for training")
    return gamma, rest


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer quotas summing to total, largest-remainder on the weights."""
    ideal = total * weights / weights.sum()
    quota = np.floor(ideal).astype(int)
    short = total - quota.sum()
    if short > 0:
        order = np.argsort(-(ideal - quota), kind="stable")
        quota[order[:short]] += 1
    return quota


def draw_division(
    rest: np.ndarray,
    r: float,
    seed: int,
    augment: bool = True,
    acs_lines: int = 0,
) -> tuple:
    """Draw one (theta, lam) partition of rest; returns (theta, lam).

    |lam| = round(r * |rest|), drawn from the non-calibration points of rest.
    With augment=True the draw pools points of all echoes jointly, so the
    per-echo lambda fraction fluctuates around r while the global one is
    exact. With augment=False per-echo quotas are apportioned by largest
    remainder, pinning the ratio echo by echo. Calibration lines always land
    in theta.
    """
    if not 0 < r < 1:
        raise DomainError("division ratio r must be in (0, 1)")
    rest = _as_mask(rest)
    acs = acs_indicator(rest.shape[1], acs_lines)
    eligible = rest & ~acs[None, :, None]
    total = int(round(r * rest.sum()))
    if total == 0 or total >= int(rest.sum()):
        raise DomainError(f"r={r} yields an empty theta or lam")
    rng = np.random.default_rng(seed)
    lam = np.zeros_like(rest)
    if augment:
        flat = np.flatnonzero(eligible)
        if total > flat.size:
            raise DomainError("not enough non-calibration points for lam")
        lam.ravel()[np.sort(rng.choice(flat, size=total, replace=False))] = True
    else:
        per_echo = eligible.sum(axis=(0, 1))
        if np.any(per_echo == 0):
            raise DomainError("an echo has no non-calibration points to divide")
        quotas = _apportion(total, per_echo.astype(np.float64))
        if np.any(quotas > per_echo):
            raise DomainError("not enough non-calibration points for lam")
        for t in range(rest.shape[2]):
            flat = np.flatnonzero(eligible[:, :, t])
            picked = rng.choice(flat, size=int(quotas[t]), replace=False)
            plane = np.zeros(rest.shape[:2], dtype=bool)
            plane.ravel()[picked] = True
            lam[:, :, t] = plane
    theta = rest & ~lam
    return theta, lam


def compute_delta(omega: np.ndarray, theta: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Points of omega covered by neither theta nor lam."""
    return _as_mask(omega) & ~(_as_mask(theta) | _as_mask(lam))


def make_masks(
    M: int,
    N: int,
    T: int,
    cfg: SamplingConfig,
    n_subnets: int = N_SUBNETS,
    augment: bool = True,
) -> MaskSet:
    """Full pipeline: omega, optional echo shift, gamma split, divisions."""
    omega = generate_omega(M, N, T, cfg)
    if cfg.shift_step != 0 and cfg.R > 1:
        omega = shift_mask_across_echoes(omega, cfg.shift_step, cfg.acs_lines)
    gamma, rest = split_gamma(omega, cfg.gamma_ratio, cfg.seed + 1, cfg.acs_lines)
    theta, lam = redraw_divisions(
        rest, cfg.r, cfg.seed + 2, n_subnets, augment, cfg.acs_lines
    )
    delta = compute_delta(omega, theta[0], lam[0])
    return MaskSet(omega, gamma, theta, lam, delta)


def redraw_divisions(
    rest: np.ndarray,
    r: float,
    seed: int,
    n_subnets: int = N_SUBNETS,
    augment: bool = True,
    acs_lines: int = 0,
) -> tuple:
    """Independent (theta_k, lam_k) pairs, one per sub-network.

    Called with a fresh seed every training step to realize the online
    augmentation: each step sees new divisions of the same rest mask.
    """
    thetas, lams = [], []
    for k in range(n_subnets):
        th, la = draw_division(rest, r, seed * n_subnets + k, augment, acs_lines)
        thetas.append(th)
        lams.append(la)
    return thetas, lams
