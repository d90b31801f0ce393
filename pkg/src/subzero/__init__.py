"""Scan-specific self-supervised subspace MRI reconstruction.

A single undersampled multi-echo scan is reconstructed by training an
unrolled network on its own k-space: the acquired set is split into
data-consistency, loss, and early-stopping subsets, two weight-shared
sub-networks see independent splits, and a consistency penalty ties their
outputs together on the leftover samples. A temporal subspace basis from a
simulated signal dictionary constrains the recon to physically plausible
relaxation curves.
"""

from .baselines import BaselineResult, Method, MethodSpec, method_spec, run_baseline
from .container import load_arrays, save_arrays
from .dictionary import (
    EchoTiming,
    RelaxationGrid,
    SignalDictionary,
    SignalModel,
    SubspaceBasis,
    build_dictionary,
    compute_basis,
    default_grid,
    project_signals,
    simulate_t1_ir,
    simulate_t2_decay,
    t1_inversion_times,
    t2_echo_times,
)
from .errors import DegenerateDataError, DomainError, NumericsError, SubzeroError
from .linops import adjoint, cg_solve_dc, expand_subspace, fft2c, forward, ifft2c
from .metrics import EvalReport, evaluate, fit_relaxation_map, map_error, rmse_per_echo
from .model import RegularizerConfig, Regularizer, UnrollConfig, UnrolledModel
from .phantom import ParameterMaps, make_dataset, make_phantom, simulate_coils, simulate_kspace
from .sampling import MaskSet, SamplingConfig, make_masks
from .trainer import LossReport, TrainConfig, diff_loss, infer, recon_loss, train

__version__ = "0.1.0"

__all__ = [
    "BaselineResult",
    "DegenerateDataError",
    "DomainError",
    "EchoTiming",
    "EvalReport",
    "LossReport",
    "MaskSet",
    "Method",
    "MethodSpec",
    "NumericsError",
    "ParameterMaps",
    "Regularizer",
    "RegularizerConfig",
    "RelaxationGrid",
    "SamplingConfig",
    "SignalDictionary",
    "SignalModel",
    "SubspaceBasis",
    "SubzeroError",
    "TrainConfig",
    "UnrollConfig",
    "UnrolledModel",
    "adjoint",
    "build_dictionary",
    "cg_solve_dc",
    "compute_basis",
    "default_grid",
    "diff_loss",
    "evaluate",
    "expand_subspace",
    "fft2c",
    "fit_relaxation_map",
    "forward",
    "ifft2c",
    "infer",
    "load_arrays",
    "make_dataset",
    "make_masks",
    "make_phantom",
    "map_error",
    "method_spec",
    "project_signals",
    "recon_loss",
    "rmse_per_echo",
    "run_baseline",
    "save_arrays",
    "simulate_coils",
    "simulate_kspace",
    "simulate_t1_ir",
    "simulate_t2_decay",
    "t1_inversion_times",
    "t2_echo_times",
    "train",
]
