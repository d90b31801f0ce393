"""Command-line surface: simulate, basis, masks, train, reconstruct, eval, plot.

Every verb accepts ``--config file.yaml`` whose entries become flag defaults
(explicit flags win), and every run writes a resolved-config snapshot next to
its outputs. Errors exit nonzero with the category printed to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np
import torch
import yaml

from . import baselines, container, dictionary, metrics, phantom, plots, sampling
from . import trainer as trainer_mod
from .errors import DomainError, SubzeroError
from .model import RegularizerConfig, UnrollConfig, UnrolledModel
from .sampling import MaskSet, SamplingConfig

EXIT_CODES = {"domain": 2, "degenerate": 3, "numerics": 4}


def _model_enum(name: str) -> dictionary.SignalModel:
    return dictionary.SignalModel(name)


def _snapshot(args: argparse.Namespace, path: str) -> None:
    resolved = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func", "command", "config") and not k.startswith("_")
    }
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(resolved, fh, sort_keys=True)


def _file_snapshot(args, out_path: str) -> None:
    base, _ = os.path.splitext(out_path)
    _snapshot(args, base + ".config.yaml")


def _sampling_cfg(args) -> SamplingConfig:
    return SamplingConfig(
        R=args.R,
        acs_lines=args.acs,
        r=args.r,
        gamma_ratio=args.gamma_ratio,
        seed=args.seed,
        shift_step=args.shift_step,
    )


def _reg_cfg(args, basis_size: int) -> RegularizerConfig:
    return RegularizerConfig(
        basis_size=basis_size,
        resnet_blocks=args.blocks,
        features=args.features,
        kernel=args.kernel,
        se_reduction=args.se_reduction,
        se_everywhere=args.se_everywhere,
        use_se=args.se,
    )


def _unroll_cfg(args) -> UnrollConfig:
    return UnrollConfig(
        unrolls=args.unrolls,
        cg_iters=args.cg_iters,
        mu_init=args.mu_init,
        share_weights_across_unrolls=args.share_weights,
        fixed_mu=args.fixed_mu,
    )


def _train_cfg(args) -> trainer_mod.TrainConfig:
    return trainer_mod.TrainConfig(
        max_epochs=args.max_epochs,
        lr=args.lr,
        patience=args.patience,
        seed=args.seed,
        lambda_diff=args.lambda_diff,
        redraw_every=args.redraw_every,
        n_subnets=args.subnets,
        augment=args.augment,
        mse_recon=args.mse_recon,
        diff_in_image_space=args.diff_in_image_space,
        exclude_gamma_from_delta=args.exclude_gamma_from_delta,
    )


def _masks_to_arrays(masks: MaskSet) -> dict:
    out = {"mask_omega": masks.omega, "mask_gamma": masks.gamma}
    for k, (th, la) in enumerate(zip(masks.theta, masks.lam), start=1):
        out[f"mask_theta_{k}"] = th
        out[f"mask_lambda_{k}"] = la
    return out


def _masks_from_arrays(arrays: dict) -> MaskSet:
    omega, gamma = arrays["mask_omega"], arrays["mask_gamma"]
    theta, lam = [], []
    k = 1
    while f"mask_theta_{k}" in arrays:
        theta.append(arrays[f"mask_theta_{k}"])
        lam.append(arrays[f"mask_lambda_{k}"])
        k += 1
    if not theta:
        raise DomainError("container holds no theta/lambda divisions")
    delta = sampling.compute_delta(omega, theta[0], lam[0])
    return MaskSet(omega, gamma, theta, lam, delta)


def _write_history(history, path: str) -> None:
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps(dataclasses.asdict(rec)) + "\n")


def _read_history(path: str) -> list:
    history = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                history.append(trainer_mod.LossReport(**json.loads(line)))
    return history


def cmd_simulate(args) -> int:
    data = phantom.make_dataset(
        M=args.M,
        N=args.N,
        T=args.T,
        C=args.C,
        model=_model_enum(args.model),
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    container.save_arrays(args.out, data)
    _file_snapshot(args, args.out)
    print(
        f"simulate\t{args.out}\tshape={args.M}x{args.N}\techoes={args.T}\tcoils={args.C}"
    )
    return 0


def cmd_basis(args) -> int:
    model = _model_enum(args.model)
    if args.data:
        times = container.load_arrays(args.data)["times"]
        timing = dictionary.EchoTiming(times, model)
    elif model is dictionary.SignalModel.T2_DECAY:
        timing = dictionary.t2_echo_times()
    else:
        timing = dictionary.t1_inversion_times()
    if args.grid_lo is None or args.grid_hi is None:
        grid = dictionary.default_grid(model, args.grid_size)
    else:
        grid = dictionary.RelaxationGrid.log_spaced(
            args.grid_lo, args.grid_hi, args.grid_size
        )
    B = args.B if args.B is not None else (
        dictionary.T2_BASIS_SIZE
        if model is dictionary.SignalModel.T2_DECAY
        else dictionary.T1_BASIS_SIZE
    )
    dict_ = dictionary.build_dictionary(grid, timing)
    basis = dictionary.compute_basis(dict_, B)
    projected = (basis.phi @ (basis.phi.conj().T @ dict_.atoms)).real
    residual = float(np.max(np.linalg.norm(dict_.atoms - projected, axis=0)))
    container.save_arrays(
        args.out,
        {
            "atoms": dict_.atoms,
            "phi": basis.phi,
            "grid": grid.values,
            "times": timing.times,
        },
    )
    _file_snapshot(args, args.out)
    print(f"basis\t{args.out}\tT={timing.T}\tB={B}\tK={grid.K}\tresidual={residual:.2e}")
    return 0


def cmd_masks(args) -> int:
    if args.data:
        ksp = container.load_arrays(args.data)["kspace"]
        M, N, T = ksp.shape[0], ksp.shape[1], ksp.shape[3]
    else:
        M, N, T = args.M, args.N, args.T
    cfg = _sampling_cfg(args)
    masks = sampling.make_masks(M, N, T, cfg, args.subnets, args.augment)
    container.save_arrays(args.out, _masks_to_arrays(masks))
    _file_snapshot(args, args.out)
    lines = int(masks.omega[0, :, 0].sum())
    print(f"masks\t{args.out}\tR={cfg.R}\tlines/echo={lines}")
    return 0


def _load_problem(args):
    data = container.load_arrays(args.data)
    basis = container.load_arrays(args.basis)
    return data, basis["phi"].astype(np.complex64)


def cmd_train(args) -> int:
    data, phi = _load_problem(args)
    y, sens = data["kspace"], data["sens"]
    masks = _masks_from_arrays(container.load_arrays(args.masks)) if args.masks else None
    model, history, masks = trainer_mod.train(
        y,
        sens,
        phi,
        _sampling_cfg(args),
        _reg_cfg(args, phi.shape[1]),
        _unroll_cfg(args),
        _train_cfg(args),
        masks=masks,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    state = {k: v.detach().numpy() for k, v in model.state_dict().items()}
    state["phi"] = phi
    container.save_arrays(os.path.join(args.out_dir, "checkpoint.npz"), state)
    container.save_arrays(
        os.path.join(args.out_dir, "masks.npz"), _masks_to_arrays(masks)
    )
    _write_history(history, os.path.join(args.out_dir, "history.jsonl"))
    _snapshot(args, os.path.join(args.out_dir, "config.yaml"))
    best = min(range(len(history)), key=lambda i: history[i].gamma_val)
    print(
        f"train\t{args.out_dir}\tepochs={len(history)}\tbest={history[best].epoch}"
        f"\tgamma={history[best].gamma_val:.6f}"
    )
    return 0


def _load_checkpoint(ckpt_dir: str):
    with open(os.path.join(ckpt_dir, "config.yaml")) as fh:
        cfg = yaml.safe_load(fh)
    arrays = container.load_arrays(os.path.join(ckpt_dir, "checkpoint.npz"))
    phi = arrays.pop("phi").astype(np.complex64)
    ns = argparse.Namespace(**cfg)
    model = UnrolledModel(_reg_cfg(ns, phi.shape[1]), _unroll_cfg(ns))
    state = {k: torch.as_tensor(np.asarray(v)) for k, v in arrays.items()}
    model.load_state_dict(state)
    masks = _masks_from_arrays(
        container.load_arrays(os.path.join(ckpt_dir, "masks.npz"))
    )
    return model, phi, masks


def cmd_reconstruct(args) -> int:
    data = container.load_arrays(args.data)
    model, phi, masks = _load_checkpoint(args.checkpoint_dir)
    alpha, x = trainer_mod.infer(
        model, data["kspace"], data["sens"], phi, masks.omega
    )
    container.save_arrays(
        args.out,
        {"alpha": alpha, "x_recon": x, "mask_omega": masks.omega, "phi": phi},
    )
    _file_snapshot(args, args.out)
    print(f"reconstruct\t{args.out}\techoes={x.shape[-1]}")
    return 0


def _parse_method(token: str) -> baselines.MethodSpec:
    """'subzero', 'zssssub', or ablations like 'zssssub+se' / '+aug' / '+par'."""
    name, _, extra = token.partition("+")
    overrides = {}
    if extra:
        try:
            overrides = {
                "se": {"se_conv": True},
                "aug": {"augment": True},
                "par": {"parallel": True},
            }[extra]
        except KeyError:
            raise DomainError(f"unknown method suffix '+{extra}'") from None
    try:
        method = baselines.Method(name)
    except ValueError:
        raise DomainError(f"unknown method '{name}'") from None
    return baselines.method_spec(method, **overrides)


def cmd_eval(args) -> int:
    data, phi = _load_problem(args)
    y, sens, x_true = data["kspace"], data["sens"], data["x_true"]
    relax, m0 = data.get("relax"), data.get("m0")
    cfg = _sampling_cfg(args)
    masks = sampling.make_masks(
        y.shape[0], y.shape[1], y.shape[3], cfg, args.subnets, args.augment
    )
    fit_dict = None
    if relax is not None and args.fit_maps:
        basis_arrays = container.load_arrays(args.basis)
        timing = dictionary.EchoTiming(data["times"], _model_enum(args.model))
        fit_dict = dictionary.build_dictionary(
            dictionary.RelaxationGrid(basis_arrays["grid"]), timing
        )

    os.makedirs(args.out_dir, exist_ok=True)
    _snapshot(args, os.path.join(args.out_dir, "config.yaml"))
    records_path = os.path.join(args.out_dir, "metrics.jsonl")
    summary = ["method\tmean_rmse\tmap_error"]
    with open(records_path, "w") as records:
        for token in args.methods.split(","):
            spec = _parse_method(token.strip())
            result = baselines.run_baseline(
                spec,
                y,
                sens,
                phi,
                masks,
                mask_cfg=cfg,
                reg_cfg=_reg_cfg(args, phi.shape[1]),
                unroll_cfg=_unroll_cfg(args),
                train_cfg=_train_cfg(args),
            )
            err = None
            fitted = None
            if fit_dict is not None:
                fitted = metrics.fit_relaxation_map(result.images, fit_dict)
                err = metrics.map_error(fitted, relax, m0 > 0)
            report = metrics.evaluate(result.images, x_true, err)
            name = token.strip().replace("+", "_")
            plots.emit_plots(
                report,
                result.history,
                args.out_dir,
                name=name,
                recon=result.images,
                ref=x_true,
                fitted_map=fitted,
                true_map=relax if fitted is not None else None,
            )
            if result.history:
                _write_history(
                    result.history, os.path.join(args.out_dir, f"{name}_history.jsonl")
                )
            records.write(
                json.dumps(
                    {
                        "method": token.strip(),
                        "mean_rmse": report.mean_rmse,
                        "per_echo_rmse": report.per_echo_rmse,
                        "map_error": report.map_error,
                    }
                )
                + "\n"
            )
            err_str = "-" if err is None else f"{err:.4f}"
            summary.append(f"{token.strip()}\t{report.mean_rmse:.6f}\t{err_str}")
            print(summary[-1])
    with open(os.path.join(args.out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(summary) + "\n")
    return 0


def cmd_plot(args) -> int:
    recon = container.load_arrays(args.recon)["x_recon"]
    data = container.load_arrays(args.data)
    report = metrics.evaluate(recon, data["x_true"])
    history = _read_history(args.history) if args.history else []
    paths = plots.emit_plots(
        report, history, args.out_dir, name=args.name, recon=recon, ref=data["x_true"]
    )
    _snapshot(args, os.path.join(args.out_dir, f"{args.name}_plot.config.yaml"))
    print(f"plot\t{args.out_dir}\tfiles={len(paths)}")
    return 0


def _add_sampling_flags(p):
    p.add_argument("--R", type=int, default=8, help="acceleration factor")
    p.add_argument("--acs", type=int, default=sampling.DEFAULT_ACS_LINES)
    p.add_argument("--r", type=float, default=sampling.DEFAULT_DIVISION_RATIO)
    p.add_argument("--gamma-ratio", type=float, default=sampling.DEFAULT_GAMMA_RATIO)
    p.add_argument("--shift-step", type=int, default=sampling.DEFAULT_SHIFT_STEP)
    p.add_argument("--subnets", type=int, default=sampling.N_SUBNETS)
    p.add_argument(
        "--augment", action=argparse.BooleanOptionalAction, default=True
    )


def _add_model_flags(p):
    p.add_argument("--features", type=int, default=64)
    p.add_argument("--blocks", type=int, default=10)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--se-reduction", type=int, default=8)
    p.add_argument("--se", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--se-everywhere", action="store_true")
    p.add_argument("--unrolls", type=int, default=5)
    p.add_argument("--cg-iters", type=int, default=5)
    p.add_argument("--mu-init", type=float, default=0.05)
    p.add_argument("--fixed-mu", type=float, default=None)
    p.add_argument(
        "--share-weights", action=argparse.BooleanOptionalAction, default=True
    )


def _add_train_flags(p):
    p.add_argument("--max-epochs", type=int, default=trainer_mod.DEFAULT_MAX_EPOCHS)
    p.add_argument("--lr", type=float, default=trainer_mod.DEFAULT_LR)
    p.add_argument("--patience", type=int, default=trainer_mod.DEFAULT_PATIENCE)
    p.add_argument("--lambda-diff", type=float, default=1.0)
    p.add_argument("--redraw-every", type=int, default=1)
    p.add_argument("--mse-recon", action="store_true")
    p.add_argument("--diff-in-image-space", action="store_true")
    p.add_argument("--exclude-gamma-from-delta", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="subzero",
        description="Scan-specific self-supervised subspace MRI reconstruction",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {}

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="YAML file of flag defaults")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        parsers[name] = p
        return p

    p = add("simulate", cmd_simulate, help="synthesize a phantom scan")
    p.add_argument("--out", required=True)
    p.add_argument("--M", type=int, default=phantom.DEFAULT_SHAPE[0])
    p.add_argument("--N", type=int, default=phantom.DEFAULT_SHAPE[1])
    p.add_argument("--T", type=int, default=phantom.DEFAULT_ECHOES)
    p.add_argument("--C", type=int, default=phantom.DEFAULT_COILS)
    p.add_argument("--model", choices=["t2", "t1"], default="t2")
    p.add_argument("--noise-sigma", type=float, default=None)

    p = add("basis", cmd_basis, help="build signal dictionary and temporal basis")
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="container providing echo times")
    p.add_argument("--model", choices=["t2", "t1"], default="t2")
    p.add_argument("--B", type=int, default=None)
    p.add_argument("--grid-lo", type=float, default=None)
    p.add_argument("--grid-hi", type=float, default=None)
    p.add_argument("--grid-size", type=int, default=dictionary.DEFAULT_GRID_SIZE)

    p = add("masks", cmd_masks, help="draw acquisition and division masks")
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="container providing array shape")
    p.add_argument("--M", type=int, default=phantom.DEFAULT_SHAPE[0])
    p.add_argument("--N", type=int, default=phantom.DEFAULT_SHAPE[1])
    p.add_argument("--T", type=int, default=phantom.DEFAULT_ECHOES)
    _add_sampling_flags(p)

    p = add("train", cmd_train, help="zero-shot training on one scan")
    p.add_argument("--data", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--masks", help="pre-drawn mask container")
    p.add_argument("--out-dir", required=True)
    _add_sampling_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)

    p = add("reconstruct", cmd_reconstruct, help="inference from a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, help="run method roster, metrics, and figures")
    p.add_argument("--data", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--methods", default="zero_filled,subspace")
    p.add_argument("--model", choices=["t2", "t1"], default="t2")
    p.add_argument(
        "--fit-maps", action=argparse.BooleanOptionalAction, default=True
    )
    _add_sampling_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)

    p = add("plot", cmd_plot, help="render figures for an existing recon")
    p.add_argument("--recon", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--name", default="recon")
    p.add_argument("--history", help="history.jsonl from training")

    return parser, parsers


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, parsers = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
        if getattr(pre, "config", None):
            with open(pre.config) as fh:
                overrides = yaml.safe_load(fh) or {}
            target = parsers[pre.command]
            valid = {a.dest for a in target._actions}
            unknown = sorted(set(overrides) - valid)
            if unknown:
                raise DomainError(f"unknown config keys: {', '.join(unknown)}")
            target.set_defaults(**overrides)
        args = parser.parse_args(argv)
        return args.func(args)
    except SubzeroError as exc:
        print(f"error ({exc.category}): {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    raise SystemExit(main())
