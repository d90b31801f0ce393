"""Figure and report rendering for reconstruction results.

All output is written to files (Agg backend): per-echo RMSE bars, a
magnitude/error montage, relaxation-map comparison, the training curve, and
a plain-text metrics table. Rendering is deterministic, so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport

DPI = 120


def _save(fig, path: str) -> str:
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def write_metrics_table(report: EvalReport, path: str, name: str = "recon") -> str:
    lines = [f"method: {name}", "echo\trmse"]
    for t, v in enumerate(report.per_echo_rmse):
        lines.append(f"{t}\t{v:.6f}")
    lines.append(f"mean\t{report.mean_rmse:.6f}")
    if report.map_error is not None:
        lines.append(f"map_error\t{report.map_error:.6f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def plot_rmse_bars(report: EvalReport, path: str, name: str = "recon") -> str:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    echoes = np.arange(len(report.per_echo_rmse))
    ax.bar(echoes, report.per_echo_rmse, color="steelblue")
    ax.axhline(report.mean_rmse, color="firebrick", ls="--", lw=1,
               label=f"mean {report.mean_rmse:.4f}")
    ax.set_xlabel("echo")
    ax.set_ylabel("normalized RMSE")
    ax.set_title(name)
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_montage(recon, ref, path: str, name: str = "recon", max_echoes: int = 8) -> str:
    """Magnitude images (top), reference (middle), x5 error maps (bottom)."""
    recon, ref = np.abs(np.asarray(recon)), np.abs(np.asarray(ref))
    T = min(recon.shape[-1], max_echoes)
    vmax = float(ref.max())
    fig, axes = plt.subplots(3, T, figsize=(1.6 * T, 5.0))
    axes = np.atleast_2d(axes).reshape(3, T)
    for t in range(T):
        axes[0, t].imshow(recon[:, :, t], cmap="gray", vmin=0, vmax=vmax)
        axes[1, t].imshow(ref[:, :, t], cmap="gray", vmin=0, vmax=vmax)
        axes[2, t].imshow(
            5 * np.abs(recon[:, :, t] - ref[:, :, t]), cmap="inferno", vmin=0, vmax=vmax
        )
        for r in range(3):
            axes[r, t].set_xticks([])
            axes[r, t].set_yticks([])
        axes[0, t].set_title(f"echo {t}", fontsize=8)
    axes[0, 0].set_ylabel(name, fontsize=8)
    axes[1, 0].set_ylabel("reference", fontsize=8)
    axes[2, 0].set_ylabel("error x5", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_relax_maps(fitted, truth, path: str, label: str = "T2 (ms)") -> str:
    fitted, truth = np.asarray(fitted), np.asarray(truth)
    vmax = float(max(fitted.max(), truth.max()))
    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    im0 = axes[0].imshow(fitted, cmap="viridis", vmin=0, vmax=vmax)
    axes[0].set_title(f"fitted {label}", fontsize=9)
    axes[1].imshow(truth, cmap="viridis", vmin=0, vmax=vmax)
    axes[1].set_title(f"true {label}", fontsize=9)
    im2 = axes[2].imshow(np.abs(fitted - truth), cmap="inferno")
    axes[2].set_title("absolute error", fontsize=9)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im0, ax=axes[:2], shrink=0.8)
    fig.colorbar(im2, ax=axes[2], shrink=0.8)
    return _save(fig, path)


def plot_training_curve(history, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    epochs = [h.epoch for h in history]
    ax.plot(epochs, [h.total for h in history], label="train total")
    ax.plot(epochs, [h.gamma_val for h in history], label="validation")
    best = int(np.argmin([h.gamma_val for h in history]))
    ax.axvline(history[best].epoch, color="gray", ls=":", lw=1,
               label=f"best epoch {history[best].epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def emit_plots(
    report: EvalReport,
    history,
    out_dir: str,
    name: str = "recon",
    recon=None,
    ref=None,
    fitted_map=None,
    true_map=None,
) -> list:
    """Render every applicable panel plus the metrics table; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        write_metrics_table(report, os.path.join(out_dir, f"{name}_metrics.txt"), name),
        plot_rmse_bars(report, os.path.join(out_dir, f"{name}_rmse.png"), name),
    ]
    if recon is not None and ref is not None:
        paths.append(
            plot_montage(recon, ref, os.path.join(out_dir, f"{name}_montage.png"), name)
        )
    if fitted_map is not None and true_map is not None:
        paths.append(
            plot_relax_maps(fitted_map, true_map, os.path.join(out_dir, f"{name}_maps.png"))
        )
    if history:
        paths.append(
            plot_training_curve(history, os.path.join(out_dir, f"{name}_training.png"))
        )
    return paths
