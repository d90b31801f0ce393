"""Figure rendering: file outputs, determinism, panel selection."""

import hashlib

import numpy as np
import pytest

from subzero.metrics import evaluate
from subzero.plots import (
    emit_plots,
    plot_montage,
    plot_relax_maps,
    plot_rmse_bars,
    plot_training_curve,
    write_metrics_table,
)
from subzero.trainer import LossReport

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _report(rng, T=4, map_error=None):
    ref = rng.standard_normal((8, 8, T)) + 1j * rng.standard_normal((8, 8, T))
    recon = ref + 0.1 * rng.standard_normal((8, 8, T))
    return evaluate(recon, ref, map_error), recon, ref


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _history(n=6):
    return [
        LossReport(
            epoch=e,
            recon1=1.0 / (e + 1),
            recon2=1.1 / (e + 1),
            diff=0.01,
            total=2.11 / (e + 1),
            gamma_val=0.5 / (e + 1) + 0.05 * (e == 4),
            stopped_early=False,
        )
        for e in range(n)
    ]


class TestMetricsTable:
    def test_contents(self, rng, tmp_path):
        report, _, _ = _report(rng, T=3, map_error=0.07)
        path = tmp_path / "m.txt"
        write_metrics_table(report, str(path), name="demo")
        lines = path.read_text().splitlines()
        assert lines[0] == "method: demo"
        assert lines[1] == "echo\trmse"
        assert len([ln for ln in lines if ln[0].isdigit()]) == 3
        assert lines[-2].startswith("mean\t")
        assert lines[-1] == "map_error\t0.070000"

    def test_map_error_row_optional(self, rng, tmp_path):
        report, _, _ = _report(rng, T=3)
        path = tmp_path / "m.txt"
        write_metrics_table(report, str(path))
        assert "map_error" not in path.read_text()


class TestFigureFiles:
    def test_rmse_bars_png(self, rng, tmp_path):
        report, _, _ = _report(rng)
        path = tmp_path / "bars.png"
        assert plot_rmse_bars(report, str(path)) == str(path)
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_montage_clamps_echoes(self, rng, tmp_path):
        _, recon, ref = _report(rng, T=12)
        path = tmp_path / "montage.png"
        plot_montage(recon, ref, str(path), max_echoes=5)
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_montage_single_echo(self, rng, tmp_path):
        _, recon, ref = _report(rng, T=1)
        path = tmp_path / "montage.png"
        plot_montage(recon, ref, str(path))
        assert path.stat().st_size > 0

    def test_relax_maps(self, rng, tmp_path):
        truth = rng.choice([0.0, 40.0, 80.0], size=(8, 8))
        fitted = truth + rng.standard_normal((8, 8))
        path = tmp_path / "maps.png"
        plot_relax_maps(fitted, truth, str(path))
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_training_curve(self, tmp_path):
        path = tmp_path / "curve.png"
        plot_training_curve(_history(), str(path))
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_renders_are_byte_stable(self, rng, tmp_path):
        report, recon, ref = _report(rng)
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        plot_rmse_bars(report, str(a))
        plot_rmse_bars(report, str(b))
        assert _digest(a) == _digest(b)
        plot_montage(recon, ref, str(a))
        plot_montage(recon, ref, str(b))
        assert _digest(a) == _digest(b)


class TestEmitPlots:
    def test_minimal_panels(self, rng, tmp_path):
        report, _, _ = _report(rng)
        paths = emit_plots(report, [], str(tmp_path), name="zf")
        assert sorted(p.split("/")[-1] for p in paths) == [
            "zf_metrics.txt",
            "zf_rmse.png",
        ]

    def test_all_panels(self, rng, tmp_path):
        report, recon, ref = _report(rng)
        truth = rng.choice([40.0, 80.0], size=(8, 8))
        paths = emit_plots(
            report,
            _history(),
            str(tmp_path),
            name="full",
            recon=recon,
            ref=ref,
            fitted_map=truth,
            true_map=truth,
        )
        names = sorted(p.split("/")[-1] for p in paths)
        assert names == [
            "full_maps.png",
            "full_metrics.txt",
            "full_montage.png",
            "full_rmse.png",
            "full_training.png",
        ]
        for p in paths:
            assert (tmp_path / p.split("/")[-1]).stat().st_size > 0

    def test_creates_out_dir(self, rng, tmp_path):
        report, _, _ = _report(rng)
        out = tmp_path / "nested" / "dir"
        emit_plots(report, [], str(out))
        assert out.is_dir()
