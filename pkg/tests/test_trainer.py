"""Self-supervised training loop: losses, early stopping, inference."""

import dataclasses

import numpy as np
import pytest
import torch

from subzero import linops
from subzero.errors import DegenerateDataError
from subzero.metrics import rmse_per_echo
from subzero.sampling import MaskSet, redraw_divisions
from subzero.trainer import (
    TrainConfig,
    diff_loss,
    infer,
    recon_loss,
    single_subnet_config,
    train,
    zero_filled,
)


def _scan_tensors(small_scan):
    d = small_scan["data"]
    return (
        torch.from_numpy(d["kspace"]).to(torch.complex64),
        torch.from_numpy(d["sens"]).to(torch.complex64),
        torch.from_numpy(small_scan["basis"].phi).to(torch.complex64),
    )


def _short_cfg(**kw):
    base = dict(max_epochs=8, patience=4, seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(max_epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(patience=0)
        with pytest.raises(ValueError):
            TrainConfig(lambda_diff=-0.1)

    def test_single_subnet_twin(self):
        cfg = single_subnet_config(TrainConfig())
        assert cfg.n_subnets == 1
        assert cfg.lambda_diff == 0.0
        assert cfg.augment is False


class TestReconLoss:
    def test_zero_on_match(self, rng):
        y = torch.from_numpy(
            rng.standard_normal((4, 4, 2, 3)) + 1j * rng.standard_normal((4, 4, 2, 3))
        )
        lam = np.ones((4, 4, 3), dtype=bool)
        assert float(recon_loss(y, y, lam)) == 0.0

    def test_residual_outside_lambda_ignored(self, rng):
        y = torch.from_numpy(
            rng.standard_normal((4, 4, 1, 2)) + 1j * rng.standard_normal((4, 4, 1, 2))
        )
        lam = np.zeros((4, 4, 2), dtype=bool)
        lam[1, 1, 0] = True
        y_pred = y.clone()
        y_pred[2, 2, 0, 1] += 100.0  # not in lambda
        assert float(recon_loss(y_pred, y, lam)) == 0.0

    def test_hand_computed_single_entry(self):
        y_true = torch.zeros(2, 2, 1, 1, dtype=torch.complex64)
        y_true[0, 1, 0, 0] = 1.0
        lam = np.zeros((2, 2, 1), dtype=bool)
        lam[0, 1, 0] = True
        loss = recon_loss(torch.zeros_like(y_true), y_true, lam)
        assert float(loss) == pytest.approx(2.0, abs=1e-7)  # 1/1 + 1/1

    def test_mse_variant(self):
        y_true = torch.zeros(2, 2, 1, 1, dtype=torch.complex64)
        y_true[0, 1, 0, 0] = 2.0
        lam = np.zeros((2, 2, 1), dtype=bool)
        lam[0, 1, 0] = True
        loss = recon_loss(torch.zeros_like(y_true), y_true, lam, mse=True)
        assert float(loss) == pytest.approx(4.0, abs=1e-6)

    def test_empty_lambda_rejected(self):
        y = torch.ones(2, 2, 1, 1, dtype=torch.complex64)
        lam = np.zeros((2, 2, 1), dtype=bool)
        with pytest.raises(DegenerateDataError):
            recon_loss(y, y, lam)


class TestDiffLoss:
    def test_zero_for_equal_images(self, rng):
        x = torch.from_numpy(
            rng.standard_normal((4, 4, 2)) + 1j * rng.standard_normal((4, 4, 2))
        )
        sens = torch.ones(4, 4, 1, dtype=torch.complex128)
        delta = np.ones((4, 4, 2), dtype=bool)
        assert float(diff_loss(x, x, delta, sens)) == 0.0

    def test_empty_delta_warns_and_returns_zero(self, rng):
        x1 = torch.from_numpy(
            rng.standard_normal((4, 4, 2)) + 1j * rng.standard_normal((4, 4, 2))
        )
        x2 = x1 + 1.0
        sens = torch.ones(4, 4, 1, dtype=torch.complex128)
        with pytest.warns(UserWarning, match="delta"):
            out = diff_loss(x1, x2, np.zeros((4, 4, 2), dtype=bool), sens)
        assert float(out) == 0.0

    def test_single_point_oracle(self):
        # constant image difference of 1 concentrates at the k-space center
        # with magnitude sqrt(M*N) = 2; a one-point delta there gives 4/|delta|
        M = N = 2
        x1 = torch.ones(M, N, 1, dtype=torch.complex128)
        x2 = torch.zeros(M, N, 1, dtype=torch.complex128)
        sens = torch.ones(M, N, 1, dtype=torch.complex128)
        delta = np.zeros((M, N, 1), dtype=bool)
        delta[M // 2, N // 2, 0] = True
        assert float(diff_loss(x1, x2, delta, sens)) == pytest.approx(4.0, abs=1e-10)

    def test_image_space_switch_is_plain_mse(self, rng):
        x1 = torch.from_numpy(
            rng.standard_normal((4, 4, 2)) + 1j * rng.standard_normal((4, 4, 2))
        )
        x2 = torch.from_numpy(
            rng.standard_normal((4, 4, 2)) + 1j * rng.standard_normal((4, 4, 2))
        )
        sens = torch.ones(4, 4, 1, dtype=torch.complex128)
        out = diff_loss(x1, x2, np.ones((4, 4, 2), dtype=bool), sens, in_image_space=True)
        assert float(out) == pytest.approx(float(torch.mean(torch.abs(x1 - x2) ** 2)))


class TestTrainLoop:
    def test_deterministic_replay(self, small_scan, small_net_cfg):
        y, sens, phi = _scan_tensors(small_scan)
        args = (y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"])
        kw = dict(unroll_cfg=small_net_cfg["unroll"], masks=small_scan["masks"])
        _, hist_a, _ = train(*args, train_cfg=_short_cfg(max_epochs=4), **kw)
        _, hist_b, _ = train(*args, train_cfg=_short_cfg(max_epochs=4), **kw)
        assert [dataclasses.astuple(r) for r in hist_a] == [
            dataclasses.astuple(r) for r in hist_b
        ]

    def test_loss_is_sum_of_parts(self, small_scan, small_net_cfg):
        y, sens, phi = _scan_tensors(small_scan)
        cfg = _short_cfg(max_epochs=5, lambda_diff=0.7)
        _, history, _ = train(
            y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"],
            unroll_cfg=small_net_cfg["unroll"], train_cfg=cfg,
            masks=small_scan["masks"],
        )
        for rec in history:
            expected = rec.recon1 + rec.recon2 + cfg.lambda_diff * rec.diff
            assert rec.total == pytest.approx(expected, abs=1e-6)

    def test_swap_symmetry_of_subnetwork_draws(self, small_scan, small_net_cfg):
        y, sens, phi = _scan_tensors(small_scan)
        m = small_scan["masks"]
        swapped = MaskSet(
            m.omega, m.gamma, [m.theta[1], m.theta[0]], [m.lam[1], m.lam[0]], m.delta
        )
        cfg = _short_cfg(max_epochs=1, patience=1)
        _, h1, _ = train(y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"],
                         unroll_cfg=small_net_cfg["unroll"], train_cfg=cfg, masks=m)
        _, h2, _ = train(y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"],
                         unroll_cfg=small_net_cfg["unroll"], train_cfg=cfg,
                         masks=swapped)
        assert h1[0].total == pytest.approx(h2[0].total, abs=1e-6)
        assert h1[0].recon1 == pytest.approx(h2[0].recon2, abs=1e-6)

    def test_identical_draws_double_the_recon_term(self, small_scan, small_net_cfg):
        y, sens, phi = _scan_tensors(small_scan)
        m = small_scan["masks"]
        doubled = MaskSet(
            m.omega, m.gamma, [m.theta[0], m.theta[0]], [m.lam[0], m.lam[0]], m.delta
        )
        cfg = _short_cfg(max_epochs=1, patience=1, lambda_diff=0.0)
        _, history, _ = train(
            y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"],
            unroll_cfg=small_net_cfg["unroll"], train_cfg=cfg, masks=doubled,
        )
        rec = history[0]
        assert rec.recon1 == pytest.approx(rec.recon2, abs=1e-7)
        assert rec.total == pytest.approx(2 * rec.recon1, abs=1e-6)

    def test_online_augmentation_redraws_distinct_lambdas(self, small_scan):
        m = small_scan["masks"]
        rest = m.omega & ~m.gamma
        cfg = small_scan["mask_cfg"]
        seen = set()
        for epoch in range(100):
            _, lams = redraw_divisions(
                rest, cfg.r, 0 * 100003 + epoch, 2, True, cfg.acs_lines
            )
            seen.add(lams[0].tobytes())
        assert len(seen) >= 99

    def test_early_stop_when_gamma_flat(self, small_scan, small_net_cfg):
        y, sens, phi = _scan_tensors(small_scan)
        cfg = _short_cfg(max_epochs=30, patience=3, lr=1e-30)
        _, history, _ = train(
            y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"],
            unroll_cfg=small_net_cfg["unroll"], train_cfg=cfg,
            masks=small_scan["masks"],
        )
        assert len(history) == 4  # epochs 0..patience
        assert history[-1].stopped_early is True
        gammas = [r.gamma_val for r in history]
        assert min(gammas) == gammas[0]

    def test_best_epoch_bounds_run_length(self, small_scan, small_net_cfg):
        y, sens, phi = _scan_tensors(small_scan)
        cfg = _short_cfg(max_epochs=40, patience=4)
        _, history, _ = train(
            y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"],
            unroll_cfg=small_net_cfg["unroll"], train_cfg=cfg,
            masks=small_scan["masks"],
        )
        gammas = [r.gamma_val for r in history]
        best = int(np.argmin(gammas))
        assert len(history) <= best + cfg.patience + 1

    def test_scale_invariance_of_history(self, small_scan, small_net_cfg):
        y, sens, phi = _scan_tensors(small_scan)
        cfg = _short_cfg(max_epochs=2, patience=2)
        _, h1, _ = train(y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"],
                         unroll_cfg=small_net_cfg["unroll"], train_cfg=cfg,
                         masks=small_scan["masks"])
        _, h2, _ = train(7.0 * y, sens, phi, small_scan["mask_cfg"],
                         small_net_cfg["reg"], unroll_cfg=small_net_cfg["unroll"],
                         train_cfg=cfg, masks=small_scan["masks"])
        for a, b in zip(h1, h2):
            assert a.total == pytest.approx(b.total, rel=1e-5)

    def test_zero_kspace_rejected(self, small_scan, small_net_cfg):
        y, sens, phi = _scan_tensors(small_scan)
        with pytest.raises(DegenerateDataError):
            train(torch.zeros_like(y), sens, phi, small_scan["mask_cfg"],
                  small_net_cfg["reg"], unroll_cfg=small_net_cfg["unroll"],
                  train_cfg=_short_cfg(), masks=small_scan["masks"])


@pytest.fixture(scope="module")
def trained(small_scan, small_net_cfg):
    y, sens, phi = _scan_tensors(small_scan)
    torch.manual_seed(0)
    model, history, masks = train(
        y, sens, phi, small_scan["mask_cfg"], small_net_cfg["reg"],
        unroll_cfg=small_net_cfg["unroll"],
        train_cfg=TrainConfig(max_epochs=30, patience=10, seed=0),
        masks=small_scan["masks"],
    )
    return model, history, masks


class TestInference:
    def test_inference_is_deterministic(self, trained, small_scan):
        model, _, masks = trained
        d = small_scan["data"]
        phi = small_scan["basis"].phi
        a1, x1 = infer(model, d["kspace"], d["sens"], phi, masks.omega)
        a2, x2 = infer(model, d["kspace"], d["sens"], phi, masks.omega)
        assert np.array_equal(a1, a2)
        assert np.array_equal(x1, x2)

    def test_trained_model_beats_zero_filled(self, trained, small_scan):
        model, _, masks = trained
        d = small_scan["data"]
        phi = small_scan["basis"].phi
        _, x_hat = infer(model, d["kspace"], d["sens"], phi, masks.omega)
        _, x_zf = zero_filled(
            d["kspace"], d["sens"], np.eye(d["kspace"].shape[-1]), masks.omega
        )
        rmse_net = np.mean(rmse_per_echo(x_hat, d["x_true"]))
        rmse_zf = np.mean(rmse_per_echo(x_zf, d["x_true"]))
        assert rmse_net < rmse_zf

    def test_inference_tracks_training_consistency_pass(self, trained, small_scan):
        """DC on all of omega stays within 5% of the gamma-validation pass
        (DC on omega minus gamma) that selected the checkpoint."""
        model, _, masks = trained
        d = small_scan["data"]
        phi = small_scan["basis"].phi
        _, x_inf = infer(model, d["kspace"], d["sens"], phi, masks.omega)

        y = torch.from_numpy(d["kspace"]).to(torch.complex64)
        y = y * torch.as_tensor(masks.omega).to(torch.float32)[:, :, None, :]
        scale = torch.max(torch.abs(y))
        rest = masks.omega & ~masks.gamma
        with torch.no_grad():
            _, x_val = model(
                y / scale,
                torch.as_tensor(rest),
                torch.from_numpy(d["sens"]).to(torch.complex64),
                torch.from_numpy(phi).to(torch.complex64),
            )
        x_val = (x_val * scale).numpy()
        rel = np.linalg.norm(x_inf - x_val) / np.linalg.norm(x_val)
        assert rel < 0.05
