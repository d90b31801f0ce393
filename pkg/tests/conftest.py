import numpy as np
import pytest
import torch

import subzero as sz
from subzero import dictionary as dct
from subzero import phantom

torch.set_num_threads(1)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    """Circular complex Gaussian samples."""
    return rng.standard_normal(shape + (2,)) @ np.array([1.0, 1.0j])


@pytest.fixture(scope="session")
def small_scan():
    """Noiseless 32x32, T=4, C=2 scan with matching basis and masks."""
    data = sz.make_dataset(32, 32, 4, 2, noise_sigma=0.0, seed=0)
    timing = phantom.default_timing(sz.SignalModel.T2_DECAY, 4)
    grid = dct.RelaxationGrid.log_spaced(40, 200, 64)
    dictionary = sz.build_dictionary(grid, timing)
    basis = sz.compute_basis(dictionary, 2)
    mask_cfg = sz.SamplingConfig(R=2, acs_lines=6, seed=0)
    masks = sz.make_masks(32, 32, 4, mask_cfg)
    return {
        "data": data,
        "timing": timing,
        "dictionary": dictionary,
        "basis": basis,
        "mask_cfg": mask_cfg,
        "masks": masks,
    }


@pytest.fixture(scope="session")
def small_net_cfg():
    return {
        "reg": sz.RegularizerConfig(
            basis_size=2, resnet_blocks=2, features=8, se_reduction=4
        ),
        "unroll": sz.UnrollConfig(unrolls=2, cg_iters=3),
    }
