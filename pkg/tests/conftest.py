import numpy as np
import pytest
from hypothesis import settings
from scipy.special import expit

from methinter.basis import WeightSpec, build_basis, penalty_matrix
from methinter.curves import CurveSet, uniform_grid
from methinter.model import Dataset, assemble_design

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_curves(N, rng, grid_size=201):
    """Smooth random curves in (0, 1) on a uniform grid."""
    grid = uniform_grid(grid_size)
    amp = rng.normal(0, 1.0, size=(N, 4))
    freq = rng.uniform(0.5, 3.0, size=(N, 4))
    phase = rng.uniform(0, 2 * np.pi, size=(N, 4))
    latent = np.einsum("nk,nkm->nm", amp, np.sin(2 * np.pi * freq[:, :, None] * grid + phase[:, :, None]))
    return CurveSet(grid, expit(latent), (0.0, 1e5))


def toy_dataset(N=60, S=1, D=3, seed=0, grid_size=201, eta=0.0, noise_sd=0.5):
    """Small random dataset with a known generating model."""
    rng = np.random.default_rng(seed)
    curves = random_curves(N, rng, grid_size)
    W = rng.normal(size=(N, S))
    G = rng.binomial(2, 0.3, size=(N, D)).astype(float)
    for d in range(D):  # keep every SNP polymorphic
        if np.ptp(G[:, d]) == 0:
            G[0, d] = 1 - G[0, d] if G[0, d] < 2 else 1
    u = rng.uniform(0, 1, size=D)
    Y = 1.0 + W @ np.full(S, 0.3) + G @ np.linspace(0.5, 1.0, D) + rng.normal(0, noise_sd, N)
    if eta:
        Y = Y + eta * G.sum(axis=1)
    return Dataset(Y, W, G, u, curves)


@pytest.fixture
def basis10():
    return build_basis(10)


@pytest.fixture
def small_problem():
    """(dataset, blocks, basis, penalty) with N=60, S=1, D=3, L=6."""
    ds = toy_dataset(60, 1, 3, seed=1)
    basis = build_basis(6)
    blocks = assemble_design(ds, basis, WeightSpec("exponential", 1.0))
    return ds, blocks, basis, penalty_matrix(basis)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
