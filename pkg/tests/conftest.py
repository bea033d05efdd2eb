import numpy as np
import pytest

from ns3d.spectral import Grid, SpectralField, _conj_sym, _project_coeffs, norms


@pytest.fixture(scope="session")
def grid8():
    return Grid(8)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


def random_raw_field(grid: Grid, seed: int, amplitude: float = 1.0) -> SpectralField:
    """Hermitian, zero-mean field with L2 norm ``amplitude``; generally
    carries divergence."""
    rng = np.random.default_rng(seed)
    shape = (3, grid.n, grid.n, grid.n)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    a = 0.5 * (a + _conj_sym(a))
    a[:, ~grid.mode_mask] = 0.0
    a[:, 0, 0, 0] = 0.0
    field = SpectralField(grid, a)
    a = a * (amplitude / np.sqrt(norms(field).l2_sq))
    return SpectralField(grid, a)


def random_divfree_field(grid: Grid, seed: int, amplitude: float = 1.0) -> SpectralField:
    raw = random_raw_field(grid, seed, amplitude)
    return SpectralField(grid, _project_coeffs(grid, raw.coeffs))


def random_gradient_field(grid: Grid, seed: int) -> SpectralField:
    """i k phat_k for a random scalar p: a pure gradient."""
    rng = np.random.default_rng(seed)
    shape = (grid.n, grid.n, grid.n)
    p = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    p = 0.5 * (p + np.conj(np.roll(p[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))))
    p[~grid.mode_mask] = 0.0
    p[0, 0, 0] = 0.0
    return SpectralField(grid, 1j * grid.kf * p[None, :, :, :])
