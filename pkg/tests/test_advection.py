import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pqglab.advection import courant_number, limited_advection, spectral_advection
from pqglab.grid import Grid


def rk3(q, rhs, dt, n):
    for _ in range(n):
        q1 = q + dt * rhs(q)
        q2 = 0.75 * q + 0.25 * (q1 + dt * rhs(q1))
        q = q / 3.0 + 2.0 / 3.0 * (q2 + dt * rhs(q2))
    return q


def gaussian(grid, x0, y0, sigma):
    X, Y = grid.x[None, :], grid.y[:, None]
    dx = (X - x0 + grid.Lx / 2) % grid.Lx - grid.Lx / 2
    dy = (Y - y0 + grid.Ly / 2) % grid.Ly - grid.Ly / 2
    return np.exp(-(dx**2 + dy**2) / (2 * sigma**2))


def test_uniform_flow_translation_one_turnover():
    grid = Grid(64, 64, 4, 1.0, 1.0, 1.0)
    sigma = 1.0 / 16
    q0 = gaussian(grid, 0.5, 0.5, sigma)
    u = np.full(q0.shape, 1.0)
    v = np.full(q0.shape, 0.5)
    n = 4096  # time error ~2e-7; spatial error is at roundoff
    q = rk3(q0, lambda a: -spectral_advection(a, u, v, grid), 1.0 / n, n)
    exact = gaussian(grid, 0.5 + 1.0, 0.5 + 0.5, sigma)
    assert np.max(np.abs(q - exact)) < 1e-6


def test_spectral_advection_mean_is_zero(rng):
    grid = Grid(32, 16, 4, 2.0, 1.0, 1.0)
    psi, q = rng.standard_normal((2, 16, 32))
    u, v = -grid.ddy(psi), grid.ddx(psi)
    a = spectral_advection(q, u, v, grid)
    assert abs(a.mean()) < 1e-14 * np.max(np.abs(a))


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.5))
def test_limited_scheme_keeps_positivity(seed, cfl):
    grid = Grid(16, 16, 4, 1.0, 1.0, 1.0)
    r = np.random.default_rng(seed)
    q = np.maximum(r.standard_normal((16, 16)), 0.0)  # rough, with many zeros
    psi = r.standard_normal((16, 16))
    u, v = -grid.ddy(psi), grid.ddx(psi)
    dt = cfl / (np.max(np.abs(u)) / grid.dx + np.max(np.abs(v)) / grid.dy)
    assert courant_number(u, v, dt, grid) == pytest.approx(cfl)
    out = rk3(q, lambda a: -limited_advection(a, u, v, grid), dt, 3)
    assert out.min() >= 0.0
    assert out.sum() == pytest.approx(q.sum(), rel=1e-12)


def test_limited_scheme_second_order_on_smooth_data():
    errs = []
    for n in (32, 64, 128):
        grid = Grid(n, n, 4, 1.0, 1.0, 1.0)
        X = grid.x[None, :] * np.ones((n, 1))
        q = 2.0 + np.sin(2 * np.pi * X)
        u, v = np.ones_like(q), np.zeros_like(q)
        exact = 2 * np.pi * np.cos(2 * np.pi * X)
        errs.append(np.mean(np.abs(limited_advection(q, u, v, grid) - exact)))
    assert np.log2(errs[0] / errs[1]) > 1.5 and np.log2(errs[1] / errs[2]) > 1.5
