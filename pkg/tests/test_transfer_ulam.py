import math

import numpy as np
import pytest
from scipy import integrate

from rauzylab.errors import LadderTooFine
from rauzylab.induced_mp import FloatInduced
from rauzylab.transfer_ulam import (RegularGrid, build_ulam, correlation_decay, g_correlation_decay,
                                    quasi_holder_seminorm, spectral_analysis, ulam_correlations)

LOG = math.log(10 / 9)


def exact_density(x):
    # invariant density of the induced golden map on B = [1/3, 2/5]
    return 1 / ((1 - x) * LOG)


@pytest.fixture(scope="module")
def ulam16(golden_base):
    rng = np.random.default_rng(3)
    op = build_ulam(golden_base, 16, 4000, rng)
    return op, spectral_analysis(op)


def test_rows_stochastic(ulam16):
    op, _ = ulam16
    M = op.dense()
    assert np.all(M >= 0)
    assert M.sum(axis=1) == pytest.approx(np.ones(op.n_cells), abs=1e-12)
    assert op.resolved_fraction > 0.99


def test_single_cell(golden_base, rng):
    op = build_ulam(golden_base, 1, 50, rng)
    assert op.dense().tolist() == [[1.0]]


def test_monte_carlo_consistency(golden_base):
    a = build_ulam(golden_base, 8, 2000, np.random.default_rng(1)).dense()
    b = build_ulam(golden_base, 8, 4000, np.random.default_rng(2)).dense()
    assert np.abs(a - b).max() < 2 / math.sqrt(2000)


def test_spectrum(ulam16):
    op, rep = ulam16
    assert rep.leading_eigenvalue == pytest.approx(1, abs=1e-10)
    assert len(rep.unit_circle_eigs) == 1
    assert rep.gap > 1e-3
    assert rep.h_B.min() > 0
    assert rep.cell_masses.sum() == pytest.approx(1)
    assert rep.cell_masses @ op.dense() == pytest.approx(rep.cell_masses, abs=1e-8)


def test_density_matches_exact(golden):
    dens = golden.density
    left, right, h = dens._cells_1d()
    exact = np.array([integrate.quad(exact_density, a, b)[0] / (b - a) for a, b in zip(left, right)])
    l1 = np.sum(np.abs(h - exact) * (right - left))
    assert l1 < 0.05


def test_refinement_consistency(golden_base):
    coarse = spectral_analysis(build_ulam(golden_base, 16, 2000, np.random.default_rng(5)))
    fine = spectral_analysis(build_ulam(golden_base, 32, 2000, np.random.default_rng(6)))
    pooled = fine.cell_masses.reshape(16, 2).sum(axis=1)
    # both grids run along the same edge, so pairs of fine cells make one coarse cell
    assert np.abs(pooled - coarse.cell_masses).sum() < 0.05


def test_ball_mass_and_radius(golden):
    dens = golden.density
    c = golden.generic_center()
    r = 0.004
    w = r / math.sqrt(2)
    exact = integrate.quad(exact_density, c[0] - w, c[0] + w)[0]
    assert dens.ball_mass(c, r) == pytest.approx(exact, rel=0.03)
    radii = dens.radius_for_mass(c, np.array([1e-4, 1e-3, 1e-2]))
    assert dens.ball_mass(c, radii) == pytest.approx([1e-4, 1e-3, 1e-2], rel=1e-3)
    assert np.isinf(dens.radius_for_mass(c, np.array([1.0]))[0])


def test_flow_ball_mass_small_limit(golden):
    dens = golden.density
    c = golden.generic_center()
    delta = 1e-4
    # thin ball: density at the centre times the area of an ellipse of semi-axes delta, delta/sqrt2
    approx = dens.density(c[None])[0] * math.pi * delta ** 2 / math.sqrt(2)
    assert dens.flow_ball_mass(c, delta) == pytest.approx(approx, rel=1e-3)


def test_constant_correlations_vanish(golden, rng):
    one = lambda x: np.ones(len(x))
    rep = correlation_decay(golden.density, one, one, 5, 20000, rng, fit=False)
    assert np.abs(rep.cor).max() < 1e-12
    g = g_correlation_decay(golden.base.rclass, golden.base, one, one, 5, 20000, rng)
    assert np.all(np.isfinite(g.extra["residual"]))


def test_correlation_at_zero_is_variance(golden, rng):
    phi = lambda x: (x[:, 0] < golden.base.center[0]).astype(float)
    rep = correlation_decay(golden.density, phi, phi, 3, 200_000, rng, fit=False)
    p = golden.density.sample(200_000, rng)
    v = phi(p).var()
    assert abs(rep.cor[0] - v) < 3 * rep.stderr[0] + 3 * math.sqrt(v / 200_000)


def test_ulam_correlations_constants(ulam16):
    op, rep = ulam16
    one = np.ones(op.n_cells)
    assert np.abs(ulam_correlations(op, rep.cell_masses, one, one, 4)).max() < 1e-12


def test_g_class_mass_two_ways(golden, rng):
    # class measure of the base from the orbit frequency and from the mean return time
    one = lambda x: np.ones(len(x))
    rep = g_correlation_decay(golden.base.rclass, golden.base, one, one, 2, 200_000, rng)
    mu, se = golden.mu_B
    assert abs(rep.extra["mu_B"] - mu) < 3 * math.hypot(rep.extra["mu_B_stderr"], se)


def test_seminorm(golden_base):
    grid = RegularGrid(golden_base, 1e-4)
    const = quasi_holder_seminorm(lambda x: np.ones(len(x)), grid)
    assert const.value == 0
    cut = golden_base.center[0]
    ind = lambda x: (x[:, 0] < cut).astype(float)
    a = quasi_holder_seminorm(ind, grid)
    b = quasi_holder_seminorm(ind, RegularGrid(golden_base, 5e-5), eps0=a.eps0)
    assert 0 < a.value < np.inf
    assert b.value == pytest.approx(a.value, rel=0.1)
    twice = quasi_holder_seminorm(lambda x: 2 * ind(x), grid)
    assert twice.value == pytest.approx(2 * a.value)
    with pytest.raises(LadderTooFine):
        quasi_holder_seminorm(ind, grid, ladder=[1e-5])
