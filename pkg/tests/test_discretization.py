import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiralflow import anisotropy as an
from spiralflow.discretization import (divergence_bwd, eikonal_term, gradient_fwd, laplacian,
                                       minmod_sigma, psi_field, upwind_diff)
from spiralflow.domain import Grid, PhaseField, constant_phase


def field(grid, fn):
    return PhaseField(fn(grid.X, grid.Y), grid)


def test_minmod_examples():
    assert minmod_sigma(0.5, 1.0) == 0.5
    assert minmod_sigma(2.0, 1.0) == 1.0
    assert minmod_sigma(-3.0, -1.0) == -1.0


def test_upwind_linear_exact():
    g = Grid((-1, 1), 0.1)
    u = field(g, lambda x, y: x + 0.0 * y)
    i = j = 10
    for s in (1, -1):
        assert upwind_diff(u, 0, s, i, j) == pytest.approx(1.0, abs=1e-12)
        assert upwind_diff(u, 1, s, i, j) == pytest.approx(0.0, abs=1e-12)


def test_upwind_quadratic_example():
    # G_i = 0, G_{i+1} = 0.01, G_{i+2} = 0.04 -> 0.1 - 0.05 sigma(2, 2) = 0
    g = Grid((-1, 1), 0.1)
    u = field(g, lambda x, y: x**2 + 0.0 * y)
    assert upwind_diff(u, 0, 1, 10, 10) == pytest.approx(0.0, abs=1e-12)


def test_upwind_demotes_next_to_disc():
    g = Grid((-1, 1), 0.1, [(0, 0, 1)])
    u = PhaseField(np.where(g.mask, g.X**2, 0.0), g)
    # node (0.2, 0): -x neighbour at 0.1 is excluded, so the -x difference is the
    # one-sided ghost value 0 and the +x one is first order because of the cross test
    i, j = 12, 10
    d_plus = upwind_diff(u, 0, 1, i, j)
    Gi = u.values[i, j] - 0.0
    Gp = u.values[i + 1, j] - g.tx_pad[i + 2, j + 2]
    assert d_plus == pytest.approx((Gp - Gi) / 0.1, abs=1e-12)
    assert upwind_diff(u, 0, -1, i, j) == pytest.approx(0.0, abs=1e-12)
    # without the cross demotion the +x difference picks up the correction
    assert upwind_diff(u, 0, 1, i, j, demote_cross=False) != pytest.approx(d_plus, abs=1e-6)


def test_eikonal_term_examples():
    g = Grid((-1, 1), 0.05)
    u = field(g, lambda x, y: 2 * x + 5 * y)
    assert eikonal_term((1, 0), u, 20, 20) == pytest.approx(2.0, abs=1e-12)
    assert eikonal_term((0, 0), u, 20, 20) == 0.0
    errs = []
    for dx in (0.05, 0.025):
        g = Grid((-1, 1), dx)
        u = field(g, lambda x, y: 2 * x + 5 * y + np.sin(x) * np.cos(2 * y))
        c = (g.n - 1) // 2
        exact = -(2 + 1) - 5
        errs.append(abs(eikonal_term((-1, -1), u, c, c) - exact))
    assert errs[1] < errs[0] / 3.0


def test_psi_examples():
    g = Grid((-1, 1), 0.05)
    u = field(g, lambda x, y: x + 0.0 * y)
    psi = psi_field(an.square(), u)
    assert np.allclose(psi[1:-1, 1:-1], 1.0)
    assert np.all(psi_field(an.square(), constant_phase(g, 0.3)) == 0.0)
    g1 = Grid((-1, 1), 0.05, [(0, 0, 1)])
    psi = psi_field(an.triangle(), constant_phase(g1, 0.0))
    ring = g1.mask & (np.hypot(g1.X, g1.Y) > 3 * g1.dx)
    assert np.all(psi[ring] > 0.0)
    assert np.all(psi[~g1.mask] == 0.0)


def test_psi_backends_agree():
    g = Grid((-1, 1), 0.04, [(0.1, -0.2, 1), (-0.4, 0.4, -2)])
    rng = np.random.default_rng(0)
    u = PhaseField(rng.normal(size=(g.n, g.n)), g)
    for a in (an.square(), an.triangle(), an.pentagon()):
        for dc in (True, False):
            p1 = psi_field(a, u, dc, use_numba=True)
            p2 = psi_field(a, u, dc, use_numba=False)
            assert np.allclose(p1, p2, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.1, 10.0), seed=st.integers(0, 1000))
def test_psi_homogeneity(c, seed):
    g = Grid((-1, 1), 0.1)
    u = np.random.default_rng(seed).normal(size=(g.n, g.n))
    a = an.triangle()
    p1 = psi_field(a, PhaseField(u, g))
    p2 = psi_field(a, PhaseField(c * u, g))
    assert np.allclose(p2, c * p1, atol=1e-12 * c, rtol=1e-12)


def test_upwind_second_order_on_smooth_data():
    errs = []
    for dx in (0.04, 0.02):
        g = Grid((-1, 1), dx)
        u = field(g, lambda x, y: np.sin(2 * x) + 0.0 * y)
        i = int(round((0.3 + 1) / dx))
        j = (g.n - 1) // 2
        errs.append(abs(upwind_diff(u, 0, 1, i, j) - 2 * np.cos(0.6)))
    assert errs[0] / errs[1] > 3.0


def test_laplacian_examples():
    g = Grid((-1, 1), 0.1)
    assert np.allclose(laplacian(g, np.full((g.n, g.n), 3.0)), 0.0)
    assert np.allclose(gradient_fwd(g, np.full((g.n, g.n), 3.0)), 0.0)
    lap = laplacian(g, g.X**2)
    assert np.allclose(lap[1:-1, 1:-1], 2.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_summation_by_parts(seed):
    g = Grid((-1, 1), 0.1, [(0.05, 0.1, 1)])
    rng = np.random.default_rng(seed)
    w = np.where(g.mask, rng.normal(size=(g.n, g.n)), 0.0)
    v = rng.normal(size=(2, g.n, g.n))
    for nb in (True, False):
        gw = gradient_fwd(g, w, nb)
        dv = divergence_bwd(g, v, nb)
        vm = np.stack([np.where(g.ex, v[0], 0.0), np.where(g.ey, v[1], 0.0)])
        assert np.sum(gw * vm) == pytest.approx(-np.sum(w * dv), abs=1e-12 * (1 + np.abs(w).sum()))
