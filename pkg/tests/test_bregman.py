import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiralflow import anisotropy as an
from spiralflow.bregman import (LinearSystem, SolverParams, SolverState, d_step, energy_E,
                                energy_F, evolve, frozen_psi, minimize_step, mobility_update,
                                rescale_bcf, solve_step, sor_solve, step_count)
from spiralflow.discretization import gradient_fwd
from spiralflow.domain import Grid, PhaseField, constant_phase


def small_params(dx, **kw):
    return SolverParams.standard(dx, 1.0, 0.05, **kw)


def test_rescale_examples():
    f, a = rescale_bcf(2.0, 0.1, an.square())
    assert f == 2.0
    assert np.allclose(a.normals, 0.2 * an.square().normals)
    with pytest.raises(ValueError):
        rescale_bcf(0.0, 0.1, an.square())


def test_standard_params():
    p = SolverParams.standard(0.02, 1.0, 0.01)
    assert p.h == pytest.approx(8e-4)
    assert p.mu == pytest.approx(0.01)
    assert p.eps_in == pytest.approx(1e-4)
    assert p.eps_out == pytest.approx(1e-7)
    with pytest.raises(ValueError):
        p.with_(sor_omega=2.0)


def test_zero_psi_keeps_data():
    g = Grid((-1, 1), 0.1, [(0, 0, 1)])
    u = constant_phase(g, 0.7)
    p = small_params(g.dx)
    w, diag = solve_step(u, an.square(), 1.0, p, np.zeros((g.n, g.n)))
    assert np.array_equal(w[g.mask], u.values[g.mask])
    assert diag.frozen_count == g.mask.sum()


def test_sor_matches_dense_solve():
    g = Grid((-1, 1), 0.2, [(0.1, 0.0, 1)])
    rng = np.random.default_rng(4)
    psi = np.where(g.mask, rng.uniform(0.0, 3.0, (g.n, g.n)), 0.0)
    psi[2, 3] = 0.0  # one frozen node
    p = small_params(g.dx).with_(h=0.05, mu=1.0, sor_tol=1e-13, sor_max_iter=100_000)
    system = LinearSystem(g, psi, p)
    n = g.n
    N = (n + 2) ** 2
    A = np.zeros((N, N))
    for k in range(N):
        e = np.zeros(N)
        e[k] = 1.0
        A[:, k] = system.apply(e.reshape(n + 2, n + 2)).ravel()
    inner = np.zeros((n + 2, n + 2), dtype=bool)
    inner[1:-1, 1:-1] = True
    idx = np.flatnonzero(inner)
    gvals = np.where(g.mask, rng.normal(size=(n, n)), 0.0)
    exact = np.linalg.solve(A[np.ix_(idx, idx)], gvals.ravel())
    for ordering in ("lex", "redblack"):
        for nb in (True, False):
            u = PhaseField(np.where(g.mask, gvals, np.nan), g)
            state = SolverState.start(u, psi, 0.0)
            sor_solve(state, p.with_(sor_ordering=ordering), use_numba=nb)
            assert np.allclose(state.w.ravel(), exact, atol=1e-10)
    # rows with psi below alpha stay at the data
    assert state.w[2, 3] == gvals[2, 3]


def test_dstep_inside_returns_grad_theta():
    g = Grid((-1, 1), 0.1, [(0.05, 0.05, 1)])
    u = constant_phase(g, 0.0)
    p = small_params(g.dx)
    state = SolverState.start(u, np.ones((g.n, g.n)), 1.0)
    state.w = np.zeros((g.n, g.n))
    state.b = np.stack([g.zx, g.zy])
    for nb in (True, False):
        d_step(state, an.triangle(), p, use_numba=nb)
        assert np.allclose(state.d[:, g.mask], np.stack([g.zx, g.zy])[:, g.mask], atol=1e-14)


def test_energy_examples():
    g = Grid((-1, 1), 0.1)
    u = constant_phase(g, 2.0)
    p = small_params(g.dx)
    psi = np.ones((g.n, g.n))
    # w = g constant: no gradient, no fidelity, only the driving term
    for nb in (True, False):
        e = energy_E(u.values, u, psi, an.square(), 0.5, p, use_numba=nb)
        assert e == pytest.approx(-0.5 * 2.0 * g.n**2 * g.dx**2)
    state = SolverState.start(u, psi, 0.5)
    assert energy_F(state, an.square(), p) == pytest.approx(-1.0 * g.n**2 * g.dx**2)
    # fidelity with a floored psi
    w = u.values + 0.1
    e = energy_E(w, u, np.zeros((g.n, g.n)), an.square(), 0.0, p, use_numba=False)
    assert e == pytest.approx(g.n**2 * g.dx**2 * 0.01 / (2 * p.h * p.alpha))


def test_constant_is_stationary_without_centers():
    g = Grid((-1, 1), 0.1)
    u = constant_phase(g, -0.3)
    u1, diag = minimize_step(u, an.triangle(), 1.0, small_params(g.dx))
    assert np.array_equal(u1.values, u.values)
    assert u1.t == pytest.approx(small_params(g.dx).h)


def test_mobility_update():
    g = Grid((-1, 1), 0.1)
    u = constant_phase(g, 1.0)
    w = constant_phase(g, 3.0)
    assert np.allclose(mobility_update(w, u, 2.0).values, 2.0)
    assert np.allclose(mobility_update(w, u, lambda p: np.full(p.shape[:-1], 4.0)).values, 1.5)
    # gamma of a zero gradient is zero, so the floor applies
    big = mobility_update(w, u, an.square(), floor=1.0)
    assert np.allclose(big.values, 3.0)


def test_spiral_steps_decrease_energy_and_backends_agree():
    g = Grid((-1, 1), 0.05, [(0, 0, 1)])
    f, a = rescale_bcf(1.0, 0.05, an.triangle())
    p = small_params(g.dx).with_(h=0.01)
    u0 = constant_phase(g, 0.0)
    traj = evolve(u0, a, f, p, 0.05, [0.0, 0.05], check_energy=True)
    assert len(traj.records) == step_count(0.05, p.h) == 5
    assert all(r.descent_ok and r.energy_drop_ok for r in traj.records)
    assert len(traj.snapshots) == 2
    psi = frozen_psi(a, traj.final, p, use_numba=False)
    w1, _ = solve_step(traj.final, a, f, p, psi, use_numba=True)
    w2, _ = solve_step(traj.final, a, f, p, psi, use_numba=False)
    assert np.allclose(w1[g.mask], w2[g.mask], atol=1e-6)


@settings(max_examples=10, deadline=None)
@given(c=st.floats(-5.0, 5.0))
def test_equivariance_under_constant_shift(c):
    # adding a constant to u shifts the minimizer by the same constant
    g = Grid((-1, 1), 0.1, [(0.05, 0.0, 1)])
    f, a = rescale_bcf(1.0, 0.05, an.square())
    p = small_params(g.dx).with_(h=0.01)
    u = constant_phase(g, 0.3)
    w0, _ = minimize_step(u, a, f, p)
    w1, _ = minimize_step(PhaseField(u.values + c, g), a, f, p)
    assert np.allclose(w1.values[g.mask], w0.values[g.mask] + c, atol=1e-3)


def test_gradient_helper_used_by_dual_update():
    g = Grid((-1, 1), 0.1)
    gw = gradient_fwd(g, g.X.copy())
    assert np.allclose(gw[0][:-1, :], 1.0)
    assert np.allclose(gw[0][-1, :], 0.0)
