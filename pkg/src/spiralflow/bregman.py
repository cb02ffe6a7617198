"""Minimizing movements for spiral curves by split Bregman iterations.

Each time step minimizes

    E(w; u_n) = sum [ gamma(grad w - grad theta) - f w + (w - u_n)^2 / (2 h psi) ] dx^2

with psi = gamma_eik(grad(u_n - theta)) frozen for the step. The splitting
alternates an SOR solve of

    w - h mu psi lap(w) = g + h psi (f - mu div(d - b))

with the pointwise shrinkage of d, and updates b by the constraint residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._accel import njit, resolve
from .anisotropy import PolyhedralAnisotropy, _shrink_many_numpy, _shrink_point
from .discretization import divergence_bwd, gradient_fwd, psi_field
from .domain import Grid, PhaseField


class SolverError(RuntimeError):
    """Raised when SOR or the Bregman loops hit their caps."""

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


@dataclass(frozen=True)
class SolverParams:
    h: float
    mu: float
    eps_in: float
    eps_out: float
    alpha: float = 1e-8
    A_ceiling: float = math.inf
    sor_omega: float = 1.5
    sor_tol: float = 1e-8  # relative: the absolute tolerance is sor_tol (1 + |rhs|_inf)
    sor_max_iter: int = 10_000
    sor_ordering: str = "lex"  # "lex" or "redblack"
    max_outer: int = 500
    max_inner: int = 50
    demote_cross: bool = True

    def __post_init__(self):
        for name in ("h", "mu", "eps_in", "eps_out", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.sor_omega < 2.0:
            raise ValueError("sor_omega must lie in (0, 2)")
        if self.sor_ordering not in ("lex", "redblack"):
            raise ValueError("sor_ordering must be 'lex' or 'redblack'")

    @classmethod
    def standard(cls, dx: float, v_inf: float = 1.0, rho_c: float = 1.0, **overrides):
        """h = 0.04 dx, mu = v rho, eps_in = 1e-2 v rho, eps_out = 1e-5 v rho."""
        vr = v_inf * rho_c
        base = dict(h=0.04 * dx, mu=vr, eps_in=1e-2 * vr, eps_out=1e-5 * vr)
        base.update(overrides)
        return cls(**base)

    def with_(self, **kw) -> "SolverParams":
        return replace(self, **kw)


@dataclass
class SolverState:
    """Bregman triple (w, d, b) with the frozen data of one time step."""

    w: np.ndarray
    d: np.ndarray
    b: np.ndarray
    psi: np.ndarray
    g: np.ndarray
    f: float | np.ndarray
    grid: Grid

    @classmethod
    def start(cls, u_n: PhaseField, psi: np.ndarray, f) -> "SolverState":
        grid = u_n.grid
        g = np.where(grid.mask, u_n.values, 0.0)
        zeros = np.zeros((2, grid.n, grid.n))
        return cls(g.copy(), zeros.copy(), zeros.copy(), psi, g, f, grid)


@dataclass
class StepDiagnostics:
    outer_count: int
    inner_counts: list
    final_F: float
    sor_sweeps: int
    F_start: list = field(default_factory=list)
    F_end: list = field(default_factory=list)
    frozen_count: int = 0

    @property
    def mean_inner(self) -> float:
        return float(np.mean(self.inner_counts)) if self.inner_counts else 0.0

    @property
    def descent_ok(self) -> bool:
        return all(
            e <= s + 1e-10 * max(abs(s), 1.0) for s, e in zip(self.F_start, self.F_end)
        )


def rescale_bcf(v_inf: float, rho_c: float, a: PolyhedralAnisotropy):
    """Driving force and anisotropy for V = v_inf (1 - rho_c kappa)."""
    if not (v_inf > 0 and rho_c > 0):
        raise ValueError("v_inf and rho_c must be positive")
    return float(v_inf), a.scaled(v_inf * rho_c)


# -- SOR -----------------------------------------------------------------------

class LinearSystem:
    """Frozen part of  (1 + c deg) w - c sum_nb w = rhs  for one time step.

    Weights live on a 1-padded grid: kE[i, j] multiplies w[i+1, j] and so on,
    zero across missing edges. Rows of frozen or excluded nodes are the
    identity, so those entries keep w = g.
    """

    def __init__(self, grid: Grid, psi: np.ndarray, params: SolverParams):
        n = grid.n
        self.grid = grid
        self.solve = grid.mask & (psi >= params.alpha)
        c = np.where(self.solve, params.h * params.mu * psi / grid.dx**2, 0.0)
        self.c = c
        k = np.zeros((4, n + 2, n + 2))
        inner = (slice(1, n + 1), slice(1, n + 1))
        k[0][inner] = c * grid.ex  # east
        west = np.zeros((n, n), dtype=bool)
        west[1:, :] = grid.ex[:-1, :]
        k[1][inner] = c * west
        k[2][inner] = c * grid.ey  # north
        south = np.zeros((n, n), dtype=bool)
        south[:, 1:] = grid.ey[:, :-1]
        k[3][inner] = c * south
        self.k = k
        self.deg = (grid.ex.astype(float) + west + grid.ey + south)
        diag = np.ones((n + 2, n + 2))
        diag[inner] = 1.0 + c * self.deg
        self.diag = diag
        self.red = (np.add.outer(np.arange(n + 2), np.arange(n + 2)) % 2) == 0

    def apply(self, wp: np.ndarray) -> np.ndarray:
        """Matrix-vector product on the padded layout."""
        k = self.k
        out = self.diag * wp
        out[1:-1, 1:-1] -= (k[0][1:-1, 1:-1] * wp[2:, 1:-1] + k[1][1:-1, 1:-1] * wp[:-2, 1:-1]
                            + k[2][1:-1, 1:-1] * wp[1:-1, 2:] + k[3][1:-1, 1:-1] * wp[1:-1, :-2])
        return out


@njit
def _residual_max(wp, rp, diag, kE, kW, kN, kS):
    m = wp.shape[0] - 1
    rmax = 0.0
    for i in range(1, m):
        for j in range(1, m):
            r = (rp[i, j] - diag[i, j] * wp[i, j] + kE[i, j] * wp[i + 1, j]
                 + kW[i, j] * wp[i - 1, j] + kN[i, j] * wp[i, j + 1] + kS[i, j] * wp[i, j - 1])
            r = abs(r)
            if r > rmax:
                rmax = r
    return rmax


@njit
def _sor_lex(wp, rp, diag, kE, kW, kN, kS, omega, tol, max_iter):
    m = wp.shape[0] - 1
    od = omega / diag
    for it in range(max_iter):
        rmax = 0.0
        for i in range(1, m):
            for j in range(1, m):
                r = (rp[i, j] - diag[i, j] * wp[i, j] + kE[i, j] * wp[i + 1, j]
                     + kW[i, j] * wp[i - 1, j] + kN[i, j] * wp[i, j + 1]
                     + kS[i, j] * wp[i, j - 1])
                rmax = max(rmax, abs(r))
                wp[i, j] += od[i, j] * r
        if rmax <= tol:
            res = _residual_max(wp, rp, diag, kE, kW, kN, kS)
            if res <= tol:
                return it + 1, res
    return max_iter, _residual_max(wp, rp, diag, kE, kW, kN, kS)


def _sor_redblack(wp, rp, system: LinearSystem, omega, tol, max_iter):
    inner = np.zeros_like(system.red)
    inner[1:-1, 1:-1] = True
    colors = (system.red & inner, ~system.red & inner)
    rmax = np.inf
    for it in range(max_iter):
        for col in colors:
            r = rp - system.apply(wp)
            wp[col] += omega * r[col] / system.diag[col]
        rmax = float(np.max(np.abs(rp - system.apply(wp))[inner]))
        if rmax <= tol:
            return it + 1, rmax
    return max_iter, rmax


def _solve_system(state: SolverState, system: LinearSystem, params: SolverParams,
                  use_numba=None) -> int:
    grid = state.grid
    psi = state.psi
    div = divergence_bwd(grid, state.d - state.b, use_numba)
    rhs = np.where(system.solve, state.g + params.h * psi * (state.f - params.mu * div), state.g)
    n = grid.n
    rp = np.zeros((n + 2, n + 2))
    rp[1:-1, 1:-1] = rhs
    wp = np.zeros((n + 2, n + 2))
    wp[1:-1, 1:-1] = np.where(system.solve, state.w, state.g)
    tol = params.sor_tol * (1.0 + float(np.max(np.abs(rhs[grid.mask]), initial=0.0)))
    if resolve(use_numba) and params.sor_ordering == "lex":
        k = system.k
        sweeps, res = _sor_lex(wp, rp, system.diag, k[0], k[1], k[2], k[3],
                               params.sor_omega, tol, params.sor_max_iter)
    else:
        sweeps, res = _sor_redblack(wp, rp, system, params.sor_omega, tol,
                                    params.sor_max_iter)
    if res > tol:
        raise SolverError(f"SOR did not converge: residual {res:.3e} > {tol:.3e}",
                          residual=res, sweeps=sweeps)
    state.w = wp[1:-1, 1:-1].copy()
    return sweeps


def sor_solve(state: SolverState, params: SolverParams, use_numba=None) -> int:
    """Solve the elliptic w-subproblem in place; returns the number of sweeps.

    Where psi < alpha the row reduces to w = g exactly.
    """
    system = LinearSystem(state.grid, state.psi, params)
    return _solve_system(state, system, params, use_numba)


# -- d step ----------------------------------------------------------------------

@njit
def _dstep_loop(nrm, dual, w, bx, by, zx, zy, mask, ex, ey, dx, outx, outy):
    n = w.shape[0]
    buf = np.empty(3 + nrm.shape[0])
    for i in range(n):
        for j in range(n):
            if not mask[i, j]:
                outx[i, j] = 0.0
                outy[i, j] = 0.0
                continue
            gx = (w[i + 1, j] - w[i, j]) / dx if ex[i, j] else 0.0
            gy = (w[i, j + 1] - w[i, j]) / dx if ey[i, j] else 0.0
            _shrink_point(nrm, dual, gx + bx[i, j], gy + by[i, j], zx[i, j], zy[i, j], buf)
            outx[i, j] = buf[0]
            outy[i, j] = buf[1]


def d_step(state: SolverState, a: PolyhedralAnisotropy, params: SolverParams,
           use_numba=None) -> None:
    """d = shrink(a, grad w + b, grad theta, mu) at every active node."""
    grid = state.grid
    nrm = np.ascontiguousarray(a.normals / params.mu)
    dual = np.ascontiguousarray(a.dual_vertices * params.mu)
    if resolve(use_numba):
        dx_ = np.empty((grid.n, grid.n))
        dy_ = np.empty((grid.n, grid.n))
        _dstep_loop(nrm, dual, state.w, state.b[0], state.b[1], grid.zx, grid.zy,
                    grid.mask, grid.ex, grid.ey, grid.dx, dx_, dy_)
        state.d = np.stack([dx_, dy_])
        return
    gw = gradient_fwd(grid, state.w, False)
    m = grid.mask
    y = (gw + state.b)[:, m].T
    z = np.stack([grid.zx, grid.zy])[:, m].T
    d = np.zeros_like(state.d)
    d[:, m] = _shrink_many_numpy(nrm, dual, np.ascontiguousarray(y), np.ascontiguousarray(z)).T
    state.d = d


# -- energies --------------------------------------------------------------------

@njit
def _energy_loop(nrm, w, g, psi, dx_, dy_, bx, by, zx, zy, mask, ex, ey,
                 f, h, mu, alpha, dx, with_split):
    n = w.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            if not mask[i, j]:
                continue
            gx = (w[i + 1, j] - w[i, j]) / dx if ex[i, j] else 0.0
            gy = (w[i, j + 1] - w[i, j]) / dx if ey[i, j] else 0.0
            if with_split:
                p0 = dx_[i, j] - zx[i, j]
                p1 = dy_[i, j] - zy[i, j]
            else:
                p0 = gx - zx[i, j]
                p1 = gy - zy[i, j]
            gam = -1e300
            for k in range(nrm.shape[0]):
                v = nrm[k, 0] * p0 + nrm[k, 1] * p1
                if v > gam:
                    gam = v
            ps = psi[i, j] if psi[i, j] > alpha else alpha
            e = gam - f[i, j] * w[i, j] + (w[i, j] - g[i, j]) ** 2 / (2.0 * h * ps)
            if with_split:
                r0 = dx_[i, j] - gx - bx[i, j]
                r1 = dy_[i, j] - gy - by[i, j]
                e += 0.5 * mu * (r0 * r0 + r1 * r1)
            total += e
    return total * dx * dx


def _energy_numpy(a, grid, w, g, psi, d, b, f, h, mu, alpha, with_split):
    m = grid.mask
    gw = gradient_fwd(grid, w, False)
    z = np.stack([grid.zx, grid.zy])
    p = (d - z) if with_split else (gw - z)
    gam = a.gamma(np.moveaxis(p[:, m], 0, -1))
    fw = (f * w)[m]
    fid = (w - g)[m] ** 2 / (2.0 * h * np.maximum(psi[m], alpha))
    e = gam - fw + fid
    if with_split:
        r = (d - gw - b)[:, m]
        e = e + 0.5 * mu * np.sum(r * r, axis=0)
    return float(np.sum(e)) * grid.dx**2


def _f_field(f, grid):
    return np.broadcast_to(np.asarray(f, dtype=float), (grid.n, grid.n)).copy()


def energy_F(state: SolverState, a: PolyhedralAnisotropy, params: SolverParams,
             use_numba=None) -> float:
    """Cut-off split functional F^k_{mu,alpha}(w, d; g) with the current b."""
    grid = state.grid
    if resolve(use_numba):
        return _energy_loop(np.ascontiguousarray(a.normals), state.w, state.g, state.psi,
                            state.d[0], state.d[1], state.b[0], state.b[1], grid.zx,
                            grid.zy, grid.mask, grid.ex, grid.ey, _f_field(state.f, grid),
                            params.h, params.mu, params.alpha, grid.dx, True)
    return _energy_numpy(a, grid, state.w, state.g, state.psi, state.d, state.b, state.f,
                         params.h, params.mu, params.alpha, True)


def energy_E(w, u_n: PhaseField, psi, a: PolyhedralAnisotropy, f, params: SolverParams,
             use_numba=None) -> float:
    """E(w; u_n) with the alpha cut-off in the fidelity weight."""
    grid = u_n.grid
    w = np.where(grid.mask, np.asarray(w, float), 0.0)
    g = np.where(grid.mask, u_n.values, 0.0)
    if resolve(use_numba):
        z = np.zeros((grid.n, grid.n))
        return _energy_loop(np.ascontiguousarray(a.normals), w, g, psi, z, z, z, z,
                            grid.zx, grid.zy, grid.mask, grid.ex, grid.ey,
                            _f_field(f, grid), params.h, params.mu, params.alpha,
                            grid.dx, False)
    z2 = np.zeros((2, grid.n, grid.n))
    return _energy_numpy(a, grid, w, g, psi, z2, z2, f, params.h, params.mu,
                         params.alpha, False)


# -- one time step ------------------------------------------------------------------

def frozen_psi(a_eik: PolyhedralAnisotropy, u_n: PhaseField, params: SolverParams,
               use_numba=None) -> np.ndarray:
    psi = psi_field(a_eik, u_n, params.demote_cross, use_numba)
    if math.isfinite(params.A_ceiling):
        psi = np.minimum(psi, params.A_ceiling)
    return psi


def solve_step(u_n: PhaseField, a_curv: PolyhedralAnisotropy, f, params: SolverParams,
               psi: np.ndarray, use_numba=None):
    """Split Bregman minimization of E(.; u_n) for a given frozen psi.

    Returns (w*, diagnostics).
    """
    state = SolverState.start(u_n, psi, f)
    system = LinearSystem(u_n.grid, psi, params)
    F = energy_F(state, a_curv, params, use_numba)
    inner_counts = []
    F_start, F_end = [], []
    sweeps = 0
    for k in range(params.max_outer):
        F_k0 = energy_F(state, a_curv, params, use_numba) if k else F
        F_cur = F_k0
        n_inner = 0
        for _ in range(params.max_inner):
            try:
                sweeps += _solve_system(state, system, params, use_numba)
            except SolverError as err:
                err.info.update(outer=k, inner=n_inner)
                raise
            d_step(state, a_curv, params, use_numba)
            F_new = energy_F(state, a_curv, params, use_numba)
            n_inner += 1
            done = abs(F_new - F_cur) < params.eps_in
            F_cur = F_new
            if done:
                break
        inner_counts.append(n_inner)
        F_start.append(F_k0)
        F_end.append(F_cur)
        state.b = state.b + gradient_fwd(state.grid, state.w, use_numba) - state.d
        if abs(F_cur - F_k0) < params.eps_out:
            break
    else:
        raise SolverError(f"outer loop exceeded max_outer={params.max_outer}",
                          outer=params.max_outer, last_dF=abs(F_cur - F_k0))
    diag = StepDiagnostics(len(inner_counts), inner_counts, F_cur, sweeps, F_start, F_end,
                           int(np.sum(u_n.grid.mask & (psi < params.alpha))))
    w = np.where(u_n.grid.mask, state.w, np.nan)
    return w, diag


def minimize_step(u_n: PhaseField, a: PolyhedralAnisotropy, f, params: SolverParams,
                  a_eik: PolyhedralAnisotropy | None = None, use_numba=None):
    """One minimizing-movements step u_n -> u_{n+1}.

    ``a`` is the (rescaled) energy density used in the functional and the
    shrinkage; ``a_eik`` builds the frozen psi and defaults to ``a``.
    """
    psi = frozen_psi(a if a_eik is None else a_eik, u_n, params, use_numba)
    w, diag = solve_step(u_n, a, f, params, psi, use_numba)
    return PhaseField(w, u_n.grid, u_n.t + params.h), diag


def mobility_update(w_star: PhaseField, u_n: PhaseField, beta, floor: float = 1e-8):
    """u_{n+1} = u_n + (w* - u_n) / beta(grad(w* - theta)).

    ``beta`` is a positive constant, a callable on (..., 2) gradient arrays, or
    a PolyhedralAnisotropy (evaluated as gamma).
    """
    grid = u_n.grid
    if callable(beta) or isinstance(beta, PolyhedralAnisotropy):
        p = gradient_fwd(grid, w_star.values) - np.stack([grid.zx, grid.zy])
        p = np.moveaxis(p, 0, -1)
        bval = beta.gamma(p) if isinstance(beta, PolyhedralAnisotropy) else beta(p)
    else:
        bval = np.full((grid.n, grid.n), float(beta))
    bval = np.maximum(np.asarray(bval, float), floor)
    vals = u_n.values + (w_star.values - u_n.values) / bval
    return PhaseField(vals, grid, w_star.t)


# -- time loop --------------------------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    t: float
    outer_count: int
    mean_inner: float
    final_F: float
    sor_total_sweeps: int
    descent_ok: bool = True
    energy_drop_ok: bool = True


@dataclass
class Trajectory:
    snapshots: list
    records: list
    final: PhaseField


def snapshot_steps(times, h: float, nsteps: int) -> list:
    return sorted({min(max(int(round(t / h)), 0), nsteps) for t in times})


def step_count(T: float, h: float) -> int:
    return int(math.floor(T / h + 1e-9))


def evolve(u0: PhaseField, a: PolyhedralAnisotropy, f, params: SolverParams, T: float,
           snapshot_times=(), a_eik: PolyhedralAnisotropy | None = None, step_fn=None,
           check_energy: bool = False, use_numba=None, on_step=None) -> Trajectory:
    """Iterate a step map floor(T/h) times, keeping snapshots at the nearest steps.

    ``step_fn(u, n) -> (u_next, StepDiagnostics)`` replaces the default
    minimize_step (used by the mixed and interlace drivers).
    """
    nsteps = step_count(T, params.h)
    wanted = set(snapshot_steps(snapshot_times, params.h, nsteps))
    u = u0.copy()
    snaps = [u.copy()] if 0 in wanted else []
    records = []
    for n in range(nsteps):
        try:
            if step_fn is not None:
                u_next, diag = step_fn(u, n)
                drop_ok = True
            else:
                psi = frozen_psi(a if a_eik is None else a_eik, u, params, use_numba)
                w, diag = solve_step(u, a, f, params, psi, use_numba)
                u_next = PhaseField(w, u.grid, u.t + params.h)
                drop_ok = True
                if check_energy:
                    e1 = energy_E(w, u, psi, a, f, params, use_numba)
                    e0 = energy_E(u.values, u, psi, a, f, params, use_numba)
                    drop_ok = e1 <= e0 + 1e-10 * max(abs(e0), 1.0)
        except SolverError as err:
            err.info["step"] = n
            raise SolverError(f"step {n}: {err}", **err.info) from err
        u_next.t = (n + 1) * params.h
        u = u_next
        rec = StepRecord(n, u.t, diag.outer_count, diag.mean_inner, diag.final_F,
                         diag.sor_sweeps, diag.descent_ok, drop_ok)
        records.append(rec)
        if on_step is not None:
            on_step(u, rec, diag)
        if n + 1 in wanted:
            snaps.append(u.copy())
    return Trajectory(snaps, records, u)
