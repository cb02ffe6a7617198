"""Finite-difference kernels on the masked grid.

G = g - theta never exists as a field: every difference of G is a difference
of g minus the stored theta increment along the same grid edge. Missing
neighbors (excluded or outside the box) take the Neumann ghost value
g_ghost = g at the node being evaluated, with theta continued exactly.
"""

from __future__ import annotations

import numpy as np

from ._accel import njit, resolve
from .anisotropy import PolyhedralAnisotropy
from .domain import PAD, Grid, PhaseField


@njit
def minmod_sigma(p, q):
    """sigma(p, q) = p if |p| < q else q."""
    if abs(p) < q:
        return p
    return q


@njit
def _upwind_pm(up, mp, tp, I, J, si, sj, dx, allow_hat):
    """(d+ G, d- G) at padded node (I, J) along the step (si, sj)."""
    u0 = up[I, J]
    a1 = mp[I + si, J + sj] != 0
    b1 = mp[I - si, J - sj] != 0
    up1 = up[I + si, J + sj] if a1 else u0
    um1 = up[I - si, J - sj] if b1 else u0
    d1p = up1 - u0 - tp[I, J]
    d1m = u0 - um1 - tp[I - si, J - sj]
    dp = d1p / dx
    dm = d1m / dx
    if allow_hat:
        dx2 = dx * dx
        q = (d1p - d1m) / dx2
        if a1 and mp[I + 2 * si, J + 2 * sj] != 0:
            d2p = up[I + 2 * si, J + 2 * sj] - up1 - tp[I + si, J + sj]
            dp = d1p / dx - 0.5 * dx * minmod_sigma((d2p - d1p) / dx2, q)
        if b1 and mp[I - 2 * si, J - 2 * sj] != 0:
            d2m = um1 - up[I - 2 * si, J - 2 * sj] - tp[I - 2 * si, J - 2 * sj]
            dm = d1m / dx + 0.5 * dx * minmod_sigma((d1m - d2m) / dx2, q)
    return dp, dm


@njit
def _node_slopes(up, mp, txp, typ, I, J, dx, demote_cross):
    interior = (mp[I + 1, J] != 0 and mp[I - 1, J] != 0
                and mp[I, J + 1] != 0 and mp[I, J - 1] != 0)
    allow = interior or not demote_cross
    dxp, dxm = _upwind_pm(up, mp, txp, I, J, 1, 0, dx, allow)
    dyp, dym = _upwind_pm(up, mp, typ, I, J, 0, 1, dx, allow)
    return dxp, dxm, dyp, dym


@njit
def _psi_loop(up, mp, txp, typ, nrm, dx, demote_cross, out):
    n = out.shape[0]
    for i in range(n):
        for j in range(n):
            I = i + 2
            J = j + 2
            if mp[I, J] == 0:
                out[i, j] = 0.0
                continue
            dxp, dxm, dyp, dym = _node_slopes(up, mp, txp, typ, I, J, dx, demote_cross)
            best = -1e300
            for k in range(nrm.shape[0]):
                q0 = nrm[k, 0]
                q1 = nrm[k, 1]
                v = q0 * (dxp if q0 >= 0.0 else dxm) + q1 * (dyp if q1 >= 0.0 else dym)
                if v > best:
                    best = v
            out[i, j] = best if best > 0.0 else 0.0


def _sl(a, di, dj, n):
    return a[PAD + di:PAD + di + n, PAD + dj:PAD + dj + n]


def _slopes_numpy(grid: Grid, up: np.ndarray, demote_cross: bool):
    n = grid.n
    mp = grid.mask_pad.astype(bool)
    dx = grid.dx
    dx2 = dx * dx
    u0 = _sl(up, 0, 0, n)
    interior = _sl(mp, 1, 0, n) & _sl(mp, -1, 0, n) & _sl(mp, 0, 1, n) & _sl(mp, 0, -1, n)
    allow = interior | (not demote_cross)
    res = []
    for si, sj, tp in ((1, 0, grid.tx_pad), (0, 1, grid.ty_pad)):
        a1 = _sl(mp, si, sj, n)
        b1 = _sl(mp, -si, -sj, n)
        up1 = np.where(a1, _sl(up, si, sj, n), u0)
        um1 = np.where(b1, _sl(up, -si, -sj, n), u0)
        d1p = up1 - u0 - _sl(tp, 0, 0, n)
        d1m = u0 - um1 - _sl(tp, -si, -sj, n)
        q = (d1p - d1m) / dx2
        d2p = _sl(up, 2 * si, 2 * sj, n) - up1 - _sl(tp, si, sj, n)
        d2m = um1 - _sl(up, -2 * si, -2 * sj, n) - _sl(tp, -2 * si, -2 * sj, n)
        p_plus = (d2p - d1p) / dx2
        p_minus = (d1m - d2m) / dx2
        sig_p = np.where(np.abs(p_plus) < q, p_plus, q)
        sig_m = np.where(np.abs(p_minus) < q, p_minus, q)
        hat_p = allow & a1 & _sl(mp, 2 * si, 2 * sj, n)
        hat_m = allow & b1 & _sl(mp, -2 * si, -2 * sj, n)
        dp = np.where(hat_p, d1p / dx - 0.5 * dx * sig_p, d1p / dx)
        dm = np.where(hat_m, d1m / dx + 0.5 * dx * sig_m, d1m / dx)
        res.append((dp, dm))
    return res[0][0], res[0][1], res[1][0], res[1][1]


def _as_values(g):
    return g.values if isinstance(g, PhaseField) else np.asarray(g, dtype=float)


def psi_field(a: PolyhedralAnisotropy, g: PhaseField, demote_cross: bool = True,
              use_numba=None) -> np.ndarray:
    """Upwind psi = max_k (n_k . grad(g - theta)), clamped at 0; 0 off the mask."""
    grid = g.grid
    up = grid.pad(g.values)
    nrm = np.ascontiguousarray(a.normals)
    if resolve(use_numba):
        out = np.empty((grid.n, grid.n))
        _psi_loop(up, grid.mask_pad, grid.tx_pad, grid.ty_pad, nrm, grid.dx,
                  bool(demote_cross), out)
        return out
    dxp, dxm, dyp, dym = _slopes_numpy(grid, up, demote_cross)
    best = np.full((grid.n, grid.n), -np.inf)
    for q0, q1 in nrm:
        v = q0 * (dxp if q0 >= 0 else dxm) + q1 * (dyp if q1 >= 0 else dym)
        best = np.maximum(best, v)
    return np.where(grid.mask, np.maximum(best, 0.0), 0.0)


def upwind_diff(g: PhaseField, axis: int, sign: int, i: int, j: int,
                demote_cross: bool = True) -> float:
    """One-sided difference of G = g - theta at node (i, j).

    axis 0 is x, 1 is y; sign +1 or -1.
    """
    grid = g.grid
    if not grid.mask[i, j]:
        raise ValueError("node is not active")
    up = grid.pad(g.values)
    s = _node_slopes(up, grid.mask_pad, grid.tx_pad, grid.ty_pad, i + PAD, j + PAD,
                     grid.dx, bool(demote_cross))
    k = 2 * axis + (0 if sign > 0 else 1)
    return float(s[k])


def eikonal_term(q, g: PhaseField, i: int, j: int, demote_cross: bool = True) -> float:
    """(q . grad G)_{ij} with the four-branch upwind selection."""
    q0, q1 = float(q[0]), float(q[1])
    dx = upwind_diff(g, 0, 1 if q0 >= 0 else -1, i, j, demote_cross)
    dy = upwind_diff(g, 1, 1 if q1 >= 0 else -1, i, j, demote_cross)
    return q0 * dx + q1 * dy


# -- gradient / divergence / Laplacian ------------------------------------------

@njit
def _grad_loop(w, ex, ey, dx, gx, gy):
    n = w.shape[0]
    for i in range(n):
        for j in range(n):
            gx[i, j] = (w[i + 1, j] - w[i, j]) / dx if ex[i, j] else 0.0
            gy[i, j] = (w[i, j + 1] - w[i, j]) / dx if ey[i, j] else 0.0


@njit
def _div_loop(vx, vy, mask, ex, ey, dx, out):
    n = vx.shape[0]
    for i in range(n):
        for j in range(n):
            if not mask[i, j]:
                out[i, j] = 0.0
                continue
            s = 0.0
            if ex[i, j]:
                s += vx[i, j]
            if i > 0 and ex[i - 1, j]:
                s -= vx[i - 1, j]
            if ey[i, j]:
                s += vy[i, j]
            if j > 0 and ey[i, j - 1]:
                s -= vy[i, j - 1]
            out[i, j] = s / dx


def gradient_fwd(grid: Grid, w, use_numba=None) -> np.ndarray:
    """Forward differences on active edges, 0 where the edge is missing."""
    w = _as_values(w)
    if resolve(use_numba):
        gx = np.empty_like(w)
        gy = np.empty_like(w)
        _grad_loop(np.where(grid.mask, w, 0.0), grid.ex, grid.ey, grid.dx, gx, gy)
        return np.stack([gx, gy])
    gx = np.zeros_like(w)
    gy = np.zeros_like(w)
    gx[:-1, :] = np.where(grid.ex[:-1, :], (w[1:, :] - w[:-1, :]) / grid.dx, 0.0)
    gy[:, :-1] = np.where(grid.ey[:, :-1], (w[:, 1:] - w[:, :-1]) / grid.dx, 0.0)
    return np.stack([gx, gy])


def divergence_bwd(grid: Grid, v, use_numba=None) -> np.ndarray:
    """Negative adjoint of :func:`gradient_fwd` on the active nodes."""
    vx = np.where(grid.ex, v[0], 0.0)
    vy = np.where(grid.ey, v[1], 0.0)
    if resolve(use_numba):
        out = np.empty_like(vx)
        _div_loop(vx, vy, grid.mask, grid.ex, grid.ey, grid.dx, out)
        return out
    out = vx.copy()
    out[1:, :] -= vx[:-1, :]
    out += vy
    out[:, 1:] -= vy[:, :-1]
    return np.where(grid.mask, out / grid.dx, 0.0)


def laplacian(grid: Grid, w, use_numba=None) -> np.ndarray:
    """Five-point Laplacian with zero-flux closure: div_bwd(grad_fwd(w))."""
    return divergence_bwd(grid, gradient_fwd(grid, w, use_numba), use_numba)


def theta_gradient_field(grid: Grid) -> np.ndarray:
    """Discrete forward gradient of theta on active edges (matches gradient_fwd)."""
    return np.stack([grid.zx, grid.zy])
