"""Computational domain, masked Cartesian grid and the multivalued sheet function.

theta(x) = sum_l m_l arg(x - a_l) is never stored as a global field. The grid
keeps pairwise increments of theta between neighboring nodes (which are
single valued) plus the principal value used only for bookkeeping of sheets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
PAD = 2


class DomainError(ValueError):
    pass


def wrap_angle(t):
    """Wrap into (-pi, pi]."""
    return t - TWO_PI * np.ceil((t - math.pi) / TWO_PI)


def principal_arg(dx, dy):
    """Principal argument in [-pi, pi)."""
    a = np.arctan2(dy, dx)
    return np.where(a >= math.pi, a - TWO_PI, a)


@dataclass(frozen=True)
class SpiralCenters:
    """Screw-dislocation centers a_l with winding numbers m_l."""

    positions: np.ndarray
    windings: np.ndarray

    def __init__(self, centers=()):
        pos = []
        wind = []
        for c in centers:
            if len(c) != 3:
                raise DomainError("each center is (x, y, m)")
            x, y, m = c
            if int(m) != m or int(m) == 0:
                raise DomainError(f"winding number must be a nonzero integer, got {m}")
            pos.append((float(x), float(y)))
            wind.append(int(m))
        p = np.array(pos, dtype=float).reshape(-1, 2)
        w = np.array(wind, dtype=np.int64)
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "windings", w)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def as_list(self):
        return [(float(p[0]), float(p[1]), int(m)) for p, m in zip(self.positions, self.windings)]

    @property
    def total_winding(self) -> int:
        return int(self.windings.sum())


def theta_gradient(c: SpiralCenters, x, tol: float = 1e-14) -> np.ndarray:
    """sum_l m_l (-(x2 - a2), x1 - a1) / |x - a|^2."""
    x = np.asarray(x, dtype=float)
    g = np.zeros(2)
    for a, m in zip(c.positions, c.windings):
        d = x - a
        r2 = d @ d
        if r2 <= tol * tol:
            raise DomainError(f"theta gradient requested at center {tuple(a)}")
        g += m * np.array([-d[1], d[0]]) / r2
    return g


def theta_increment(c: SpiralCenters, xa, xb, r: float = 0.0) -> float:
    """Continuous change of theta along the straight segment xa -> xb."""
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    total = 0.0
    seg = xb - xa
    L2 = seg @ seg
    for a, m in zip(c.positions, c.windings):
        t = 0.0 if L2 == 0.0 else float(np.clip((a - xa) @ seg / L2, 0.0, 1.0))
        dist = float(np.hypot(*(xa + t * seg - a)))
        if dist <= max(r, 0.0) and (r > 0.0 or dist == 0.0):
            raise DomainError("segment crosses an exclusion disc")
        pa = math.atan2(xa[1] - a[1], xa[0] - a[0])
        pb = math.atan2(xb[1] - a[1], xb[0] - a[0])
        total += m * float(wrap_angle(pb - pa))
    return total


def principal_theta(c: SpiralCenters, x, y):
    """theta_hat = sum_l m_l Arg(x - a_l), Arg in [-pi, pi)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    for a, m in zip(c.positions, c.windings):
        out = out + m * principal_arg(x - a[0], y - a[1])
    return out


class Grid:
    """Square node grid on [xmin, xmax]^2 with exclusion discs around centers.

    Arrays are indexed ``[i, j]`` with i along x and j along y. Padded arrays
    carry a 2-node frame so stencils never index out of bounds.
    """

    def __init__(self, box=(-1.5, 1.5), dx: float = 0.02, centers=None, r_multiple: float = 2.0):
        xmin, xmax = float(box[0]), float(box[1])
        if not xmax > xmin:
            raise DomainError("box must satisfy xmin < xmax")
        if not dx > 0:
            raise DomainError("dx must be positive")
        cells = (xmax - xmin) / dx
        ncell = int(round(cells))
        if abs(cells - ncell) > 1e-8 * max(1.0, cells):
            raise DomainError("box length must be an integer multiple of dx")
        if not r_multiple > 1.0:
            raise DomainError("exclusion radius must exceed one grid spacing")
        if centers is None:
            centers = SpiralCenters()
        elif not isinstance(centers, SpiralCenters):
            centers = SpiralCenters(centers)

        self.xmin, self.xmax = xmin, xmax
        self.dx = float(dx)
        self.n = ncell + 1
        self.r_multiple = float(r_multiple)
        self.r = self.r_multiple * self.dx
        self.coords = xmin + self.dx * np.arange(self.n)

        # centers in index units; snapped to nodes when within round-off
        idx = []
        snapped = []
        for a in centers.positions:
            fi = (a - xmin) / self.dx
            ri = np.round(fi)
            if np.all(np.abs(fi - ri) < 1e-9):
                fi = ri
                a = xmin + self.dx * ri
            idx.append(fi)
            snapped.append(a)
        self.center_index = np.array(idx, dtype=float).reshape(-1, 2)
        self.centers = SpiralCenters(
            [(p[0], p[1], m) for p, m in zip(snapped, centers.windings)]
        )
        self._check_centers()

        n = self.n
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        mask = np.ones((n, n), dtype=bool)
        rm2 = self.r_multiple**2
        for ci in self.center_index:
            mask &= (ii - ci[0]) ** 2 + (jj - ci[1]) ** 2 >= rm2
        self.mask = mask
        self.mask.setflags(write=False)

        mp = np.zeros((n + 2 * PAD, n + 2 * PAD), dtype=np.uint8)
        mp[PAD:-PAD, PAD:-PAD] = mask
        self.mask_pad = mp

        # theta increments between consecutive padded nodes
        pc = xmin + self.dx * (np.arange(n + 2 * PAD) - PAD)
        X, Y = np.meshgrid(pc, pc, indexing="ij")
        tx = np.zeros((n + 2 * PAD, n + 2 * PAD))
        ty = np.zeros_like(tx)
        for a, m in zip(self.centers.positions, self.centers.windings):
            ang = np.arctan2(Y - a[1], X - a[0])
            tx[:-1, :] += m * wrap_angle(ang[1:, :] - ang[:-1, :])
            ty[:, :-1] += m * wrap_angle(ang[:, 1:] - ang[:, :-1])
        self.tx_pad = tx
        self.ty_pad = ty

        # edges between active nodes and the discrete gradient of theta on them
        ex = np.zeros((n, n), dtype=bool)
        ey = np.zeros((n, n), dtype=bool)
        ex[:-1, :] = mask[:-1, :] & mask[1:, :]
        ey[:, :-1] = mask[:, :-1] & mask[:, 1:]
        self.ex, self.ey = ex, ey
        inner = (slice(PAD, PAD + n), slice(PAD, PAD + n))
        self.zx = np.where(ex, tx[inner] / self.dx, 0.0)
        self.zy = np.where(ey, ty[inner] / self.dx, 0.0)

        Xn, Yn = np.meshgrid(self.coords, self.coords, indexing="ij")
        self.X, self.Y = Xn, Yn
        with np.errstate(invalid="ignore"):
            th = principal_theta(self.centers, Xn, Yn)
        self.theta_hat = np.where(mask, th, np.nan)

        self.active_count = int(mask.sum())
        self.area = self.active_count * self.dx**2
        for arr in (self.mask_pad, self.tx_pad, self.ty_pad, self.ex, self.ey,
                    self.zx, self.zy, self.theta_hat):
            arr.setflags(write=False)

    def _check_centers(self):
        pos = self.centers.positions
        for k, a in enumerate(pos):
            if not (self.xmin < a[0] < self.xmax and self.xmin < a[1] < self.xmax):
                raise DomainError(f"center {k} lies outside the domain box")
            if min(a[0] - self.xmin, self.xmax - a[0], a[1] - self.xmin, self.xmax - a[1]) < self.r:
                raise DomainError(f"exclusion disc of center {k} leaves the domain box")
            for l in range(k):
                if np.hypot(*(a - pos[l])) <= 2.0 * self.r:
                    raise DomainError(f"exclusion discs of centers {l} and {k} overlap")

    # -- conveniences ----------------------------------------------------------
    @classmethod
    def standard(cls, s: float = 1.0, centers=None, r_multiple: float = 2.0) -> "Grid":
        """Omega = [-1.5, 1.5]^2 with dx = 0.02 / s."""
        return cls((-1.5, 1.5), 0.02 / s, centers, r_multiple)

    def pad(self, field: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n + 2 * PAD, self.n + 2 * PAD))
        out[PAD:-PAD, PAD:-PAD] = np.where(self.mask, field, 0.0)
        return out

    def same_as(self, other: "Grid") -> bool:
        return (
            self.n == other.n
            and self.dx == other.dx
            and self.xmin == other.xmin
            and self.r == other.r
            and np.array_equal(self.centers.positions, other.centers.positions)
            and np.array_equal(self.centers.windings, other.centers.windings)
        )

    def neighbor_flags(self) -> np.ndarray:
        """Activity of 1st/2nd neighbors: flags[i, j, axis, sign, order].

        sign 0 is the + direction, order 0 the first neighbor.
        """
        n = self.n
        mp = self.mask_pad.astype(bool)
        out = np.zeros((n, n, 2, 2, 2), dtype=bool)
        for axis in range(2):
            for s, sgn in enumerate((1, -1)):
                for o, k in enumerate((1, 2)):
                    di, dj = (sgn * k, 0) if axis == 0 else (0, sgn * k)
                    out[:, :, axis, s, o] = mp[PAD + di:PAD + di + n, PAD + dj:PAD + dj + n]
        out &= self.mask[:, :, None, None, None]
        return out


def build_mask(grid: Grid):
    """Node mask and per-node neighbor classification."""
    return grid.mask, grid.neighbor_flags()


@dataclass
class PhaseField:
    """Auxiliary function u on the grid; NaN on excluded nodes."""

    values: np.ndarray
    grid: Grid
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n, self.grid.n):
            raise DomainError("phase field shape does not match the grid")
        v[~self.grid.mask] = np.nan
        if not np.all(np.isfinite(v[self.grid.mask])):
            raise DomainError("phase field has non-finite values on active nodes")
        self.values = v

    def copy(self) -> "PhaseField":
        return PhaseField(self.values.copy(), self.grid, self.t, dict(self.meta))


def constant_phase(grid: Grid, c: float, t: float = 0.0) -> PhaseField:
    return PhaseField(np.full((grid.n, grid.n), float(c)), grid, t)


def rays_phase(grid: Grid, angles, t: float = 0.0) -> PhaseField:
    """Initial data whose zero set leaves center l along the ray at angles[l].

    Near center l, u = m_l phi_l + sum_{k != l} m_k arg(x - a_k), using the
    branch of arg(x - a_k) cut along the ray from a_k pointing away from a_l.
    These local pieces are blended with weights supported in slightly
    enlarged Voronoi cells, so every piece is continuous where it is used.
    """
    c = grid.centers
    K = len(c)
    if len(angles) != K:
        raise DomainError("need one ray angle per center")
    if K == 0:
        raise DomainError("rays initial data needs at least one center")
    X, Y = grid.X, grid.Y
    pos, wind = c.positions, c.windings
    if K == 1:
        return constant_phase(grid, wind[0] * float(angles[0]), t)
    sep = min(np.hypot(*(pos[k] - pos[l])) for k in range(K) for l in range(k))
    delta = 0.5 * sep
    dist = np.stack([np.hypot(X - a[0], Y - a[1]) for a in pos])
    dmin = dist.min(axis=0)
    wts = np.clip(1.0 - (dist - dmin) / delta, 0.0, None)
    wts /= wts.sum(axis=0)
    def piece(l, px, py):
        out = np.full(np.shape(px), wind[l] * float(angles[l]))
        for k in range(K):
            if k == l:
                continue
            away = math.atan2(pos[k][1] - pos[l][1], pos[k][0] - pos[l][0])
            # branch of arg(x - a_k) with values in (away - 2 pi, away]
            ang = np.arctan2(py - pos[k][1], px - pos[k][0])
            out = out + wind[k] * (away - np.mod(away - ang, TWO_PI))
        return out

    u = wts[0] * piece(0, X, Y)
    for l in range(1, K):
        mid = 0.5 * (pos[0] + pos[l])
        shift = TWO_PI * np.round((piece(0, mid[0], mid[1]) - piece(l, mid[0], mid[1])) / TWO_PI)
        u += wts[l] * (piece(l, X, Y) + shift)
    return PhaseField(u, grid, t)
