"""Polyhedral (crystalline) anisotropies and the pointwise shrinkage map.

A polyhedral density is gamma(p) = max_j n_j . p for finitely many normals
n_j. Its Wulff shape W = {gamma° <= 1} is the convex hull of the n_j and its
Frank polygon {gamma <= 1} has the dual vertices ñ_j as corners.

Indexing convention: ``dual_vertices[j]`` solves n_{j-1} . q = 1 = n_j . q,
so for the square normals at angles pi(2j+1)/4 the dual vertices come out as
(cos pi j/2, sin pi j/2). Wulff facet j is the edge [n_{j-1}, n_j] with outer
normal ñ_j/|ñ_j| and length |n_j - n_{j-1}|.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from ._accel import njit, resolve

TWO_PI = 2.0 * math.pi
INSIDE_TOL = 1e-12
_NAN = float("nan")


class AnisotropyError(ValueError):
    pass


def _solve2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a . q = 1, b . q = 1 for q."""
    det = a[0] * b[1] - a[1] * b[0]
    return np.array([(b[1] - a[1]) / det, (a[0] - b[0]) / det])


class PolyhedralAnisotropy:
    """gamma(p) = max_j n_j . p with validated, angle-ordered normals."""

    def __init__(self, normals):
        n = np.asarray(normals, dtype=float)
        if n.ndim != 2 or n.shape[1] != 2:
            raise AnisotropyError("normals must be a list of 2-vectors")
        if n.shape[0] < 3:
            raise AnisotropyError(f"need at least 3 normals, got {n.shape[0]}")
        norms = np.hypot(n[:, 0], n[:, 1])
        if not np.all(np.isfinite(n)) or np.any(norms <= 0.0):
            raise AnisotropyError("normals must be finite and nonzero")

        ang = np.arctan2(n[:, 1], n[:, 0])
        rel = np.mod(ang - ang[0], TWO_PI)
        order = np.argsort(rel, kind="stable")
        n = n[order]
        rel = rel[order]
        gaps = np.diff(np.append(rel, TWO_PI))
        if np.any(gaps < 1e-12):
            raise AnisotropyError("duplicate normal angles")
        if np.any(gaps >= math.pi - 1e-12):
            raise AnisotropyError(
                "consecutive normal angles must differ by less than pi (W2)"
            )
        N = n.shape[0]
        scale = float(norms.max()) ** 2
        for k in range(N):
            a, b, c = n[k - 1], n[k], n[(k + 1) % N]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= 1e-12 * scale:
                raise AnisotropyError(f"normal {k} is redundant (W3)")

        dual = np.array([_solve2(n[j - 1], n[j]) for j in range(N)])
        wulff = np.array([_solve2(dual[j], dual[(j + 1) % N]) for j in range(N)])

        self.normals = n
        self.dual_vertices = dual
        self.wulff_vertices = wulff
        self.angles = np.mod(ang[order], TWO_PI)
        for arr in (self.normals, self.dual_vertices, self.wulff_vertices, self.angles):
            arr.setflags(write=False)

    # -- derived quantities -------------------------------------------------
    @property
    def size(self) -> int:
        return self.normals.shape[0]

    @property
    def facet_normals(self) -> np.ndarray:
        d = self.dual_vertices
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]

    @property
    def facet_angles(self) -> np.ndarray:
        """Angles of the Wulff facet normals, in [-pi, pi)."""
        fn = self.facet_normals
        a = np.arctan2(fn[:, 1], fn[:, 0])
        return np.where(a >= math.pi, a - TWO_PI, a)

    @property
    def facet_lengths(self) -> np.ndarray:
        n = self.normals
        e = n - np.roll(n, 1, axis=0)
        return np.hypot(e[:, 0], e[:, 1])

    @property
    def bound(self) -> float:
        """Lambda such that gamma <= Lambda on the unit circle."""
        return float(np.hypot(self.normals[:, 0], self.normals[:, 1]).max())

    def scaled(self, c: float) -> "PolyhedralAnisotropy":
        if not c > 0:
            raise AnisotropyError("scale factor must be positive")
        return PolyhedralAnisotropy(c * self.normals)

    def rotated(self, phi: float) -> "PolyhedralAnisotropy":
        c, s = math.cos(phi), math.sin(phi)
        return PolyhedralAnisotropy(self.normals @ np.array([[c, s], [-s, c]]))

    def reflected(self) -> "PolyhedralAnisotropy":
        """The point reflection p -> gamma(-p); its Wulff shape is -W."""
        return PolyhedralAnisotropy(-self.normals)

    # -- evaluation ---------------------------------------------------------
    def gamma(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.max(p @ self.normals.T, axis=-1)

    def polar(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.max(p @ self.dual_vertices.T, axis=-1)

    def __repr__(self) -> str:
        return f"PolyhedralAnisotropy(N={self.size}, normals={self.normals.tolist()})"


def new_polyhedral(normals) -> PolyhedralAnisotropy:
    return PolyhedralAnisotropy(normals)


def from_polar_pairs(pairs) -> PolyhedralAnisotropy:
    """Build from (r_j, angle_j) pairs, n_j = r_j (cos, sin)."""
    pr = np.asarray(pairs, dtype=float)
    if pr.ndim != 2 or pr.shape[1] != 2:
        raise AnisotropyError("expected a list of (r, angle) pairs")
    return PolyhedralAnisotropy(np.column_stack([pr[:, 0] * np.cos(pr[:, 1]),
                                                 pr[:, 0] * np.sin(pr[:, 1])]))


def from_dual_vertices(q) -> PolyhedralAnisotropy:
    """Primal anisotropy whose Frank polygon has corners q (in ccw order)."""
    q = np.asarray(q, dtype=float)
    m = q.shape[0]
    normals = np.array([_solve2(q[j], q[(j + 1) % m]) for j in range(m)])
    return PolyhedralAnisotropy(normals)


def gamma_eval(a: PolyhedralAnisotropy, p) -> float:
    return float(a.gamma(p))


def polar_eval(a: PolyhedralAnisotropy, p) -> float:
    return float(a.polar(p))


# -- presets -----------------------------------------------------------------

def _ring(r: float, count: int, offset: float) -> np.ndarray:
    j = np.arange(count)
    t = offset + TWO_PI * j / count
    return r * np.column_stack([np.cos(t), np.sin(t)])


def square() -> PolyhedralAnisotropy:
    """gamma = l1 norm, W = [-1, 1]^2."""
    return PolyhedralAnisotropy(_ring(math.sqrt(2.0), 4, math.pi / 4))


def triangle() -> PolyhedralAnisotropy:
    """Normals 2(cos pi(2j+1)/3, sin pi(2j+1)/3); unit dual vertices."""
    return PolyhedralAnisotropy(_ring(2.0, 3, math.pi / 3))


def pentagon() -> PolyhedralAnisotropy:
    return PolyhedralAnisotropy(_ring(1.0, 5, math.pi / 5))


def hexagon_asym(a_ratio: float, layer: int = 0) -> PolyhedralAnisotropy:
    """Hexagonal density whose facet with normal N_{-layer} is cheaper by a.

    Frank corners q_j = N_j = (cos pi j/3, sin pi j/3) except that the corner
    at N_{-layer} is pushed out to N_{-layer}/a. Successive layers rotate the
    pattern clockwise by pi/3.
    """
    if not 0.0 < a_ratio <= 1.0:
        raise AnisotropyError("a_ratio must lie in (0, 1]")
    q = _ring(1.0, 6, 0.0)
    q[(-layer) % 6] /= a_ratio
    return from_dual_vertices(q)


_PRESETS = {"square": square, "triangle": triangle, "pentagon": pentagon}
_HEX_RE = re.compile(r"^hexagon-asym\(\s*([0-9.eE+-]+)\s*(?:,\s*(-?\d+)\s*)?\)$")


def preset(name: str) -> PolyhedralAnisotropy:
    key = name.strip().lower()
    if key in _PRESETS:
        return _PRESETS[key]()
    m = _HEX_RE.match(key)
    if m:
        layer = int(m.group(2)) if m.group(2) else 0
        return hexagon_asym(float(m.group(1)), layer)
    raise AnisotropyError(
        f"unknown anisotropy preset {name!r}; known: "
        + ", ".join(list(_PRESETS) + ["hexagon-asym(a)"])
    )


def preset_names() -> list[str]:
    return list(_PRESETS) + ["hexagon-asym(a)"]


# -- Wulff projection ---------------------------------------------------------

@njit
def _project_polygon(verts, dual, x0, x1):
    """Closest point of conv(verts) to (x0, x1); verts ordered ccw."""
    inside = -1e300
    for j in range(dual.shape[0]):
        v = dual[j, 0] * x0 + dual[j, 1] * x1
        if v > inside:
            inside = v
    if inside <= 1.0:
        return x0, x1
    n = verts.shape[0]
    best = 1e300
    bx = x0
    by = x1
    for j in range(n):
        ax = verts[j - 1, 0]
        ay = verts[j - 1, 1]
        ex = verts[j, 0] - ax
        ey = verts[j, 1] - ay
        t = ((x0 - ax) * ex + (x1 - ay) * ey) / (ex * ex + ey * ey)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        px = ax + t * ex
        py = ay + t * ey
        dist = (x0 - px) ** 2 + (x1 - py) ** 2
        if dist < best:
            best = dist
            bx = px
            by = py
    return bx, by


def wulff_project(a: PolyhedralAnisotropy, x) -> np.ndarray:
    """Euclidean projection of x onto W_gamma."""
    x = np.asarray(x, dtype=float)
    px, py = _project_polygon(a.wulff_vertices, a.dual_vertices, float(x[0]), float(x[1]))
    return np.array([px, py])


# -- shrinkage ----------------------------------------------------------------

@dataclass(frozen=True)
class ShrinkCase:
    """Which branch of the case analysis produced the minimizer."""

    tag: str  # "inside", "edge", "facet"
    index: int = -1
    lam: float = float("nan")
    xi: tuple = (float("nan"), float("nan"))


@njit(inline="always")
def _outside(dual, p0, p1):
    """gamma°(p) > 1 up to the inside tolerance."""
    pol = -1e300
    for j in range(dual.shape[0]):
        v = dual[j, 0] * p0 + dual[j, 1] * p1
        if v > pol:
            pol = v
    return pol > 1.0 + 1e-12


@njit(inline="always")
def _shrink_point(nrm, dual, y0, y1, z0, z1, out):
    """Minimizer of gamma(x - z) + |x - y|^2 / 2 for gamma with normals nrm.

    Writes x* into out[0:2], the lambda of the winning edge into out[2] and
    returns a code: 0 inside, 1 + i for edge(i), 1 + N + i for facet(i).
    ``out`` must have room for 3 + N entries (the tail is scratch).
    """
    n = nrm.shape[0]
    p0 = y0 - z0
    p1 = y1 - z1
    pol = -1e300
    for j in range(dual.shape[0]):
        v = dual[j, 0] * p0 + dual[j, 1] * p1
        if v > pol:
            pol = v
    if pol <= 1.0 + 1e-12:
        out[0] = z0
        out[1] = z1
        out[2] = _NAN
        return 0

    # lambda_i for the pair (n_i, n_{i+1})
    for i in range(n):
        k = i + 1 if i + 1 < n else 0
        ax = nrm[i, 0]
        ay = nrm[i, 1]
        bx = nrm[k, 0]
        by = nrm[k, 1]
        ex = ax - bx
        ey = ay - by
        out[3 + i] = (p0 * ex + p1 * ey - (ax * bx + ay * by) + (bx * bx + by * by)) / (
            ex * ex + ey * ey
        )

    # For a convex Wulff polygon an admissible candidate is the nearest point
    # P_W(p), so the first one found (edges first, then corners) is x* = y - P_W(p).
    code = -1
    bx0 = z0
    bx1 = z1
    blam = _NAN
    for i in range(n):
        li = out[3 + i]
        if li < 0.0 or li > 1.0:
            continue
        k = i + 1 if i + 1 < n else 0
        xi0 = li * nrm[i, 0] + (1.0 - li) * nrm[k, 0]
        xi1 = li * nrm[i, 1] + (1.0 - li) * nrm[k, 1]
        if (p0 - xi0) * xi0 + (p1 - xi1) * xi1 < 0.0:
            continue
        code = 1 + i
        bx0 = y0 - xi0
        bx1 = y1 - xi1
        blam = li
        break
    if code < 0:
        for i in range(n):
            if out[3 + i] > 1.0 and out[3 + (i - 1 if i > 0 else n - 1)] < 0.0:
                code = 1 + n + i
                bx0 = y0 - nrm[i, 0]
                bx1 = y1 - nrm[i, 1]
                blam = out[3 + i]
                break
    if code < 0:
        # no admissible index (only reachable through round-off at a kink):
        # fall back to the projection identity
        px, py = _project_polygon(nrm, dual, p0, p1)
        bx0 = y0 - px
        bx1 = y1 - py
        code = 1 + 2 * n
    out[0] = bx0
    out[1] = bx1
    out[2] = blam
    return code


def _scaled_tables(a: PolyhedralAnisotropy, mu: float):
    if not mu > 0:
        raise AnisotropyError("mu must be positive")
    return a.normals / mu, a.dual_vertices * mu


def shrink(a: PolyhedralAnisotropy, y, z, mu: float = 1.0, with_case: bool = False):
    """argmin_x (1/mu) gamma(x - z) + |x - y|^2 / 2."""
    nrm, dual = _scaled_tables(a, mu)
    out = np.empty(3 + nrm.shape[0])
    code = _shrink_point(nrm, dual, float(y[0]), float(y[1]), float(z[0]), float(z[1]), out)
    x = out[:2].copy()
    if not with_case:
        return x
    n = nrm.shape[0]
    if code == 0:
        case = ShrinkCase("inside")
    elif code <= n:
        i = code - 1
        xi = np.asarray(y, float) - x
        case = ShrinkCase("edge", i, float(out[2]), (float(xi[0]), float(xi[1])))
    elif code <= 2 * n:
        case = ShrinkCase("facet", code - 1 - n, float(out[2]))
    else:
        case = ShrinkCase("projection")
    return x, case


@njit
def _shrink_many_loop(nrm, dual, y, z, out):
    buf = np.empty(3 + nrm.shape[0])
    for k in range(y.shape[0]):
        if not _outside(dual, y[k, 0] - z[k, 0], y[k, 1] - z[k, 1]):
            out[k, 0] = z[k, 0]
            out[k, 1] = z[k, 1]
            continue
        _shrink_point(nrm, dual, y[k, 0], y[k, 1], z[k, 0], z[k, 1], buf)
        out[k, 0] = buf[0]
        out[k, 1] = buf[1]


def _shrink_many_numpy(nrm, dual, y, z):
    """Vectorized form of the same case analysis (first admissible code)."""
    n = nrm.shape[0]
    p = y - z
    pol = np.max(p @ dual.T, axis=1)
    a = nrm
    b = np.roll(nrm, -1, axis=0)
    e = a - b
    lam = (p @ e.T - np.sum(a * b, axis=1) + np.sum(b * b, axis=1)) / np.sum(e * e, axis=1)
    xi = lam[:, :, None] * a[None] + (1.0 - lam[:, :, None]) * b[None]  # (M, n, 2)
    ok_edge = (lam >= 0.0) & (lam <= 1.0) & (np.sum((p[:, None, :] - xi) * xi, axis=2) >= 0.0)
    ok_facet = (lam > 1.0) & (np.roll(lam, 1, axis=1) < 0.0)
    cand = np.concatenate([xi, np.broadcast_to(a, xi.shape)], axis=1)  # offsets y - x
    ok = np.concatenate([ok_edge, ok_facet], axis=1)
    pick = np.argmax(ok, axis=1)
    rows = np.arange(y.shape[0])
    res = y - cand[rows, pick]
    none = ~ok[rows, pick]
    if np.any(none):
        for k in np.flatnonzero(none):
            px, py = _project_polygon(nrm, dual, p[k, 0], p[k, 1])
            res[k] = y[k] - (px, py)
    inside = pol <= 1.0 + INSIDE_TOL
    res[inside] = z[inside]
    return res


def shrink_many(a: PolyhedralAnisotropy, y, z, mu: float = 1.0, use_numba=None) -> np.ndarray:
    """Apply :func:`shrink` row-wise to (M, 2) arrays."""
    nrm, dual = _scaled_tables(a, mu)
    y = np.ascontiguousarray(y, dtype=float).reshape(-1, 2)
    z = np.ascontiguousarray(z, dtype=float).reshape(-1, 2)
    if resolve(use_numba):
        out = np.empty_like(y)
        _shrink_many_loop(nrm, dual, y, z, out)
        return out
    return _shrink_many_numpy(nrm, dual, y, z)


def shrink_objective(a: PolyhedralAnisotropy, x, y, z, mu: float = 1.0) -> np.ndarray:
    x = np.asarray(x, float)
    return a.gamma(x - np.asarray(z, float)) / mu + 0.5 * np.sum(
        (x - np.asarray(y, float)) ** 2, axis=-1
    )


# -- brute-force oracle -------------------------------------------------------

@njit
def _grid_min(nrm, y0, y1, z0, z1, half, n):
    step = 2.0 * half / (n - 1)
    best = 1e300
    bx = 0.0
    by = 0.0
    for i in range(n):
        x0 = y0 - half + i * step
        for j in range(n):
            x1 = y1 - half + j * step
            g = -1e300
            for k in range(nrm.shape[0]):
                v = nrm[k, 0] * (x0 - z0) + nrm[k, 1] * (x1 - z1)
                if v > g:
                    g = v
            obj = g + 0.5 * ((x0 - y0) ** 2 + (x1 - y1) ** 2)
            if obj < best:
                best = obj
                bx = x0
                by = x1
    return best, bx, by


def brute_force_shrink(a: PolyhedralAnisotropy, y, z, mu: float = 1.0, n: int = 401):
    """Grid search for the shrinkage minimizer.

    The grid is centred at y with side 2 (|y - z| + Lambda/mu), which always
    contains the minimizer. Returns (x_best, obj_best, slack) where slack
    bounds how far the grid minimum can sit above the true minimum.
    """
    nrm = a.normals / mu
    lam = a.bound / mu
    y = np.asarray(y, float)
    z = np.asarray(z, float)
    half = float(np.hypot(*(y - z))) + lam
    best, bx, by = _grid_min(nrm, y[0], y[1], z[0], z[1], half, n)
    step = 2.0 * half / (n - 1)
    lip = lam + math.sqrt(2.0) * half + step
    slack = lip * step / math.sqrt(2.0)
    return np.array([bx, by]), float(best), float(slack)
