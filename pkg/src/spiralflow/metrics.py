"""Contours of u - theta = 0 mod 2 pi, height functions and the D/A metrics.

Contours are extracted cell by cell. On a cell with four active corners the
corner values v = u - theta use one continuous branch of theta (anchored at
the lower-left corner), and marching squares runs at every level 2 pi k the
corner values straddle. A crossing is keyed by its grid edge and the sheet
number relative to the lower endpoint of that edge, so neighboring cells agree
exactly and stitching is integer bookkeeping.

Segments are oriented with the larger v on the left; the level-set normal
-grad(u - theta)/|grad(u - theta)| therefore points to the right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .domain import PAD, Grid, PhaseField, principal_arg
from .front_tracking import FacetChain

TWO_PI = 2.0 * math.pi


class MetricsError(ValueError):
    pass


@dataclass
class ContourSet:
    """Polylines (k, 2) with open/closed flags; closed ones omit the repeat vertex."""

    polylines: list = field(default_factory=list)
    closed: list = field(default_factory=list)
    t: float = 0.0

    def __len__(self) -> int:
        return len(self.polylines)

    def segments(self) -> np.ndarray:
        """All segments as an (S, 4) array x0, y0, x1, y1."""
        out = []
        for p, c in zip(self.polylines, self.closed):
            q = np.vstack([p, p[:1]]) if c and len(p) > 1 else p
            if len(q) > 1:
                out.append(np.hstack([q[:-1], q[1:]]))
        if not out:
            return np.zeros((0, 4))
        return np.vstack(out)

    def total_length(self) -> float:
        s = self.segments()
        return float(np.sum(np.hypot(s[:, 2] - s[:, 0], s[:, 3] - s[:, 1])))


# -- marching squares ------------------------------------------------------------

@njit
def _cell_values(u, th, tx, ty, i, j, v, nc):
    """Corner values on one theta branch: v_c = (u - theta_hat)_c - 2 pi n_c."""
    base = th[i, j]
    cont1 = base + tx[i, j]
    cont3 = base + ty[i, j]
    cont2 = cont1 + ty[i + 1, j]
    nc[0] = 0
    nc[1] = int(np.round((cont1 - th[i + 1, j]) / (2.0 * np.pi)))
    nc[2] = int(np.round((cont2 - th[i + 1, j + 1]) / (2.0 * np.pi)))
    nc[3] = int(np.round((cont3 - th[i, j + 1]) / (2.0 * np.pi)))
    v[0] = u[i, j] - th[i, j]
    v[1] = u[i + 1, j] - th[i + 1, j] - 2.0 * np.pi * nc[1]
    v[2] = u[i + 1, j + 1] - th[i + 1, j + 1] - 2.0 * np.pi * nc[2]
    v[3] = u[i, j + 1] - th[i, j + 1] - 2.0 * np.pi * nc[3]


@njit
def _march(u, th, tx, ty, mask, x0, dx, fill, pts, keys):
    """Count (fill=False) or emit (fill=True) oriented segments.

    pts[s] = (xa, ya, xb, yb); keys[s] = (edge_a, sheet_a, edge_b, sheet_b).
    """
    n = u.shape[0]
    nn = n * n
    v = np.empty(4)
    nc = np.empty(4, dtype=np.int64)
    s = np.empty(4)
    ci = np.array([0, 1, 1, 0])
    cj = np.array([0, 0, 1, 1])
    # ccw edges (a -> b) and the lower endpoint of each edge
    ea = np.array([0, 1, 2, 3])
    eb = np.array([1, 2, 3, 0])
    low = np.array([0, 1, 3, 0])
    cx = np.empty(4)
    cy = np.empty(4)
    ce = np.empty(4, dtype=np.int64)
    ck = np.empty(4, dtype=np.int64)
    cdown = np.empty(4, dtype=np.bool_)
    count = 0
    for i in range(n - 1):
        for j in range(n - 1):
            if not (mask[i, j] and mask[i + 1, j] and mask[i + 1, j + 1] and mask[i, j + 1]):
                continue
            _cell_values(u, th, tx, ty, i, j, v, nc)
            vmin = min(min(v[0], v[1]), min(v[2], v[3]))
            vmax = max(max(v[0], v[1]), max(v[2], v[3]))
            k_lo = int(math.ceil(vmin / (2.0 * np.pi)))
            k_hi = int(math.ceil(vmax / (2.0 * np.pi))) - 1
            eid0 = i * n + j
            eid1 = (i + 1) * n + j + nn
            eid2 = i * n + j + 1
            eid3 = i * n + j + nn
            for k in range(k_lo, k_hi + 1):
                lev = 2.0 * np.pi * k
                for c in range(4):
                    s[c] = v[c] - lev
                m = 0
                for e in range(4):
                    a = ea[e]
                    b = eb[e]
                    pa = s[a] > 0.0
                    pb = s[b] > 0.0
                    if pa == pb:
                        continue
                    t = s[a] / (s[a] - s[b])
                    xa = x0 + dx * (i + ci[a])
                    ya = x0 + dx * (j + cj[a])
                    xb = x0 + dx * (i + ci[b])
                    yb = x0 + dx * (j + cj[b])
                    cx[m] = xa + t * (xb - xa)
                    cy[m] = ya + t * (yb - ya)
                    if e == 0:
                        ce[m] = eid0
                    elif e == 1:
                        ce[m] = eid1
                    elif e == 2:
                        ce[m] = eid2
                    else:
                        ce[m] = eid3
                    ck[m] = k + nc[low[e]]
                    cdown[m] = pa
                    m += 1
                if m == 0:
                    continue
                mean_pos = (s[0] + s[1] + s[2] + s[3]) > 0.0
                for p in range(m):
                    if not cdown[p]:
                        continue
                    if m == 2:
                        q = (p + 1) % 2
                    elif mean_pos:
                        q = (p + 1) % m
                    else:
                        q = (p - 1) % m
                    if fill:
                        pts[count, 0] = cx[p]
                        pts[count, 1] = cy[p]
                        pts[count, 2] = cx[q]
                        pts[count, 3] = cy[q]
                        keys[count, 0] = ce[p]
                        keys[count, 1] = ck[p]
                        keys[count, 2] = ce[q]
                        keys[count, 3] = ck[q]
                    count += 1
    return count


def _stitch(pts: np.ndarray, keys: np.ndarray):
    """Join oriented segments sharing crossing keys into polylines."""
    nseg = pts.shape[0]
    start = {}
    for s in range(nseg):
        start[(int(keys[s, 0]), int(keys[s, 1]))] = s
    nxt = np.full(nseg, -1, dtype=np.int64)
    has_prev = np.zeros(nseg, dtype=bool)
    for s in range(nseg):
        q = start.get((int(keys[s, 2]), int(keys[s, 3])))
        if q is not None:
            nxt[s] = q
            has_prev[q] = True
    used = np.zeros(nseg, dtype=bool)
    lines, closed = [], []

    def walk(s0):
        verts = [pts[s0, :2]]
        s = s0
        while True:
            used[s] = True
            q = nxt[s]
            if q < 0:
                verts.append(pts[s, 2:])
                return np.array(verts), False
            if q == s0:
                return np.array(verts), True
            verts.append(pts[q, :2])
            s = q

    for s in range(nseg):
        if not has_prev[s] and not used[s]:
            p, c = walk(s)
            lines.append(p)
            closed.append(c)
    for s in range(nseg):
        if not used[s]:
            p, c = walk(s)
            lines.append(p)
            closed.append(c)
    return lines, closed


def extract_contour(u: PhaseField) -> ContourSet:
    """Zero set of u - theta modulo 2 pi as stitched, oriented polylines."""
    grid = u.grid
    vals = np.where(grid.mask, u.values, 0.0)
    th = np.where(grid.mask, grid.theta_hat, 0.0)
    inner = (slice(PAD, PAD + grid.n), slice(PAD, PAD + grid.n))
    tx = np.ascontiguousarray(grid.tx_pad[inner])
    ty = np.ascontiguousarray(grid.ty_pad[inner])
    args = (vals, th, tx, ty, grid.mask, grid.xmin, grid.dx)
    dummy_p = np.zeros((0, 4))
    dummy_k = np.zeros((0, 4), dtype=np.int64)
    count = _march(*args, False, dummy_p, dummy_k)
    pts = np.zeros((count, 4))
    keys = np.zeros((count, 4), dtype=np.int64)
    _march(*args, True, pts, keys)
    lines, closed = _stitch(pts, keys)
    return ContourSet(lines, closed, u.t)


# -- distances ---------------------------------------------------------------------

@njit
def _min_seg_dist(px, py, seg, out):
    for a in range(px.shape[0]):
        best = 1e300
        for s in range(seg.shape[0]):
            x0 = seg[s, 0]
            y0 = seg[s, 1]
            ex = seg[s, 2] - x0
            ey = seg[s, 3] - y0
            L2 = ex * ex + ey * ey
            t = 0.0
            if L2 > 0.0:
                t = ((px[a] - x0) * ex + (py[a] - y0) * ey) / L2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            dx_ = px[a] - x0 - t * ex
            dy_ = py[a] - y0 - t * ey
            d2 = dx_ * dx_ + dy_ * dy_
            if d2 < best:
                best = d2
        out[a] = math.sqrt(best)


def point_to_segments(points, segments) -> np.ndarray:
    """Distance from each point to the nearest of the (S, 4) segments."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    seg = np.ascontiguousarray(np.asarray(segments, dtype=float).reshape(-1, 4))
    if seg.shape[0] == 0:
        raise MetricsError("empty contour")
    out = np.empty(p.shape[0])
    _min_seg_dist(np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]), seg, out)
    return out


def sample_polyline(poly, spacing: float, closed: bool = False) -> np.ndarray:
    """Points along a polyline at most ``spacing`` apart, vertices included."""
    poly = np.asarray(poly, dtype=float)
    if closed:
        poly = np.vstack([poly, poly[:1]])
    if len(poly) < 2:
        return poly.copy()
    out = [poly[:1]]
    for a, b in zip(poly[:-1], poly[1:]):
        L = float(np.hypot(*(b - a)))
        m = max(int(math.ceil(L / spacing)), 1)
        t = np.arange(1, m + 1)[:, None] / m
        out.append(a + t * (b - a))
    return np.vstack(out)


def distance_D(reference, test: ContourSet, grid: Grid, spacing: float | None = None) -> float:
    """sup over the reference polylines of the distance to the test contour.

    Reference points inside an exclusion disc (where no level-set contour
    exists) or outside the box are skipped.
    """
    segs = test.segments()
    if segs.shape[0] == 0:
        raise MetricsError("empty level-set contour")
    if isinstance(reference, ContourSet):
        polys = list(zip(reference.polylines, reference.closed))
    else:
        polys = [(np.asarray(p, float), False) for p in reference]
    spacing = grid.dx / 4.0 if spacing is None else spacing
    pts = [sample_polyline(p, spacing, c) for p, c in polys if len(p)]
    if not pts:
        raise MetricsError("empty reference curve")
    pts = np.vstack(pts)
    keep = ((pts[:, 0] >= grid.xmin) & (pts[:, 0] <= grid.xmax)
            & (pts[:, 1] >= grid.xmin) & (pts[:, 1] <= grid.xmax))
    for a in grid.centers.positions:
        keep &= np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1]) >= grid.r
    pts = pts[keep]
    if pts.shape[0] == 0:
        raise MetricsError("reference curve lies entirely in excluded regions")
    return float(np.max(point_to_segments(pts, segs)))


# -- heights ------------------------------------------------------------------------

@dataclass
class HeightField:
    """Per-node height in sheets (NaN off the mask)."""

    values: np.ndarray
    grid: Grid
    provenance: str


def height_levelset(u: PhaseField) -> HeightField:
    """H = (theta_hat + 2 pi zeta)/(2 pi), 2 pi zeta < u - theta_hat <= 2 pi (zeta + 1)."""
    grid = u.grid
    th = grid.theta_hat
    with np.errstate(invalid="ignore"):
        zeta = np.ceil((u.values - th) / TWO_PI) - 1.0
        h = (th + TWO_PI * zeta) / TWO_PI
    return HeightField(np.where(grid.mask, h, np.nan), grid, "level-set")


def height_levelset_at(u_value: float, theta_hat: float) -> float:
    zeta = math.ceil((u_value - theta_hat) / TWO_PI) - 1
    return (theta_hat + TWO_PI * zeta) / TWO_PI


def _theta_d_raw(chain: FacetChain, x, y, tol: float = 1e-12):
    cx, cy = chain.center
    k = chain.k
    th = chain.angles()
    star = th[k] - 0.5 * math.pi
    arg = principal_arg(x - cx, y - cy)
    md = np.mod(star - arg, TWO_PI)
    md = np.where(md > TWO_PI - 1e-12, 0.0, md)  # round-off on the cut ray
    big = star - md
    verts = chain.vertices()  # verts[k - m] = y_m
    nrm = chain.normals()
    # points within round-off of a facet line count as on it (outside D_m)
    scale = tol * (1.0 + float(np.max(np.abs(verts))))

    def inside(m):
        ym = verts[k - m]
        return (x - ym[0]) * nrm[m, 0] + (y - ym[1]) * nrm[m, 1] > scale

    d_prev = inside(0)
    for m in range(1, k + 1):
        d_m = inside(m)
        big = big - TWO_PI * (~d_m & d_prev)
        d_prev = d_m
    return big


def fronttracking_theta(chain: FacetChain, x, y, tol: float = 1e-12) -> np.ndarray:
    """Branch of arg whose only jumps lie on the polygonal spiral.

    Points on the spiral itself take the sheet of the side the facet normal
    points to, which matches the closed-right rule of the level-set height.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x, y = np.broadcast_arrays(x, y)
    out = _theta_d_raw(chain, x, y, tol)
    k = chain.k
    nrm = chain.normals()
    verts = chain.vertices()
    scale = tol * (1.0 + float(np.max(np.abs(verts))))
    on = np.zeros(x.shape, dtype=bool)
    side = np.zeros(x.shape, dtype=np.int64)
    for m in range(k + 1):
        a = verts[k - m]
        sig = (x - a[0]) * nrm[m, 1] - (y - a[1]) * nrm[m, 0]
        off = (x - a[0]) * nrm[m, 0] + (y - a[1]) * nrm[m, 1]
        length = np.inf if m == 0 else chain.d[m - 1]
        hit = (np.abs(off) <= scale) & (sig >= -scale) & (sig <= length + scale) & ~on
        on |= hit
        side[hit] = m
    if np.any(on):
        xs, ys = x[on], y[on]
        m = side[on]
        eps = 1e-6 * max(float(np.min(chain.d[chain.d > 0], initial=1.0)), 1e-3)
        px = xs + eps * nrm[m, 0]
        py = ys + eps * nrm[m, 1]
        shifted = _theta_d_raw(chain, px, py, tol)
        cx, cy = chain.center
        base = principal_arg(xs - cx, ys - cy)
        out[on] = base + TWO_PI * np.round((shifted - base) / TWO_PI)
    return out


def height_fronttracking(chain: FacetChain, grid: Grid) -> HeightField:
    """H_d = theta_d/(2 pi) on the active nodes of ``grid``."""
    if len(grid.centers) != 1:
        raise MetricsError("front-tracking heights need a single-center grid")
    a = grid.centers.positions[0]
    if np.hypot(*(np.asarray(chain.center) - a)) > 1e-12:
        raise MetricsError("chain center does not coincide with the grid center")
    th = fronttracking_theta(chain, grid.X, grid.Y)
    return HeightField(np.where(grid.mask, th / TWO_PI, np.nan), grid, "front-tracking")


def area_A(h1: HeightField, h2: HeightField) -> float:
    """(1/|W|) sum over active nodes of |H1 - H2| dx^2."""
    if not h1.grid.same_as(h2.grid):
        raise MetricsError("height fields live on different grids")
    m = h1.grid.mask
    return float(np.sum(np.abs(h1.values[m] - h2.values[m]))) * h1.grid.dx**2 / h1.grid.area


# -- contour diagnostics ------------------------------------------------------------------

def normal_histogram(cs: ContourSet, bins: int = 36) -> np.ndarray:
    """Length-weighted histogram of contour normal angles over [0, 2 pi)."""
    s = cs.segments()
    ex = s[:, 2] - s[:, 0]
    ey = s[:, 3] - s[:, 1]
    w = np.hypot(ex, ey)
    ang = np.mod(np.arctan2(-ex, ey), TWO_PI)  # right normal (ey, -ex)
    hist, _ = np.histogram(ang, bins=bins, range=(0.0, TWO_PI), weights=w)
    return hist


def count_peaks(hist, rel: float = 0.25) -> int:
    """Dominant circular peaks: local maxima whose prominence is at least
    ``rel`` times the largest bin.

    The prominence of a peak is its height above the higher of the two
    lowest points met before reaching a taller bin on either side (the
    global maximum uses the histogram minimum). Runs of equal bins are
    merged first, so a plateau counts once and a shoulder on a flank does
    not count.
    """
    h = np.asarray(hist, dtype=float)
    top = h.max() if h.size else 0.0
    if top <= 0:
        return 0
    runs = [h[0]] + [x for prev, x in zip(h[:-1], h[1:]) if x != prev]
    if len(runs) > 1 and runs[0] == runs[-1]:
        runs.pop()
    m = len(runs)
    if m == 1:
        return 1
    count = 0
    for i in range(m):
        v = runs[i]
        if not (v > runs[i - 1] and v > runs[(i + 1) % m]):
            continue
        if v == top:
            base = min(runs)
        else:
            lows = []
            for step in (-1, 1):
                low, j = v, i
                for _ in range(m - 1):
                    j = (j + step) % m
                    if runs[j] > v:
                        break
                    low = min(low, runs[j])
                lows.append(low)
            base = max(lows)
        count += v - base >= rel * top
    return count


def polyline_diameter(p) -> float:
    p = np.asarray(p, dtype=float)
    if len(p) < 2:
        return 0.0
    d = p[:, None, :] - p[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def _winds_around(poly, a) -> bool:
    """Whether the closed polyline has nonzero winding number about a."""
    q = np.asarray(poly, dtype=float) - a
    ang = np.arctan2(q[:, 1], q[:, 0])
    turn = np.sum(np.mod(np.diff(np.append(ang, ang[0])) + math.pi, TWO_PI) - math.pi)
    return abs(turn) > math.pi


def holes(cs: ContourSet, grid: Grid, min_diameter: float | None = None) -> list:
    """Closed polylines enclosing no center with diameter above the threshold."""
    thr = 4.0 * grid.dx if min_diameter is None else min_diameter
    out = []
    for p, c in zip(cs.polylines, cs.closed):
        if not c:
            continue
        if any(_winds_around(p, a) for a in grid.centers.positions):
            continue
        if polyline_diameter(p) > thr:
            out.append(p)
    return out


def _segments_cross(p0, p1, q0, q1) -> np.ndarray:
    """Vectorized proper-or-touching intersection of segments p0p1 with q0q1 (arrays)."""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    return (d1 * d2 <= 0) & (d3 * d4 <= 0)


def components_crossing(cs: ContourSet, a, b) -> int:
    """Number of polylines that meet the segment from a to b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    count = 0
    for p, c in zip(cs.polylines, cs.closed):
        q = np.vstack([p, p[:1]]) if c else p
        if len(q) < 2:
            continue
        if np.any(_segments_cross(q[:-1], q[1:], a[None, :], b[None, :])):
            count += 1
    return count
