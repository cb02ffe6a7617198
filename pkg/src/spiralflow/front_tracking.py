"""Polygonal spiral as a facet chain under the crystalline ODE system.

Facets are numbered m = 0..k from the outer half-line (m = 0) to the center
facet (m = k), which is pinned at the origin. Facet m is parallel to the
Wulff facet with extended index j0 + m, so its normal angle is
vartheta~_{j0+m} = vartheta_{(j0+m) mod N} + 2 pi floor((j0+m)/N).

Normal velocities: V_0 = f (straight half-line), V_k = 0 (pinned center
facet), V_m = f - l_m/d_m otherwise. With gaps D_m = vartheta~_m -
vartheta~_{m-1} the chain stays closed iff

    d'_m = -b_m V_m + c+_m V_{m+1} + c-_m V_{m-1},
    b_m = cot D_{m+1} + cot D_m,  c+_m = 1/sin D_{m+1},  c-_m = 1/sin D_m.

For m = k this reduces to d'_k = c-_k V_{k-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .anisotropy import PolyhedralAnisotropy

TWO_PI = 2.0 * math.pi

OK = 0
NONPOSITIVE = 1
FULL = 2


class FrontTrackingError(RuntimeError):
    def __init__(self, msg: str, **info):
        super().__init__(msg)
        self.info = info


def base_angles(wulff: PolyhedralAnisotropy) -> np.ndarray:
    """Wulff facet normal angles, counter-clockwise from facet 0 in [-pi, pi)."""
    a = wulff.facet_angles
    return a[0] + np.mod(a - a[0], TWO_PI)


def extended_angle(wulff: PolyhedralAnisotropy, j: int) -> float:
    base = base_angles(wulff)
    n = base.shape[0]
    return float(base[j % n] + TWO_PI * (j // n))


def coefficients(wulff: PolyhedralAnisotropy, j: int):
    """(b_j, c_j+, c_j-) for the extended Wulff facet index j."""
    th_m = extended_angle(wulff, j - 1)
    th = extended_angle(wulff, j)
    th_p = extended_angle(wulff, j + 1)
    return _coeffs_from_gaps(th_p - th, th - th_m)


def _coeffs_from_gaps(gap_plus: float, gap_minus: float):
    for g in (gap_plus, gap_minus):
        if not (0.0 < g < math.pi):
            raise ValueError(f"angle gap {g} outside (0, pi)")
    b = 1.0 / math.tan(gap_plus) + 1.0 / math.tan(gap_minus)
    return b, 1.0 / math.sin(gap_plus), 1.0 / math.sin(gap_minus)


def ray_facet_index(wulff: PolyhedralAnisotropy, ray_angle: float, tol: float = 1e-9) -> int:
    """Wulff facet whose tangent T = (sin, -cos) points along the given ray."""
    target = ray_angle + 0.5 * math.pi
    base = base_angles(wulff)
    diff = np.abs(np.mod(base - target + math.pi, TWO_PI) - math.pi)
    j = int(np.argmin(diff))
    if diff[j] > tol:
        raise ValueError(f"ray angle {ray_angle} is not parallel to a Wulff facet")
    return j


@dataclass
class FacetChain:
    """Spiral facet chain; ``d[m-1]`` is the length of facet m = 1..k."""

    wulff: PolyhedralAnisotropy
    f: float
    d: np.ndarray
    j0: int = 0
    center: tuple = (0.0, 0.0)
    t: float = 0.0

    def __post_init__(self):
        self.d = np.array(self.d, dtype=float).reshape(-1)
        if self.d.size < 1:
            raise ValueError("a chain needs at least the center facet")
        if not self.f > 0:
            raise ValueError("driving force f must be positive")

    @classmethod
    def spiral(cls, wulff: PolyhedralAnisotropy, f: float, ray_angle: float,
               center=(0.0, 0.0)) -> "FacetChain":
        """Initial data k = 1, d_1 = 0, half-line along ``ray_angle``."""
        return cls(wulff, f, [0.0], ray_facet_index(wulff, ray_angle), tuple(center))

    def copy(self) -> "FacetChain":
        return FacetChain(self.wulff, self.f, self.d.copy(), self.j0, self.center, self.t)

    @property
    def k(self) -> int:
        return self.d.size

    def angles(self, upto: int | None = None) -> np.ndarray:
        """Extended normal angles of facets m = 0..upto (default k)."""
        upto = self.k if upto is None else upto
        base = base_angles(self.wulff)
        n = base.shape[0]
        j = self.j0 + np.arange(upto + 1)
        return base[j % n] + TWO_PI * (j // n)

    def ell(self, upto: int | None = None) -> np.ndarray:
        upto = self.k if upto is None else upto
        lens = self.wulff.facet_lengths
        return lens[(self.j0 + np.arange(upto + 1)) % lens.shape[0]]

    def normals(self, upto: int | None = None) -> np.ndarray:
        """Unit normals N_m, m = 0..upto, taken from the Wulff facet table."""
        upto = self.k if upto is None else upto
        fn = self.wulff.facet_normals
        return fn[(self.j0 + np.arange(upto + 1)) % fn.shape[0]]

    def tangents(self, upto: int | None = None) -> np.ndarray:
        nrm = self.normals(upto)
        return np.column_stack([nrm[:, 1], -nrm[:, 0]])

    def normal(self, m: int) -> np.ndarray:
        return self.normals(m)[m].copy()

    def tangent(self, m: int) -> np.ndarray:
        return self.tangents(m)[m].copy()

    @property
    def critical_length(self) -> float:
        return float(self.ell()[self.k]) / self.f

    def velocities(self) -> np.ndarray:
        """V_m for m = 0..k."""
        k = self.k
        v = np.empty(k + 1)
        v[0] = self.f
        v[k] = 0.0
        if k > 1:
            ell = self.ell()
            v[1:k] = self.f - ell[1:k] / self.d[:k - 1]
        return v

    def vertices(self) -> np.ndarray:
        """y_k, y_{k-1}, ..., y_0 (center first)."""
        k = self.k
        tan = self.tangents()
        pts = np.empty((k + 1, 2))
        pts[0] = self.center
        for i, m in enumerate(range(k, 0, -1)):
            pts[i + 1] = pts[i] + self.d[m - 1] * tan[m]
        return pts


# -- ODE kernels ----------------------------------------------------------------

def _tables(chain: FacetChain, cap: int):
    """Per-facet ell, cot D, 1/sin D for m = 0..cap (D_0 unused)."""
    th = chain.angles(cap + 1)
    ell = chain.ell(cap + 1)
    gap = np.diff(th)
    if np.any(gap <= 0.0) or np.any(gap >= math.pi):
        raise ValueError("Wulff angle gaps must lie in (0, pi)")
    cot = np.zeros(cap + 2)
    csc = np.zeros(cap + 2)
    cot[1:] = 1.0 / np.tan(gap)
    csc[1:] = 1.0 / np.sin(gap)
    return ell, cot, csc


@njit
def _velocity(d, k, m, f, ell):
    if m == 0:
        return f
    if m == k:
        return 0.0
    return f - ell[m] / d[m]


@njit
def _rhs(d, k, f, ell, cot, csc, out):
    """out[m] = d'_m for m = 1..k; d is indexed by facet (d[0] unused)."""
    for m in range(1, k + 1):
        vm1 = _velocity(d, k, m - 1, f, ell)
        if m == k:
            out[m] = csc[m] * vm1
        else:
            v = _velocity(d, k, m, f, ell)
            vp1 = _velocity(d, k, m + 1, f, ell)
            out[m] = -(cot[m + 1] + cot[m]) * v + csc[m + 1] * vp1 + csc[m] * vm1


@njit
def _rk4(d, k, h, f, ell, cot, csc, out, s1, s2, s3, s4, tmp):
    _rhs(d, k, f, ell, cot, csc, s1)
    for m in range(1, k + 1):
        tmp[m] = d[m] + 0.5 * h * s1[m]
    _rhs(tmp, k, f, ell, cot, csc, s2)
    for m in range(1, k + 1):
        tmp[m] = d[m] + 0.5 * h * s2[m]
    _rhs(tmp, k, f, ell, cot, csc, s3)
    for m in range(1, k + 1):
        tmp[m] = d[m] + h * s3[m]
    _rhs(tmp, k, f, ell, cot, csc, s4)
    for m in range(1, k + 1):
        out[m] = d[m] + h / 6.0 * (s1[m] + 2.0 * s2[m] + 2.0 * s3[m] + s4[m])


@njit
def _integrate(d, k, t, t_end, dt, f, ell, cot, csc, generate, gen_times, n_gen):
    """Advance to t_end; returns (k, t, n_gen, status).

    When the center facet reaches l_k/f inside a step, the step is cut at the
    crossing (regula falsi on the RK4 step length), d_k is set to the critical
    value and a new zero-length center facet is opened.
    """
    cap = d.shape[0] - 1
    out = np.zeros_like(d)
    s1 = np.zeros_like(d)
    s2 = np.zeros_like(d)
    s3 = np.zeros_like(d)
    s4 = np.zeros_like(d)
    tmp = np.zeros_like(d)
    tiny = 1e-12 * dt
    while t_end - t > tiny:
        h = dt if t_end - t > dt else t_end - t
        _rk4(d, k, h, f, ell, cot, csc, out, s1, s2, s3, s4, tmp)
        for m in range(1, k):
            if not out[m] > 0.0:
                return k, t, n_gen, 1
        crit = ell[k] / f
        if generate and out[k] >= crit:
            lo = 0.0
            glo = d[k] - crit
            hi = h
            ghi = out[k] - crit
            tau = hi
            side = 0
            for _ in range(60):
                if ghi == glo:
                    break
                tau = (lo * ghi - hi * glo) / (ghi - glo)
                _rk4(d, k, tau, f, ell, cot, csc, out, s1, s2, s3, s4, tmp)
                g = out[k] - crit
                if abs(g) <= 1e-15 * crit or hi - lo <= 1e-15 * h:
                    break
                if g < 0.0:
                    lo = tau
                    glo = g
                    if side == -1:
                        ghi *= 0.5
                    side = -1
                else:
                    hi = tau
                    ghi = g
                    if side == 1:
                        glo *= 0.5
                    side = 1
            for m in range(1, k + 1):
                d[m] = out[m]
            d[k] = crit
            t += tau
            if k + 1 > cap:
                return k, t, n_gen, 2
            k += 1
            d[k] = 0.0
            if n_gen < gen_times.shape[0]:
                gen_times[n_gen] = t
            n_gen += 1
        else:
            for m in range(1, k + 1):
                d[m] = out[m]
            t += h
    return k, t, n_gen, 0


def _padded(chain: FacetChain, cap: int) -> np.ndarray:
    d = np.zeros(cap + 1)
    d[0] = np.inf
    d[1:chain.k + 1] = chain.d
    return d


def _check_positive(chain: FacetChain):
    if chain.k > 1 and np.any(chain.d[:chain.k - 1] <= 0.0):
        raise FrontTrackingError("interior facet lengths must be positive",
                                 d=chain.d.tolist())


def ode_rhs(chain: FacetChain) -> np.ndarray:
    """d'_m for m = 1..k as an array of length k."""
    _check_positive(chain)
    k = chain.k
    ell, cot, csc = _tables(chain, k)
    out = np.zeros(k + 2)
    _rhs(_padded(chain, k + 1), k, float(chain.f), ell, cot, csc, out)
    return out[1:k + 1]


def rk4_step(chain: FacetChain, dt: float) -> FacetChain:
    """One classical RK4 step of length dt, without facet generation."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_positive(chain)
    k = chain.k
    ell, cot, csc = _tables(chain, k)
    d = _padded(chain, k + 1)
    out = np.zeros_like(d)
    scratch = [np.zeros_like(d) for _ in range(5)]
    _rk4(d, k, float(dt), float(chain.f), ell, cot, csc, out, *scratch)
    new = chain.copy()
    new.d = out[1:k + 1].copy()
    new.t = chain.t + dt
    if k > 1 and np.any(new.d[:k - 1] <= 0.0):
        raise FrontTrackingError("step drove an interior facet length to zero; reduce dt",
                                 t=chain.t, dt=dt)
    return new


def maybe_generate_facet(chain: FacetChain) -> FacetChain:
    """Open a new zero-length center facet once d_k reaches l_k/f."""
    if chain.d[-1] < chain.critical_length:
        return chain
    new = chain.copy()
    new.d = np.append(chain.d, 0.0)
    return new


def reconstruct_polygon(chain: FacetChain, clip_box=(-1.5, 1.5)) -> np.ndarray:
    """Vertices from the center outward, the half-line cut at the box boundary."""
    lo, hi = float(clip_box[0]), float(clip_box[1])
    pts = chain.vertices()
    t0 = chain.tangent(0)
    ends = []
    for c in range(2):
        if t0[c] > 0:
            ends.append((hi - pts[-1, c]) / t0[c])
        elif t0[c] < 0:
            ends.append((lo - pts[-1, c]) / t0[c])
    s = max(min(ends), 0.0)
    return np.vstack([pts, pts[-1] + s * t0])


def translate_lines(chain: FacetChain, dt: float) -> np.ndarray:
    """Facet lengths after moving every facet line normally by V_m dt.

    The center vertex stays pinned; other vertices are re-intersected.
    """
    k = chain.k
    v = chain.velocities()
    pts = chain.vertices()[::-1]  # pts[m] = y_m
    nrm = chain.normals()
    off = np.einsum("ij,ij->i", nrm, np.vstack([pts[0], pts[:k]])) + v * dt
    # line m passes through y_m (m < k) and y_{m-1}; line 0 through y_0
    new = np.empty((k + 1, 2))
    new[k] = pts[k]
    for m in range(k):
        a = np.array([nrm[m], nrm[m + 1]])
        new[m] = np.linalg.solve(a, [off[m], off[m + 1]])
    tang = chain.tangents()
    return np.array([np.dot(new[m - 1] - new[m], tang[m]) for m in range(1, k + 1)])


def closure_rates(chain: FacetChain, dt: float = 1e-6) -> np.ndarray:
    """(d after translating lines by V dt - d) / dt; equals ode_rhs up to round-off."""
    return (translate_lines(chain, dt) - chain.d) / dt


def closure_defect(chain: FacetChain, dt: float) -> float:
    """max |translated-lines lengths - RK4 lengths| after one step of dt."""
    return float(np.max(np.abs(translate_lines(chain, dt) - rk4_step(chain, dt).d)))


@dataclass
class FTTrajectory:
    snapshots: list
    generation_times: list = field(default_factory=list)
    final: FacetChain | None = None


def evolve_ft(chain: FacetChain, T: float, dt: float = 1e-6, snapshot_times=(),
              generate: bool = True) -> FTTrajectory:
    """RK4 in steps of dt up to time T with facet generation at the center.

    Snapshots are taken at exactly the requested times (steps are shortened
    to land on them).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_positive(chain)
    f = float(chain.f)
    cap = max(64, 2 * chain.k)
    d = _padded(chain, cap)
    k = chain.k
    t = float(chain.t)
    gens: list = []
    snaps = []
    stops = sorted({float(s) for s in snapshot_times if chain.t <= s <= T} | {float(T)})
    want = {float(s) for s in snapshot_times}

    def emit(k, t):
        c = chain.copy()
        c.d = d[1:k + 1].copy()
        c.t = t
        return c

    if chain.t in want:
        snaps.append(emit(k, t))
    for stop in stops:
        while True:
            ell, cot, csc = _tables(chain, cap)
            buf = np.zeros(cap + 8)
            k, t, n, status = _integrate(d, k, t, stop, float(dt), f, ell, cot, csc,
                                         bool(generate), buf, 0)
            gens.extend(buf[:min(n, buf.size)].tolist())
            if status == FULL:
                cap *= 2
                grown = np.zeros(cap + 1)
                grown[:d.size] = d
                d = grown
                gens.append(t)
                k += 1
                d[k] = 0.0
                continue
            if status == NONPOSITIVE:
                raise FrontTrackingError("interior facet length reached zero; reduce dt",
                                         t=t, k=k)
            break
        t = stop
        if stop in want and stop != chain.t:
            snaps.append(emit(k, t))
    final = emit(k, t)
    return FTTrajectory(snaps, gens, final)
