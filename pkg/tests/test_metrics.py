import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiralflow import anisotropy as an
from spiralflow.domain import Grid, PhaseField, constant_phase, principal_theta
from spiralflow.front_tracking import FacetChain
from spiralflow.metrics import (ContourSet, HeightField, MetricsError, area_A, components_crossing,
                                count_peaks, distance_D, extract_contour, height_fronttracking,
                                height_levelset, height_levelset_at, holes, normal_histogram)

TWO_PI = 2 * math.pi


def archimedes(grid, c=3.0):
    return PhaseField(c * np.hypot(grid.X, grid.Y), grid)


def test_contour_of_linear_field():
    g = Grid((-1, 1), 0.1)
    cs = extract_contour(PhaseField(math.pi * g.X + 0.05, g))
    assert len(cs) == 1 and not cs.closed[0]
    p = cs.polylines[0]
    assert np.allclose(p[:, 0], -0.05 / math.pi, atol=1e-12)
    assert cs.total_length() == pytest.approx(2.0)
    # larger values on the left: walking down in y
    assert p[-1, 1] < p[0, 1]


def test_contour_of_constant_spiral_is_a_ray():
    g = Grid((-1.5, 1.5), 0.05, [(0, 0, 1)])
    cs = extract_contour(constant_phase(g, 0.0))
    assert len(cs) == 1
    p = cs.polylines[0]
    assert np.allclose(p[:, 1], 0.0, atol=1e-12)
    assert p[:, 0].max() == pytest.approx(1.5) and p[:, 0].min() > 0.0


def test_distance_examples():
    g = Grid((-1, 1), 0.05)
    line = ContourSet([np.array([[-0.8, 0.0], [0.8, 0.0]])], [False])
    assert distance_D(line, line, g) == pytest.approx(0.0, abs=1e-3 * g.dx)
    for delta in (0.1, 0.3):
        ref = [np.array([[-0.5, delta], [0.5, delta]])]
        assert distance_D(ref, line, g) == pytest.approx(delta, rel=0.02)
    sub = [np.array([[-0.2, 0.0], [0.3, 0.0]])]
    assert distance_D(sub, line, g) == pytest.approx(0.0, abs=1e-3 * g.dx)
    # not symmetric: the long line is far from the short one
    assert distance_D([line.polylines[0]], ContourSet([sub[0]], [False]), g) == pytest.approx(0.6)
    with pytest.raises(MetricsError):
        distance_D(sub, ContourSet(), g)


def test_height_examples():
    assert height_levelset_at(math.pi, math.pi / 2) == pytest.approx(0.25)
    g = Grid((-1, 1), 0.1, [(0, 0, 1)])
    i = j = int(round(1.0 / g.dx))
    node = (g.n - 1) // 2, int(round((0.5 + 1) / g.dx))
    h = height_levelset(constant_phase(g, math.pi))
    assert g.theta_hat[node] == pytest.approx(math.pi / 2)
    assert h.values[node] == pytest.approx(0.25)
    assert np.isnan(h.values[i, j])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), k=st.integers(-3, 3))
def test_height_shift_by_two_pi(seed, k):
    g = Grid((-1, 1), 0.1, [(0.05, -0.1, 1), (-0.4, 0.5, -2)])
    u = PhaseField(np.random.default_rng(seed).uniform(-10, 10, (g.n, g.n)), g)
    h0 = height_levelset(u)
    h1 = height_levelset(PhaseField(u.values + TWO_PI * k, g))
    assert np.allclose((h1.values - h0.values)[g.mask], k, atol=1e-12)
    assert area_A(h1, h0) == pytest.approx(abs(k))


def test_height_jump_across_contour():
    g = Grid((-1, 1), 0.02, [(0, 0, 1)])
    cs = extract_contour(archimedes(g))
    seg = cs.segments()
    mid = 0.5 * (seg[:, :2] + seg[:, 2:])
    keep = np.hypot(mid[:, 0], mid[:, 1]) > 0.1
    seg, mid = seg[keep], mid[keep]
    pick = np.linspace(0, len(seg) - 1, 100).astype(int)
    jumps = []
    for s, m in zip(seg[pick], mid[pick]):
        e = s[2:] - s[:2]
        nrm = np.array([e[1], -e[0]]) / np.hypot(*e)
        vals = []
        for sgn in (1, -1):
            x, y = m + sgn * 1e-3 * nrm
            vals.append(height_levelset_at(3.0 * math.hypot(x, y), principal_theta(g.centers, x, y)))
        jumps.append(vals[1] - vals[0])
    assert np.allclose(jumps, 1.0, atol=0.05)


@pytest.mark.parametrize("m", [1, 2, -1])
def test_winding_consistency(m):
    g = Grid((-1, 1), 0.05, [(0, 0, m)])
    phi = np.linspace(0, TWO_PI, 4001)[:-1]
    xs, ys = 0.5 * np.cos(phi), 0.5 * np.sin(phi)
    H = [height_levelset_at(3.0 * 0.5, principal_theta(g.centers, x, y)) for x, y in zip(xs, ys)]
    dH = np.diff(np.append(H, H[0]))
    jumps = np.round(dH[np.abs(dH) > 0.5])
    # the smooth part of H winds by m, the unit jumps undo it
    assert np.all(np.abs(jumps) == 1.0)
    assert np.sum(jumps) == -m


def test_fronttracking_height_sheet_offset():
    g = Grid((-1.5, 1.5), 0.05, [(0, 0, 1)])
    chain = FacetChain.spiral(an.square(), 1.0, 0.0)
    hd = height_fronttracking(chain, g)
    assert area_A(hd, height_levelset(constant_phase(g, 0.0))) == pytest.approx(0.0, abs=1e-12)
    assert area_A(hd, height_levelset(constant_phase(g, 4 * math.pi))) == pytest.approx(2.0)
    # one extra facet adds one terrace region where the height drops by 1
    two = FacetChain(an.square(), 1.0, [0.5, 0.0], j0=1)
    h2 = height_fronttracking(two, g)
    d = h2.values - height_fronttracking(FacetChain(an.square(), 1.0, [0.5], j0=1), g).values
    assert set(np.unique(np.round(d[g.mask], 12))) <= {-1.0, 0.0, 1.0}


def test_area_examples():
    g = Grid((-1, 1), 0.1)
    a = HeightField(np.zeros((g.n, g.n)), g, "x")
    b = HeightField(np.where((np.add.outer(np.arange(g.n), np.arange(g.n)) % 2) == 0, 0.5, -0.5), g, "y")
    assert area_A(a, a) == 0.0
    assert area_A(a, b) == pytest.approx(0.5)
    assert area_A(a, HeightField(np.full((g.n, g.n), 2.0), g, "z")) == pytest.approx(2.0)
    with pytest.raises(MetricsError):
        area_A(a, HeightField(np.zeros((3, 3)), Grid((-1, 1), 1.0), "w"))


def test_histogram_and_peaks():
    g = Grid((-1, 1), 0.02)
    # without centers the level sets of the l-infinity norm are square loops
    u = PhaseField(10.0 * np.maximum(abs(g.X), abs(g.Y)), g)
    hist = normal_histogram(extract_contour(u), bins=36)
    assert count_peaks(hist) == 4
    assert count_peaks(np.zeros(8)) == 0
    assert count_peaks([1, 1, 1]) == 1
    assert count_peaks([0, 3, 3, 0, 0, 2, 0, 0]) == 2
    # a shoulder on the flank of a tall peak is not dominant
    assert count_peaks([0, 0.3, 0.2, 1.0, 0, 0, 0.5, 0]) == 2


def test_holes_and_crossings():
    g = Grid((-1, 1), 0.02, [(0.5, 0.5, 1)])
    # a closed bump away from the center gives a hole
    r = np.hypot(g.X + 0.4, g.Y + 0.4)
    u = PhaseField(g.theta_hat + np.clip((0.2 - r) * 10, -1.0, 1.0), g)
    cs = extract_contour(u)
    assert len(holes(cs, g)) == 1
    assert components_crossing(cs, (-0.4, -0.8), (-0.4, 0.0)) >= 1
