import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiralflow import anisotropy as an

PRESETS = [an.square(), an.triangle(), an.pentagon(), an.hexagon_asym(0.5)]
coord = st.floats(-3.0, 3.0, allow_nan=False)
vec = st.tuples(coord, coord)


def test_square_dual_vertices():
    a = an.square()
    j = np.arange(4)
    want = np.column_stack([np.cos(np.pi * j / 2), np.sin(np.pi * j / 2)])
    assert np.allclose(a.dual_vertices, want, atol=1e-14)
    assert np.allclose(a.wulff_vertices, a.normals, atol=1e-14)


def test_triangle_accepted():
    a = an.triangle()
    assert a.size == 3
    j = np.arange(3)
    want = np.column_stack([np.cos(2 * np.pi * j / 3), np.sin(2 * np.pi * j / 3)])
    # dual_vertices[j] sits between n_{j-1} and n_j, so the table starts at angle 0
    assert np.allclose(a.dual_vertices, want, atol=1e-14)


@pytest.mark.parametrize("normals", [
    [[1, 0], [0, 1]],                       # two normals
    [[1, 0], [0, 1], [-1, 0.0001]],         # gap >= pi
    [[1, 0], [0, 1], [-1, 0], [0, -1], [0.1, 0.1]],   # redundant
    [[1, 0], [2, 0], [0, 1], [-1, -1]],     # duplicate angle
    [[0, 0], [0, 1], [-1, -1]],             # zero normal
])
def test_invalid_normals_rejected(normals):
    with pytest.raises(an.AnisotropyError):
        an.new_polyhedral(normals)


def test_gamma_examples():
    assert an.gamma_eval(an.square(), (1, 1)) == pytest.approx(2.0, abs=1e-14)
    for a in PRESETS:
        assert an.gamma_eval(a, (0, 0)) == 0.0
    # dot products 1, -2, 1
    assert an.gamma_eval(an.triangle(), (1, 0)) == pytest.approx(1.0, abs=1e-14)


def test_polar_examples():
    assert an.polar_eval(an.square(), (1, 1)) == pytest.approx(1.0, abs=1e-14)
    assert an.polar_eval(an.square(), (0, 0)) == 0.0
    t = an.triangle()
    assert an.polar_eval(t, t.dual_vertices[0]) == pytest.approx(1.0, abs=1e-14)


def test_facet_geometry():
    t = an.triangle()
    assert np.allclose(t.facet_lengths, 2 * math.sqrt(3))
    assert np.allclose(np.sort(t.facet_angles), np.sort([0, 2 * np.pi / 3, -2 * np.pi / 3]))
    s = an.square()
    assert np.allclose(s.facet_lengths, 2.0)


def test_wulff_project_examples():
    a = an.square()
    assert np.allclose(an.wulff_project(a, (3, 0)), (1, 0), atol=1e-14)
    assert np.allclose(an.wulff_project(a, (0.3, -0.2)), (0.3, -0.2), atol=0)
    # brute force over a fine grid of [-1, 1]^2
    g = np.linspace(-1, 1, 801)
    X, Y = np.meshgrid(g, g, indexing="ij")
    k = np.argmin((X - 3) ** 2 + (Y - 2) ** 2)
    assert np.allclose((X.flat[k], Y.flat[k]), (1, 1))
    assert np.allclose(an.wulff_project(a, (3, 2)), (1, 1), atol=1e-14)


def test_shrink_examples():
    a = an.square()
    z = np.array([0.4, -0.1])
    assert np.array_equal(an.shrink(a, z + [0.2, 0.3], z), z)
    assert np.allclose(an.shrink(a, (3, 0), (0, 0)), (2, 0), atol=1e-14)
    assert np.allclose(an.shrink(a, (3, 2), (0, 0)), (2, 1), atol=1e-14)
    # soft threshold for the l1 norm with mu = 2: threshold 1/2 per component
    assert np.allclose(an.shrink(a, (3, -0.25), (0, 0), mu=2.0), (2.5, 0.0), atol=1e-14)


def test_shrink_brute_force_oracle():
    rng = np.random.default_rng(1)
    for a in PRESETS:
        for _ in range(10):
            y, z = rng.uniform(-2, 2, (2, 2))
            mu = rng.choice([0.1, 1.0, 10.0])
            x = an.shrink(a, y, z, mu)
            _, best, slack = an.brute_force_shrink(a, y, z, mu, n=201)
            assert an.shrink_objective(a, x, y, z, mu) <= best + slack


@pytest.mark.parametrize("a", PRESETS, ids=["square", "triangle", "pentagon", "hex"])
def test_shrink_cases_consistent(a):
    rng = np.random.default_rng(2)
    n = a.normals
    for _ in range(300):
        y, z = rng.uniform(-4, 4, (2, 2))
        x, case = an.shrink(a, y, z, 1.0, with_case=True)
        if case.tag == "inside":
            assert an.polar_eval(a, y - z) <= 1 + 1e-12
        elif case.tag == "edge":
            i = case.index
            assert 0.0 <= case.lam <= 1.0
            xi = case.lam * n[i] + (1 - case.lam) * n[(i + 1) % a.size]
            assert np.allclose(y - x, xi, atol=1e-12)
            assert (y - z - xi) @ xi >= -1e-12
        else:
            assert case.tag == "facet"
            assert np.allclose(x, y - n[case.index], atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(y=vec, z=vec, k=st.integers(0, 3), mu=st.sampled_from([0.1, 1.0, 10.0]))
def test_shrink_matches_projection_identity(y, z, k, mu):
    a = PRESETS[k]
    y, z = np.array(y), np.array(z)
    x = an.shrink(a, y, z, mu)
    want = y - an.wulff_project(a.scaled(1.0 / mu), y - z)
    assert np.allclose(x, want, atol=1e-12, rtol=0)


@settings(max_examples=200, deadline=None)
@given(p=vec, k=st.integers(0, 3))
def test_duality_roundtrip(p, k):
    a = PRESETS[k]
    p = np.array(p)
    # sup of p.q over the Wulff polygon is attained at a vertex
    sup = np.max(a.wulff_vertices @ p)
    assert sup == pytest.approx(a.gamma(p), rel=1e-10, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(p=vec, q=vec, c=st.floats(0.0, 10.0), k=st.integers(0, 3))
def test_gamma_convex_and_homogeneous(p, q, c, k):
    a = PRESETS[k]
    p, q = np.array(p), np.array(q)
    assert a.gamma(c * p) == pytest.approx(c * a.gamma(p), rel=1e-12, abs=1e-12)
    assert a.gamma(p + q) <= a.gamma(p) + a.gamma(q) + 1e-12


def test_minimality_by_sampling():
    th = np.linspace(0, 2 * np.pi, 4000, endpoint=False)
    P = np.column_stack([np.cos(th), np.sin(th)])
    for a in PRESETS:
        full = a.gamma(P)
        for k in range(a.size):
            drop = np.delete(a.normals, k, axis=0)
            assert np.max(full - np.max(P @ drop.T, axis=1)) > 1e-6


def test_shrink_many_backends_agree():
    rng = np.random.default_rng(3)
    y = rng.uniform(-3, 3, (2000, 2))
    z = rng.uniform(-1, 1, (2000, 2))
    for a in PRESETS:
        x_nb = an.shrink_many(a, y, z, 0.7, use_numba=True)
        x_np = an.shrink_many(a, y, z, 0.7, use_numba=False)
        assert np.allclose(x_nb, x_np, atol=1e-12)
        one = np.array([an.shrink(a, y[k], z[k], 0.7) for k in range(50)])
        assert np.allclose(one, x_nb[:50], atol=1e-14)


def test_presets_and_transforms():
    assert an.preset("Square").size == 4
    assert an.preset("hexagon-asym(0.5, 2)").size == 6
    with pytest.raises(an.AnisotropyError):
        an.preset("heptagon")
    t = an.triangle()
    r = t.reflected()
    p = np.array([0.3, -1.2])
    assert r.gamma(p) == pytest.approx(t.gamma(-p))
    q = t.rotated(0.4)
    c, s = math.cos(0.4), math.sin(0.4)
    assert q.gamma([c * p[0] - s * p[1], s * p[0] + c * p[1]]) == pytest.approx(t.gamma(p))
    pr = an.from_polar_pairs([[2.0, np.pi * (2 * j + 1) / 3] for j in range(3)])
    assert np.allclose(pr.normals, t.normals)
