import itertools
import math
from fractions import Fraction

import mpmath

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bclab.errors import ConfigurationError
from bclab.geometry import (SimplexGrid, SlidingFrame, ball, box, classify_simplices,
                            decompose_unit_cube, interval, minimal_enclosing_ball, packing_constant,
                            polytope, regular_sequence_check, sample_frames, simplex_volume, union,
                            voronoi)


def barycentric_inside(S, x):
    """Strict barycentric containment for each simplex in S (m, d+1, d)."""
    T = np.linalg.inv(np.swapaxes(S[:, 1:] - S[:, :1], 1, 2))
    lam = np.einsum("mij,nmj->nmi", T, x[:, None, :] - S[None, :, 0])
    return np.all(lam >= 0, axis=2) & (lam.sum(2) <= 1)


@pytest.mark.parametrize("d, count", [(1, 2), (2, 8), (3, 24)])
def test_cube_decomposition_counts_and_volumes(d, count):
    S = decompose_unit_cube(d)
    assert len(S) == count
    np.testing.assert_allclose(simplex_volume(S), 1.0 / count, rtol=1e-14)


def test_cube_decomposition_tiles_without_gaps_or_overlaps():
    S = decompose_unit_cube(3)
    x = np.random.default_rng(1).random((1_000_000, 3))
    hits = np.zeros(len(x), int)
    for chunk in np.array_split(np.arange(len(x)), 10):
        hits[chunk] = barycentric_inside(S, x[chunk]).sum(1)
    assert np.mean(hits == 1) >= 1 - 1e-3


def test_enlargement_contains_eta_neighbourhood():
    g = SimplexGrid(2, 0.1)
    base, plus = g.base[0], g.enlarged_base()[0]
    # points within eta/2 of the base simplex must lie in the enlarged one
    rng = np.random.default_rng(0)
    w = rng.dirichlet(np.ones(3), 2000)
    ang = rng.uniform(0, 2 * np.pi, 2000)
    x = w @ base + 0.05 * np.c_[np.cos(ang), np.sin(ang)]
    assert barycentric_inside(plus[None], x).all()
    assert g.enlargement == pytest.approx(1 + 3 * 0.1 / (2 * 0.5 / math.sqrt(2)))


def test_sliding_frame_round_trip():
    for f in sample_frames(3, 8, seed=3):
        x = np.random.default_rng(2).normal(size=(5, 3))
        np.testing.assert_allclose(f.from_frame(f.to_frame(x, 2.0), 2.0), x, atol=1e-13)
    with pytest.raises(ConfigurationError):
        SlidingFrame(np.zeros(2), np.diag([1.0, -1.0]))


def test_large_ball_is_mostly_interior():
    l = 1.0
    dom = ball(2, 100 * l)
    rows = []
    for f in sample_frames(2, 4, seed=0):
        c = classify_simplices(dom, f, l, eta=0.1)
        rows.append((c.interior_fraction, c.boundary_fraction))
    g = SimplexGrid(2, 0.1)
    for frac, bfrac in rows:
        assert 0.9 <= frac <= g.volume_ratio
        # boundary simplices sit in a collar of width ~ diam(simplex^+)
        assert bfrac <= 2 * math.pi * 100 * 3 * l / dom.volume * 8


def test_tiny_domain_has_no_interior_simplex():
    c = classify_simplices(ball(2, 0.05), SlidingFrame.identity(2), 1.0, eta=0.1)
    assert len(c.interior) == 0
    assert len(c.boundary) >= 1


def test_interior_fraction_approaches_volume_ratio():
    # enlarged simplices overlap, so the covered fraction tends to |simplex^+|/|simplex|
    ratio = SimplexGrid(2, 0.1).volume_ratio
    fr = []
    for L in (8, 16, 32):
        c = classify_simplices(box([L, L]), SlidingFrame.identity(2), 1.0, eta=0.1)
        fr.append(abs(c.interior_fraction - ratio))
    assert fr[2] < fr[1] < fr[0]


def test_voronoi_two_sites():
    v = voronoi([[0, 0, 0], [0, 3, 4]])
    np.testing.assert_array_equal(v.half_distance, [2.5, 2.5])


def floor_dist(a, b):
    """Exact distance rounded down to a double, via 50-digit arithmetic."""
    with mpmath.workdps(50):
        q = sum((mpmath.mpf(float(x)) - mpmath.mpf(float(y))) ** 2 for x, y in zip(a, b))
        r = float(mpmath.sqrt(q))
        while mpmath.mpf(r) ** 2 > q:
            r = math.nextafter(r, 0.0)
        while mpmath.mpf(math.nextafter(r, math.inf)) ** 2 <= q:
            r = math.nextafter(r, math.inf)
    return r


def test_voronoi_matches_pairwise_oracle():
    rng = np.random.default_rng(7)
    w = rng.dirichlet(np.ones(4), 10)
    sites = w @ decompose_unit_cube(3)[0]
    v = voronoi(sites)
    D = [min(floor_dist(a, b) for j, b in enumerate(sites) if j != i) / 2 for i, a in enumerate(sites)]
    assert v.half_distance.tolist() == D


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_voronoi_balls_are_disjoint_and_packed(k, seed):
    rng = np.random.default_rng(seed)
    S = decompose_unit_cube(3)[0]
    sites = rng.dirichlet(np.ones(4), k) @ S
    v = voronoi(sites)
    F = [[Fraction(float(c)) for c in p] for p in sites]
    for i, j in itertools.combinations(range(k), 2):
        dist2 = sum((a - b) ** 2 for a, b in zip(F[i], F[j]))
        assert (Fraction(v.half_distance[i]) + Fraction(v.half_distance[j])) ** 2 <= dist2
    lam = packing_constant(S)
    assert np.sum(v.half_distance**3) <= lam * simplex_volume(S)


def test_enclosing_ball_of_square():
    c, r = minimal_enclosing_ball([[0, 0], [2, 0], [0, 2], [2, 2]])
    np.testing.assert_allclose(c, [1, 1])
    assert r == pytest.approx(math.sqrt(2))


def test_regular_sequence_of_balls():
    doms = [ball(3, 1.0).scaled(l) for l in (4, 8, 16, 32)]
    r = regular_sequence_check(doms, h=0.5)
    assert r["regular"]
    for row, l in zip(r["rows"], (4, 8, 16, 32)):
        assert row["enclosing_ball_ratio"] == pytest.approx(1.0)
        assert row["inner_collar_fraction"] == pytest.approx(1 - (1 - 0.5 / l) ** 3, rel=1e-12)


def test_constant_sequence_is_not_regular():
    r = regular_sequence_check([ball(3, 1.0)] * 4, h=0.1)
    assert not r["criterion_i"]
    assert not r["regular"]


@pytest.mark.parametrize("dom", [box([1, 2]), polytope([[0, 0], [2, 0], [0, 1]]), interval(3.0)])
def test_collar_fractions_decrease_for_scaled_convex_domains(dom):
    r = regular_sequence_check([dom.scaled(l) for l in (1, 2, 4, 8)], h=0.1)
    assert r["criterion_ii"]


def test_union_members_must_be_disjoint():
    with pytest.raises(ConfigurationError):
        union([ball(2, 1.0), ball(2, 1.0, center=[1.5, 0])])
    u = union([ball(2, 1.0), ball(2, 0.5, center=[3, 0])])
    assert u.volume == pytest.approx(math.pi * 1.25)
