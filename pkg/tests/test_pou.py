import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from bclab.errors import ConfigurationError
from bclab.geometry import sample_frames
from bclab.pou import (Mollifier, PartitionOfUnity, cell_defect_density, fit_inverse_l,
                       mollifier_constant, simplex_mass, sliding_defect)

# frozen with scipy dblquad/tplquad over the triangle/tetrahedron with legs 0.6
TRI = np.array([[0.0, 0.0], [0.6, 0.0], [0.0, 0.6]])
TET = np.array([[0.0, 0.0, 0.0], [0.6, 0.0, 0.0], [0.0, 0.6, 0.0], [0.0, 0.0, 0.6]])
MASS_2D = [((0.1, 0.1), 0.4794529708829654), ((0.3, 0.05), 0.4534654698741127),
           ((-0.2, 0.2), 0.10508538629696045), ((0.05, 0.45), 0.29762514564316284)]
MASS_3D = [((0.1, 0.1, 0.1), 0.2612209891953419), ((0.0, 0.2, -0.1), 0.10663774905367635)]


@pytest.mark.parametrize("d, c2", [(1, 15.027863065671625), (2, 33.922061683922195), (3, 83.24427070062916)])
def test_mollifier_constant(d, c2):
    assert mollifier_constant(d) ** 2 == pytest.approx(c2, rel=1e-12)


def test_mollifier_rejects_wrong_constant():
    with pytest.raises(ConfigurationError):
        Mollifier(2, 1.0)


def test_mollifier_unit_mass_1d():
    m = Mollifier(1)
    v, _ = quad(lambda u: float(m.psi(u)), -0.5, 0.5, epsabs=1e-14)
    assert v == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("x, ref", MASS_2D)
def test_simplex_mass_2d_against_quadrature(x, ref):
    mass, _ = simplex_mass(Mollifier(2), (TRI - np.array(x))[None])
    assert mass[0] == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("x, ref", MASS_3D)
def test_simplex_mass_3d_against_quadrature(x, ref):
    mass, _ = simplex_mass(Mollifier(3), (TET - np.array(x))[None])
    assert mass[0] == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("d, S", [(2, TRI), (3, TET)])
def test_mass_gradient_matches_finite_differences(d, S):
    mol = Mollifier(d)
    x = np.full(d, 0.12)
    _, g = simplex_mass(mol, (S - x)[None])
    h = 1e-5
    fd = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        mp, _ = simplex_mass(mol, (S - x - e)[None], with_grad=False)
        mm, _ = simplex_mass(mol, (S - x + e)[None], with_grad=False)
        fd.append((mp[0] - mm[0]) / (2 * h))
    np.testing.assert_allclose(g[0], fd, atol=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_sum_of_squares_is_one(d):
    pou = PartitionOfUnity(d, 0.2)
    x = np.random.default_rng(d).uniform(-3, 3, (10_000, d))
    assert np.max(np.abs(pou.sum_squares(x) - 1)) <= pou.quadrature_tolerance


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.5), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_sum_of_squares_property(eta, x):
    pou = PartitionOfUnity(2, eta)
    assert abs(pou.sum_squares(np.array([x]))[0] - 1) <= pou.quadrature_tolerance


def test_j_is_one_deep_inside_and_zero_outside_enlarged_simplex():
    pou = PartitionOfUnity(2, 0.1)
    base = pou.grid.base[0]
    centre = base.mean(0)
    j, g = pou.evaluate(((0, 0), 0), centre)
    assert j[0] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(g, 0.0)
    far = centre + np.array([3.0, 0.0])
    j, _ = pou.evaluate(((0, 0), 0), far)
    assert j[0] == 0.0


def test_cell_defect_density_scales_like_inverse_eta():
    a = cell_defect_density(2, 0.2, samples=2048)
    b = cell_defect_density(2, 0.1, samples=2048)
    # the gradient lives in a layer of width eta with size 1/eta
    assert b / a == pytest.approx(2.0, rel=0.15)


def test_sliding_defect_decays_like_inverse_l():
    # with eta = 1/l the translation average is exactly A(eta) / l
    frames = sample_frames(2, 64, seed=0)
    pts = np.random.default_rng(5).uniform(-1, 1, (16, 2))
    ls = (4.0, 8.0, 16.0)
    rows = [sliding_defect(2, l, frames, pts) for l in ls]
    for l, r in zip(ls, rows):
        mean = cell_defect_density(2, 1 / l, samples=2048) / l**2
        assert abs(r["sup_average"] - mean) <= 4 * r["sampling_error"]
    assert rows[0]["sup_average"] > rows[1]["sup_average"] > rows[2]["sup_average"]
    c, _ = fit_inverse_l(ls, [r["sup_average"] for r in rows])
    A = cell_defect_density(2, 1 / 16, samples=2048) / 16
    assert c == pytest.approx(A, rel=0.15)


def test_fit_inverse_l_exact():
    c, r = fit_inverse_l([1, 2, 4], [3.0, 1.5, 0.75])
    assert c == pytest.approx(3.0)
    assert r < 1e-14


def test_support_is_inside_enlarged_simplex():
    pou = PartitionOfUnity(2, 0.15)
    plus = pou.grid.enlarged_base()[3]
    T = np.linalg.inv((plus[1:] - plus[:1]).T)
    x = np.random.default_rng(9).uniform(-1, 2, (4000, 2))
    lam = (x - plus[0]) @ T.T
    outside = ~(np.all(lam > 0, 1) & (lam.sum(1) < 1))
    j, _ = pou.evaluate(((0, 0), 3), x[outside])
    assert np.all(j == 0.0)
