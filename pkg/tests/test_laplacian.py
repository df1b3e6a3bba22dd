import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from bclab.charts import boundary_chart
from bclab.errors import ConfigurationError
from bclab.geometry import SlidingFrame, ball, box
from bclab.laplacian import (BCSpec, Dirichlet, Grid, Neumann, Periodic, Robin, assemble, eigenvalues,
                             group_multiplicities, ims_defect, metric_bound_check, reflect_extend)
from bclab.pou import PartitionOfUnity


def interval_grid(n, h=None, length=1.0):
    h = length / n if h is None else h
    return Grid(h, np.ones(n, bool))


def spectrum(grid, bc, count):
    return eigenvalues(assemble(grid, BCSpec.uniform(bc) if not isinstance(bc, BCSpec) else bc), count).values


def test_node_dirichlet_tridiagonal_spectrum():
    n, h = 40, 0.1
    vals = spectrum(interval_grid(n, h), Dirichlet("node"), n)
    k = np.arange(1, n + 1)
    np.testing.assert_allclose(vals, (2 - 2 * np.cos(k * np.pi / (n + 1))) / h**2, rtol=1e-12)


def test_face_dirichlet_spectrum():
    # ghost -u across the face: 4/h^2 sin^2(k pi / 2n)
    n, h = 32, 1 / 32
    vals = spectrum(interval_grid(n, h), Dirichlet(), n)
    k = np.arange(1, n + 1)
    np.testing.assert_allclose(vals, 4 / h**2 * np.sin(k * np.pi / (2 * n)) ** 2, rtol=1e-12)


def test_neumann_ground_state_is_constant():
    s = eigenvalues(assemble(interval_grid(50), BCSpec.uniform(Neumann())), 2, vectors=True)
    assert abs(s.values[0]) < 1e-10
    v = s.vectors[:, 0]
    np.testing.assert_allclose(v / v[0], 1.0, atol=1e-10)


def test_robin_zero_is_neumann_entrywise():
    g = Grid(0.1, np.ones((7, 5), bool))
    a = assemble(g, BCSpec.uniform(Robin(0.0))).matrix
    b = assemble(g, BCSpec.uniform(Neumann())).matrix
    assert (a != b).nnz == 0


def test_dirichlet_interval_of_length_pi():
    coarse = spectrum(Grid(math.pi / 256, np.ones(256, bool)), Dirichlet(), 1)[0]
    fine = spectrum(Grid(math.pi / 512, np.ones(512, bool)), Dirichlet(), 1)[0]
    assert abs(fine - 1) < 1e-4
    # second order: Richardson combination is far more accurate
    assert abs((4 * fine - coarse) / 3 - 1) < 1e-9


def test_periodic_box_fourier_modes():
    L, n = 2.0, 32
    g = Grid(L / n, np.ones((n, n), bool))
    s = eigenvalues(assemble(g, BCSpec.periodic(2)), 21)
    ks = [(a, b) for a in range(-4, 5) for b in range(-4, 5)]
    h = L / n
    disc = sorted(4 / h**2 * (math.sin(math.pi * a * h / L) ** 2 + math.sin(math.pi * b * h / L) ** 2) for a, b in ks)
    np.testing.assert_allclose(s.values, disc[:21], rtol=1e-10, atol=1e-10)
    np.testing.assert_array_equal(s.multiplicities, [1] + [4] * 4 + [4] * 4 + [4] * 4 + [8] * 8)
    cont = sorted(4 * math.pi**2 * (a * a + b * b) / L**2 for a, b in ks)
    # second-order truncation: relative error below (pi |k|_max h / L)^2 / 3
    np.testing.assert_allclose(s.values[1:], cont[1:21], rtol=(2 * math.pi * h / L) ** 2 / 3)


def test_group_multiplicities():
    np.testing.assert_array_equal(group_multiplicities([1.0, 1.0 + 1e-12, 2.0, 3.0, 3.0, 3.0]), [2, 2, 1, 3, 3, 3])


GRIDS_2D = [Grid(0.1, np.ones((10, 14), bool)),
            Grid(0.05, ball(2, 0.6).contains(Grid(0.05, np.ones((26, 26), bool), [-0.65, -0.65]).all_centres()).reshape(26, 26), [-0.65, -0.65]),
            Grid(1 / 16, np.ones((16, 8), bool))]


@pytest.mark.parametrize("grid", [interval_grid(64), interval_grid(100, length=3.0)] + GRIDS_2D)
def test_form_ordering(grid):
    N = spectrum(grid, Neumann(), 20)
    R = spectrum(grid, Robin(2.5), 20)
    D = spectrum(grid, Dirichlet(), 20)
    P = spectrum(grid, BCSpec.periodic(grid.d), 20)
    tol = 1e-9 * D.max()
    assert np.all(N <= R + tol) and np.all(R <= D + tol)
    assert np.all(N <= P + tol) and np.all(P <= D + tol)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 20.0), st.floats(0.0, 20.0))
def test_robin_monotone_in_sigma(s1, ds):
    g = GRIDS_2D[0]
    a = spectrum(g, Robin(s1), 12)
    b = spectrum(g, Robin(s1 + ds), 12)
    assert np.all(a <= b + 1e-9 * max(1.0, abs(b).max()))


@pytest.mark.parametrize("bc", [Dirichlet(), Neumann(), Robin(1.3), Dirichlet("node")])
def test_symmetry_and_semidefinite(bc):
    g = GRIDS_2D[1]
    A = assemble(g, BCSpec.uniform(bc)).matrix
    assert (A != A.T).nnz == 0
    assert spectrum(g, bc, 1)[0] >= -1e-10


def test_periodic_symmetric_and_semidefinite():
    A = assemble(GRIDS_2D[0], BCSpec.periodic(2)).matrix
    assert (A != A.T).nnz == 0
    assert np.linalg.eigvalsh(A.toarray())[0] >= -1e-10


def _order(errors, hs):
    return np.polyfit(np.log(hs), np.log(errors), 1)[0]


def test_grid_convergence_order_interval_and_box():
    ns = [16, 32, 64, 128]
    err = [abs(spectrum(interval_grid(n, length=2.0), Dirichlet(), 1)[0] - math.pi**2 / 4) for n in ns]
    assert _order(err, [2 / n for n in ns]) >= 1.9
    err = []
    for n in (8, 16, 32):
        g = Grid(1 / n, np.ones((n, 2 * n), bool))
        err.append(abs(spectrum(g, Dirichlet(), 1)[0] - math.pi**2 * (1 + 0.25)))
    assert _order(err, [1 / 8, 1 / 16, 1 / 32]) >= 1.9


def test_iterative_path_matches_closed_form():
    n = 70
    h = 1 / n
    g = Grid(h, np.ones((n, n), bool))
    s = eigenvalues(assemble(g, BCSpec.uniform(Dirichlet())), 3)
    assert s.metadata["method"] == "shift-invert"
    lam = lambda a: 4 / h**2 * math.sin(a * math.pi / (2 * n)) ** 2
    np.testing.assert_allclose(s.values, [2 * lam(1), lam(1) + lam(2), lam(1) + lam(2)], rtol=1e-9)
    assert np.all(s.residuals <= 1e-8 * assemble(g, BCSpec.uniform(Dirichlet())).norm)


def test_half_interval_reflection_is_even_subset():
    n, h = 40, 1 / 40
    g = interval_grid(n, h)
    mixed = BCSpec({"x-": Neumann()}, Dirichlet())
    r = reflect_extend(g, mixed)
    assert r.grid.size == 2 * n and r.planes == ["x-"]
    m = spectrum(g, mixed, n)
    dd = spectrum(r.grid, r.bc, 2 * n)
    np.testing.assert_allclose(m, dd[0::2], rtol=0, atol=1e-10 * dd.max())


def test_corner_reflection_quadruples_and_is_isometric():
    g = Grid(0.1, np.ones((6, 9), bool))
    mixed = BCSpec({"x-": Neumann(), "y+": Neumann()}, Dirichlet())
    r = reflect_extend(g, mixed)
    assert r.grid.size == 4 * g.size
    J = r.isometry
    np.testing.assert_allclose((J.T @ J).toarray(), np.eye(g.size), atol=1e-15)
    lhs = (J.T @ assemble(r.grid, r.bc).matrix @ J).toarray()
    np.testing.assert_allclose(lhs, assemble(g, mixed).matrix.toarray(), atol=1e-9)
    m = spectrum(g, mixed, 10)
    dd = spectrum(r.grid, r.bc, 60)
    for v in m:
        assert np.min(np.abs(dd - v)) <= 1e-10 * dd.max()


def test_all_dirichlet_reflection_is_identity():
    g = Grid(0.1, np.ones((5, 5), bool))
    r = reflect_extend(g, BCSpec.uniform(Dirichlet()))
    assert r.planes == [] and r.grid.size == g.size
    assert (r.isometry != sp.identity(g.size)).nnz == 0


def test_reflection_rejects_bad_specs():
    g = Grid(0.1, np.ones((5, 5), bool))
    with pytest.raises(ConfigurationError):
        reflect_extend(g, BCSpec({"x-": Neumann(), "x+": Neumann()}, Dirichlet()))
    with pytest.raises(ConfigurationError):
        reflect_extend(g, BCSpec.uniform(Neumann()))
    disk = GRIDS_2D[1]
    with pytest.raises(ConfigurationError):
        reflect_extend(disk, BCSpec({"mask": Neumann()}, Dirichlet()))


def test_grid_and_bc_errors():
    with pytest.raises(ConfigurationError):
        Grid(0.1, np.array([[1, 0, 1]], bool))
    with pytest.raises(ConfigurationError):
        Grid(0.1, np.array([[1, 1, 0, 1, 1]], bool))
    with pytest.raises(ConfigurationError):
        Robin(float("inf"))
    with pytest.raises(ConfigurationError):
        Grid.box([0], [1.05], 0.1)
    with pytest.raises(ConfigurationError):
        eigenvalues(assemble(interval_grid(4), BCSpec.uniform(Dirichlet())), 0)


def test_bcspec_round_trip():
    spec = BCSpec({"x-": Robin(-0.5), "y+": Neumann()}, Dirichlet("node"))
    assert BCSpec.from_dict(spec.to_dict()) == spec


def gaussian_grid(h=1 / 16, side=4.0):
    n = int(side / h)
    g = Grid(h, np.ones((n, n), bool), [-side / 2, -side / 2])
    x = g.centres()
    psi = np.exp(-np.sum(x * x, 1) / 0.5)
    return g, psi / math.sqrt(np.sum(psi**2) * g.cell_volume)


def test_ims_trivial_partition():
    g, psi = gaussian_grid()
    r = ims_defect(None, g, 8.0, SlidingFrame.identity(2), psi)
    assert r["defect"] == 0.0 and r["localized"] == r["energy"]


def test_ims_identity_residual_is_small():
    g, psi = gaussian_grid()
    l = 8.0
    frame = SlidingFrame(np.array([0.13, 0.41]), np.array([[0.8, -0.6], [0.6, 0.8]]))
    r = ims_defect(PartitionOfUnity(2, 1 / l), g, l, frame, psi)
    assert r["patches"] > 1
    assert r["residual"] <= 10 * g.h


def test_metric_bound_box_chart_is_equality():
    ch = boundary_chart(box([2.0, 2.0]), 0, width=0.5)
    r = metric_bound_check(ch, 1 / 32, samples=5)
    np.testing.assert_allclose(r["ratios"], 1.0, rtol=1e-10)


def test_metric_bound_disk_chart_holds():
    ch = boundary_chart(ball(2, 1.0), 0.7, width=0.3)
    r = metric_bound_check(ch, 1 / 64, samples=20)
    assert r["worst_ratio"] >= ch.C
    assert r["worst_margin"] >= 0
