import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bclab.errors import ConfigurationError
from bclab.geometry import box, interval
from bclab.harness import (ConvergenceTable, SweepSpec, ball_dirichlet_levels, convexity_check,
                           counterexample_run, fermi_energy_density, fit_surface,
                           free_energy_sweep, ground_state_sweep, interval_spectrum,
                           mean_inverse_distance, neutral_sequence, ordering_check, parse_bc,
                           pressure_sweep)
from bclab.statmech import NeutralLine

SCALES = [8, 16, 32, 64]
BCS = ["dirichlet", "neumann", "robin:-1", "periodic"]


@pytest.fixture(scope="module")
def p_table():
    return pressure_sweep(SweepSpec(interval(1.0), SCALES, BCS + ["robin:1"], 1.0, mu=(0.0, -1.0)))


@pytest.fixture(scope="module")
def g_table():
    return ground_state_sweep(SweepSpec(interval(1.0), SCALES, BCS + ["robin:1"], 1.0, mu=(5.0, -1.0)))


# -- spec validation -------------------------------------------------------------


def test_spec_needs_three_scales():
    with pytest.raises(ConfigurationError):
        SweepSpec(interval(1.0), [8, 16], BCS, 1.0, mu=(0, -1))


def test_exact_resolution_only_for_intervals():
    with pytest.raises(ConfigurationError):
        SweepSpec(box([1, 1]), SCALES, BCS, 1.0, mu=(0, -1))
    SweepSpec(box([1, 1]), SCALES, BCS, 1.0, mu=(0, -1), resolution=4)


@pytest.mark.parametrize("label", ["robin", "robin:x", "wall", ""])
def test_bad_boundary_labels(label):
    with pytest.raises(ConfigurationError):
        parse_bc(label)


def test_exact_interval_spectra():
    L = 2.0
    d = interval_spectrum(L, "dirichlet", 100.0)
    np.testing.assert_allclose(d[:5], (np.arange(1, 6) * math.pi / L) ** 2, rtol=1e-15)
    n = interval_spectrum(L, "neumann", 100.0)
    assert n[0] == 0.0
    p = interval_spectrum(L, "periodic", 100.0)
    np.testing.assert_allclose(p[:5], [0, *(2 * [(2 * math.pi / L) ** 2]), *(2 * [(4 * math.pi / L) ** 2])])
    for s in (d, n, p):
        assert s.max() >= 100.0


# -- pressure -------------------------------------------------------------------


def test_neumann_dirichlet_gap_decays_like_inverse_length(p_table):
    d = p_table.difference("neumann", "dirichlet")
    assert d["monotone"]
    assert d["residual"] <= 0.10


def test_pressure_limits_agree_across_conditions(p_table):
    lim = {bc: p_table.limits[bc] for bc in BCS}
    se = max(p_table.fits[bc].se for bc in BCS)
    assert max(lim.values()) - min(lim.values()) <= 3 * se
    assert p_table.relative_spread <= 0.01


def test_pressure_limit_matches_bulk_integral(p_table):
    # bulk ideal-gas pressure on the line: (1/pi) int_0^inf ln(1 + e^{-k^2}) dk  (+ Bose term, M = 10)
    from scipy.integrate import quad
    fermi = quad(lambda k: math.log1p(math.exp(-k * k)), 0, np.inf)[0] / math.pi * 2
    bose = -quad(lambda k: math.log1p(-math.exp(-k * k / 10 - 1)), 0, np.inf)[0] / math.pi
    assert p_table.limits["dirichlet"] == pytest.approx(fermi + bose, rel=1e-4)


def test_positive_robin_sits_between_neumann_and_dirichlet(p_table, g_table):
    assert ordering_check(p_table, "dirichlet", "robin:1", "neumann")["holds"]
    assert ordering_check(g_table, "neumann", "robin:1", "dirichlet")["holds"]


def test_adding_second_order_term_shrinks_spread(p_table):
    two = p_table.spread
    three = ConvergenceTable("p", p_table.spec, p_table.rows).fit(3).spread
    assert three < two


def test_pressure_convex_in_each_chemical_potential():
    spec = SweepSpec(interval(1.0), SCALES, ["dirichlet"], 1.0, mu=(0.0, -1.0))
    for species, mus in ((0, np.linspace(-3, 3, 13)), (1, np.linspace(-3, -0.5, 11))):
        for L in (8, 32):
            r = convexity_check(spec, mus, L, "dirichlet", species)
            assert r["min"] >= -1e-10


def test_bose_threshold_cells_are_flagged_and_skipped():
    spec = SweepSpec(interval(1.0), SCALES, ["dirichlet", "neumann"], 1.0, mu=(0.0, 1e-3))
    t = pressure_sweep(spec)
    flagged = {(r["bc"], r["L"]) for r in t.rows if r["flagged"]}
    # lowest nuclear level (pi/L)^2 / M drops below mu_k from L = 32 on
    assert flagged == {("dirichlet", 32.0), ("dirichlet", 64.0)} | {("neumann", L) for L in map(float, SCALES)}
    assert t.fits["dirichlet"].points == 2
    assert "neumann" not in t.fits


def test_worker_count_does_not_change_rows():
    kw = dict(base=interval(1.0), scales=SCALES, bcs=BCS, beta=1.0, mu=(0.0, -1.0))
    a = pressure_sweep(SweepSpec(**kw, workers=1))
    b = pressure_sweep(SweepSpec(**kw, workers=4))
    assert a.rows == b.rows
    assert a.to_csv() == b.to_csv()


def test_discrete_two_dimensional_sweep_runs():
    spec = SweepSpec(box([1, 1]), [3, 4, 6], ["dirichlet", "neumann"], 1.0, mu=(0.0, -1.0), resolution=4)
    t = pressure_sweep(spec)
    assert set(t.fits) == {"dirichlet", "neumann"}
    assert ordering_check(t, "dirichlet", "dirichlet", "neumann")["holds"]


# -- fits -----------------------------------------------------------------------


def test_fit_recovers_exact_model():
    L = np.array([8.0, 16, 32, 64, 128])
    f = fit_surface(L, 2.0 - 3.0 / L + 5.0 / L**2, 3)
    assert f.p_inf == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(f.coeffs, [2, -3, 5], atol=1e-9)
    assert f.residual < 1e-12


def test_fit_error_covers_holdout_shift():
    L = np.array([8.0, 16, 32, 64])
    y = 1.0 + 1.0 / L + 4.0 / L**2
    f = fit_surface(L, y, 2)
    assert f.se >= f.holdout > 0
    assert abs(f.p_inf - 1.0) <= 3 * f.se


# -- ground state ---------------------------------------------------------------


def test_ground_state_vanishes_below_spectrum():
    spec = SweepSpec(interval(1.0), SCALES, BCS, 1.0, mu=(-2.0, -1.0))  # robin:-1 has levels near -1
    t = ground_state_sweep(spec)
    assert all(r["value"] == 0.0 for r in t.rows)


def test_ground_state_neumann_below_dirichlet(g_table):
    _, gn = g_table.series("neumann")
    _, gd = g_table.series("dirichlet")
    assert np.all(gn <= gd)


def test_ground_state_limits_agree(g_table):
    lim = [g_table.limits[bc] for bc in BCS]
    se = max(g_table.fits[bc].se for bc in BCS)
    assert max(lim) - min(lim) <= 3 * se
    # bulk value: -(2/pi) * (2/3) mu^{3/2} for spin-1/2 electrons
    assert g_table.limits["dirichlet"] == pytest.approx(-4 / (3 * math.pi) * 5**1.5, rel=5e-3)


# -- free energy ----------------------------------------------------------------


def test_free_energy_limits_agree():
    spec = SweepSpec(interval(1.0), SCALES, BCS, 1.0, rho=0.5)
    t = free_energy_sweep(spec)
    assert t.agreement(3.0)
    assert t.relative_spread <= 0.01
    for r in t.rows:
        n, k = r["N"]
        assert n == k == round(0.5 * r["volume"])


def test_free_energy_limit_convex_in_density():
    rhos = 0.25 * np.arange(1, 9)
    f = [free_energy_sweep(SweepSpec(interval(1.0), SCALES, ["dirichlet"], 1.0, rho=r)).limits["dirichlet"]
         for r in rhos]
    assert np.min(np.diff(f, 2)) >= 0


# -- neutral sequences ----------------------------------------------------------


def test_neutral_sequence_examples():
    assert neutral_sequence(1, [100.0], 0.5) == [(50, 50)]
    for n, k in neutral_sequence(Fraction(3, 2), np.linspace(1, 200, 57), 0.37):
        assert n % 2 == 0 and k == 3 * n // 2
    with pytest.raises(ConfigurationError):
        neutral_sequence(1, [10.0], -0.1)


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0, 5), st.floats(0.5, 1e4))
def test_neutral_rounding_bound(p, q, rho, V):
    z = Fraction(p, q)
    line = NeutralLine(z)
    (n, k), = neutral_sequence(line, [V], rho)
    assert k == z * n
    assert abs(n / V - rho) <= line.step * (1 + z) / V


# -- shrinking ball ---------------------------------------------------------------


def test_mean_inverse_distance_monte_carlo():
    rng = np.random.default_rng(11)
    r, total, n = 0.7, 0.0, 10_000_000
    for _ in range(10):
        m = n // 10
        x = rng.normal(size=(m, 3))
        y = rng.normal(size=(m, 3))
        x *= (r * rng.random(m) ** (1 / 3) / np.linalg.norm(x, axis=1))[:, None]
        y *= (r * rng.random(m) ** (1 / 3) / np.linalg.norm(y, axis=1))[:, None]
        total += np.sum(1 / np.linalg.norm(x - y, axis=1))
    assert total / n == pytest.approx(mean_inverse_distance(r), rel=2e-3)


@pytest.mark.parametrize("l", [10.0, 100.0])
def test_shrinking_ball_term_closed_form(l):
    vol = 4 * math.pi / 3 * (l**3 + l**-12)
    t2 = -mean_inverse_distance(l**-4) / vol
    assert t2 == pytest.approx(-1.2 * l**4 / vol, rel=1e-14)
    assert t2 / (-9 / (10 * math.pi) * l) == pytest.approx(1.0, rel=1e-12)


def test_ball_dirichlet_levels():
    lev, mult = ball_dirichlet_levels(1.0, 6.3)
    np.testing.assert_allclose(np.sqrt(lev), [math.pi, 4.493409457909064, 5.763459196894550, 2 * math.pi],
                               rtol=1e-12)
    assert mult.tolist() == [1, 3, 5, 1]


def test_counterexample_diverges():
    r = counterexample_run([6, 8, 12, 16], 0.05)
    assert r["slope_error"] <= 0.05
    assert r["total_decreasing"]
    t1 = [row["term1"] for row in r["rows"]]
    assert max(t1) < 10 * r["term1_reference"]
    with pytest.raises(ConfigurationError):
        counterexample_run([1.0, 4.0], 0.05)


def test_fermi_energy_density():
    # g_s = 1: rho = kf^3/(6 pi^2), e = kf^5/(10 pi^2)
    kf = 1.3
    assert fermi_energy_density(kf**3 / (6 * math.pi**2), 1) == pytest.approx(kf**5 / (10 * math.pi**2))


# -- artifacts --------------------------------------------------------------------


def test_table_serialisations(p_table):
    csv = p_table.to_csv().splitlines()
    assert csv[0] == "kind,bc,L,volume,value,flagged,truncation_bound,modes"
    assert len(csv) == 1 + len(p_table.rows)
    d = p_table.to_dict()
    assert set(d["fits"]) == set(p_table.spec.bcs)
    assert "non-interacting" in d["note"]
    svg = p_table.to_svg("2020-01-01T00:00:00")
    assert svg.startswith("<svg") and "2020-01-01" in svg
    assert "generated" not in p_table.to_svg(None)
