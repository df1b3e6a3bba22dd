import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bclab.errors import BoseCondensationError, ConfigurationError
from bclab.statmech import (NeutralLine, SpeciesSpectrum, canonical_Z, canonical_table, electrons,
                            free_energy_density, grand_pressure, ground_state_grand, legendre_check,
                            legendre_gap, log_grand_partition, nuclei, one_mode_gap)


def fock_log_xi(eps, g_s, beta, mu):
    """Exhaustive sum over occupation patterns of g_s * len(eps) fermionic states."""
    states = np.repeat(eps, g_s)
    total = 0.0
    for occ in itertools.product((0, 1), repeat=len(states)):
        occ = np.array(occ)
        total += math.exp(-beta * float(occ @ (states - mu)))
    return math.log(total)


def fermi_Z_bruteforce(states, N, beta):
    return sum(math.exp(-beta * sum(c)) for c in itertools.combinations(states, N))


def test_empty_spectra_give_zero_pressure():
    e = electrons([])
    r = grand_pressure(e, nuclei([], 2.0), 1.0, (0.3, -1.0), 5.0)
    assert r.value == 0.0


def test_single_fermion_mode():
    lx, _ = log_grand_partition(electrons([1.7]), None, 2.0, (0.5, 0.0))
    assert lx == pytest.approx(2 * math.log1p(math.exp(-2.0 * 1.2)), rel=1e-15)


def test_five_fermion_modes_against_fock_enumeration():
    eps = np.array([0.3, 0.9, 1.1, 2.0, 3.5])
    lx, _ = log_grand_partition(electrons(eps), None, 1.3, (1.0, 0.0))
    assert lx == pytest.approx(fock_log_xi(eps, 2, 1.3, 1.0), abs=1e-12)


def test_bose_threshold_is_enforced():
    with pytest.raises(BoseCondensationError):
        log_grand_partition(None, nuclei([1.0, 2.0], 1.0), 1.0, (0.0, 1.0))
    with pytest.raises(BoseCondensationError):
        log_grand_partition(None, nuclei([1.0, 2.0], 1.0), 1.0, (0.0, 1.0 - 1e-7))
    log_grand_partition(None, nuclei([1.0, 2.0], 1.0), 1.0, (0.0, 1.0 - 1e-5))


def test_truncation_bound_is_declared():
    r = grand_pressure(electrons(np.arange(1, 60.0)), None, 1.0, (0.0, 0.0), 1.0)
    assert r.truncation_bound == pytest.approx(math.exp(-59))
    assert r.extra["truncation_ok"]


def test_canonical_small_cases():
    s = SpeciesSpectrum([0.5, 1.0, 1.5, 3.0], "fermi", 1)
    assert canonical_Z(s, 0, 1.0).value == 1.0
    assert canonical_Z(s, 1, 1.0).value == pytest.approx(sum(math.exp(-x) for x in [0.5, 1, 1.5, 3]), rel=1e-14)
    assert canonical_Z(s, 2, 0.7).value == pytest.approx(fermi_Z_bruteforce([0.5, 1.0, 1.5, 3.0], 2, 0.7), rel=1e-12)
    z = canonical_Z(s, 5, 1.0)
    assert not z.feasible and z.value == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=6), st.integers(0, 4),
       st.sampled_from([1, 2]), st.floats(0.2, 3.0))
def test_fermi_canonical_matches_enumeration(eps, N, g_s, beta):
    s = SpeciesSpectrum(eps, "fermi", g_s)
    states = list(np.repeat(s.energies, g_s))
    if N > len(states):
        assert not canonical_Z(s, N, beta).feasible
        return
    ref = fermi_Z_bruteforce(states, N, beta)
    for method in ("dp", "recursion"):
        got = canonical_Z(s, N, beta, method)
        if method == "recursion" and not got.feasible:
            continue  # alternating recursion may cancel below resolution
        assert got.value == pytest.approx(ref, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 4.0), min_size=1, max_size=5), st.integers(0, 5), st.floats(0.3, 2.0))
def test_bose_canonical_matches_enumeration(eps, N, beta):
    s = SpeciesSpectrum(eps, "bose", 1)
    ref = sum(math.exp(-beta * sum(c)) for c in itertools.combinations_with_replacement(s.energies, N))
    assert canonical_Z(s, N, beta).value == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("species", ["fermi", "bose"])
def test_canonical_grand_consistency(species):
    eps = np.array([0.2, 0.5, 0.9, 1.4, 2.2, 3.0])
    s = SpeciesSpectrum(eps, species, 2 if species == "fermi" else 1)
    beta, mu = 1.1, 0.1
    Nmax = 12 if species == "fermi" else 400  # Bose tail ~ exp(-beta (eps0 - mu) N)
    logZ = canonical_table(s, Nmax, beta)
    total = math.fsum(math.exp(lz + beta * mu * n) for n, lz in enumerate(logZ) if np.isfinite(lz))
    e, nuc = (s, None) if species == "fermi" else (None, s)
    lx, _ = log_grand_partition(e, nuc, beta, (mu, mu))
    assert math.log(total) == pytest.approx(lx, abs=1e-10)


def test_free_energy_neutrality():
    e = electrons(np.arange(1, 20.0))
    nuc = nuclei(np.arange(1, 20.0), 5.0)
    assert free_energy_density(e, nuc, 0, 2, 1.0, 3.0).value == 0.0
    r = free_energy_density(e, nuc, 3, 2, 1.0, 3.0)
    assert r.N == (3, 6)
    ref = -(canonical_Z(e, 3, 1.0).log_value + canonical_Z(nuc, 6, 1.0).log_value) / 3.0
    assert r.value == pytest.approx(ref)
    with pytest.raises(ConfigurationError):
        free_energy_density(e, nuc, 1, Fraction(1, 2), 1.0, 3.0)


def test_neutral_line_arithmetic():
    line = NeutralLine(Fraction(3, 2))
    assert line.step == 2 and line.partner(4) == 6
    assert line.densities(4, 2.0) == (2.0, 3.0)
    with pytest.raises(ConfigurationError):
        NeutralLine(0)


def test_ground_state_vacuum_and_enumeration():
    eps = np.array([0.1, 0.4, 0.7, 1.3, 1.6, 2.0])
    e = electrons(eps)
    assert ground_state_grand(e, None, (-1.0, 0.0)).value == 0.0
    mu = 1.0
    got = ground_state_grand(e, None, (mu, 0.0)).value
    assert got == pytest.approx(2 * np.sum(eps[:3] - mu), rel=1e-14)
    states = np.repeat(eps, 2)
    brute = min(float(np.array(o) @ (states - mu)) for o in itertools.product((0, 1), repeat=12))
    assert got == pytest.approx(brute, rel=1e-14)


def test_ground_state_bose_runaway_is_flagged():
    r = ground_state_grand(None, nuclei([1.0], 1.0), (0.0, 1.5))
    assert r.value == -math.inf and r.extra["unbounded"]


def test_ground_state_concave_nonincreasing():
    e = electrons(np.sort(np.random.default_rng(0).uniform(0, 5, 15)))
    mus = np.linspace(-1, 6, 71)
    G = np.array([ground_state_grand(e, None, (m, 0.0)).value for m in mus])
    assert np.all(np.diff(G) <= 1e-12)
    assert np.all(np.diff(G, 2) <= 1e-10)


def test_pressure_convex_and_increasing_in_mu():
    e = electrons(np.arange(1, 40.0) ** 1.5)
    nuc = nuclei(np.arange(1, 40.0), 3.0)
    mus = np.linspace(-2, 4, 61)
    lx = np.array([log_grand_partition(e, nuc, 0.8, (m, 0.1))[0] for m in mus])
    assert np.all(lx >= 0)
    assert np.all(np.diff(lx) >= 0)
    assert np.all(np.diff(lx, 2) >= -1e-10)


def test_monotone_under_spectral_ordering():
    rng = np.random.default_rng(3)
    low = np.sort(rng.uniform(0, 3, 20))
    high = low + rng.uniform(0, 1, 20)
    for mu in (-0.5, 1.0, 2.5):
        assert log_grand_partition(electrons(high), None, 1.0, (mu, 0))[0] <= log_grand_partition(electrons(low), None, 1.0, (mu, 0))[0]
        assert ground_state_grand(electrons(high), None, (mu, 0)).value >= ground_state_grand(electrons(low), None, (mu, 0)).value


@pytest.mark.parametrize("mu", [-2.0, 0.0, 0.7, 3.0])
def test_one_mode_gap_closed_form(mu):
    eps, beta, vol = 0.7, 1.5, 2.0
    g = legendre_gap(electrons([eps]), None, beta, (mu, 0.0), vol, mode="free")
    x = math.exp(beta * (mu - eps))
    assert g["gap"] == pytest.approx(one_mode_gap(x, beta, vol), abs=1e-10)
    assert g["gap"] >= 0


def test_one_mode_gap_decreases_with_volume():
    gaps = [one_mode_gap(1.0, 1.0, v) for v in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_legendre_optimizer_vanishes_at_very_negative_mu():
    ev = (np.arange(1, 60) * math.pi / 8) ** 2
    g = legendre_gap(electrons(ev), nuclei(ev, 10.0), 1.0, (-1e4, -1e4), 8.0)
    assert g["optimizer"] == (0.0, 0.0)


def test_legendre_extrapolated_gap_vanishes():
    fam = []
    for L in (8, 16, 32, 64, 128):
        ev = (np.arange(1, 400) * math.pi / L) ** 2
        fam.append((electrons(ev), nuclei(ev, 10.0), L))
    r = legendre_check(1.0, [(2.0, -1.0), (5.0, -1.0)], fam)
    gaps = [row["worst_gap"] for row in r["rows"]]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert r["relative_extrapolated_gap"] <= 0.05
