"""Transform layer: lattice densities, tilts, batch-total measures, correlations."""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy import stats

from catindiff.errors import DomainError, GridError
from catindiff.grids import (
    DensityGrid,
    GridSpec,
    batch_tail_bound,
    discretize_severity,
    expectation_against,
    suggest_z_max,
    thinned_mixture_density,
    tilt,
    trapezoid_weights,
)
from catindiff.model import (
    ClaimsModel,
    GammaSeverity,
    ShiftedPoissonCats,
    TabulatedCats,
    count_pgf,
    severity_exp_moment,
)

GAMMA = GammaSeverity(10.0, 5000.0)
ETA = 1e-6
SC = ClaimsModel(100.0, 0.0, GAMMA, None, ETA, 1.0)
CC = ClaimsModel(69.0, 1.0, GAMMA, ShiftedPoissonCats(2, 40.0), ETA, 1.0)

# production lattices for the two calibrations
ZG_SC = GridSpec(2.8e5, 16384)
ZG_CC = GridSpec(5.5e6, 16384)


@pytest.fixture(scope="module")
def cc_lattice():
    mu = discretize_severity(GAMMA, ZG_CC)
    return mu, tilt(mu, ETA)


@pytest.fixture(scope="module")
def sc_lattice():
    mu = discretize_severity(GAMMA, ZG_SC)
    return mu, tilt(mu, ETA)


# --- lattice and discretization ---


def test_grid_spec_rejects_bad_point_counts():
    with pytest.raises(DomainError):
        GridSpec(1e5, 255)
    with pytest.raises(DomainError):
        GridSpec(1e5, 1000)
    with pytest.raises(DomainError):
        GridSpec(-1.0, 256)


def test_trapezoid_weights_sum_to_span():
    w = trapezoid_weights(101, 0.5)
    assert w.sum() == pytest.approx(100 * 0.5, rel=1e-15)
    assert w[0] == w[-1] == 0.25


def test_discretized_gamma_integrates_to_one():
    mu = discretize_severity(GAMMA, GridSpec(2e6, 16384))
    assert 1.0 - 1e-8 <= mu.mass() <= 1.0 + 1e-12


def test_discretize_rejects_short_lattice():
    # 0.999 quantile of the severity sits near 1.1e5; mass beyond 9e4 far
    # exceeds the tail tolerance
    with pytest.raises(GridError):
        discretize_severity(GAMMA, GridSpec(9e4, 1024))


def test_discretize_rejects_unbounded_origin():
    with pytest.raises(GridError):
        discretize_severity(GammaSeverity(0.5, 5000.0), GridSpec(3e5, 16384))


def test_exponential_severity_origin_value():
    mu = discretize_severity(GammaSeverity(1.0, 40.0), GridSpec(4000.0, 4096))
    assert mu.values[0] == pytest.approx(1.0 / 40.0, rel=1e-12)


# --- tilt ---


def test_tilt_mass_matches_exponential_moment(cc_lattice):
    mu, mu_t = cc_lattice
    assert mu_t.mass() == pytest.approx(severity_exp_moment(CC, ETA), rel=1e-6)


def test_tilt_zero_is_identity(cc_lattice):
    mu, _ = cc_lattice
    np.testing.assert_array_equal(tilt(mu, 0.0).values, mu.values)


def test_tilt_rejects_overflowing_exponent(cc_lattice):
    mu, _ = cc_lattice
    with pytest.raises(OverflowError):
        tilt(mu, 700.0 / ZG_CC.z_max)


def test_tilt_rejects_non_integrable_tilt():
    # eta scale >= 1: exp(eta z) grows faster than the gamma tail decays,
    # so the tilted mass piles up at the lattice edge
    mu = discretize_severity(GAMMA, GridSpec(3e5, 16384))
    with pytest.raises(GridError):
        tilt(mu, 2.1e-4)


# --- batch-total measure ---


def test_mixture_integral_identity_on_share_grid(cc_lattice):
    # int mu_xi = G(xi (E e^{eta Y} - 1) + 1) on 21 shares
    mu, mu_t = cc_lattice
    m_eta = severity_exp_moment(CC, ETA)
    for xi in np.linspace(0.0, 1.0, 21):
        got = thinned_mixture_density(CC, mu, mu_t, float(xi)).mass()
        want = float(np.real(count_pgf(CC, xi * (m_eta - 1.0) + 1.0)))
        assert got == pytest.approx(want, rel=1e-6)


def test_mixture_at_zero_share_is_plain_compound(cc_lattice):
    mu, mu_t = cc_lattice
    assert thinned_mixture_density(CC, mu, mu_t, 0.0).mass() == pytest.approx(1.0, rel=1e-6)


def test_mixture_at_full_share_hits_tilted_pgf(cc_lattice):
    mu, mu_t = cc_lattice
    m_eta = severity_exp_moment(CC, ETA)
    got = thinned_mixture_density(CC, mu, mu_t, 1.0).mass()
    assert got == pytest.approx(float(np.real(count_pgf(CC, m_eta))), rel=1e-6)


def test_single_claim_batches_collapse_to_the_blend(sc_lattice):
    # G(s) = s: the Fourier round trip must return xi mu_tilde + (1 - xi) mu
    mu, mu_t = sc_lattice
    for xi in (0.0, 0.4, 1.0):
        got = thinned_mixture_density(SC, mu, mu_t, xi).values
        blend = xi * mu_t.values + (1.0 - xi) * mu.values
        np.testing.assert_allclose(got, blend, atol=1e-18)


def test_mixture_rejects_share_outside_unit_interval(cc_lattice):
    mu, mu_t = cc_lattice
    with pytest.raises(DomainError):
        thinned_mixture_density(CC, mu, mu_t, 1.2)


def test_mixture_rejects_mismatched_lattices(cc_lattice):
    mu, _ = cc_lattice
    other = tilt(discretize_severity(GAMMA, GridSpec(5.5e6, 8192)), ETA)
    with pytest.raises(DomainError):
        thinned_mixture_density(CC, mu, other, 0.5)


def test_mixture_stays_nonnegative(cc_lattice):
    mu, mu_t = cc_lattice
    dens = thinned_mixture_density(CC, mu, mu_t, 0.5)
    assert np.all(dens.values >= 0.0)


# --- correlation against test functions ---


def test_expectation_of_one_is_the_measure_mass(cc_lattice):
    mu, mu_t = cc_lattice
    mux = thinned_mixture_density(CC, mu, mu_t, 0.6)
    ones = np.ones(ZG_CC.n_points + 50)
    out = expectation_against(ones, mux)
    assert out.shape == (51,)
    np.testing.assert_allclose(out, mux.mass(), rtol=1e-12)


def test_expectation_of_zero_vanishes(cc_lattice):
    mu, mu_t = cc_lattice
    mux = thinned_mixture_density(CC, mu, mu_t, 0.3)
    out = expectation_against(np.zeros(ZG_CC.n_points + 10), mux)
    np.testing.assert_allclose(out, 0.0, atol=1e-20)


def test_expectation_is_linear(cc_lattice):
    mu, mu_t = cc_lattice
    mux = thinned_mixture_density(CC, mu, mu_t, 0.5)
    rng = np.random.default_rng(7)
    s1 = rng.random(ZG_CC.n_points + 32)
    s2 = rng.random(ZG_CC.n_points + 32)
    lhs = expectation_against(2.0 * s1 - 3.0 * s2, mux)
    rhs = 2.0 * expectation_against(s1, mux) - 3.0 * expectation_against(s2, mux)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-13)


def test_expectation_needs_a_full_lattice_span(cc_lattice):
    mu, mu_t = cc_lattice
    mux = thinned_mixture_density(CC, mu, mu_t, 0.5)
    with pytest.raises(DomainError):
        expectation_against(np.ones(100), mux)


def test_expectation_matches_subset_enumeration():
    # batches of one or two claims; thinning enumerated subset by subset and
    # integrated with tensor Gauss-Legendre quadrature
    law = TabulatedCats(2, np.array([1.0]))
    model = ClaimsModel(3.0, 1.0, GAMMA, law, ETA, 1.0)
    grid = GridSpec(1.2e6, 8192)
    mu = discretize_severity(GAMMA, grid)
    mu_t = tilt(mu, ETA)
    xi = 0.5
    mux = thinned_mixture_density(model, mu, mu_t, xi)
    sigma = lambda z: np.exp(-z / 1e5)
    got = float(expectation_against(sigma(grid.nodes), mux)[0])

    xg, wg = leggauss(400)
    y = 0.5 * 4e5 * (xg + 1.0)
    w = 0.5 * 4e5 * wg * stats.gamma.pdf(y, GAMMA.shape, scale=GAMMA.scale)
    e1 = float(np.sum(w * sigma(y)))
    e1t = float(np.sum(w * sigma(y) * np.exp(ETA * y)))
    y1, y2 = np.meshgrid(y, y, indexing="ij")
    ww = np.outer(w, w)
    s12 = sigma(y1 + y2)
    e2_none = float(np.sum(ww * s12))
    e2_one = float(np.sum(ww * s12 * np.exp(ETA * y1)))
    e2_both = float(np.sum(ww * s12 * np.exp(ETA * (y1 + y2))))
    a1, a2 = 0.75, 0.25
    oracle = a1 * ((1 - xi) * e1 + xi * e1t) + a2 * (
        (1 - xi) ** 2 * e2_none + 2 * xi * (1 - xi) * e2_one + xi**2 * e2_both
    )
    assert got == pytest.approx(oracle, rel=1e-6)


def test_share_map_is_smooth(cc_lattice):
    # centered differences of xi -> int sigma mu_xi shrink like h^2
    mu, mu_t = cc_lattice
    sig = np.exp(-ZG_CC.nodes / 1e6)

    def f(x):
        return float(expectation_against(sig, thinned_mixture_density(CC, mu, mu_t, x))[0])

    diffs = []
    for h in (0.05, 0.025):
        diffs.append((f(0.5 + h) - f(0.5 - h)) / (2.0 * h))
    gap = abs(diffs[0] - diffs[1])
    assert gap < 1e-4
    third = abs((f(0.5 + 0.0125) - f(0.5 - 0.0125)) / 0.025 - diffs[1])
    assert third < 0.3 * gap + 1e-12


# --- tail control ---


def test_batch_tail_bound_frozen_values():
    assert float(batch_tail_bound(CC, 5.5e6)) == pytest.approx(1.497591511593251e-17, rel=1e-6)
    assert float(batch_tail_bound(SC, 2.8e5)) < 1e-12


def test_batch_tail_bound_is_a_decreasing_probability_bound():
    z = np.array([1e6, 2e6, 4e6, 5.5e6])
    b = batch_tail_bound(CC, z)
    assert np.all(b <= 1.0)
    assert np.all(np.diff(b) < 0)


def test_suggest_z_max_frozen_values():
    assert suggest_z_max(SC, 1e-12) == pytest.approx(273033.72438237077, rel=1e-6)
    assert suggest_z_max(CC, 1e-12) == pytest.approx(4811138.48045102, rel=1e-6)


def test_suggest_z_max_bound_holds_at_the_suggestion():
    z = suggest_z_max(CC, 1e-10)
    assert float(batch_tail_bound(CC, z)) <= 1e-10
    assert float(batch_tail_bound(CC, 0.99 * z)) > 1e-10


def test_suggest_z_max_rejects_dead_model():
    dead = ClaimsModel(0.0, 0.0, GAMMA, None, ETA, 1.0)
    with pytest.raises(DomainError):
        suggest_z_max(dead)
