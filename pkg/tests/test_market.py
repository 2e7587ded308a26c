"""Market layer: demand curves, loadings, premium income."""

import numpy as np
import pytest

from catindiff.errors import DomainError
from catindiff.market import LinearDemand, MarketModel, TabulatedDemand

M = 1e4


def linear_market(a=500.0, m=2.0):
    return MarketModel(LinearDemand(M, m), a)


def tabulated_market(a=500.0, m=2.0, n=41):
    theta = np.linspace(0.0, m, n)
    return MarketModel(TabulatedDemand(theta, M * (1.0 - theta / m)), a)


def test_linear_loading_boundaries():
    mkt = linear_market()
    assert float(mkt.loading_for_share(1.0)) == 0.0
    assert float(mkt.loading_for_share(0.0)) == 2.0
    assert float(mkt.loading_for_share(0.5)) == pytest.approx(1.0, rel=1e-15)


def test_loading_is_the_demand_inverse():
    # d(theta(xi)) = xi M within interpolation tolerance
    mkt = linear_market()
    xi = np.linspace(0.0, 1.0, 101)
    back = mkt.demand.share(mkt.loading_for_share(xi))
    np.testing.assert_allclose(back, xi, atol=1e-9)


def test_demand_saturates_outside_the_loading_range():
    dem = LinearDemand(M, 2.0)
    assert float(dem.share(-0.5)) == 1.0
    assert float(dem.share(2.0)) == 0.0
    assert float(dem.share(5.0)) == 0.0


def test_loading_rejects_shares_outside_unit_interval():
    mkt = linear_market()
    with pytest.raises(DomainError):
        mkt.loading_for_share(-0.01)
    with pytest.raises(DomainError):
        mkt.loading_for_share(1.01)


def test_premium_income_zero_at_zero_share():
    assert float(linear_market().premium_income(0.0)) == 0.0


def test_premium_income_full_market_is_aggregate_fair_premium():
    # theta(1) = 0, so q(1) = a M exactly
    mkt = linear_market()
    assert float(mkt.premium_income(1.0)) == pytest.approx(500.0 * M, rel=1e-15)


def test_premium_income_midpoint():
    # xi = 1/2, theta = 1: q = 0.5 * aM * 2 = aM
    mkt = linear_market()
    assert float(mkt.premium_income(0.5)) == pytest.approx(500.0 * M, rel=1e-15)


def test_premium_income_is_continuous_on_a_grid():
    mkt = linear_market()
    xi = np.linspace(0.0, 1.0, 4001)
    q = mkt.premium_income(xi)
    # modulus of continuity of a quadratic on [0,1]
    assert np.max(np.abs(np.diff(q))) < 3.0 * 500.0 * M / 4000.0


@pytest.mark.parametrize(
    "a,expected",
    [
        (500.0, 5625000.0),  # single-claim calibration
        (555.0, 6243750.0),  # clustered calibration
    ],
)
def test_sup_norm_q_closed_form(a, expected):
    # max of xi a M (1 + 2(1 - xi)) sits at xi = 3/4 with value (9/8) a M
    # the value is resolvable to machine precision; the argmax of a parabola
    # only to sqrt(eps) in float arithmetic, whatever the bracket width
    sup, arg = linear_market(a).sup_norm_q()
    assert sup == pytest.approx(expected, rel=1e-12)
    assert arg == pytest.approx(0.75, abs=1e-6)


def test_sup_norm_q_degenerate_premium():
    sup, _ = linear_market(0.0).sup_norm_q()
    assert sup == 0.0


def test_tabulated_demand_matches_linear_samples():
    lin = linear_market()
    tab = tabulated_market()
    xi = np.linspace(0.0, 1.0, 201)
    np.testing.assert_allclose(
        tab.premium_income(xi), lin.premium_income(xi), rtol=1e-12, atol=1e-9
    )
    sup_t, arg_t = tab.sup_norm_q()
    sup_l, arg_l = lin.sup_norm_q()
    assert sup_t == pytest.approx(sup_l, rel=1e-6)
    assert arg_t == pytest.approx(arg_l, abs=1e-3)


def test_tabulated_demand_round_trip():
    tab = tabulated_market().demand
    theta = np.linspace(0.0, 2.0, 57)
    np.testing.assert_allclose(
        tab.loading_for_share(tab.share(theta)), theta, atol=1e-9
    )


def test_tabulated_demand_rejects_non_monotone_tables():
    with pytest.raises(DomainError):
        TabulatedDemand(np.array([0.0, 1.0, 2.0]), np.array([M, 0.4 * M, 0.5 * M]))
    with pytest.raises(DomainError):
        TabulatedDemand(np.array([0.0, 1.0, 2.0]), np.array([M, 0.4 * M, 0.1 * M]))
    with pytest.raises(DomainError):
        TabulatedDemand(np.array([0.5, 1.0, 2.0]), np.array([M, 0.4 * M, 0.0]))


def test_market_rejects_negative_fair_premium():
    with pytest.raises(DomainError):
        MarketModel(LinearDemand(M, 2.0), -1.0)
