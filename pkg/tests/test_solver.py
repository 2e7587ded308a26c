"""Backward solver: payoffs, the inner maximizer, and full surface solves.

The expensive checks run on deliberately small lattices. Reference numbers
are either closed forms evaluated inline or values frozen from independent
dense-grid evaluation; tolerances record what the discretization actually
achieves, with slack for platform variation.
"""

import numpy as np
import pytest

from catindiff.errors import DomainError, GridError
from catindiff.grids import GridSpec, discretize_severity
from catindiff.market import LinearDemand, MarketModel
from catindiff.model import (
    ClaimsModel,
    GammaSeverity,
    ShiftedPoissonCats,
    fair_premium,
)
from catindiff.solver import (
    PriceResult,
    SolveGrid,
    SpreadOption,
    TabulatedPayoff,
    ZeroPayoff,
    _StageEngine,
    optimizer_inner,
    price_surface,
    solve_backward,
    w0_closed_form,
    w0_rate,
)

SEV = GammaSeverity(10.0, 5000.0)
ETA = 1e-6

# Frozen no-derivative supremum values for the two calibrations below,
# produced by the grid-plus-golden-section maximizer at tol 1e-8 and
# confirmed against a 200001-point dense grid (see the oracle test).
W0_SC = 2430344.4089097707
XI0_SC = 0.4929852229684085
W0_CC = 2106652.4163456415
XI0_CC = 0.37295311658174246


@pytest.fixture(scope="module")
def sc_model():
    return ClaimsModel(100.0, 0.0, SEV, None, ETA, 1.0)


@pytest.fixture(scope="module")
def cc_model():
    return ClaimsModel(69.0, 1.0, SEV, ShiftedPoissonCats(2, 40.0), ETA, 1.0)


@pytest.fixture(scope="module")
def sc_market(sc_model):
    return MarketModel(LinearDemand(1e4, 2.0), fair_premium(sc_model, 1e4))


@pytest.fixture(scope="module")
def cc_market(cc_model):
    return MarketModel(LinearDemand(1e4, 2.0), fair_premium(cc_model, 1e4))


@pytest.fixture(scope="module")
def psi0_cc(cc_model, cc_market):
    # Flat terminal data: w must come out c-independent with slope w0.
    return solve_backward(
        cc_model,
        cc_market,
        ZeroPayoff(),
        GridSpec(5.5e6, 16384),
        SolveGrid(c_max=8e6, n_c=64, n_t=1000),
        "w",
    )


@pytest.fixture(scope="module")
def spread_sc(sc_model, sc_market):
    # Shrunken spread problem: strike 1e6, cap 2e6, one jump lattice of
    # 2.8e5 above the cap. Small enough to run in a few seconds while
    # exercising every code path of the production configuration.
    return price_surface(
        sc_model,
        sc_market,
        SpreadOption(1e6, 2e6),
        GridSpec(2.8e5, 16384),
        SolveGrid(c_max=2.56e6, n_c=256, n_t=1000),
    )


# ---------------------------------------------------------------- payoffs


def test_spread_option_values():
    pay = SpreadOption(1e6, 2e6)
    c = np.array([0.0, 5e5, 1e6, 1.5e6, 2e6, 3e6])
    assert pay(c) == pytest.approx([0.0, 0.0, 0.0, 5e5, 1e6, 1e6], abs=0.0)
    assert pay.sup_norm == 1e6
    assert pay.flat_beyond == 2e6


def test_spread_option_rejects_bad_strikes():
    with pytest.raises(DomainError):
        SpreadOption(-1.0, 2e6)
    with pytest.raises(DomainError):
        SpreadOption(2e6, 2e6)
    with pytest.raises(DomainError):
        SpreadOption(3e6, 2e6)


def test_zero_payoff():
    pay = ZeroPayoff()
    assert np.all(pay(np.linspace(0, 1e7, 11)) == 0.0)
    assert pay.sup_norm == 0.0
    assert pay.flat_beyond == 0.0


def test_tabulated_payoff_interpolates_and_extends_flat():
    pay = TabulatedPayoff([0.0, 1.0, 3.0], [0.0, 2.0, 2.0])
    assert pay(np.array([0.5, 2.0, 10.0])) == pytest.approx([1.0, 2.0, 2.0])
    assert pay.sup_norm == 2.0
    assert pay.flat_beyond == 3.0


def test_tabulated_payoff_rejects_bad_tables():
    with pytest.raises(DomainError):
        TabulatedPayoff([1.0, 2.0], [0.0, 1.0])  # must start at 0
    with pytest.raises(DomainError):
        TabulatedPayoff([0.0, 2.0, 2.0], [0.0, 1.0, 2.0])  # not increasing
    with pytest.raises(DomainError):
        TabulatedPayoff([0.0, 1.0], [0.0, np.nan])
    with pytest.raises(DomainError):
        TabulatedPayoff([0.0, 1.0], [0.0, 1.0, 2.0])
    with pytest.raises(DomainError):
        TabulatedPayoff([0.0], [1.0])


# ------------------------------------------------------- inner maximizer


def test_optimizer_inner_quadratic_peak():
    x, v = optimizer_inner(lambda x: -((x - 0.304) ** 2))
    assert x == pytest.approx(0.304, abs=1e-6)
    assert v <= 0.0 and v > -1e-10


def test_optimizer_inner_constant_returns_smallest():
    x, v = optimizer_inner(lambda x: 7.0)
    assert x == 0.0
    assert v == 7.0


def test_optimizer_inner_boundary_max():
    x, v = optimizer_inner(lambda x: x)
    assert x == 1.0
    assert v == 1.0


def test_optimizer_inner_tie_resolves_to_smaller_share():
    x, _ = optimizer_inner(lambda x: -((x - 0.25) ** 2) * (x - 0.75) ** 2)
    assert x == pytest.approx(0.25, abs=1e-6)


def test_optimizer_inner_rejects_non_finite():
    with pytest.raises(DomainError):
        optimizer_inner(lambda x: np.inf if x > 0.5 else 0.0)


# -------------------------------------------------- no-derivative value


def test_w0_rate_frozen_values(sc_model, sc_market, cc_model, cc_market):
    rate, xi = w0_rate(sc_model, sc_market)
    assert rate == pytest.approx(W0_SC, rel=1e-10)
    assert xi == pytest.approx(XI0_SC, abs=1e-6)
    rate, xi = w0_rate(cc_model, cc_market)
    assert rate == pytest.approx(W0_CC, rel=1e-10)
    assert xi == pytest.approx(XI0_CC, abs=1e-6)


def test_w0_rate_matches_dense_grid_oracle(cc_model, cc_market):
    # Independent evaluation: the mixture pgf written out by hand on a
    # dense share grid that brackets the maximizer to 5e-6.
    xi = np.linspace(0.0, 1.0, 200001)
    m_eta = 0.995 ** -10.0
    s = xi * (m_eta - 1.0) + 1.0
    pgf = (69.0 / 70.0) * s + (1.0 / 70.0) * s**2 * np.exp(40.0 * (s - 1.0))
    obj = cc_market.premium_income(xi) + (70.0 / ETA) * (1.0 - pgf)
    rate, xi_star = w0_rate(cc_model, cc_market)
    assert rate >= np.max(obj) - 1e-3
    assert xi_star == pytest.approx(xi[np.argmax(obj)], abs=1e-5)


def test_w0_closed_form_is_linear_in_time(cc_model, cc_market):
    rate, xi = w0_rate(cc_model, cc_market)
    v0, x0 = w0_closed_form(cc_model, cc_market, 0.0)
    assert v0 == pytest.approx(rate, rel=1e-12)
    assert x0 == xi
    v, _ = w0_closed_form(cc_model, cc_market, 0.25)
    assert v == pytest.approx(0.75 * rate, rel=1e-12)
    v, _ = w0_closed_form(cc_model, cc_market, 1.0)
    assert v == 0.0


def test_w0_closed_form_rejects_times_outside_horizon(cc_model, cc_market):
    with pytest.raises(DomainError):
        w0_closed_form(cc_model, cc_market, -0.1)
    with pytest.raises(DomainError):
        w0_closed_form(cc_model, cc_market, 1.5)


def test_w0_rate_without_claims_is_premium_supremum(sc_market):
    # lam = 0 removes the jump term; the maximizer is the revenue peak at
    # share 3/4 with value (9/8) a M.
    dead = ClaimsModel(0.0, 0.0, SEV, None, ETA, 1.0)
    rate, xi = w0_rate(dead, sc_market)
    assert rate == pytest.approx(1.125 * 500.0 * 1e4, rel=1e-9)
    assert xi == pytest.approx(0.75, abs=1e-6)


# ------------------------------------------------------- stage operator


@pytest.mark.parametrize("case", ["sc", "cc"])
def test_stage_expectation_on_unit_slope_surface(
    case, sc_model, sc_market, cc_model, cc_market
):
    # On v(c) = c the jump expectation collapses to a pgf evaluation:
    # E exp(-eta (Z - Z_accepted)) = G_A(1 - (1 - xi)(1 - E exp(-eta Y))).
    # This pins the lag alignment of the convolution kernels; a one-node
    # shift shows up at the 1e-2 level.
    if case == "sc":
        model, market, z_max = sc_model, sc_market, 2.8e5
        c_max, rtol = 2.56e6, 1e-8
    else:
        model, market, z_max = cc_model, cc_market, 5.5e6
        c_max, rtol = 8e6, 1e-6
    zgrid = GridSpec(z_max, 16384)
    sgrid = SolveGrid(c_max=c_max, n_c=256, n_t=1000)
    engine = _StageEngine(model, market, discretize_severity(SEV, zgrid), sgrid, 100)

    c = sgrid.c_nodes
    rows = engine.jump_expectation(np.exp(-ETA * c))
    m_minus = 1.005 ** -10.0
    s = 1.0 - (1.0 - engine.xi_grid) * (1.0 - m_minus)
    if case == "sc":
        analytic = s
    else:
        analytic = (69.0 / 70.0) * s + (1.0 / 70.0) * s**2 * np.exp(40.0 * (s - 1.0))
    interior = c <= c_max - z_max
    got = rows[:, interior] * np.exp(ETA * c[interior])[None, :]
    assert np.max(np.abs(got / analytic[:, None] - 1.0)) < rtol


# ---------------------------------------------------------- full solves


def test_flat_terminal_solve_matches_closed_form(psi0_cc, cc_model, cc_market):
    rate, _ = w0_rate(cc_model, cc_market)
    w0 = (1.0 - psi0_cc.times[:-1])[:, None] * rate
    rel = np.abs(psi0_cc.surface[:-1] / w0 - 1.0)
    assert np.max(rel) < 1e-8
    assert np.all(psi0_cc.surface[-1] == 0.0)


def test_flat_terminal_solve_stays_flat_in_c(psi0_cc):
    spread = psi0_cc.surface.max(axis=1) - psi0_cc.surface.min(axis=1)
    assert np.max(spread) < 1e-6


def test_flat_terminal_policy_is_static_maximizer(psi0_cc, cc_model, cc_market):
    _, xi0 = w0_rate(cc_model, cc_market)
    assert np.max(np.abs(psi0_cc.policy - xi0)) < 1e-3


def test_flat_terminal_solve_respects_bound(psi0_cc):
    assert np.max(np.abs(psi0_cc.surface)) <= psi0_cc.bound


def test_zero_payoff_price_is_exactly_zero(cc_model, cc_market):
    res = solve_backward(
        cc_model,
        cc_market,
        ZeroPayoff(),
        GridSpec(5.5e6, 16384),
        SolveGrid(c_max=8e6, n_c=64, n_t=700),
        "p",
    )
    assert np.all(res.surface == 0.0)
    assert np.all((res.policy >= 0.0) & (res.policy <= 1.0))


def test_constant_shift_moves_value_by_constant(psi0_cc, cc_model, cc_market):
    shift = 1e5
    flat = TabulatedPayoff([0.0, 1e5], [shift, shift])
    res = solve_backward(
        cc_model,
        cc_market,
        flat,
        GridSpec(5.5e6, 16384),
        SolveGrid(c_max=8e6, n_c=64, n_t=1000),
        "w",
    )
    assert np.max(np.abs(res.surface - (psi0_cc.surface + shift))) < 1e-6


def test_spread_terminal_slice_is_payoff(spread_sc):
    pay = SpreadOption(1e6, 2e6)
    assert np.array_equal(spread_sc.surface[-1], pay(spread_sc.c_nodes))


def test_spread_price_is_cap_minus_strike_past_cap(spread_sc):
    # Above the cap every path pays the full spread; the price must sit at
    # cap - strike up to quadrature noise (measured 3e-4 on this lattice,
    # contract allows 5e-4 of the spread).
    flat = spread_sc.c_nodes >= 2e6
    gap = np.abs(spread_sc.surface[:, flat] - 1e6)
    assert np.max(gap) <= 5e-4 * 1e6
    assert np.max(gap) < 1.0


def test_spread_price_monotone_in_index(spread_sc):
    assert np.min(np.diff(spread_sc.surface, axis=1)) > -1e-2


def test_spread_price_within_payoff_range(spread_sc):
    assert np.min(spread_sc.surface) >= -1e-6
    assert np.max(spread_sc.surface) <= 1e6 + 1e-2


def test_spread_price_converges_to_terminal_data(spread_sc):
    pay = SpreadOption(1e6, 2e6)
    err = np.max(np.abs(spread_sc.surface - pay(spread_sc.c_nodes)[None, :]), axis=1)
    assert err[-1] == 0.0
    assert np.all(np.diff(err[-10:]) <= 0.0)


def test_spread_policy_within_unit_interval(spread_sc):
    assert np.all((spread_sc.policy >= 0.0) & (spread_sc.policy <= 1.0))


def test_spread_consistency_gap_is_small(spread_sc, sc_market):
    sup_q, _ = sc_market.sup_norm_q()
    scale = max(1e6, sup_q * 1.0)
    assert spread_sc.consistency_gap <= 1e-5 * scale
    assert spread_sc.w0_slope == pytest.approx(W0_SC, rel=1e-10)
    assert spread_sc.xi0_star == pytest.approx(XI0_SC, abs=1e-6)


def test_spread_price_at_origin_reads_surface(spread_sc):
    assert spread_sc.price_at_origin() == spread_sc.surface[0, 0]


def test_spread_solves_respect_bound(spread_sc):
    assert np.max(np.abs(spread_sc.price.surface)) <= spread_sc.price.bound
    assert np.max(np.abs(spread_sc.value.surface)) <= spread_sc.value.bound


def test_spread_price_stable_under_grid_refinement(spread_sc, sc_model, sc_market):
    fine = solve_backward(
        sc_model,
        sc_market,
        SpreadOption(1e6, 2e6),
        GridSpec(2.8e5, 16384),
        SolveGrid(c_max=2.56e6, n_c=512, n_t=2000),
        "p",
    )
    drift = np.max(np.abs(fine.surface[0][::2] - spread_sc.surface[0]))
    assert drift <= 1e-3 * 1e6


# ----------------------------------------------------------- validation


def test_rejects_time_step_above_stability_limit(sc_model, sc_market):
    with pytest.raises(GridError, match="time step"):
        solve_backward(
            sc_model,
            sc_market,
            ZeroPayoff(),
            GridSpec(2.8e5, 16384),
            SolveGrid(c_max=2.56e6, n_c=64, n_t=50),
        )


def test_rejects_lattice_short_of_flat_region(sc_model, sc_market):
    with pytest.raises(GridError, match="c_max"):
        solve_backward(
            sc_model,
            sc_market,
            SpreadOption(1e6, 2e6),
            GridSpec(2.8e5, 16384),
            SolveGrid(c_max=2e6, n_c=64, n_t=1000),
        )


def test_rejects_jump_lattice_with_heavy_tail(cc_model, cc_market):
    with pytest.raises(GridError, match="tail"):
        solve_backward(
            cc_model,
            cc_market,
            ZeroPayoff(),
            GridSpec(1.1e6, 16384),
            SolveGrid(c_max=1.2e6, n_c=64, n_t=1000),
        )


def test_rejects_unknown_mode(sc_model, sc_market):
    with pytest.raises(DomainError):
        solve_backward(
            sc_model,
            sc_market,
            ZeroPayoff(),
            GridSpec(2.8e5, 16384),
            SolveGrid(c_max=3e5, n_c=64, n_t=1000),
            "q",
        )


def test_solve_grid_guards():
    with pytest.raises(DomainError):
        SolveGrid(c_max=-1.0)
    with pytest.raises(DomainError):
        SolveGrid(c_max=1e6, n_c=8)
    with pytest.raises(DomainError):
        SolveGrid(c_max=1e6, n_t=0)
