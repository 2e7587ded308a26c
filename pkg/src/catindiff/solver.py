"""Backward dynamic-programming solver for the indifference price surface.

The insurer's certainty-equivalent value w(t, c) and the derivative's
indifference price p(t, c) = w(t, c) - w0(t) both solve first-order-in-time
equations whose only coupling across the index level c is an integral term

    sup_xi [ q(xi) - (lam / eta) (exp(eta v(t, c)) E_mu_xi v(t, c + .) - 1) ]

driven by the batch-total measures mu_xi of the transform layer. Time is
integrated by classic fourth-order Runge-Kutta on the method-of-lines system
over the uniform c lattice; the jump expectation is evaluated for all lattice
nodes and all candidate shares at once through precomputed cross-correlation
kernels.

The kernels resolve a scale mismatch: mu_xi lives on a fine jump lattice
(step dz) while the solve lattice is much coarser (step dc). Writing the
integrand through a cubic convolution interpolant of the surface collapses
the quadrature onto a short lag vector per candidate share,

    K_xi[d] = sum_j w_j mu_xi(z_j) phi(z_j / dc - d),

after which every stage costs one FFT of the surface and one batched inverse
FFT. The cubic kernel reproduces constants exactly (the lag sums telescope to
the quadrature mass), so flat stretches of the surface propagate without
leakage; bounded smooth stretches see the usual O(dc^3) interpolation error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError, GridError, StabilityError
from .grids import (
    DensityGrid,
    GridSpec,
    batch_tail_bound,
    discretize_severity,
    thinned_mixture_density,
    tilt,
    trapezoid_weights,
)
from .market import MarketModel
from .model import ClaimsModel, count_pgf, severity_exp_moment

__all__ = [
    "SpreadOption",
    "ZeroPayoff",
    "TabulatedPayoff",
    "SolveGrid",
    "SolveResult",
    "PriceResult",
    "optimizer_inner",
    "w0_rate",
    "w0_closed_form",
    "solve_backward",
    "price_surface",
]

# Slack added to the theoretical sup-norm bound before a slice is declared
# unstable, and the hard ceiling on the Chernoff batch-tail mass beyond the
# jump lattice.
BOUND_SLACK = 1e-4
TAIL_GATE = 1e-8


@dataclass(frozen=True)
class SpreadOption:
    """Call spread on the index: clip(c - strike, 0, cap - strike)."""

    strike: float
    cap: float

    def __post_init__(self):
        if not 0.0 <= self.strike < self.cap:
            raise DomainError("payoff needs 0 <= strike < cap")

    def __call__(self, c):
        return np.clip(np.asarray(c, dtype=float) - self.strike, 0.0, self.cap - self.strike)

    @property
    def sup_norm(self) -> float:
        return self.cap - self.strike

    @property
    def flat_beyond(self) -> float:
        return self.cap


@dataclass(frozen=True)
class ZeroPayoff:
    """No derivative position; used for pure-underwriting solves and tests."""

    def __call__(self, c):
        return np.zeros_like(np.asarray(c, dtype=float))

    @property
    def sup_norm(self) -> float:
        return 0.0

    @property
    def flat_beyond(self) -> float:
        return 0.0


class TabulatedPayoff:
    """Bounded payoff given by linear interpolation of a table on [0, c_hi].

    Constant continuation beyond the last knot, so the solver's extension
    rule stays exact provided the table is genuinely flat by then.
    """

    def __init__(self, c_knots, values):
        c = np.asarray(c_knots, dtype=float)
        v = np.asarray(values, dtype=float)
        if c.ndim != 1 or c.shape != v.shape or c.size < 2:
            raise DomainError("payoff table needs matching 1-d knots and values")
        if c[0] != 0.0 or np.any(np.diff(c) <= 0):
            raise DomainError("payoff knots must increase strictly from 0")
        if not np.all(np.isfinite(v)):
            raise DomainError("payoff values must be finite")
        self.c_knots = c
        self.values = v

    def __call__(self, c):
        return np.interp(np.asarray(c, dtype=float), self.c_knots, self.values)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def flat_beyond(self) -> float:
        return float(self.c_knots[-1])


@dataclass(frozen=True)
class SolveGrid:
    """Index-level lattice [0, c_max] with n_c nodes and n_t time steps."""

    c_max: float
    n_c: int = 1024
    n_t: int = 1000

    def __post_init__(self):
        if not self.c_max > 0:
            raise DomainError("c_max must be positive")
        if self.n_c < 16:
            raise DomainError("n_c must be at least 16")
        if self.n_t < 1:
            raise DomainError("n_t must be at least 1")

    @property
    def dc(self) -> float:
        return self.c_max / (self.n_c - 1)

    @property
    def c_nodes(self) -> np.ndarray:
        return np.arange(self.n_c) * self.dc


def _keys_cubic(x: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel (a = -1/2): exact on quadratics, support (-2, 2)."""
    ax = np.abs(x)
    inner = (1.5 * ax - 2.5) * ax * ax + 1.0
    outer = ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    return np.where(ax < 1.0, inner, np.where(ax < 2.0, outer, 0.0))


class _StageEngine:
    """Precomputed per-solve state: premium vector, lag kernels, FFT plans."""

    def __init__(
        self,
        model: ClaimsModel,
        market: MarketModel,
        severity_grid: DensityGrid,
        sgrid: SolveGrid,
        n_xi: int,
    ):
        self.model = model
        self.sgrid = sgrid
        self.xi_grid = np.linspace(0.0, 1.0, n_xi + 1)
        self.dxi = 1.0 / n_xi
        self.q_vec = market.premium_income(self.xi_grid)
        self.coef = model.lam / model.eta

        zg = severity_grid.grid
        dc = sgrid.dc
        # lag range covered by z in [0, z_max] under a kernel of support (-2, 2)
        base_max = int(zg.z_max / dc)
        self.n_lags = base_max + 4
        self.n_ext = sgrid.n_c + self.n_lags - 1
        n_fft = 1
        while n_fft < self.n_ext:
            n_fft *= 2
        self.n_fft = n_fft

        pos = zg.nodes / dc
        base = np.floor(pos).astype(int)
        frac = pos - base
        wq = trapezoid_weights(zg.n_points, zg.dz)
        tilted = tilt(severity_grid, model.eta)
        kernel_hats = np.empty((n_xi + 1, n_fft // 2 + 1), dtype=complex)
        masses = np.empty(n_xi + 1)
        for i, xi in enumerate(self.xi_grid):
            mu = thinned_mixture_density(model, severity_grid, tilted, xi)
            wmu = wq * mu.values
            lags = np.zeros(self.n_lags)
            for off in (-1, 0, 1, 2):
                lags += np.bincount(
                    base + off + 1,
                    weights=wmu * _keys_cubic(frac - off),
                    minlength=self.n_lags,
                )
            masses[i] = lags.sum()
            kernel_hats[i] = np.conj(np.fft.rfft(lags, n_fft))
        self.kernel_hats = kernel_hats
        self.masses = masses

    def _extend(self, sig: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_ext)
        # one quadratic ghost below c = 0, constant continuation above c_max
        out[0] = 3.0 * sig[0] - 3.0 * sig[1] + sig[2]
        out[1 : 1 + sig.size] = sig
        out[1 + sig.size :] = sig[-1]
        return out

    def jump_expectation(self, sig: np.ndarray) -> np.ndarray:
        """E sig(c + Z) exp(eta Z^xi) for every node c and candidate xi at once.

        The lag vector's leading entry already corresponds to the read one
        node below c (matching the ghost entry leading the extended signal),
        so node i of the correlation is exactly node i of the lattice.
        """
        sig_hat = np.fft.rfft(self._extend(sig), self.n_fft)
        corr = np.fft.irfft(self.kernel_hats * sig_hat[None, :], self.n_fft, axis=1)
        return corr[:, : self.sgrid.n_c]

    def hamiltonian(self, v: np.ndarray):
        """sup over shares of q(xi) + jump generator, with the maximizing share.

        The share grid only brackets the maximum. A bare grid argmax leaves
        an O(dxi^2) bias and a parabola through three points still an
        O(dxi^3) one, both visible to the flat-payoff identity checks, so
        the supremum is refined on a five-point stencil: fit the quartic
        through the winning candidate and two neighbours each side, then
        drive its derivative to zero by a few Newton steps from the parabola
        vertex. Near the ends of the grid the stencil degrades gracefully
        (parabola at the second point in, the raw candidate at the corners,
        which there are genuine boundary maxima). Ties resolve to the
        smallest share.
        """
        expv = np.exp(self.model.eta * v)
        exp_rows = self.jump_expectation(np.exp(-self.model.eta * v))
        obj = self.q_vec[:, None] - self.coef * (expv[None, :] * exp_rows - 1.0)

        n_cand = self.xi_grid.size
        cols = np.arange(v.size)
        i0 = np.argmax(obj, axis=0)
        v0 = obj[i0, cols]
        vm1 = obj[np.maximum(i0 - 1, 0), cols]
        vp1 = obj[np.minimum(i0 + 1, n_cand - 1), cols]
        vm2 = obj[np.maximum(i0 - 2, 0), cols]
        vp2 = obj[np.minimum(i0 + 2, n_cand - 1), cols]

        curv = vp1 + vm1 - 2.0 * v0
        concave = (i0 > 0) & (i0 < n_cand - 1) & (curv < 0.0)
        safe_curv = np.where(concave, curv, -1.0)
        delta_par = np.where(concave, np.clip(0.5 * (vm1 - vp1) / safe_curv, -1.0, 1.0), 0.0)
        sup_par = np.where(concave, v0 - 0.125 * (vm1 - vp1) ** 2 / safe_curv, v0)

        # quartic coefficients in the local coordinate x = (xi - xi[i0]) / dxi
        a1 = (8.0 * (vp1 - vm1) - (vp2 - vm2)) / 12.0
        a2 = (16.0 * (vp1 + vm1) - (vp2 + vm2) - 30.0 * v0) / 24.0
        a3 = ((vp2 - vm2) - 2.0 * (vp1 - vm1)) / 12.0
        a4 = ((vp2 + vm2) - 4.0 * (vp1 + vm1) + 6.0 * v0) / 24.0

        full = concave & (i0 > 1) & (i0 < n_cand - 2)
        x = delta_par
        for _ in range(4):
            d1 = a1 + x * (2.0 * a2 + x * (3.0 * a3 + x * 4.0 * a4))
            d2 = 2.0 * a2 + x * (6.0 * a3 + x * 12.0 * a4)
            step = np.where(full & (d2 < 0.0), d1 / np.where(d2 < 0.0, d2, -1.0), 0.0)
            x = np.clip(x - step, -1.0, 1.0)
        quart = v0 + x * (a1 + x * (a2 + x * (a3 + x * a4)))
        d2_final = 2.0 * a2 + x * (6.0 * a3 + x * 12.0 * a4)
        use_quart = full & (d2_final < 0.0) & (quart >= sup_par)

        sup = np.where(use_quart, quart, sup_par)
        delta = np.where(use_quart, x, delta_par)
        xi_star = self.xi_grid[i0] + delta * self.dxi
        return sup, xi_star


@dataclass(frozen=True)
class SolveResult:
    """Backward solve output on the full time-index lattice.

    surface[k, j] holds the value at time node t_k = k dt and index node
    c_j; policy[k, j] the maximizing market share at the same node. For
    mode "w" the surface is the certainty equivalent w, for mode "p" the
    indifference price p.
    """

    mode: str
    times: np.ndarray
    c_nodes: np.ndarray
    surface: np.ndarray
    policy: np.ndarray
    sup_norm_q: float
    bound: float


def optimizer_inner(objective, n_candidates: int = 101, tol: float = 1e-6):
    """Maximize a scalar objective on [0, 1]: coarse grid, then golden section.

    No concavity is assumed; the grid locates the basin and golden section
    shrinks the bracketing interval to width tol. Ties resolve to the
    smallest share: the refined point replaces the grid incumbent only when
    it is strictly better.
    """
    grid = np.linspace(0.0, 1.0, n_candidates)
    vals = np.array([float(objective(x)) for x in grid])
    if not np.all(np.isfinite(vals)):
        raise DomainError("objective must be finite on all candidates")
    i = int(np.argmax(vals))
    best_x, best_v = float(grid[i]), float(vals[i])
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = float(objective(c)), float(objective(d))
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = float(objective(c))
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = float(objective(d))
    x = 0.5 * (a + b)
    v = float(objective(x))
    if v > best_v:
        best_x, best_v = float(x), v
    return best_x, best_v


def w0_rate(model: ClaimsModel, market: MarketModel, tol: float = 1e-8):
    """Slope of the no-derivative value w0(t) = (T - t) rate, and its maximizer.

    rate = sup_xi [ q(xi) + (lam / eta)(1 - pgf(xi (E exp(eta Y) - 1) + 1)) ],
    evaluated in closed form through the severity exponential moment and the
    batch-size pgf.
    """
    if model.lam == 0.0:
        def f(xi):
            return float(market.premium_income(xi))
    else:
        m_eta = severity_exp_moment(model, model.eta)
        coef = model.lam / model.eta

        def f(xi):
            s = xi * (m_eta - 1.0) + 1.0
            return float(market.premium_income(xi)) + coef * (1.0 - float(np.real(count_pgf(model, s))))

    xi0, rate = optimizer_inner(f, tol=tol)
    return rate, xi0


def w0_closed_form(model: ClaimsModel, market: MarketModel, t: float):
    """No-derivative value w0(t) (independent of c) and its maximizing share."""
    if not 0.0 <= t <= model.horizon:
        raise DomainError("t must lie in [0, horizon]")
    rate, xi0 = w0_rate(model, market)
    return (model.horizon - t) * rate, xi0


def _validate_setup(model, payoff, zgrid: GridSpec, sgrid: SolveGrid):
    dt = model.horizon / sgrid.n_t
    if model.lam > 0 and dt > 0.1 / model.lam * (1.0 + 1e-9):
        raise GridError(
            f"time step {dt:g} exceeds 0.1/lam = {0.1 / model.lam:g}; raise n_t"
        )
    if sgrid.c_max < payoff.flat_beyond + zgrid.z_max:
        raise GridError(
            "c_max must reach the payoff's flat region plus one full jump "
            f"({payoff.flat_beyond + zgrid.z_max:g}); constant continuation "
            "past the lattice is exact only there"
        )
    if model.lam > 0:
        tail = float(batch_tail_bound(model, zgrid.z_max))
        if tail > TAIL_GATE:
            raise GridError(
                f"batch-total tail bound {tail:.3g} beyond z_max; enlarge the jump lattice"
            )


def solve_backward(
    model: ClaimsModel,
    market: MarketModel,
    payoff,
    zgrid: GridSpec,
    sgrid: SolveGrid,
    mode: str = "p",
    n_xi: int = 100,
) -> SolveResult:
    """Integrate the value equation (mode "w") or the price equation (mode "p").

    Runs fourth-order Runge-Kutta backward from the terminal condition
    (both modes terminate at the payoff). In price mode the drift subtracts
    the no-derivative Hamiltonian evaluated by the same discrete machinery
    on a flat surface, so a zero payoff stays exactly zero and flat regions
    of the price do not drift; the analytic w0 slope is reserved for the
    cross-check in price_surface.

    Every accepted slice is checked against the a-priori bound
    |v| <= sup q * horizon + sup |payoff| (price mode inherits it); a breach
    beyond slack, or any non-finite node, raises StabilityError.
    """
    if mode not in ("p", "w"):
        raise DomainError("mode must be 'p' or 'w'")
    _validate_setup(model, payoff, zgrid, sgrid)

    severity_grid = discretize_severity(model.severity, zgrid)
    engine = _StageEngine(model, market, severity_grid, sgrid, n_xi)
    sup_q, _ = market.sup_norm_q()
    bound = sup_q * model.horizon + payoff.sup_norm + 1e-6

    n_t, n_c = sgrid.n_t, sgrid.n_c
    dt = model.horizon / n_t
    c_nodes = sgrid.c_nodes
    times = np.arange(n_t + 1) * dt

    surface = np.empty((n_t + 1, n_c))
    policy = np.empty((n_t + 1, n_c))

    if mode == "p":
        base_sup, _ = engine.hamiltonian(np.zeros(n_c))
    else:
        base_sup = np.zeros(n_c)

    v = np.asarray(payoff(c_nodes), dtype=float)
    surface[n_t] = v

    def rhs(u):
        sup, xi = engine.hamiltonian(u)
        return sup - base_sup, xi

    for step in range(n_t):
        k1, xi1 = rhs(v)
        policy[n_t - step] = xi1
        k2, _ = rhs(v + 0.5 * dt * k1)
        k3, _ = rhs(v + 0.5 * dt * k2)
        k4, _ = rhs(v + dt * k3)
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(v)):
            raise StabilityError(f"non-finite value at t index {n_t - step - 1}")
        peak = float(np.max(np.abs(v)))
        if peak > bound + BOUND_SLACK:
            raise StabilityError(
                f"slice at t index {n_t - step - 1} reached {peak:g}, bound {bound:g}"
            )
        surface[n_t - step - 1] = v
    _, xi0 = rhs(v)
    policy[0] = xi0

    return SolveResult(
        mode=mode,
        times=times,
        c_nodes=c_nodes,
        surface=surface,
        policy=policy,
        sup_norm_q=sup_q,
        bound=bound,
    )


@dataclass(frozen=True)
class PriceResult:
    """Price solve plus the value solve that certifies it."""

    price: SolveResult
    value: SolveResult
    w0_slope: float
    xi0_star: float
    consistency_gap: float

    @property
    def times(self) -> np.ndarray:
        return self.price.times

    @property
    def c_nodes(self) -> np.ndarray:
        return self.price.c_nodes

    @property
    def surface(self) -> np.ndarray:
        return self.price.surface

    @property
    def policy(self) -> np.ndarray:
        return self.price.policy

    def price_at_origin(self) -> float:
        return float(self.price.surface[0, 0])


def price_surface(
    model: ClaimsModel,
    market: MarketModel,
    payoff,
    zgrid: GridSpec,
    sgrid: SolveGrid,
    n_xi: int = 100,
) -> PriceResult:
    """Price the payoff and certify it against the independent value solve.

    The price equation and the value equation are integrated separately from
    the same terminal data; the identity p = w - (T - t) * w0_rate must then
    hold up to discretization noise. A gap beyond 1e-5 of the natural scale
    (payoff size, or accumulated premium when the payoff is degenerate)
    raises ConsistencyError instead of returning a silently wrong surface.
    """
    p_res = solve_backward(model, market, payoff, zgrid, sgrid, "p", n_xi)
    w_res = solve_backward(model, market, payoff, zgrid, sgrid, "w", n_xi)
    slope, xi0 = w0_rate(model, market)
    w0_vals = (model.horizon - p_res.times)[:, None] * slope
    gap = float(np.max(np.abs(p_res.surface - (w_res.surface - w0_vals))))
    scale = max(payoff.sup_norm, p_res.sup_norm_q * model.horizon)
    if gap > 1e-5 * scale:
        raise ConsistencyError(
            f"price and value solves disagree: gap {gap:g} on scale {scale:g}"
        )
    return PriceResult(
        price=p_res, value=w_res, w0_slope=slope, xi0_star=xi0, consistency_gap=gap
    )
