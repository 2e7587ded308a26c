"""Demand curve, premium loading, and the insurer's premium income rate.

The insurer quotes a safety loading theta on top of the actuarially fair
premium `a` per client. Demand d(theta) falls as the loading rises; the
attained market share is xi = d(theta)/M where M is the client pool. The
controls are interchangeable, and the solver works with xi because the
thinning probability lives on [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "LinearDemand",
    "TabulatedDemand",
    "MarketModel",
]


@dataclass(frozen=True)
class LinearDemand:
    """d(theta) = max_clients (1 - theta / max_loading) on [0, max_loading]."""

    max_clients: float
    max_loading: float

    def __post_init__(self):
        if not (self.max_clients > 0 and self.max_loading > 0):
            raise DomainError("demand needs max_clients > 0 and max_loading > 0")

    def share(self, theta):
        # saturates at the full pool below zero loading, at none beyond max
        theta = np.asarray(theta, dtype=float)
        return np.clip(1.0 - theta / self.max_loading, 0.0, 1.0)

    def loading_for_share(self, xi):
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < 0) or np.any(xi > 1):
            raise DomainError("market share outside [0, 1]")
        return self.max_loading * (1.0 - xi)


@dataclass(frozen=True)
class TabulatedDemand:
    """Monotone demand table (theta_i, d_i), linearly interpolated.

    The table must start at d(0) = max_clients and fall strictly to zero at
    the last node, so every share in [0, 1] corresponds to exactly one
    loading.
    """

    theta: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if theta.ndim != 1 or theta.shape != d.shape or theta.size < 2:
            raise DomainError("demand table needs matching 1-d theta and d arrays")
        if theta[0] != 0.0 or np.any(np.diff(theta) <= 0):
            raise DomainError("loadings must start at 0 and increase strictly")
        if d[-1] != 0.0 or np.any(np.diff(d) >= 0):
            raise DomainError("demand must fall strictly to 0 at the last node")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "d", d)

    @property
    def max_clients(self) -> float:
        return float(self.d[0])

    @property
    def max_loading(self) -> float:
        return float(self.theta[-1])

    def share(self, theta):
        # np.interp clamps at the table ends: full pool below, none beyond
        theta = np.asarray(theta, dtype=float)
        return np.interp(theta, self.theta, self.d) / self.max_clients

    def loading_for_share(self, xi):
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < 0) or np.any(xi > 1):
            raise DomainError("market share outside [0, 1]")
        # d decreases along theta, so invert on the reversed table
        return np.interp(xi * self.max_clients, self.d[::-1], self.theta[::-1])


@dataclass(frozen=True)
class MarketModel:
    """Demand curve plus the fair premium per client per year."""

    demand: LinearDemand | TabulatedDemand
    fair_premium: float

    def __post_init__(self):
        if not self.fair_premium >= 0:
            raise DomainError("fair premium must be nonnegative")

    @property
    def max_clients(self) -> float:
        return float(self.demand.max_clients)

    def loading_for_share(self, xi):
        return self.demand.loading_for_share(xi)

    def premium_income(self, xi):
        """Premium income rate q(xi) = xi M a (1 + theta(xi)); q(0) = 0."""
        xi = np.asarray(xi, dtype=float)
        theta = self.demand.loading_for_share(xi)
        return xi * self.max_clients * self.fair_premium * (1.0 + theta)

    def sup_norm_q(self, n_grid: int = 10001, tol: float = 1e-12):
        """Maximum of q over [0, 1] and its location.

        Dense-grid scan followed by golden-section refinement of the winning
        bracket. q is continuous on a compact interval, so the scan cannot
        miss the global maximum by more than the local modulus of continuity,
        and the refinement then converges on the bracketed peak.
        """
        grid = np.linspace(0.0, 1.0, n_grid)
        vals = self.premium_income(grid)
        i = int(np.argmax(vals))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, n_grid - 1)]
        inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - inv_phi * (b - a)
        d = a + inv_phi * (b - a)
        fc = float(self.premium_income(c))
        fd = float(self.premium_income(d))
        while b - a > tol:
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - inv_phi * (b - a)
                fc = float(self.premium_income(c))
            else:
                a, c, fc = c, d, fd
                d = a + inv_phi * (b - a)
                fd = float(self.premium_income(d))
        xi_star = 0.5 * (a + b)
        return float(self.premium_income(xi_star)), float(xi_star)
