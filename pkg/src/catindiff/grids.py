"""Uniform jump-size lattice and the Fourier route to batch-total measures.

Everything the solver needs to know about a single index jump Z_1 (the total
of one claim batch) is carried by a family of finite measures mu_xi on the
positive axis: integrating a test function sigma against mu_xi yields

    E( sigma(Z_1) exp(eta Z_1^xi) ),

where Z_1^xi keeps each claim of the batch with probability xi. Per claim
the thinning tilts the severity density mu into xi exp(eta y) mu + (1-xi) mu;
composing the batch-size generating function with the Fourier transform of
that blend produces mu_xi in one pair of FFTs. All densities live on the
shared lattice z_j = j dz, j < n_points, with z_max = (n_points - 1) dz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridError
from .model import ClaimsModel, GammaSeverity, count_log_pgf, count_pgf

__all__ = [
    "GridSpec",
    "DensityGrid",
    "trapezoid_weights",
    "discretize_severity",
    "tilt",
    "thinned_mixture_density",
    "expectation_against",
    "batch_tail_bound",
    "suggest_z_max",
]

# Severity mass allowed beyond the end of the lattice.
TAIL_MASS_TOL = 1e-10

# Fraction of the grid counted as "edge" when checking that a tilted density
# has decayed before running out of lattice, and the mass share tolerated there.
EDGE_FRACTION = 0.05
EDGE_MASS_TOL = 1e-8

# Mass allowed to be clipped when a spectral density dips negative.
CLIP_MASS_TOL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice on [0, z_max] with a power-of-two point count."""

    z_max: float
    n_points: int

    def __post_init__(self):
        if not self.z_max > 0:
            raise DomainError("z_max must be positive")
        n = self.n_points
        if n < 256 or n & (n - 1) != 0:
            raise DomainError("n_points must be a power of two, at least 256")

    @property
    def dz(self) -> float:
        return self.z_max / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dz


def trapezoid_weights(n: int, dz: float) -> np.ndarray:
    """Trapezoid quadrature weights on n uniform nodes; endpoints half-weighted."""
    w = np.full(n, dz)
    w[0] = 0.5 * dz
    w[-1] = 0.5 * dz
    return w


@dataclass(frozen=True)
class DensityGrid:
    """Nonnegative density sampled on a GridSpec lattice."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise DomainError("density values must match the lattice size")
        object.__setattr__(self, "values", v)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, dx=self.grid.dz))

    def mean(self) -> float:
        return float(np.trapezoid(self.grid.nodes * self.values, dx=self.grid.dz))


def discretize_severity(law, grid: GridSpec) -> DensityGrid:
    """Sample a severity density on the lattice.

    The origin node takes the right-limit of the density, so a Gamma severity
    with shape < 1 (unbounded at 0) cannot be represented and raises
    GridError. The lattice must also cover the severity's upper tail: mass
    beyond z_max is capped at TAIL_MASS_TOL.
    """
    vals = np.asarray(law.density(grid.nodes), dtype=float)
    if isinstance(law, GammaSeverity):
        if law.shape < 1:
            raise GridError("severity density is unbounded at the origin")
        vals[0] = (1.0 / law.scale) if law.shape == 1 else 0.0
    if not np.all(np.isfinite(vals)):
        raise GridError("severity density is not finite on the lattice")
    tail = law.tail_mass(grid.z_max)
    if tail > TAIL_MASS_TOL:
        raise GridError(
            f"severity mass {tail:.3g} beyond z_max={grid.z_max:g}; enlarge the lattice"
        )
    return DensityGrid(grid, vals)


def tilt(density: DensityGrid, eta: float) -> DensityGrid:
    """Exponentially tilted density exp(eta z) mu(z) on the same lattice.

    The exponent must stay below float range across the whole lattice. A tilt
    that has not decayed by the far end of the lattice means the tilted
    measure's tail is not represented (or not even integrable), so mass
    concentrating in the top EDGE_FRACTION of nodes is an error.
    """
    if eta * density.grid.z_max >= 700.0:
        raise OverflowError("tilt exponent exceeds float range at the grid edge")
    tilted = density.values * np.exp(eta * density.grid.nodes)
    if not np.all(np.isfinite(tilted)):
        raise GridError("tilted density is not finite on the lattice")
    total = np.trapezoid(tilted, dx=density.grid.dz)
    k0 = int((1.0 - EDGE_FRACTION) * density.grid.n_points)
    edge = np.trapezoid(tilted[k0:], dx=density.grid.dz)
    if total > 0 and edge / total > EDGE_MASS_TOL:
        raise GridError(
            f"tilted density carries mass share {edge / total:.3g} at the grid edge"
        )
    return DensityGrid(density.grid, tilted)


def _clip_negative(values: np.ndarray, dz: float, what: str) -> np.ndarray:
    neg = values < 0.0
    clipped = -float(values[neg].sum()) * dz
    if clipped > CLIP_MASS_TOL:
        raise GridError(f"{what}: clipped negative mass {clipped:.3g} exceeds tolerance")
    out = values.copy()
    out[neg] = 0.0
    return out


def thinned_mixture_density(
    model: ClaimsModel, mu: DensityGrid, mu_tilde: DensityGrid, xi: float
) -> DensityGrid:
    """Batch-total measure mu_xi for share xi via the Fourier composition.

    mu is the severity density, mu_tilde its exp(eta z) tilt on the same
    lattice (passed in, not recomputed, because the caller reuses one tilt
    across many xi). Zero-pads the per-claim blend to twice the lattice
    before transforming, so the circular convolution implied by the DFT
    cannot wrap batch mass back onto the lattice (the lattice itself must
    already cover the batch support; see suggest_z_max). Small negative
    excursions from the spectral round trip are clipped and accounted.
    """
    if not 0.0 <= xi <= 1.0:
        raise DomainError("thinning probability must lie in [0, 1]")
    if mu.grid != mu_tilde.grid:
        raise DomainError("severity and tilted densities must share one lattice")
    g = mu.grid
    blend = xi * mu_tilde.values + (1.0 - xi) * mu.values
    # plain left-endpoint scaling keeps pgf(s) = s an exact identity map
    spectrum = g.dz * np.fft.rfft(blend, 2 * g.n_points)
    composed = count_pgf(model, spectrum)
    dens = np.fft.irfft(composed, 2 * g.n_points)[: g.n_points] / g.dz
    dens = _clip_negative(dens, g.dz, "batch-total density")
    return DensityGrid(g, dens)


def expectation_against(sigma_values, mu_xi: DensityGrid) -> np.ndarray:
    """Integrals int sigma(c + z) mu_xi(z) dz for every lattice offset c.

    sigma_values samples sigma on the measure's own lattice step, extended
    far enough past the last offset of interest that sigma_values[i + j]
    is sigma(c_i + z_j); entry i of the result is the trapezoid sum over j.
    All offsets are evaluated in one FFT cross-correlation against the
    weighted measure, giving len(sigma_values) - n_points + 1 outputs.
    """
    g = mu_xi.grid
    sig = np.asarray(sigma_values, dtype=float)
    if sig.ndim != 1 or sig.size < g.n_points:
        raise DomainError("sigma samples must cover at least one full lattice span")
    wmu = trapezoid_weights(g.n_points, g.dz) * mu_xi.values
    n_fft = 1
    while n_fft < sig.size:
        n_fft *= 2
    corr = np.fft.irfft(
        np.conj(np.fft.rfft(wmu, n_fft)) * np.fft.rfft(sig, n_fft), n_fft
    )
    return corr[: sig.size - g.n_points + 1]


def _theta_grid(model: ClaimsModel, n: int = 2001) -> np.ndarray:
    sev = model.severity
    if isinstance(sev, GammaSeverity):
        hi = 1.0 / sev.scale
        return hi * np.linspace(1e-4, 1.0 - 1e-4, n)
    # tabulated severity: bounded support, so any theta works until exp overflows
    hi = 700.0 / float(sev.z[-1])
    return np.linspace(hi * 1e-6, hi, n)


def batch_tail_bound(model: ClaimsModel, z) -> np.ndarray:
    """Chernoff bound on P(Z_1 > z): inf_theta exp(log pgf(M_Y(theta)) - theta z).

    Evaluated in log space so the bound survives generating-function values
    far beyond float range.
    """
    thetas = _theta_grid(model)
    log_g = np.array(
        [count_log_pgf(model, model.severity.exp_moment(t)) for t in thetas]
    )
    z = np.asarray(z, dtype=float)
    exponent = log_g[:, None] - thetas[:, None] * np.atleast_1d(z)[None, :]
    best = exponent.min(axis=0)
    out = np.exp(np.minimum(best, 0.0))
    return out.reshape(z.shape) if z.shape else float(out[0])


def suggest_z_max(model: ClaimsModel, tol: float = 1e-12) -> float:
    """Smallest lattice extent whose Chernoff batch-tail bound is below tol."""
    if model.lam == 0.0:
        raise DomainError("no arrivals: lattice extent is unconstrained")
    from .model import count_mean, severity_mean

    z = max(count_mean(model) * severity_mean(model), model.severity.mean())
    while batch_tail_bound(model, z) > tol:
        z *= 2.0
        if z > 1e300:
            raise GridError("Chernoff bound never reaches the requested tolerance")
    lo, hi = z / 2.0, z
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if batch_tail_bound(model, mid) > tol:
            lo = mid
        else:
            hi = mid
    return hi
