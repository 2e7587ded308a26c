"""Claim arrival and severity model for an industry loss index.

Claims hit the index in batches: an ordinary event carries a single claim,
a catastrophe carries a batch of at least two. A generic arrival therefore
draws its batch size from a mixture of the two event types, weighted by the
corresponding arrival intensities. Exponential-moment conditions on the
severity law and on the batch-size tail keep all utility functionals finite;
`validate_assumptions` checks them numerically before any solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError

__all__ = [
    "GammaSeverity",
    "TabulatedSeverity",
    "ShiftedPoissonCats",
    "TabulatedCats",
    "ClaimsModel",
    "ValidationReport",
    "mixed_count_pmf",
    "count_pgf",
    "count_mean",
    "count_log_pgf",
    "severity_exp_moment",
    "severity_mean",
    "fair_premium",
    "validate_assumptions",
]


@dataclass(frozen=True)
class GammaSeverity:
    """Gamma(shape, scale) claim size in currency units."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError("Gamma severity needs shape > 0 and scale > 0")

    def mean(self) -> float:
        return self.shape * self.scale

    def density(self, z):
        return stats.gamma.pdf(z, self.shape, scale=self.scale)

    def exp_moment(self, theta: float) -> float:
        """E exp(theta Y); finite only for theta < 1/scale."""
        if theta >= 1.0 / self.scale:
            raise DomainError(
                f"exponential moment diverges: theta={theta:g} >= 1/scale={1.0 / self.scale:g}"
            )
        return float((1.0 - theta * self.scale) ** (-self.shape))

    @property
    def mgf_boundary(self) -> float:
        """Supremum of tilts with a finite exponential moment."""
        return 1.0 / self.scale

    def tail_mass(self, z: float) -> float:
        return float(stats.gamma.sf(z, self.shape, scale=self.scale))

    def ppf(self, u):
        return stats.gamma.ppf(u, self.shape, scale=self.scale)

    def sample(self, rng: np.random.Generator, n: int):
        return rng.gamma(self.shape, self.scale, size=n)


@dataclass(frozen=True)
class TabulatedSeverity:
    """Severity density given on a finite grid; linear interpolation between nodes.

    The table is renormalized to unit mass, so small quadrature defects in the
    input are absorbed rather than propagated. Values outside [z[0], z[-1]]
    carry zero density.
    """

    z: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if z.ndim != 1 or z.shape != f.shape or z.size < 2:
            raise DomainError("tabulated severity needs matching 1-d z and f arrays")
        # claims are losses: support starts at zero
        if z[0] != 0.0 or np.any(np.diff(z) <= 0):
            raise DomainError("severity nodes must start at 0 and increase strictly")
        if np.any(~np.isfinite(f)) or np.any(f < 0):
            raise DomainError("severity density values must be finite and nonnegative")
        mass = np.trapezoid(f, z)
        if abs(mass - 1.0) > 1e-10:
            raise DomainError(f"tabulated severity mass {mass:.15g} must be 1 within 1e-10")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "f", f / mass)

    def mean(self) -> float:
        return float(np.trapezoid(self.z * self.f, self.z))

    def density(self, z):
        return np.interp(z, self.z, self.f, left=0.0, right=0.0)

    def exp_moment(self, theta: float) -> float:
        vals = np.exp(theta * self.z) * self.f
        if not np.all(np.isfinite(vals)):
            raise DomainError("exponential moment overflows on the severity table")
        return float(np.trapezoid(vals, self.z))

    @property
    def mgf_boundary(self) -> float:
        # bounded support: every exponential moment is finite
        return np.inf

    def tail_mass(self, z: float) -> float:
        if z >= self.z[-1]:
            return 0.0
        grid = np.linspace(z, self.z[-1], 2049)
        return float(np.trapezoid(self.density(grid), grid))

    def _cdf_knots(self):
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self.f[1:] + self.f[:-1]) * np.diff(self.z))]
        )
        return cdf / cdf[-1]

    def ppf(self, u):
        return np.interp(u, self._cdf_knots(), self.z)

    def sample(self, rng: np.random.Generator, n: int):
        return self.ppf(rng.random(n))


@dataclass(frozen=True)
class ShiftedPoissonCats:
    """Catastrophe batch size shift + Poisson(rate), support {shift, shift+1, ...}."""

    shift: int = 2
    rate: float = 40.0

    def __post_init__(self):
        if self.shift < 2:
            raise DomainError("catastrophe batches carry at least two claims")
        if self.rate <= 0:
            raise DomainError("shifted-Poisson rate must be positive")

    def pmf(self, k):
        k = np.asarray(k)
        return np.where(k >= self.shift, stats.poisson.pmf(k - self.shift, self.rate), 0.0)

    def pgf(self, s):
        # s^shift exp(rate (s - 1)); entire, so valid for any complex s
        s = np.asarray(s)
        return s**self.shift * np.exp(self.rate * (s - 1.0))

    def log_pgf(self, s):
        """log pgf for real s >= 1; stays finite where pgf overflows."""
        s = np.asarray(s, dtype=float)
        return self.shift * np.log(s) + self.rate * (s - 1.0)

    def mean(self) -> float:
        return self.shift + self.rate

    def support_upper(self, tol: float = 1e-14) -> int:
        return int(self.shift + stats.poisson.ppf(1.0 - tol, self.rate))

    def sample(self, rng: np.random.Generator, n: int):
        return self.shift + rng.poisson(self.rate, size=n)


@dataclass(frozen=True)
class TabulatedCats:
    """Catastrophe batch size tabulated on {first_k, first_k+1, ...}.

    The table stands in for a possibly infinite law truncated at mass
    `truncation_mass`; the tail ratio of the table therefore estimates the
    convergence radius of the true generating function, and pgf evaluation
    refuses arguments beyond that radius (where the truncated polynomial
    would silently diverge from the series it represents).
    """

    first_k: int
    probs: np.ndarray
    truncation_mass: float = 1e-12

    def __post_init__(self):
        if self.first_k < 2:
            raise DomainError("catastrophe batches carry at least two claims")
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0):
            raise DomainError("batch probabilities must be a nonnegative 1-d array")
        total = p.sum()
        if abs(total - 1.0) > max(self.truncation_mass, 1e-15):
            raise DomainError(
                f"batch probabilities sum to {total:.12g}; "
                f"declared truncation mass is {self.truncation_mass:g}"
            )
        object.__setattr__(self, "probs", p / total)

    def pmf(self, k):
        k = np.asarray(k)
        idx = k - self.first_k
        ok = (idx >= 0) & (idx < self.probs.size)
        out = np.zeros(np.shape(k), dtype=float)
        out[ok] = self.probs[idx[ok]]
        return out

    def tail_ratio_max(self) -> float:
        """Max pmf ratio past the mode; 1/radius estimate for the pgf."""
        if self.probs.size < 2:
            return 0.0
        mode = int(np.argmax(self.probs))
        pk = self.probs[mode:-1]
        pk1 = self.probs[mode + 1 :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(pk > 0, pk1 / pk, 0.0)
        return float(ratios.max()) if ratios.size else 0.0

    def radius_estimate(self) -> float:
        r = self.tail_ratio_max()
        return math.inf if r == 0.0 else 1.0 / r

    def pgf(self, s):
        s = np.asarray(s)
        if np.any(np.abs(s) > self.radius_estimate() * (1.0 + 1e-12)):
            raise DomainError(
                "pgf argument modulus exceeds the tabulated law's convergence radius"
            )
        # inside the radius the truncated polynomial is the series up to
        # truncation mass; Horner from the highest coefficient
        acc = np.zeros_like(s)
        for p in self.probs[::-1]:
            acc = acc * s + p
        return acc * s**self.first_k

    def log_pgf(self, s):
        """log pgf for real s >= 1; stays finite where pgf overflows."""
        s = np.asarray(s, dtype=float)
        ks = self.first_k + np.arange(self.probs.size)
        keep = self.probs > 0
        terms = np.log(self.probs[keep])[:, None] + ks[keep][:, None] * np.log(
            np.atleast_1d(s)[None, :]
        )
        out = np.logaddexp.reduce(terms, axis=0)
        return out.reshape(s.shape) if s.shape else out[0]

    def mean(self) -> float:
        ks = self.first_k + np.arange(self.probs.size)
        return float(np.dot(ks, self.probs))

    def support_upper(self, tol: float = 1e-14) -> int:
        return self.first_k + self.probs.size - 1

    def sample(self, rng: np.random.Generator, n: int):
        cum = np.cumsum(self.probs)
        return self.first_k + np.searchsorted(cum, rng.random(n), side="right")


@dataclass(frozen=True)
class ClaimsModel:
    """Index dynamics: batches arrive at rate lambda1 + lambda2 on [0, horizon].

    lambda1 is the intensity of single-claim events, lambda2 of catastrophe
    events whose batch size follows `cat_count`. `eta` is the risk-aversion
    parameter of the exponential utility the pricing layer works with; it
    doubles as the exponential tilt applied to severities, so Assumption
    checks revolve around exp(eta Y) moments.
    """

    lambda1: float
    lambda2: float
    severity: GammaSeverity | TabulatedSeverity
    cat_count: ShiftedPoissonCats | TabulatedCats | None
    eta: float
    horizon: float

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise DomainError("arrival intensities must be nonnegative")
        if self.lambda2 > 0 and self.cat_count is None:
            raise DomainError("lambda2 > 0 requires a catastrophe batch-size law")
        if not self.eta > 0:
            raise DomainError("risk aversion eta must be positive")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")

    @property
    def lam(self) -> float:
        return self.lambda1 + self.lambda2


def mixed_count_pmf(model: ClaimsModel, k: int) -> float:
    """P(A_1 = k) for the batch size of a generic arrival.

    Mixture of the single-claim point mass at 1 (weight lambda1/lam) and the
    catastrophe law on {2, 3, ...} (weight lambda2/lam). A model with zero
    total intensity never jumps; by convention its batch law is a point mass
    at one claim.
    """
    if k < 1:
        raise DomainError("batch sizes start at one claim")
    if model.lam == 0.0:
        return 1.0 if k == 1 else 0.0
    if k == 1:
        return model.lambda1 / model.lam
    if model.lambda2 == 0.0:
        return 0.0
    return float(model.lambda2 / model.lam * model.cat_count.pmf(k))


def count_pgf(model: ClaimsModel, s):
    """Probability generating function E s^{A_1}, vectorized over s.

    Accepts real or complex arrays; the transform pipeline feeds it whole
    spectra at once. With zero total intensity this degenerates to s (point
    mass at one).
    """
    s = np.asarray(s)
    if model.lam == 0.0:
        return s + 0.0
    out = (model.lambda1 / model.lam) * s
    if model.lambda2 > 0:
        out = out + (model.lambda2 / model.lam) * model.cat_count.pgf(s)
    return out


def count_mean(model: ClaimsModel) -> float:
    """E A_1 of the mixed batch-size law."""
    if model.lam == 0.0:
        return 1.0
    mean_cat = model.cat_count.mean() if model.lambda2 > 0 else 0.0
    return (model.lambda1 + model.lambda2 * mean_cat) / model.lam


def count_log_pgf(model: ClaimsModel, s):
    """log E s^{A_1} for real s >= 1, evaluated without overflow."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 1.0):
        raise DomainError("log pgf is evaluated on s >= 1 only")
    if model.lam == 0.0:
        return np.log(s)
    log_s = np.log(s)
    if model.lambda2 == 0.0:
        return log_s
    if model.lambda1 == 0.0:
        return model.cat_count.log_pgf(s)
    return np.logaddexp(
        math.log(model.lambda1 / model.lam) + log_s,
        math.log(model.lambda2 / model.lam) + model.cat_count.log_pgf(s),
    )

def severity_exp_moment(model: ClaimsModel, theta: float) -> float:
    return model.severity.exp_moment(theta)


def severity_mean(model: ClaimsModel) -> float:
    return model.severity.mean()


def fair_premium(model: ClaimsModel, clients: float) -> float:
    """Actuarially fair premium per client per year: lam E(A_1) E(Y) / clients."""
    if clients <= 0:
        raise DomainError("client count must be positive")
    if model.lam == 0.0:
        return 0.0
    return model.lam * count_mean(model) * severity_mean(model) / clients


@dataclass
class ValidationReport:
    """Outcome of the model-level admissibility checks."""

    ok: bool
    exp_moment_eta: float
    ratio_limsup: float
    ratio_bound: float
    pgf_at_exp_moment: float
    batch_mean: float
    annual_claim_rate: float
    annual_expected_loss: float
    messages: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "exp_moment_eta": self.exp_moment_eta,
            "ratio_limsup": self.ratio_limsup,
            "ratio_bound": self.ratio_bound,
            "pgf_at_exp_moment": self.pgf_at_exp_moment,
            "batch_mean": self.batch_mean,
            "annual_claim_rate": self.annual_claim_rate,
            "annual_expected_loss": self.annual_expected_loss,
            "messages": list(self.messages),
        }


def _ratio_limsup_estimate(model: ClaimsModel) -> float:
    """Stand-in for limsup_k a_{k+1} / a_k of the mixed batch law.

    Shifted-Poisson ratios are rate / (k - shift + 1) -> 0, so the limit is
    exactly 0 (entire pgf). A tabulated law is a truncation of something
    unknown, so its tail behaviour is estimated by the maximum pmf ratio past
    the mode; ratios near the mode sit close to 1 for any unimodal law and
    say nothing about the radius of convergence, hence the restriction.
    """
    if model.lambda2 == 0.0 or model.lam == 0.0:
        return 0.0
    law = model.cat_count
    if isinstance(law, ShiftedPoissonCats):
        return 0.0
    return law.tail_ratio_max()


def validate_assumptions(model: ClaimsModel) -> ValidationReport:
    """Check the exponential-moment conditions that keep the value function finite.

    Three checks: E exp(eta Y) finite; the batch-size tail ratio estimate
    stays below 1 / E exp(eta Y); and the batch pgf evaluated at E exp(eta Y)
    is finite. The report also carries the first-moment quantities that feed
    premium calibration, so rate inconsistencies between model variants are
    visible to the caller.
    """
    messages = []
    ok = True

    if model.lam == 0.0:
        messages.append("total arrival intensity is zero; the index never moves")
        ok = False

    try:
        m_eta = severity_exp_moment(model, model.eta)
    except DomainError as exc:
        messages.append(f"severity exponential moment diverges at eta: {exc}")
        m_eta = math.inf
        ok = False

    ratio = _ratio_limsup_estimate(model)
    bound = 0.0 if not math.isfinite(m_eta) else 1.0 / m_eta
    if math.isfinite(m_eta) and ratio >= bound:
        messages.append(
            f"batch-size tail ratio {ratio:.6g} reaches 1/E(exp(eta Y)) = {bound:.6g}"
        )
        ok = False

    if math.isfinite(m_eta):
        try:
            with np.errstate(over="ignore"):
                pgf_val = float(np.real(count_pgf(model, m_eta)))
        except DomainError:
            pgf_val = math.inf
        if not math.isfinite(pgf_val):
            messages.append("batch pgf diverges at E(exp(eta Y))")
            ok = False
    else:
        pgf_val = math.inf

    batch_mean = count_mean(model)
    report = ValidationReport(
        ok=ok,
        exp_moment_eta=m_eta,
        ratio_limsup=ratio,
        ratio_bound=bound,
        pgf_at_exp_moment=pgf_val,
        batch_mean=batch_mean,
        annual_claim_rate=model.lam * batch_mean,
        annual_expected_loss=model.lam * batch_mean * severity_mean(model),
        messages=messages,
    )
    return report
