"""Utility-indifference pricing of catastrophe derivatives under clustered claims.

The package prices an insurer's spread option on its own loss index by
exponential-utility indifference. Claims arrive in a mixture of single
events and catastrophe clusters; the insurer controls its market share
against a demand curve. The backward value equation, the profit-loss
distribution, and the coupled residual-risk Monte Carlo live in their own
modules; `cli` wires them to config files.
"""

from .config import ExperimentConfig, config_from_mapping, load_config, validate_config
from .errors import (
    ConfigError,
    ConsistencyError,
    DomainError,
    GridError,
    StabilityError,
)
from .grids import DensityGrid, GridSpec, discretize_severity, suggest_z_max
from .market import LinearDemand, MarketModel, TabulatedDemand
from .model import (
    ClaimsModel,
    GammaSeverity,
    ShiftedPoissonCats,
    TabulatedCats,
    TabulatedSeverity,
    count_pgf,
    fair_premium,
    severity_exp_moment,
    validate_assumptions,
)
from .risk import (
    LaplaceGrid,
    PLDensity,
    ResidualRisk,
    invert_pl_density,
    laplace_value,
    pl_density,
    residual_risk_density,
)
from .simulate import (
    ConstantPolicy,
    FeedbackPolicy,
    MCEstimate,
    PathSample,
    claim_acceptance_counts,
    coupled_sample,
    mc_expected_utility,
    sample_path,
)
from .solver import (
    PriceResult,
    SolveGrid,
    SolveResult,
    SpreadOption,
    TabulatedPayoff,
    ZeroPayoff,
    price_surface,
    solve_backward,
    w0_closed_form,
    w0_rate,
)

__version__ = "0.1.0"

__all__ = [
    "ClaimsModel",
    "ConfigError",
    "ConsistencyError",
    "ConstantPolicy",
    "DensityGrid",
    "DomainError",
    "ExperimentConfig",
    "FeedbackPolicy",
    "GammaSeverity",
    "GridError",
    "GridSpec",
    "LaplaceGrid",
    "LinearDemand",
    "MCEstimate",
    "MarketModel",
    "PLDensity",
    "PathSample",
    "PriceResult",
    "ResidualRisk",
    "ShiftedPoissonCats",
    "SolveGrid",
    "SolveResult",
    "SpreadOption",
    "StabilityError",
    "TabulatedCats",
    "TabulatedDemand",
    "TabulatedPayoff",
    "TabulatedSeverity",
    "ZeroPayoff",
    "claim_acceptance_counts",
    "config_from_mapping",
    "count_pgf",
    "coupled_sample",
    "discretize_severity",
    "fair_premium",
    "invert_pl_density",
    "laplace_value",
    "load_config",
    "mc_expected_utility",
    "pl_density",
    "price_surface",
    "residual_risk_density",
    "sample_path",
    "severity_exp_moment",
    "solve_backward",
    "suggest_z_max",
    "validate_assumptions",
    "validate_config",
    "w0_closed_form",
    "w0_rate",
]
