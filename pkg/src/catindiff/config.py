"""Experiment configuration from a single TOML file.

Unknown keys are hard errors carrying their full path: a silently ignored
typo in eta or lambda2 would change every number downstream without any
other symptom. The model, market, and payoff blocks are mandatory; grids
and risk fall back to defaults sized for the worked example, with the jump
lattice reach picked by the Chernoff tail rule when not pinned.
"""

from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .errors import ConfigError, DomainError, GridError
from .grids import GridSpec, suggest_z_max
from .market import LinearDemand, MarketModel
from .model import (
    ClaimsModel,
    GammaSeverity,
    ShiftedPoissonCats,
    fair_premium,
    validate_assumptions,
)
from .solver import SolveGrid, SpreadOption, ZeroPayoff, _validate_setup

__all__ = ["ExperimentConfig", "load_config", "config_from_mapping", "validate_config"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a command needs, already constructed and cross-checked."""

    model: ClaimsModel
    market: MarketModel
    payoff: object
    zgrid: GridSpec
    sgrid: SolveGrid
    n_xi: int
    sigma_b: float
    u_max: float | None
    n_u: int
    n_paths: int
    seed: int
    share: float | None
    out_dir: str
    source: str


def _block(data, name, required=False):
    raw = data.pop(name, None)
    if raw is None:
        if required:
            raise ConfigError(f"missing required block [{name}]")
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(raw)


def _no_extras(block, path):
    if block:
        key = sorted(block)[0]
        raise ConfigError(f"{path}.{key} is not a recognized key")


def _number(block, path, key, default=None, required=False, minimum=None, positive=False):
    if key not in block:
        if required:
            raise ConfigError(f"{path}.{key} is required")
        return default
    val = block.pop(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key} must be a number")
    val = float(val)
    if positive and not val > 0.0:
        raise ConfigError(f"{path}.{key} must be positive")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}.{key} must be at least {minimum:g}")
    return val


def _integer(block, path, key, default=None, required=False, minimum=None):
    if key not in block:
        if required:
            raise ConfigError(f"{path}.{key} is required")
        return default
    val = block.pop(key)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}.{key} must be an integer")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}.{key} must be at least {minimum}")
    return int(val)


def _build_model(data):
    blk = _block(data, "model", required=True)
    lam1 = _number(blk, "model", "lambda1", required=True, minimum=0.0)
    lam2 = _number(blk, "model", "lambda2", required=True, minimum=0.0)
    eta = _number(blk, "model", "eta", required=True, positive=True)
    horizon = _number(blk, "model", "horizon", required=True, positive=True)
    if lam1 + lam2 <= 0.0:
        raise ConfigError("model: lambda1 + lambda2 must be positive; an "
                          "experiment without claims has nothing to price")

    sev_blk = blk.pop("severity", None)
    if not isinstance(sev_blk, dict):
        raise ConfigError("model.severity table is required")
    sev_blk = dict(sev_blk)
    kind = sev_blk.pop("type", None)
    if kind != "gamma":
        raise ConfigError(f"model.severity.type must be 'gamma', got {kind!r}")
    shape = _number(sev_blk, "model.severity", "shape", required=True, positive=True)
    scale = _number(sev_blk, "model.severity", "scale", required=True, positive=True)
    _no_extras(sev_blk, "model.severity")

    cats = None
    cat_blk = blk.pop("cat_count", None)
    if cat_blk is not None:
        if not isinstance(cat_blk, dict):
            raise ConfigError("model.cat_count must be a table")
        cat_blk = dict(cat_blk)
        kind = cat_blk.pop("type", None)
        if kind != "shifted_poisson":
            raise ConfigError(
                f"model.cat_count.type must be 'shifted_poisson', got {kind!r}"
            )
        shift = _integer(cat_blk, "model.cat_count", "shift", required=True, minimum=2)
        rate = _number(cat_blk, "model.cat_count", "rate", required=True, positive=True)
        _no_extras(cat_blk, "model.cat_count")
        cats = ShiftedPoissonCats(shift, rate)
    elif lam2 > 0.0:
        raise ConfigError("model.cat_count is required when lambda2 > 0")
    _no_extras(blk, "model")

    try:
        return ClaimsModel(lam1, lam2, GammaSeverity(shape, scale), cats, eta, horizon)
    except DomainError as err:
        raise ConfigError(f"model: {err}") from err


def _build_market(data, model):
    blk = _block(data, "market", required=True)
    max_clients = _number(blk, "market", "max_clients", required=True, positive=True)
    max_loading = _number(blk, "market", "max_loading", required=True, positive=True)
    fair = _number(blk, "market", "fair_premium", default=None, positive=True)
    _no_extras(blk, "market")
    if fair is None:
        fair = fair_premium(model, max_clients)
    try:
        return MarketModel(LinearDemand(max_clients, max_loading), fair)
    except DomainError as err:
        raise ConfigError(f"market: {err}") from err


def _build_payoff(data):
    blk = _block(data, "payoff", required=True)
    kind = blk.pop("type", "spread")
    if kind == "zero":
        _no_extras(blk, "payoff")
        return ZeroPayoff()
    if kind != "spread":
        raise ConfigError(f"payoff.type must be 'spread' or 'zero', got {kind!r}")
    strike = _number(blk, "payoff", "strike", required=True, minimum=0.0)
    cap = _number(blk, "payoff", "cap", required=True, positive=True)
    _no_extras(blk, "payoff")
    try:
        return SpreadOption(strike, cap)
    except DomainError as err:
        raise ConfigError(f"payoff: {err}") from err


def _build_grids(data, model, payoff):
    blk = _block(data, "grids")
    z_max = _number(blk, "grids", "z_max", default=None, positive=True)
    n_points = _integer(blk, "grids", "n_points", default=2**14, minimum=64)
    c_max = _number(blk, "grids", "c_max", default=None, positive=True)
    n_c = _integer(blk, "grids", "n_c", default=2**10, minimum=16)
    n_t = _integer(blk, "grids", "n_t", default=10**3, minimum=1)
    n_xi = _integer(blk, "grids", "n_xi", default=100, minimum=3)
    _no_extras(blk, "grids")
    if z_max is None:
        z_max = suggest_z_max(model, 1e-9)
    if c_max is None:
        c_max = payoff.flat_beyond + z_max
    try:
        return GridSpec(z_max, n_points), SolveGrid(c_max=c_max, n_c=n_c, n_t=n_t), n_xi
    except DomainError as err:
        raise ConfigError(f"grids: {err}") from err


def _build_risk(data, model):
    blk = _block(data, "risk")
    sigma_b = _number(blk, "risk", "sigma_b", default=None, positive=True)
    u_max = _number(blk, "risk", "u_max", default=None, positive=True)
    n_u = _integer(blk, "risk", "n_u", default=2**14, minimum=16)
    n_paths = _integer(blk, "risk", "n_paths", default=10**5, minimum=1000)
    seed = _integer(blk, "risk", "seed", default=2024, minimum=0)
    share = _number(blk, "risk", "share", default=None, minimum=0.0)
    _no_extras(blk, "risk")
    if sigma_b is None:
        sigma_b = model.eta
    if not sigma_b < model.severity.mgf_boundary:
        raise ConfigError(
            f"risk.sigma_b = {sigma_b:g} must stay below the severity "
            f"exponential-moment boundary {model.severity.mgf_boundary:g}"
        )
    if share is not None and share > 1.0:
        raise ConfigError("risk.share must lie in [0, 1]")
    return sigma_b, u_max, n_u, n_paths, seed, share


def config_from_mapping(data, source="<mapping>") -> ExperimentConfig:
    """Build a config from an already-parsed mapping; used by the loader."""
    data = dict(data)
    model = _build_model(data)
    market = _build_market(data, model)
    payoff = _build_payoff(data)
    zgrid, sgrid, n_xi = _build_grids(data, model, payoff)
    sigma_b, u_max, n_u, n_paths, seed, share = _build_risk(data, model)
    out_blk = _block(data, "output")
    out_dir = out_blk.pop("directory", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output.directory must be a non-empty string")
    _no_extras(out_blk, "output")
    _no_extras(data, "config")
    return ExperimentConfig(
        model=model,
        market=market,
        payoff=payoff,
        zgrid=zgrid,
        sgrid=sgrid,
        n_xi=n_xi,
        sigma_b=sigma_b,
        u_max=u_max,
        n_u=n_u,
        n_paths=n_paths,
        seed=seed,
        share=share,
        out_dir=out_dir,
        source=str(source),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    return config_from_mapping(data, source=str(path))


def validate_config(cfg: ExperimentConfig) -> dict:
    """Model admissibility plus grid feasibility, as a JSON-ready report."""
    report = validate_assumptions(cfg.model)
    out = {"ok": report.ok, "model": report.as_dict(), "grid": {}, "messages": list(report.messages)}
    grid_info = {
        "z_max": cfg.zgrid.z_max,
        "n_points": cfg.zgrid.n_points,
        "c_max": cfg.sgrid.c_max,
        "n_c": cfg.sgrid.n_c,
        "n_t": cfg.sgrid.n_t,
        "dt": cfg.model.horizon / cfg.sgrid.n_t,
        "n_xi": cfg.n_xi,
    }
    try:
        _validate_setup(cfg.model, cfg.payoff, cfg.zgrid, cfg.sgrid)
        grid_info["feasible"] = True
    except (GridError, DomainError) as err:
        grid_info["feasible"] = False
        out["ok"] = False
        out["messages"].append(str(err))
    out["grid"] = grid_info
    return out
