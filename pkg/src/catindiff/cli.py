"""Command line entry: validate, price, compare, simulate, pl-dist, residual-risk.

Each command is a pure function of its config file plus the seed: outputs
land in the config's output directory (or --out) and reruns reproduce them
byte for byte. The pricing artifacts persist the policy surface as CSV, so
the distribution commands reuse an expensive solve instead of repeating it.

Exit codes: 0 success, 1 invalid configuration or missing inputs,
2 numerical failure inside a solver.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config, validate_config
from .errors import (
    ConfigError,
    ConsistencyError,
    DomainError,
    GridError,
    StabilityError,
)
from .report import (
    comparison_figure,
    density_figure,
    paths_figure,
    price_figure,
    read_matrix_csv,
    residual_figure,
    save_figure,
    write_columns_csv,
    write_json,
    write_matrix_csv,
)
from .risk import pl_density, residual_risk_density
from .simulate import ConstantPolicy, FeedbackPolicy, mc_expected_utility, sample_path
from .solver import price_surface, w0_rate

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catindiff",
        description="Utility-indifference pricing of catastrophe derivatives "
        "under clustered claim arrivals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, out=True, seed=False, threads=False):
        cmd = sub.add_parser(name, help=help_text)
        if name == "compare":
            cmd.add_argument(
                "--config",
                action="append",
                required=True,
                metavar="PATH",
                help="config file; give twice, baseline first",
            )
        else:
            cmd.add_argument("--config", required=True, metavar="PATH")
        if out:
            cmd.add_argument("--out", metavar="DIR", help="output directory override")
        if seed:
            cmd.add_argument("--seed", type=int, metavar="U64")
        if threads:
            cmd.add_argument(
                "--threads", type=int, default=1, metavar="N", help="0 = all cores"
            )
        return cmd

    add("validate", "check model assumptions and grid feasibility", out=False)
    add("price", "solve the indifference price and persist the policy surface")
    add("compare", "run two configs and report the loading reductions side by side")
    add("simulate", "sample paths and estimate expected utility", seed=True, threads=True)
    add("pl-dist", "invert the profit-loss transform on the priced policy", threads=True)
    add("residual-risk", "coupled Monte Carlo around the priced policy", seed=True)
    return parser


def _outdir(cfg, args) -> Path:
    out = Path(getattr(args, "out", None) or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(args) -> int:
    n = getattr(args, "threads", 1)
    return (os.cpu_count() or 1) if n == 0 else max(n, 1)


def _seed(cfg, args) -> int:
    seed = getattr(args, "seed", None)
    return cfg.seed if seed is None else seed


def _price_core(cfg):
    res = price_surface(cfg.model, cfg.market, cfg.payoff, cfg.zgrid, cfg.sgrid, cfg.n_xi)
    loading0 = float(cfg.market.loading_for_share(np.array([res.xi0_star]))[0])
    loadings = np.asarray(cfg.market.loading_for_share(res.policy))
    # loading0 > 0 whenever the no-derivative optimum is interior
    reduction = (loading0 - loadings) / loading0 * 100.0
    summary = {
        "price_at_origin": res.price_at_origin(),
        "w0_slope": res.w0_slope,
        "xi0": res.xi0_star,
        "consistency_gap": res.consistency_gap,
        "loading_without": loading0,
        "loading_with_mean": float(np.mean(loadings)),
        "loading_reduction_mean_pct": float(np.mean(reduction)),
        "loading_reduction_max_pct": float(np.max(reduction)),
        "source": cfg.source,
    }
    return res, summary


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    report = validate_config(cfg)
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0 if report["ok"] else 1


def cmd_price(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    res, summary = _price_core(cfg)
    write_matrix_csv(out / "price.csv", res.times, res.c_nodes, res.surface)
    write_matrix_csv(out / "policy.csv", res.times, res.c_nodes, res.policy)
    write_json(out / "summary.json", summary)
    save_figure(price_figure(res), out / "price.png")
    print(f"price at origin: {summary['price_at_origin']:.6g}  (artifacts in {out})")
    return 0


def cmd_compare(args) -> int:
    if len(args.config) != 2:
        raise ConfigError("compare needs exactly two --config arguments")
    entries = {}
    for label, path in zip(("first", "second"), args.config):
        _, summary = _price_core(load_config(path))
        entries[label] = summary
    out = Path(args.out) if args.out else Path(load_config(args.config[0]).out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "comparison.json", entries)
    save_figure(comparison_figure(entries), out / "compare.png")
    for label in entries:
        e = entries[label]
        print(
            f"{label}: loading reduction mean {e['loading_reduction_mean_pct']:.3g}% "
            f"max {e['loading_reduction_max_pct']:.3g}%  ({e['source']})"
        )
    return 0


def _stored_policy(cfg, out: Path):
    times, c_nodes, shares = read_matrix_csv(out / "policy.csv")
    return FeedbackPolicy(times, c_nodes, shares)


def _stored_summary(out: Path) -> dict:
    path = out / "summary.json"
    if not path.exists():
        raise FileNotFoundError(
            f"{path} is missing; run `catindiff price` into this directory first"
        )
    return json.loads(path.read_text())


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    seed = _seed(cfg, args)
    if cfg.share is not None:
        policy, source = ConstantPolicy(cfg.share), "constant share from config"
    elif (out / "policy.csv").exists():
        policy, source = _stored_policy(cfg, out), "stored policy surface"
    else:
        policy = ConstantPolicy(w0_rate(cfg.model, cfg.market)[1])
        source = "no-derivative optimum"

    # estimate first: an invalid seed should fail before artifacts appear
    est = mc_expected_utility(
        cfg.model, cfg.market, policy, cfg.payoff, cfg.n_paths, seed,
        threads=_threads(args),
    )

    n_show = min(cfg.n_paths, 100)
    samples = [
        sample_path(cfg.model, cfg.market, policy, (seed + i) % 2**64)
        for i in range(n_show)
    ]
    cols = {name: [] for name in (
        "path_id", "jump_time", "count", "claim_total", "accepted_total", "wealth_after"
    )}
    for i, ps in enumerate(samples):
        for k in range(ps.times.size):
            cols["path_id"].append(i)
            cols["jump_time"].append(ps.times[k])
            cols["count"].append(ps.counts[k])
            cols["claim_total"].append(ps.claim_totals[k])
            cols["accepted_total"].append(ps.accepted_totals[k])
            cols["wealth_after"].append(ps.wealth_path[k])
    write_columns_csv(out / "paths.csv", list(cols), list(cols.values()))

    summary = {
        "expected_utility": est.estimate,
        "std_error": est.std_error,
        "certainty_equivalent": float(-np.log(-est.estimate) / cfg.model.eta),
        "n_paths": est.n_paths,
        "seed": est.seed,
        "policy_source": source,
    }
    write_json(out / "simulate_summary.json", summary)
    save_figure(paths_figure(samples[: min(5, n_show)], cfg.model.horizon), out / "paths.png")
    print(
        f"expected utility {est.estimate:.9g} (se {est.std_error:.3g}) "
        f"over {est.n_paths} paths; {source}"
    )
    return 0


def cmd_pl_dist(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    summary = _stored_summary(out)
    policy = _stored_policy(cfg, out)
    dens, diag = pl_density(
        cfg.model,
        cfg.market,
        policy,
        cfg.payoff,
        summary["price_at_origin"],
        cfg.sgrid,
        cfg.zgrid,
        sigma_b=cfg.sigma_b,
        n_u=cfg.n_u,
        u_max=cfg.u_max,
        threads=_threads(args),
    )
    write_columns_csv(out / "pl_density.csv", ["rho", "density"], [dens.rho, dens.density])
    diag["mass"] = dens.mass
    diag["price"] = summary["price_at_origin"]
    write_json(out / "pl_diag.json", diag)
    save_figure(
        density_figure(dens, "profit-loss rho", "profit-loss density"),
        out / "pl_density.png",
    )
    print(f"profit-loss density on [{dens.rho[0]:.4g}, {dens.rho[-1]:.4g}], "
          f"mass {dens.mass:.6f}")
    return 0


def cmd_residual_risk(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    seed = _seed(cfg, args)
    summary = _stored_summary(out)
    policy_star = _stored_policy(cfg, out)
    policy_zero = ConstantPolicy(summary["xi0"])
    rr = residual_risk_density(
        cfg.model,
        cfg.market,
        policy_star,
        policy_zero,
        cfg.payoff,
        summary["price_at_origin"],
        cfg.n_paths,
        seed,
    )
    payload = dict(rr.quantiles)
    payload["n_paths"] = rr.n_paths
    payload["seed"] = rr.seed
    write_json(out / "residual_quantiles.json", payload)
    write_columns_csv(
        out / "residual_hist.csv", ["rho", "density"],
        [rr.histogram.rho, rr.histogram.density],
    )
    write_columns_csv(
        out / "residual_smoothed.csv", ["rho", "density"],
        [rr.smoothed.rho, rr.smoothed.density],
    )
    save_figure(residual_figure(rr), out / "residual.png")
    print(
        "residual risk quantiles: "
        + "  ".join(f"{k} {rr.quantiles[k]:.6g}" for k in rr.quantiles)
    )
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "price": cmd_price,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "pl-dist": cmd_pl_dist,
    "residual-risk": cmd_residual_risk,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DomainError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (GridError, StabilityError, ConsistencyError, OverflowError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
