"""Result files: delimited text, schema-stable JSON, and figures.

Every writer here is deterministic for fixed inputs. Floats are printed at
full double precision so a written surface reads back bit for bit, JSON
keys are sorted, and the figure files carry no software or timestamp
metadata. Re-running a command must reproduce its artifacts byte for byte.
"""

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError

__all__ = [
    "write_json",
    "write_columns_csv",
    "write_matrix_csv",
    "read_matrix_csv",
    "save_figure",
    "price_figure",
    "comparison_figure",
    "density_figure",
    "residual_figure",
    "paths_figure",
]

_FMT = "%.17g"


def _format(x) -> str:
    return _FMT % float(x)


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_columns_csv(path, names, columns):
    cols = [np.asarray(c, dtype=float) for c in columns]
    if len(names) != len(cols) or any(c.shape != cols[0].shape for c in cols):
        raise ConfigError("column names and data lengths disagree")
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(_format(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_matrix_csv(path, times, c_nodes, matrix):
    """Surface as one row per time node; column labels are the c values."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (len(times), len(c_nodes)):
        raise ConfigError("surface shape does not match its axes")
    lines = ["t," + ",".join(_format(c) for c in c_nodes)]
    for t, row in zip(times, matrix):
        lines.append(_format(t) + "," + ",".join(_format(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"surface file not found: {path}")
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t" or len(header) < 2:
            raise ConfigError(f"{path} is not a surface file")
        c_nodes = np.array([float(v) for v in header[1:]])
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    return body[:, 0], c_nodes, body[:, 1:]


def save_figure(fig, path):
    # no Software key: the PNG must hash the same on every rerun
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def price_figure(result):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.0))
    c = result.c_nodes
    ax1.plot(c, result.surface[0], lw=1.5)
    ax1.set_xlabel("index c")
    ax1.set_ylabel("indifference price p(0, c)")
    ax1.set_title("price at inception")
    ax2.plot(c, result.policy[0], lw=1.5, label="with derivative")
    ax2.axhline(result.xi0_star, ls="--", lw=1.0, color="k", label="without")
    ax2.set_xlabel("index c")
    ax2.set_ylabel("optimal market share")
    ax2.set_ylim(-0.02, 1.02)
    ax2.legend(frameon=False)
    ax2.set_title("policy at inception")
    fig.tight_layout()
    return fig


def comparison_figure(entries):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    labels = list(entries)
    means = [entries[k]["loading_reduction_mean_pct"] for k in labels]
    maxes = [entries[k]["loading_reduction_max_pct"] for k in labels]
    x = np.arange(len(labels))
    ax.bar(x - 0.2, means, width=0.4, label="mean")
    ax.bar(x + 0.2, maxes, width=0.4, label="max")
    ax.set_xticks(x, labels)
    ax.set_ylabel("loading reduction (%)")
    ax.set_title("risk-loading reduction from holding the derivative")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def density_figure(dens, xlabel, title):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(dens.rho, dens.density, lw=1.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    ax.set_title(title)
    fig.tight_layout()
    return fig


def residual_figure(rr):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.fill_between(rr.histogram.rho, rr.histogram.density, step="mid", alpha=0.35,
                    label="histogram")
    ax.plot(rr.smoothed.rho, rr.smoothed.density, lw=1.5, label="smoothed")
    for key in ("q05", "q50", "q95"):
        ax.axvline(rr.quantiles[key], ls=":", lw=1.0, color="k")
    ax.set_xlabel("residual profit-loss")
    ax.set_ylabel("density")
    ax.set_title(f"residual risk ({rr.n_paths} coupled paths)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def paths_figure(samples, horizon):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for ps in samples:
        t = np.concatenate([[0.0], ps.times, [horizon]])
        c = np.concatenate([[ps.c0], ps.index_path, [ps.index_terminal]])
        ax.step(t, c, where="post", lw=1.0)
    ax.set_xlabel("time")
    ax.set_ylabel("loss index C_t")
    ax.set_title(f"simulated index paths (n = {len(samples)})")
    fig.tight_layout()
    return fig
