"""Monte Carlo simulation of the loss index, thinned claims, and wealth.

The index jumps at Poisson epochs; each jump carries a batch of claims
whose severities arrive together. A policy assigns every claim an
acceptance test U <= xi evaluated at the pre-jump state, so the company's
claim flow is a thinning of the market flow and the wealth process earns
premium income between jumps and pays accepted severities at them.

Randomness is counter-based: paths are grouped into fixed chunks of 4096
and each chunk owns a Philox generator keyed by (seed, chunk index). Draws
inside a chunk follow a frozen order (jump counts, jump times, branch
uniforms, batch-size uniforms, severity uniforms, acceptance uniforms),
and severities and batch sizes come from inverse-cdf sampling. Results are
therefore bitwise reproducible for a given seed and independent of how
chunks are distributed over worker threads; thinning couplings reuse one
set of draws across policies. Thread-level reduction adds per-chunk
moment triples in a fixed pairwise tree, never in completion order.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError
from .market import MarketModel
from .model import ClaimsModel, ShiftedPoissonCats, TabulatedCats

CHUNK = 4096


@dataclass(frozen=True)
class ConstantPolicy:
    """Accept the same market share at every state."""

    xi: float

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise DomainError("share must lie in [0, 1]")

    def share_at(self, t, c):
        return np.full_like(np.asarray(t, dtype=float), self.xi)


class FeedbackPolicy:
    """Share surface on the solver lattice, frozen within each time step.

    Between jumps the index is constant, so the share seen by the wealth
    drift changes only when the solver's time grid ticks; within a step the
    share is the row value, interpolated linearly across index nodes and
    held constant beyond the last node.
    """

    def __init__(self, times, c_nodes, shares):
        t = np.asarray(times, dtype=float)
        c = np.asarray(c_nodes, dtype=float)
        s = np.asarray(shares, dtype=float)
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
            raise DomainError("time grid must be 1-d and start at 0")
        steps = np.diff(t)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * t[-1]:
            raise DomainError("time grid must be uniform and increasing")
        if c.ndim != 1 or c.size < 2 or c[0] != 0.0 or np.any(np.diff(c) <= 0):
            raise DomainError("index grid must be 1-d, increasing, from 0")
        if s.shape != (t.size, c.size):
            raise DomainError("share surface must be (n_times, n_c)")
        if np.any(s < -1e-12) or np.any(s > 1.0 + 1e-12):
            raise DomainError("shares must lie in [0, 1]")
        self.times = t
        self.c_nodes = c
        self.shares = np.clip(s, 0.0, 1.0)
        self.dt = float(t[1] - t[0])
        self.dc = float(c[1] - c[0])

    @classmethod
    def from_solution(cls, result):
        return cls(result.times, result.c_nodes, result.policy)

    def _locate(self, t, c):
        k = np.minimum((np.asarray(t) / self.dt).astype(np.int64), self.times.size - 2)
        j = np.clip((np.asarray(c) / self.dc).astype(np.int64), 0, self.c_nodes.size - 2)
        w = np.clip(np.asarray(c) / self.dc - j, 0.0, 1.0)
        return k, j, w

    def share_at(self, t, c):
        k, j, w = self._locate(t, c)
        return self.shares[k, j] * (1.0 - w) + self.shares[k, j + 1] * w


class _ConstantDrift:
    """Accumulated premium income t -> q(xi) t for a constant share."""

    def __init__(self, policy: ConstantPolicy, market: MarketModel):
        self.q = float(market.premium_income(policy.xi))

    def value(self, t, c):
        return self.q * np.asarray(t, dtype=float)


class _FeedbackDrift:
    """Accumulated premium income along a feedback surface.

    Prefix sums of the per-step income table make the integral of
    q(xi(s, c)) ds over any interval a difference of two lookups; the
    index argument is interpolated the same way as the share itself.
    """

    def __init__(self, policy: FeedbackPolicy, market: MarketModel):
        self.policy = policy
        self.income = market.premium_income(policy.shares)
        prefix = np.zeros_like(self.income)
        np.cumsum(self.income[:-1] * policy.dt, axis=0, out=prefix[1:])
        self.prefix = prefix

    def value(self, t, c):
        k, j, w = self.policy._locate(t, c)
        frac = np.asarray(t) - k * self.policy.dt
        lead = self.prefix[k, j] + frac * self.income[k, j]
        trail = self.prefix[k, j + 1] + frac * self.income[k, j + 1]
        return lead * (1.0 - w) + trail * w


def _make_drift(policy, market):
    if isinstance(policy, ConstantPolicy):
        return _ConstantDrift(policy, market)
    if isinstance(policy, FeedbackPolicy):
        return _FeedbackDrift(policy, market)
    raise DomainError("policy must be ConstantPolicy or FeedbackPolicy")


@dataclass(frozen=True)
class PathSample:
    """One realized path, recorded at its jump epochs.

    Flat claim-level arrays are grouped by jump through claim_offsets;
    *_path arrays hold post-jump values, so the terminal state repeats the
    last entry unless the path has no jumps.
    """

    times: np.ndarray
    counts: np.ndarray
    severities: np.ndarray
    uniforms: np.ndarray
    claim_offsets: np.ndarray
    shares: np.ndarray
    claim_totals: np.ndarray
    accepted_totals: np.ndarray
    index_path: np.ndarray
    accepted_path: np.ndarray
    wealth_path: np.ndarray
    x0: float
    c0: float
    index_terminal: float
    accepted_terminal: float
    wealth_terminal: float


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error; unpacks as a pair."""

    estimate: float
    std_error: float
    n_paths: int
    seed: int

    def __iter__(self):
        return iter((self.estimate, self.std_error))


class _ChunkDraws:
    """All randomness for one chunk of paths, in the frozen draw order."""

    __slots__ = (
        "n_paths", "n_jumps", "jump_offsets", "path_of_jump", "times",
        "counts", "claim_offsets", "sev_u", "severities", "acc_u",
    )

    def __init__(self, model: ClaimsModel, n_paths: int, rng):
        self.n_paths = n_paths
        self.n_jumps = rng.poisson(model.lam * model.horizon, size=n_paths)
        self.jump_offsets = np.concatenate(
            [[0], np.cumsum(self.n_jumps)]
        ).astype(np.int64)
        total_j = int(self.jump_offsets[-1])
        self.path_of_jump = np.repeat(np.arange(n_paths), self.n_jumps)

        u_t = rng.random(total_j)
        order = np.lexsort((u_t, self.path_of_jump))
        self.times = model.horizon * u_t[order]

        u_branch = rng.random(total_j)
        u_count = rng.random(total_j)
        counts = np.ones(total_j, dtype=np.int64)
        if model.lam > 0 and model.lambda2 > 0.0:
            cat = u_branch > model.lambda1 / model.lam
            counts[cat] = _count_inverse(model.cat_count, u_count[cat])
        self.counts = counts
        self.claim_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        total_c = int(self.claim_offsets[-1])

        self.sev_u = rng.random(total_c)
        self.severities = model.severity.ppf(self.sev_u)
        self.acc_u = rng.random(total_c)


def _count_inverse(law, u):
    """Batch size by inverse cdf; exact for the supported count laws."""
    if isinstance(law, ShiftedPoissonCats):
        return law.shift + stats.poisson.ppf(u, law.rate).astype(np.int64)
    if isinstance(law, TabulatedCats):
        cdf = np.cumsum(law.probs)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), law.probs.size - 1)
        return law.first_k + idx.astype(np.int64)
    raise DomainError("unsupported batch-size law for simulation")


def _evolve(model, draws: _ChunkDraws, policy, drift, x0, c0, severities=None):
    """Terminal state of every path in a chunk under one policy.

    Returns (X_T, C_T, accepted C_T, per-jump arrays) where the per-jump
    tuple carries (pre-jump index, share, claim totals, accepted totals)
    for callers that assemble full paths or acceptance counts.
    """
    B = draws.n_paths
    sev = draws.severities if severities is None else severities
    total_j = draws.times.size
    horizon = model.horizon

    if total_j == 0:
        x_T = x0 + drift.value(np.full(B, horizon), np.full(B, c0))
        zeros = np.zeros(0)
        return x_T, np.full(B, c0), np.full(B, c0), (zeros, zeros, zeros, zeros)

    claim_totals = np.add.reduceat(sev, draws.claim_offsets[:-1])
    cz = np.cumsum(claim_totals)
    starts = draws.jump_offsets[:-1]
    base = np.where(starts > 0, cz[np.maximum(starts - 1, 0)], 0.0)
    index_post = c0 + cz - np.repeat(base, draws.n_jumps)
    index_pre = index_post - claim_totals

    shares = policy.share_at(draws.times, index_pre)
    accepted = draws.acc_u <= np.repeat(shares, draws.counts)
    accepted_totals = np.add.reduceat(np.where(accepted, sev, 0.0), draws.claim_offsets[:-1])

    c_T = c0 + np.bincount(draws.path_of_jump, weights=claim_totals, minlength=B)
    a_T = c0 + np.bincount(draws.path_of_jump, weights=accepted_totals, minlength=B)

    # Premium income telescopes over inter-jump segments at the post-jump
    # index level; segment s of path p runs from its left epoch to the
    # next jump or the horizon.
    seg_end = np.arange(total_j) + draws.path_of_jump
    n_segs = total_j + B
    seg_t0 = np.zeros(n_segs)
    seg_t1 = np.full(n_segs, horizon)
    seg_lvl = np.full(n_segs, float(c0))
    seg_t1[seg_end] = draws.times
    seg_t0[seg_end + 1] = draws.times
    seg_lvl[seg_end + 1] = index_post
    contrib = drift.value(seg_t1, seg_lvl) - drift.value(seg_t0, seg_lvl)
    drift_T = np.bincount(
        np.repeat(np.arange(B), draws.n_jumps + 1), weights=contrib, minlength=B
    )

    x_T = x0 + drift_T - (a_T - c0)
    return x_T, c_T, a_T, (index_pre, shares, claim_totals, accepted_totals)


def _assemble_path(model, draws, policy, drift, x0, c0) -> PathSample:
    x_T, c_T, a_T, (index_pre, shares, claim_totals, accepted_totals) = _evolve(
        model, draws, policy, drift, x0, c0
    )
    n = draws.times.size
    if n == 0:
        empty = np.zeros(0)
        return PathSample(
            times=empty, counts=np.zeros(0, dtype=np.int64), severities=empty,
            uniforms=empty, claim_offsets=np.zeros(1, dtype=np.int64),
            shares=empty, claim_totals=empty, accepted_totals=empty,
            index_path=empty, accepted_path=empty, wealth_path=empty,
            x0=x0, c0=c0, index_terminal=float(c_T[0]),
            accepted_terminal=float(a_T[0]), wealth_terminal=float(x_T[0]),
        )
    index_path = c0 + np.cumsum(claim_totals)
    accepted_path = c0 + np.cumsum(accepted_totals)
    lvl_pre = np.concatenate([[c0], index_path[:-1]])
    left = np.concatenate([[0.0], draws.times[:-1]])
    drift_to_jump = np.cumsum(drift.value(draws.times, lvl_pre) - drift.value(left, lvl_pre))
    wealth_path = x0 + drift_to_jump - (accepted_path - c0)
    return PathSample(
        times=draws.times.copy(), counts=draws.counts.copy(),
        severities=draws.severities.copy(), uniforms=draws.acc_u.copy(),
        claim_offsets=draws.claim_offsets.copy(), shares=shares,
        claim_totals=claim_totals, accepted_totals=accepted_totals,
        index_path=index_path, accepted_path=accepted_path,
        wealth_path=wealth_path, x0=x0, c0=c0,
        index_terminal=float(c_T[0]), accepted_terminal=float(a_T[0]),
        wealth_terminal=float(x_T[0]),
    )


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < 2**64:
        raise DomainError("seed must be an integer in [0, 2^64)")
    return int(seed)


def _chunk_rng(seed: int, chunk: int):
    return np.random.Generator(np.random.Philox(key=[seed, chunk]))


def sample_path(model, market, policy, seed, x0=0.0, c0=0.0) -> PathSample:
    """Draw one path of (index, accepted claims, wealth) under the policy."""
    seed = _check_seed(seed)
    draws = _ChunkDraws(model, 1, _chunk_rng(seed, 0))
    drift = _make_drift(policy, market)
    return _assemble_path(model, draws, policy, drift, x0, c0)


def coupled_sample(model, market, policy_a, policy_b, seed, x0=0.0, c0=0.0):
    """One set of draws, two policies: the thinning coupling.

    Jump times, batch sizes, severities, and acceptance uniforms are
    shared bitwise; only the acceptance thresholds differ, so terminal
    wealth differences isolate the policies.
    """
    seed = _check_seed(seed)
    draws = _ChunkDraws(model, 1, _chunk_rng(seed, 0))
    out = []
    for policy in (policy_a, policy_b):
        drift = _make_drift(policy, market)
        out.append(_assemble_path(model, draws, policy, drift, x0, c0))
    return tuple(out)


def _chunk_bounds(n_paths):
    edges = list(range(0, n_paths, CHUNK)) + [n_paths]
    return [(i, lo, hi) for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:]))]


def _pairwise_stats(stats_list):
    """Fixed-tree reduction of (n, sum, sumsq, min, max); timing-independent."""
    items = list(stats_list)
    while len(items) > 1:
        nxt = []
        for i in range(0, len(items) - 1, 2):
            a, b = items[i], items[i + 1]
            nxt.append(
                (a[0] + b[0], a[1] + b[1], a[2] + b[2], min(a[3], b[3]), max(a[4], b[4]))
            )
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def mc_expected_utility(
    model,
    market,
    policy,
    payoff,
    n_paths,
    seed,
    x0=0.0,
    c0=0.0,
    antithetic=False,
    threads=1,
) -> MCEstimate:
    """Estimate E[-exp(-eta (X_T + psi(C_T)))] over n_paths simulated paths.

    With antithetic=True each path is paired with a twin whose severity
    uniforms are mirrored (all other draws shared) and the estimator
    averages pair means, halving severity-driven variance at unchanged
    n_paths. threads distributes whole chunks over a thread pool
    (0 picks the host's cpu count); the result is bitwise identical for
    any thread count because chunk draws and the reduction tree are fixed.
    """
    seed = _check_seed(seed)
    if n_paths < 1000:
        raise DomainError("n_paths must be at least 1000")
    drift = _make_drift(policy, market)
    eta = model.eta

    def run_chunk(args):
        idx, lo, hi = args
        draws = _ChunkDraws(model, hi - lo, _chunk_rng(seed, idx))
        x_T, c_T, _, _ = _evolve(model, draws, policy, drift, x0, c0)
        vals = -np.exp(-eta * (x_T + payoff(c_T)))
        if antithetic:
            mirrored = model.severity.ppf(1.0 - draws.sev_u)
            x_T, c_T, _, _ = _evolve(
                model, draws, policy, drift, x0, c0, severities=mirrored
            )
            vals = 0.5 * (vals + (-np.exp(-eta * (x_T + payoff(c_T)))))
        # numpy's pairwise summation is deterministic for a fixed array, and
        # chunk contents never depend on the thread layout.
        return (
            hi - lo,
            float(np.sum(vals)),
            float(np.sum(vals * vals)),
            float(np.min(vals)),
            float(np.max(vals)),
        )

    bounds = _chunk_bounds(n_paths)
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            triples = list(pool.map(run_chunk, bounds))
    else:
        triples = [run_chunk(b) for b in bounds]

    n, total, total_sq, vmin, vmax = _pairwise_stats(triples)
    mean = total / n
    if vmin == vmax:
        # a literally constant sample: its standard error is zero, not
        # the cancellation noise of sumsq - n mean^2
        se = 0.0
        mean = vmin
    else:
        var = max(total_sq / n - mean * mean, 0.0)
        se = np.sqrt(var / max(n - 1, 1))
    return MCEstimate(
        estimate=float(mean), std_error=float(se), n_paths=int(n), seed=seed
    )


def claim_acceptance_counts(model, market, policy, n_paths, seed, c0=0.0):
    """Per-path (total claims, accepted claims) for thinning diagnostics."""
    seed = _check_seed(seed)
    drift = _make_drift(policy, market)
    totals = np.zeros(n_paths, dtype=np.int64)
    accepted_n = np.zeros(n_paths, dtype=np.int64)
    for idx, lo, hi in _chunk_bounds(n_paths):
        draws = _ChunkDraws(model, hi - lo, _chunk_rng(seed, idx))
        if draws.times.size == 0:
            continue
        _, _, _, (_, shares, _, _) = _evolve(model, draws, policy, drift, 0.0, c0)
        acc = draws.acc_u <= np.repeat(shares, draws.counts)
        claim_path = np.repeat(draws.path_of_jump, draws.counts)
        totals[lo:hi] = np.bincount(claim_path, minlength=hi - lo)
        accepted_n[lo:hi] = np.bincount(
            claim_path, weights=acc, minlength=hi - lo
        ).astype(np.int64)
    return totals, accepted_n
