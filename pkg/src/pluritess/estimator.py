"""Truncation-map estimation by simulated annealing.

The fit target is the max-entropy pattern distribution p*; a candidate
map is scored by the KL divergence of the mapped Monte-Carlo pattern
frequencies from p* (+inf when a supported category has no node, or
when the candidate produces patterns p* rules out).  Proposals follow
the prior: birth / death / move with node-count weights proportional to
the Poisson pmf at {nu-1, nu, nu+1}.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from . import _kernels
from .bme import PATTERN_OFFSETS
from .grf import covariance_matrix, CovarianceFactor
from .tessellation import NODE_SEPARATION_TOL, TruncationMap

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Prior on maps: node count ~ Poisson(mean_nodes) truncated to >= 1,
    coordinates iid standard normal, colors uniform on the categories."""

    mean_nodes: float
    categories: tuple

    def __post_init__(self):
        if not self.mean_nodes > 0.0:
            raise ValueError("mean_nodes must be positive")
        object.__setattr__(self, "categories",
                           tuple(int(c) for c in self.categories))
        if len(self.categories) == 0:
            raise ValueError("need at least one category")


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling: T at step i (1-based) is t0 * alpha**(i-1)."""

    t0: float = 500.0
    alpha: float = 0.9995
    iterations: int = 9000

    def __post_init__(self):
        if not self.t0 > 0.0:
            raise ValueError("t0 must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


class MismatchConfig:
    """Frozen ingredients of the mismatch evaluation.

    Holds the target pattern table, the pattern-site covariance factors
    of the two latent fields, and the Monte-Carlo sample count.
    """

    __slots__ = ("target_flat", "categories", "k", "kpow", "support",
                 "n_samples", "chol_x", "chol_y")

    def __init__(self, pstar, cov_x, cov_y, n_samples=20_000):
        self.target_flat = pstar.flat
        self.categories = pstar.categories
        self.k = pstar.k
        self.kpow = self.k ** np.arange(len(PATTERN_OFFSETS), dtype=np.int64)
        self.support = frozenset(pstar.support_categories())
        self.n_samples = int(n_samples)
        offs = np.asarray(PATTERN_OFFSETS, dtype=float)
        self.chol_x = np.ascontiguousarray(
            CovarianceFactor(covariance_matrix(offs, cov_x)).chol)
        self.chol_y = np.ascontiguousarray(
            CovarianceFactor(covariance_matrix(offs, cov_y)).chol)


def mismatch(tmap, cfg, rng):
    """KL divergence of the map's Monte-Carlo pattern frequencies from p*.

    +inf when a p*-supported category has no node of that color, and
    when the sampled frequencies charge a p*-zero pattern.
    """
    if tmap.categories != cfg.categories:
        raise ValueError("map and target categories disagree")
    if not cfg.support <= {int(c) for c in tmap.colors}:
        return float("inf")
    n = cfg.n_samples
    npos = len(PATTERN_OFFSETS)
    zx = rng.standard_normal((n, npos)) @ cfg.chol_x.T
    zy = rng.standard_normal((n, npos)) @ cfg.chol_y.T
    idx = np.empty(n * npos, dtype=np.int64)
    _kernels.nearest_node(np.ascontiguousarray(zx.ravel()),
                          np.ascontiguousarray(zy.ravel()),
                          tmap.nodes, idx)
    digits = tmap.color_index[idx].reshape(n, npos)
    codes = digits @ cfg.kpow
    counts = np.bincount(codes, minlength=cfg.k ** npos)
    nz = counts > 0
    fhat = counts[nz] / n
    target = cfg.target_flat[nz]
    if np.any(target == 0.0):
        return float("inf")
    return float(np.sum(fhat * np.log(fhat / target)))


def _log_poisson_pmf(k, mu):
    return k * math.log(mu) - mu - math.lgamma(k + 1.0)


def node_count_weights(nu, mean_nodes):
    """Normalized probabilities of proposing nu-1, nu, nu+1 nodes.

    Proportional to the Poisson pmf at each count; the downward weight
    vanishes at nu == 1 (the prior has no empty map)."""
    logs = np.array([
        _log_poisson_pmf(nu - 1, mean_nodes) if nu > 1 else -np.inf,
        _log_poisson_pmf(nu, mean_nodes),
        _log_poisson_pmf(nu + 1, mean_nodes),
    ])
    w = np.exp(logs - logs.max())
    return w / w.sum()


def sample_prior(prior, rng):
    """Draw a truncation map from the prior."""
    p0 = math.exp(-prior.mean_nodes)
    q = p0 + rng.random() * (1.0 - p0)
    nu = max(1, int(poisson.ppf(min(q, 1.0 - 1e-16), prior.mean_nodes)))
    nodes = _draw_separated_nodes(nu, rng)
    colors = rng.integers(0, len(prior.categories), size=nu)
    return TruncationMap(nodes, [prior.categories[c] for c in colors],
                         prior.categories)


def _draw_separated_nodes(nu, rng):
    nodes = rng.standard_normal((nu, 2))
    for i in range(1, nu):
        for _ in range(100):
            d = np.hypot(*(nodes[:i] - nodes[i]).T)
            if d.min() >= NODE_SEPARATION_TOL:
                break
            nodes[i] = rng.standard_normal(2)
    return nodes


def _coord_logpdf(p):
    return -0.5 * (p[0] ** 2 + p[1] ** 2) - _LOG_2PI


def _fresh_position(nodes, skip, rng):
    # redraw on (measure-zero) near-coincidence with retained nodes
    others = np.delete(nodes, skip, axis=0) if skip is not None else nodes
    for _ in range(100):
        p = rng.standard_normal(2)
        if others.shape[0] == 0 or np.hypot(*(others - p).T).min() >= NODE_SEPARATION_TOL:
            return p
    return p


@dataclass(frozen=True)
class Proposal:
    """A proposed map plus the log proposal-density ratio
    log q(current | proposed) - log q(proposed | current)."""

    tmap: TruncationMap
    kind: str
    log_q_ratio: float


def propose(tmap, prior, rng):
    """One birth/death/move proposal from the prior-shaped kernel."""
    nu = tmap.node_count
    ncats = len(prior.categories)
    w = node_count_weights(nu, prior.mean_nodes)
    u = rng.random()
    if u < w[0]:
        # death: remove a uniform node; reverse move is its birth
        i = int(rng.integers(nu))
        removed = tmap.nodes[i]
        new = tmap.replace(nodes=np.delete(tmap.nodes, i, axis=0),
                           colors=np.delete(tmap.colors, i))
        w_rev = node_count_weights(nu - 1, prior.mean_nodes)
        log_fwd = math.log(w[0]) - math.log(nu)
        log_rev = (math.log(w_rev[2]) + _coord_logpdf(removed)
                   - math.log(ncats))
        return Proposal(new, "death", log_rev - log_fwd)
    if u < w[0] + w[1]:
        # move: resample a uniform node's position and color from the prior
        i = int(rng.integers(nu))
        old = tmap.nodes[i].copy()
        pos = _fresh_position(tmap.nodes, i, rng)
        col = prior.categories[int(rng.integers(ncats))]
        nodes = tmap.nodes.copy()
        colors = tmap.colors.copy()
        nodes[i] = pos
        colors[i] = col
        new = tmap.replace(nodes=nodes, colors=colors)
        return Proposal(new, "move", _coord_logpdf(old) - _coord_logpdf(pos))
    # birth: append a prior-drawn node; reverse move is its death
    pos = _fresh_position(tmap.nodes, None, rng)
    col = prior.categories[int(rng.integers(ncats))]
    new = tmap.replace(nodes=np.vstack([tmap.nodes, pos]),
                       colors=np.append(tmap.colors, col))
    w_rev = node_count_weights(nu + 1, prior.mean_nodes)
    log_fwd = math.log(w[2]) + _coord_logpdf(pos) - math.log(ncats)
    log_rev = math.log(w_rev[0]) - math.log(nu + 1)
    return Proposal(new, "birth", log_rev - log_fwd)


@dataclass
class AnnealResult:
    """Best-mismatch map seen, its mismatch, the final state, and the
    per-iteration trace (plus any requested snapshots)."""

    tmap: TruncationMap
    mismatch: float
    final_map: TruncationMap
    final_mismatch: float
    trace: dict
    snapshots: dict


def _accept_prob(f_cur, f_new, temp, log_q_ratio=0.0):
    if math.isinf(f_new) and f_new > 0:
        return 0.0
    if math.isinf(f_cur) and f_cur > 0:
        return 1.0
    a = (f_cur - f_new) / temp + log_q_ratio
    return 1.0 if a >= 0.0 else math.exp(a)


def anneal(pstar_cfg, prior, schedule, rng, theta0=None, snapshot_at=()):
    """Simulated annealing of the truncation map against a MismatchConfig.

    Acceptance exp((F_cur - F_new)/T) capped at 1, geometric cooling,
    fresh per-iteration Monte-Carlo streams for the mismatch (derived
    from `rng` so runs are reproducible).  Returns the best state seen.
    """
    cfg = pstar_cfg
    if tuple(prior.categories) != cfg.categories:
        raise ValueError("prior and target categories disagree")
    master = int(rng.integers(2 ** 63))
    if theta0 is None:
        theta0 = sample_prior(prior, rng)
    cur = theta0
    f_cur = mismatch(cur, cfg, np.random.default_rng([master, 0]))
    best, f_best = cur, f_cur
    snapshot_at = set(int(s) for s in snapshot_at)
    snapshots = {}
    if 0 in snapshot_at:
        snapshots[0] = cur
    n = schedule.iterations
    trace = {
        "iteration": np.arange(1, n + 1, dtype=np.int64),
        "mismatch": np.empty(n),
        "node_count": np.empty(n, dtype=np.int64),
        "temperature": np.empty(n),
        "accepted": np.zeros(n, dtype=np.int64),
    }
    temp = schedule.t0
    for i in range(1, n + 1):
        prop = propose(cur, prior, rng)
        f_new = mismatch(prop.tmap, cfg, np.random.default_rng([master, i]))
        if rng.random() < _accept_prob(f_cur, f_new, temp):
            cur, f_cur = prop.tmap, f_new
            trace["accepted"][i - 1] = 1
        if f_cur < f_best:
            best, f_best = cur, f_cur
        trace["mismatch"][i - 1] = f_cur
        trace["node_count"][i - 1] = cur.node_count
        trace["temperature"][i - 1] = temp
        if i in snapshot_at:
            snapshots[i] = cur
        temp *= schedule.alpha
    return AnnealResult(best, f_best, cur, f_cur, trace, snapshots)


@dataclass
class ChainResult:
    """Posterior-style chain from the Metropolis-Hastings variant."""

    maps: list
    mismatch: np.ndarray
    accepted: np.ndarray


def metropolis_hastings(pstar_cfg, prior, iterations, rng, theta0=None):
    """Fixed-temperature (T=1) sampler over maps: the annealing kernel
    with the proposal-density ratio restored in the acceptance."""
    cfg = pstar_cfg
    master = int(rng.integers(2 ** 63))
    if theta0 is None:
        theta0 = sample_prior(prior, rng)
    cur = theta0
    f_cur = mismatch(cur, cfg, np.random.default_rng([master, 0]))
    maps = []
    fs = np.empty(iterations)
    acc = np.zeros(iterations, dtype=np.int64)
    for i in range(1, iterations + 1):
        prop = propose(cur, prior, rng)
        f_new = mismatch(prop.tmap, cfg, np.random.default_rng([master, i]))
        if rng.random() < _accept_prob(f_cur, f_new, 1.0, prop.log_q_ratio):
            cur, f_cur = prop.tmap, f_new
            acc[i - 1] = 1
        maps.append(cur)
        fs[i - 1] = f_cur
    return ChainResult(maps, fs, acc)


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "mismatch", "node_count", "temperature",
                    "accepted"])
        for i in range(len(trace["iteration"])):
            w.writerow([int(trace["iteration"][i]),
                        repr(float(trace["mismatch"][i])),
                        int(trace["node_count"][i]),
                        repr(float(trace["temperature"][i])),
                        int(trace["accepted"][i])])


def read_trace(path):
    cols = {"iteration": [], "mismatch": [], "node_count": [],
            "temperature": [], "accepted": []}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cols["iteration"].append(int(row["iteration"]))
            cols["mismatch"].append(float(row["mismatch"]))
            cols["node_count"].append(int(row["node_count"]))
            cols["temperature"].append(float(row["temperature"]))
            cols["accepted"].append(int(row["accepted"]))
    return {"iteration": np.array(cols["iteration"], dtype=np.int64),
            "mismatch": np.array(cols["mismatch"]),
            "node_count": np.array(cols["node_count"], dtype=np.int64),
            "temperature": np.array(cols["temperature"]),
            "accepted": np.array(cols["accepted"], dtype=np.int64)}
