"""Validation of fitted models by logarithmic scoring.

The unordered-data score of a model given an observed event sums, over
observation sites, the expected log predictive probability of the
site's category conditional on a uniformly random subset of the other
observations.  Predictive distributions come from conditional chains:
latent vectors conditioned on the subset, kriged to the target site,
drawn, mapped, tabulated with Laplace smoothing.
"""

import json
from dataclasses import dataclass

import numpy as np

from .grf import CovarianceFactor, covariance_matrix
from .sampler import Event, iter_conditional
from .tessellation import map_field, triangulate


def log_score(pmf, observed, categories):
    """Logarithmic score log p(observed) of a pmf over the categories."""
    pmf = np.asarray(pmf, dtype=float)
    idx = tuple(int(c) for c in categories).index(int(observed))
    return float(np.log(pmf[idx]))


def _allocate(m, slots):
    # spread m replicates as evenly as possible over the retained states
    base = m // slots
    out = np.full(slots, base, dtype=np.int64)
    out[:m - base * slots] += 1
    return out


def predict_at(tmap, cov_x, cov_y, site, subset, m, rng,
               chain_iters=200, burn_in=100, warmup=5, sweeps=3,
               regions=None, factors=None):
    """Laplace-smoothed predictive pmf of the category at one site.

    `subset` (an Event, possibly None/empty) is the conditioning data;
    the site itself must not be part of it.  With data, a conditional
    chain runs on the subset and m replicates of the site's latent pair
    are kriged-and-drawn from the post-burn-in states; without data the
    replicates are prior draws.  Smoothing is (count + 1)/(m + |C|).
    """
    site = np.asarray(site, dtype=float).reshape(2)
    k = len(tmap.categories)
    m = int(m)
    if m < 1:
        raise ValueError("need at least one replicate")
    if subset is not None and subset.n > 0:
        if any(int(sx) == int(site[0]) and int(sy) == int(site[1])
               for sx, sy in subset.sites):
            raise ValueError("target site appears in the conditioning subset")
        if chain_iters <= burn_in:
            raise ValueError("chain_iters must exceed burn_in")
        if regions is None:
            regions = triangulate(tmap)
        if factors is None:
            fx = CovarianceFactor(covariance_matrix(subset.sites, cov_x))
            fy = CovarianceFactor(covariance_matrix(subset.sites, cov_y))
        else:
            fx, fy = factors
        d = np.sqrt(((subset.sites - site) ** 2).sum(-1))
        c0x = cov_x.k(d)
        c0y = cov_y.k(d)
        wx = fx.krige_weights(c0x)
        wy = fy.krige_weights(c0y)
        sdx = float(np.sqrt(np.clip(1.0 - c0x @ wx, 0.0, 1.0)))
        sdy = float(np.sqrt(np.clip(1.0 - c0y @ wy, 0.0, 1.0)))
        slots = min(m, chain_iters - burn_in)
        keep = np.unique(np.linspace(burn_in + 1, chain_iters, slots)
                         .round().astype(np.int64))
        counts_per = _allocate(m, keep.shape[0])
        xs = np.empty(m)
        ys = np.empty(m)
        pos = 0
        ki = 0
        for it, state in iter_conditional(tmap, subset, fx, fy, rng,
                                          chain_iters, warmup=warmup,
                                          sweeps=sweeps, regions=regions):
            if ki < keep.shape[0] and it == keep[ki]:
                q = int(counts_per[ki])
                xs[pos:pos + q] = wx @ state.x + sdx * rng.standard_normal(q)
                ys[pos:pos + q] = wy @ state.y + sdy * rng.standard_normal(q)
                pos += q
                ki += 1
        cats = map_field(tmap, xs, ys)
    else:
        z = rng.standard_normal((m, 2))
        cats = map_field(tmap, z[:, 0], z[:, 1])
    counts = np.zeros(k)
    for ci, c in enumerate(tmap.categories):
        counts[ci] = np.count_nonzero(cats == c)
    return (counts + 1.0) / (m + k)


@dataclass
class PredictiveEstimate:
    """Per-site subset-averaged predictive pmf next to the observation."""

    site: tuple
    observed: int
    pmf: np.ndarray
    score: float


@dataclass
class ScoreReport:
    """Unordered-data log score: total, per-site terms, run settings."""

    total: float
    per_site: list
    config: dict

    def to_json(self):
        return {
            "total": self.total,
            "config": dict(self.config),
            "sites": [{
                "x": int(e.site[0]), "y": int(e.site[1]),
                "category": int(e.observed),
                "score": e.score,
                "pmf": [float(v) for v in e.pmf],
            } for e in self.per_site],
        }


def save_report(report, path):
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")


def load_report(path):
    with open(path) as fh:
        doc = json.load(fh)
    per_site = [PredictiveEstimate((e["x"], e["y"]), e["category"],
                                   np.asarray(e["pmf"]), e["score"])
                for e in doc["sites"]]
    return ScoreReport(doc["total"], per_site, doc.get("config", {}))


def _site_term(tmap, cov_x, cov_y, event, d, n_subsets, m, master,
               chain_iters, burn_in, warmup, sweeps, regions, cov_full_x,
               cov_full_y):
    others = np.array([i for i in range(event.n) if i != d], dtype=np.int64)
    # canonical candidate order + coordinate-keyed streams make the score
    # exactly invariant to how the event rows happen to be ordered
    others = others[np.lexsort((event.sites[others, 1],
                                event.sites[others, 0]))]
    k = len(tmap.categories)
    obs = int(event.categories[d])
    obs_idx = tmap.categories.index(obs)
    mask64 = (1 << 64) - 1  # two's-complement fold keeps seed entries nonneg
    site_key = [int(event.sites[d, 0]) & mask64, int(event.sites[d, 1]) & mask64]
    mean_pmf = np.zeros(k)
    total = 0.0
    for s in range(n_subsets):
        rng = np.random.default_rng([master] + site_key + [s])
        mask = rng.random(others.shape[0]) < 0.5
        idx = others[mask]
        if idx.shape[0] > 0:
            sub = event.subset(idx)
            fx = CovarianceFactor(cov_full_x[np.ix_(idx, idx)])
            fy = CovarianceFactor(cov_full_y[np.ix_(idx, idx)])
            pmf = predict_at(tmap, cov_x, cov_y, event.sites[d], sub, m, rng,
                             chain_iters=chain_iters, burn_in=burn_in,
                             warmup=warmup, sweeps=sweeps, regions=regions,
                             factors=(fx, fy))
        else:
            pmf = predict_at(tmap, cov_x, cov_y, event.sites[d], None, m, rng)
        mean_pmf += pmf
        total += np.log(pmf[obs_idx])
    return total / n_subsets, mean_pmf / n_subsets


def unordered_score(tmap, cov_x, cov_y, event, rng, n_subsets=50, m=50,
                    chain_iters=200, burn_in=100, warmup=5, sweeps=3,
                    n_jobs=1):
    """Unordered-data logarithmic score of a map given an observed event.

    For every site d, averages log P(Z_d = z_d | subset) over `n_subsets`
    uniform random subsets of the remaining observations (independent
    inclusion with probability 1/2), each predictive pmf estimated from
    m conditional replicates; the total is the sum over sites.  All
    chain randomness derives from per-(site, subset) streams seeded off
    `rng`, so results are reproducible and parallelizable.
    """
    if event.n < 1:
        raise ValueError("event must contain at least one site")
    for c in np.unique(event.categories):
        if int(c) not in tmap.categories:
            raise ValueError(f"observed category {int(c)} not in the map")
    master = int(rng.integers(2 ** 63))
    regions = triangulate(tmap)
    cov_full_x = covariance_matrix(event.sites, cov_x)
    cov_full_y = covariance_matrix(event.sites, cov_y)
    args = dict(n_subsets=int(n_subsets), m=int(m), master=master,
                chain_iters=int(chain_iters), burn_in=int(burn_in),
                warmup=int(warmup), sweeps=int(sweeps), regions=regions,
                cov_full_x=cov_full_x, cov_full_y=cov_full_y)
    if n_jobs != 1:
        from joblib import Parallel, delayed
        terms = Parallel(n_jobs=n_jobs)(
            delayed(_site_term)(tmap, cov_x, cov_y, event, d, **args)
            for d in range(event.n))
    else:
        terms = [_site_term(tmap, cov_x, cov_y, event, d, **args)
                 for d in range(event.n)]
    per_site = [
        PredictiveEstimate((int(event.sites[d][0]), int(event.sites[d][1])),
                           int(event.categories[d]), pmf, score)
        for d, (score, pmf) in enumerate(terms)]
    # accumulate in canonical site order so the total is independent of how
    # the event rows were ordered (fp addition is not associative)
    total = float(sum(e.score for e in sorted(per_site, key=lambda e: e.site)))
    config = {"n_subsets": int(n_subsets), "replicates": int(m),
              "chain_iterations": int(chain_iters), "burn_in": int(burn_in),
              "warmup": int(warmup), "sweeps": int(sweeps)}
    return ScoreReport(total, per_site, config)
