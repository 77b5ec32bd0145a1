"""End-to-end acceptance gates.

Each test covers one release gate, prints a single PASS/FAIL summary
line with the measured quantities (written through pytest's terminal
reporter so the lines survive output capture), and enforces a
wall-clock budget.  The later gates share one synthetic scenario, built once per
module: a reference truncation map drawn from the node prior, a smooth
20x20 categorical field simulated through it, a 60-observation event
on the three columns X=10,15,20, and the max-entropy pattern fitted to
the field's unit-lag marginals.

All randomness is seeded, so every gate is deterministic.
"""

import json
import sys
import time
from dataclasses import dataclass

import numpy as np
import pytest

from pluritess import bme
from pluritess.bme import (PATTERN_OFFSETS, PatternPmf, PatternSpec,
                           deming_stephan, entropy, ipf_project,
                           kl_divergence, marginalize, save_marginals,
                           unit_lag_frequencies)
from pluritess.cli import main as cli_main
from pluritess.estimator import (AnnealSchedule, MismatchConfig, PriorSpec,
                                 anneal, sample_prior)
from pluritess.gaussgeom import Triangle, triangle_mass
from pluritess.grf import (CovarianceFactor, CovarianceModel,
                           covariance_matrix, simulate_unconditional)
from pluritess.sampler import (Event, FeasibilityError, RegionPack,
                               assert_feasible, init_state, iter_conditional,
                               propagative_scan, run_conditional, save_event)
from pluritess.scoring import unordered_score
from pluritess.tessellation import (TruncationMap, category_proportions,
                                    map_field, save_map, triangulate)

from conftest import random_pmf

CATS = (0, 1, 2, 3)
COV = CovarianceModel("gaussian", 2.0)   # scenario covariance, both latents


def _announce(request, num, name, ok, detail, elapsed, budget):
    line = (f"[gate {num}] {name}: {'PASS' if ok else 'FAIL'} "
            f"({detail}; {elapsed:.1f}s of {budget:.0f}s)")
    # the terminal reporter holds the pre-capture stream, so the line is
    # visible under pytest's default fd-level capture
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.ensure_newline()
        tr.write_line(line)
    else:
        print(line, file=sys.__stdout__, flush=True)
    return line


@dataclass
class Scenario:
    ref_map: TruncationMap
    sites: np.ndarray
    categories: np.ndarray
    event: Event
    pstar: PatternPmf
    pi_h10: np.ndarray
    pi_h01: np.ndarray


@pytest.fixture(scope="module")
def scenario():
    # rng(10) chosen so the reference map gives every category >= 0.10
    # of the plane and the realized field / event contain all four
    rng = np.random.default_rng(10)
    prior = PriorSpec(20.0, CATS)
    ref = sample_prior(prior, rng)
    gx, gy = np.meshgrid(np.arange(1, 21), np.arange(1, 21), indexing="ij")
    sites = np.column_stack([gx.ravel(), gy.ravel()]).astype(np.int64)
    x = simulate_unconditional(sites, COV, rng)
    y = simulate_unconditional(sites, COV, rng)
    cats = map_field(ref, x, y)
    assert np.array_equal(np.unique(cats), np.asarray(CATS))
    event = Event(sites[np.isin(sites[:, 0], (10, 15, 20))],
                  cats[np.isin(sites[:, 0], (10, 15, 20))])
    assert event.n == 60
    pi10, pi01 = unit_lag_frequencies(sites, cats, CATS)
    spec = PatternSpec.from_unit_lag(CATS, pi10, pi01)
    try:
        pstar = deming_stephan(spec, tol=1e-10, max_sweeps=2000)
    except bme.NotConverged as err:
        # single-realization marginals weight boundary sites differently
        # along the two axes, so no table matches all four constraints
        # exactly; the stalled iterate (max deviation ~1e-3) is the fit
        pstar = err.best
    return Scenario(ref, sites, cats, event, pstar, pi10, pi01)


def test_gate1_pattern_fit_reproduces_marginals(request):
    budget, t0 = 5.0, time.time()
    rng = np.random.default_rng(1)
    p0 = PatternPmf(random_pmf((4,) * 5, rng), CATS)
    spec = PatternSpec.from_pattern_pmf(p0)
    fit = deming_stephan(spec)
    dev = spec.deviation(fit.table)
    gain = entropy(fit.table) - entropy(p0.table)
    elapsed = time.time() - t0
    ok = dev <= 1e-8 and gain >= -1e-12 and elapsed < budget
    line = _announce(request, 1, "max-entropy fit reproduces pair marginals", ok,
                     f"marginal dev {dev:.2e}, entropy gain {gain:+.3e}",
                     elapsed, budget)
    assert ok, line


def test_gate2_projection_identities(request):
    budget, t0 = 5.0, time.time()
    rng = np.random.default_rng(2)
    worst_cond = worst_marg = 0.0
    for trial in range(100):
        k = 2 + trial % 2
        p = random_pmf((k,) * 5, rng)
        q = random_pmf((k,) * 5, rng)
        nb = 1 + int(rng.integers(4))
        b = tuple(sorted(rng.choice(5, size=nb, replace=False).tolist()))
        pi = marginalize(q, b)
        pstar = ipf_project(p, b, pi)
        # D(q || p*) equals the pi-weighted divergence of the conditionals
        rhs = 0.0
        for zb in np.ndindex(*((k,) * nb)):
            sl = [slice(None)] * 5
            for pos, v in zip(b, zb):
                sl[pos] = v
            qs = q[tuple(sl)]
            ps = p[tuple(sl)]
            rhs += qs.sum() * kl_divergence(qs / qs.sum(), ps / ps.sum())
        worst_cond = max(worst_cond, abs(kl_divergence(q, pstar) - rhs))
        # D(p* || p) equals the divergence of the constrained marginal
        worst_marg = max(worst_marg, abs(kl_divergence(pi, marginalize(p, b))
                                         - kl_divergence(pstar, p)))
    elapsed = time.time() - t0
    ok = worst_cond <= 1e-12 and worst_marg <= 1e-12 and elapsed < budget
    line = _announce(request, 2, "projection divergence identities", ok,
                     f"conditional form dev {worst_cond:.2e}, "
                     f"marginal form dev {worst_marg:.2e}", elapsed, budget)
    assert ok, line


def _inside(verts, pts):
    (ax, ay), (bx, by), (cx, cy) = verts
    d1 = (pts[:, 0] - bx) * (ay - by) - (ax - bx) * (pts[:, 1] - by)
    d2 = (pts[:, 0] - cx) * (by - cy) - (bx - cx) * (pts[:, 1] - cy)
    d3 = (pts[:, 0] - ax) * (cy - ay) - (cx - ax) * (pts[:, 1] - ay)
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


def test_gate3_triangle_mass_monte_carlo(request):
    budget, t0 = 120.0, time.time()
    rng = np.random.default_rng(3)
    n, chunk = 10_000_000, 500_000
    worst_z = 0.0
    done = 0
    while done < 50:
        verts = rng.normal(0.0, 1.5, (3, 2))
        try:
            tri = Triangle(verts[0], verts[1], verts[2])
        except ValueError:
            continue
        done += 1
        mass = triangle_mass(tri)
        hits = 0
        for _ in range(n // chunk):
            pts = rng.standard_normal((chunk, 2))
            hits += int(np.count_nonzero(_inside(tri.verts, pts)))
        phat = hits / n
        se = max(np.sqrt(phat * (1.0 - phat) / n),
                 np.sqrt(mass * (1.0 - mass) / n))
        worst_z = max(worst_z, abs(mass - phat) / se)
    quad = abs(triangle_mass(Triangle([0, 0], [40, 0], [0, 40])) - 0.25)
    octant = abs(triangle_mass(Triangle([0, 0], [40, 0], [40, 40])) - 0.125)
    elapsed = time.time() - t0
    ok = worst_z <= 4.0 and quad <= 1e-6 and octant <= 1e-6 and elapsed < budget
    line = _announce(request, 3, "bivariate normal triangle mass", ok,
                     f"worst |z| {worst_z:.2f} of 4, quadrant dev {quad:.1e}, "
                     f"octant dev {octant:.1e}", elapsed, budget)
    assert ok, line


def test_gate4_unconstrained_propagative_correlation(request):
    budget, t0 = 120.0, time.time()
    cov = CovarianceModel("gaussian", 3.0)
    gx, gy = np.meshgrid(np.arange(1, 6), np.arange(1, 6), indexing="ij")
    sites = np.column_stack([gx.ravel(), gy.ravel()]).astype(np.int64)
    target = covariance_matrix(sites, cov)
    # one node, one category: every region constraint is the whole plane,
    # so the scans sample the plain latent field law
    tmap = TruncationMap([[0.0, 0.0]], [0], (0,))
    event = Event(sites, np.zeros(25, dtype=np.int64))
    regions = triangulate(tmap)
    factor = CovarianceFactor(target)
    pack = RegionPack(tmap, regions, event)
    state = init_state(tmap, event, regions)
    rng = np.random.default_rng(42)
    n_scans = 5000
    draws = np.empty((2 * n_scans, 25))
    for i in range(n_scans):
        propagative_scan(state, tmap, regions, factor, factor, rng, pack=pack)
        draws[2 * i] = state.x
        draws[2 * i + 1] = state.y
    dev = float(np.abs(np.corrcoef(draws.T) - target).max())
    elapsed = time.time() - t0
    ok = dev <= 0.05 and elapsed < budget
    line = _announce(request, 4, "propagative scans reach the field law", ok,
                     f"{n_scans} scans, max corr dev {dev:.4f} of 0.05",
                     elapsed, budget)
    assert ok, line


def test_gate5_conditioning_stays_feasible(request, scenario):
    budget, t0 = 300.0, time.time()
    state, diag = run_conditional(scenario.ref_map, scenario.event, COV, COV,
                                  iters=200, rng=np.random.default_rng(31))
    violations = 0
    for _it, st in iter_conditional(scenario.ref_map, scenario.event, COV,
                                    COV, np.random.default_rng(31), 200):
        try:
            assert_feasible(st, scenario.ref_map, scenario.event)
        except FeasibilityError:
            violations += 1
    finite = all(np.isfinite(diag[k]).all()
                 for k in ("logdens_x", "logdens_y"))
    # after half the run is discarded, the two remaining halves must
    # agree to within one pooled per-iteration standard deviation
    drift = 0.0
    for key in ("logdens_x", "logdens_y"):
        post = diag[key][100:]
        h1, h2 = post[:50], post[50:]
        pooled = np.sqrt(0.5 * (h1.var(ddof=1) + h2.var(ddof=1)))
        drift = max(drift, abs(h2.mean() - h1.mean()) / pooled)
    elapsed = time.time() - t0
    ok = violations == 0 and finite and drift <= 1.0 and elapsed < budget
    line = _announce(request, 5, "hard conditioning on the 60-site event", ok,
                     f"violations {violations}, diagnostics finite {finite}, "
                     f"post-burn-in drift {drift:.2f} of 1.0", elapsed, budget)
    assert ok, line


def test_gate6_two_site_law_matches_rejection(request):
    budget, t0 = 180.0, time.time()
    cov = CovarianceModel("gaussian", 3.0)
    sites = np.array([[0, 0], [1, 0]], dtype=np.int64)
    tmap = TruncationMap([[-1.0, 0.0], [1.0, 0.0]], [0, 1], (0, 1))
    event = Event(sites, np.array([0, 1]))
    sigma = covariance_matrix(sites, cov)

    burn, keep = 500, 30_000
    pairs = np.empty((keep, 2))
    rng = np.random.default_rng(5)
    for it, state in iter_conditional(tmap, event, cov, cov, rng,
                                      burn + keep):
        if it > burn:
            pairs[it - burn - 1] = state.x

    orng = np.random.default_rng(99)
    chol = CovarianceFactor(sigma).chol
    kept, total = [], 0
    while total < 300_000:
        z = orng.standard_normal((200_000, 2)) @ chol.T
        sel = z[(z[:, 0] < 0.0) & (z[:, 1] > 0.0)]
        kept.append(sel)
        total += sel.shape[0]
    oracle = np.vstack(kept)[:300_000]

    edges = np.linspace(-4.0, 4.0, 21)
    h1 = np.histogram2d(pairs[:, 0], pairs[:, 1], bins=(edges, edges))[0]
    h2 = np.histogram2d(oracle[:, 0], oracle[:, 1], bins=(edges, edges))[0]
    tv = 0.5 * float(np.abs(h1 / h1.sum() - h2 / h2.sum()).sum())
    elapsed = time.time() - t0
    ok = tv <= 0.05 and elapsed < budget
    line = _announce(request, 6, "two-site conditional law vs rejection", ok,
                     f"histogram TV {tv:.4f} of 0.05", elapsed, budget)
    assert ok, line


def test_gate7_recovers_vertical_split(request):
    budget, t0 = 600.0, time.time()
    cov = CovarianceModel("gaussian", 10.0)
    true_map = TruncationMap([[-1.0, 0.0], [1.0, 0.0]], [0, 1], (0, 1))
    offs = np.asarray(PATTERN_OFFSETS, dtype=float)
    chol = CovarianceFactor(covariance_matrix(offs, cov)).chol

    # tabulate the true map's pattern law; add-one smoothing keeps every
    # cell positive so never-sampled patterns stay finitely penalized
    rng = np.random.default_rng(2024)
    kpow = 2 ** np.arange(5)
    counts = np.zeros(32, dtype=np.int64)
    total, step = 2_000_000, 200_000
    for _ in range(total // step):
        zx = rng.standard_normal((step, 5)) @ chol.T
        zy = rng.standard_normal((step, 5)) @ chol.T
        cats = map_field(true_map, zx.ravel(), zy.ravel()).reshape(step, 5)
        counts += np.bincount(cats @ kpow, minlength=32)
    pstar = PatternPmf.from_flat((counts + 1.0) / (total + 32), (0, 1))

    cfg = MismatchConfig(pstar, cov, cov, n_samples=10_000)
    result = anneal(cfg, PriorSpec(2.0, (0, 1)),
                    AnnealSchedule(500.0, 0.9995, 3000),
                    np.random.default_rng(7))
    props = category_proportions(result.tmap)
    dev = max(abs(props[0] - 0.5), abs(props[1] - 0.5))
    elapsed = time.time() - t0
    ok = dev <= 0.02 and result.mismatch < 0.01 and elapsed < budget
    line = _announce(request, 7, "annealing recovers an even split", ok,
                     f"proportion dev {dev:.4f} of 0.02, "
                     f"estimate F {result.mismatch:.5f} of 0.01",
                     elapsed, budget)
    assert ok, line


def test_gate8_pipeline_regeneration(request, scenario):
    budget, t0 = 3600.0, time.time()
    cfg = MismatchConfig(scenario.pstar, COV, COV, n_samples=10_000)
    prior = PriorSpec(20.0, CATS)
    # alpha chosen so the 9000-step cooldown actually completes on this
    # landscape's divergence scale (T falls 500 -> 1e-3)
    sched = AnnealSchedule(500.0, 0.9985, 9000)
    chains = [anneal(cfg, prior, sched, np.random.default_rng(seed))
              for seed in (404, 606)]
    firsts, lasts = [], []
    for ch in chains:
        tr = ch.trace["mismatch"]
        finite = tr[np.isfinite(tr)]
        firsts.append(float(finite[:500].mean()))
        lasts.append(float(tr[-500:].mean()))
    declined = lasts[0] < firsts[0] and lasts[1] < firsts[1]
    gap = abs(lasts[0] - lasts[1]) / max(lasts)

    scores = []
    for tmap, seed in ((scenario.ref_map, 881), (chains[0].tmap, 882),
                       (chains[1].tmap, 883)):
        rep = unordered_score(tmap, COV, COV, scenario.event,
                              np.random.default_rng(seed),
                              n_subsets=50, m=50, chain_iters=40, burn_in=20)
        scores.append(rep.total)
    spread = max(scores) - min(scores)

    # propriety of the log rule: the truth never scores worse in
    # expectation than a perturbed forecast (paired draws)
    prng = np.random.default_rng(884)
    p_true = random_pmf((4,), prng)
    draws = prng.choice(4, size=100_000, p=p_true)
    proper = True
    for _ in range(20):
        q = np.clip(p_true + prng.normal(0.0, 0.05, 4), 1e-3, None)
        q = q / q.sum()
        d = np.log(p_true[draws]) - np.log(q[draws])
        proper &= d.mean() > -3.0 * d.std(ddof=1) / np.sqrt(d.size)

    elapsed = time.time() - t0
    ok = (declined and gap <= 0.10 and spread <= 4.0 and proper
          and elapsed < budget)
    line = _announce(
        request, 8, "regenerated estimation pipeline", ok,
        f"chain means {firsts[0]:.3f}->{lasts[0]:.4f} and "
        f"{firsts[1]:.3f}->{lasts[1]:.4f}, gap {gap:.1%} of 10%, "
        f"scores ref {scores[0]:.2f} / est {scores[1]:.2f}, {scores[2]:.2f} "
        f"(spread {spread:.2f} of 4), proper {proper}", elapsed, budget)
    assert ok, line


def test_gate9_cli_runs_are_bit_identical(request, scenario, tmp_path):
    budget, t0 = 600.0, time.time()
    cov_path = tmp_path / "cov.json"
    with open(cov_path, "w") as fh:
        json.dump({"kind": "gaussian", "range": 2.0}, fh)
    map_path = tmp_path / "map.json"
    save_map(scenario.ref_map, map_path)
    marg_path = tmp_path / "marg.json"
    save_marginals(CATS, scenario.pi_h10, scenario.pi_h01, marg_path)
    event_path = tmp_path / "event.csv"
    save_event(Event(scenario.event.sites[:6], scenario.event.categories[:6]),
               event_path)

    def run_twice(name, *argv, outs=("out",)):
        payloads = []
        for attempt in ("a", "b"):
            sub = tmp_path / f"{name}_{attempt}"
            sub.mkdir()
            paths = {o: sub / o for o in outs}
            code = cli_main([str(a).format(**{o: str(p) for o, p in
                                              paths.items()})
                             for a in argv])
            assert code in (0, 2), f"{name} exited {code}"
            payloads.append(b"".join(p.read_bytes() for p in paths.values()))
        return payloads[0] == payloads[1]

    same = {
        "bme-fit": run_twice(
            "fit", "bme-fit", "--marginals", marg_path, "--max-sweeps", 500,
            "--out", "{out}"),
        "estimate-map": run_twice(
            "est", "estimate-map", "--pattern", tmp_path / "fit_a" / "out",
            "--cov-x", cov_path, "--cov-y", cov_path, "--iterations", 40,
            "--mc-samples", 1000, "--prior-mean", 6, "--seed", 5,
            "--out", "{out}", "--trace", "{trace}", outs=("out", "trace")),
        "simulate-field": run_twice(
            "sim", "simulate-field", "--map", map_path, "--cov-x", cov_path,
            "--cov-y", cov_path, "--grid", "12x9", "--seed", 7,
            "--out", "{out}"),
        "condition": run_twice(
            "cond", "condition", "--map", map_path, "--cov-x", cov_path,
            "--cov-y", cov_path, "--event", event_path, "--iterations", 30,
            "--seed", 3, "--out", "{out}", "--diagnostics", "{diag}",
            outs=("out", "diag")),
        "validate": run_twice(
            "val", "validate", "--map", map_path, "--cov-x", cov_path,
            "--cov-y", cov_path, "--event", event_path, "--n-subsets", 2,
            "--replicates", 6, "--chain-iterations", 12, "--burn-in", 4,
            "--seed", 11, "--out", "{out}"),
    }
    field_a = tmp_path / "sim_a" / "out"
    same["render"] = run_twice(
        "ren", "render", "--field", field_a, "--out", "{out}")

    elapsed = time.time() - t0
    ok = all(same.values()) and elapsed < budget
    diff = [k for k, v in same.items() if not v]
    line = _announce(request, 9, "repeated runs are bit-identical", ok,
                     "all six subcommands match" if not diff
                     else f"mismatch in {', '.join(diff)}", elapsed, budget)
    assert ok, line
