"""Command-line front end.

Subcommands cover the full workflow: fit the pattern distribution from
unit-lag marginals (bme-fit), estimate a truncation map from a pattern
table (estimate-map), simulate unconditional fields (simulate-field),
condition latent fields to an event (condition), score a model against
observations (validate), and rasterize fields (render).

Every command accepts --config (a JSON file of defaults: top-level
"seed", "paths" {marginals, pattern, map, cov_x, cov_y, event, field},
and one block per command), --seed, and --out; explicit flags override
the config.  The default seed is 0, so identical invocations produce
bit-identical outputs.
"""

import argparse
import csv
import json
import sys

import numpy as np

from . import bme, estimator, grf, sampler, scoring, tessellation

# 8 distinguishable colors, cycled when there are more categories
_PPM_PALETTE = ((31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
                (148, 103, 189), (140, 86, 75), (227, 119, 194),
                (127, 127, 127))


class CliError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _setting(args_value, config, block, key, default):
    if args_value is not None:
        return args_value
    if block in config and key in config[block]:
        return config[block][key]
    return default


def _path(args_value, config, key, what):
    if args_value is not None:
        return args_value
    p = config.get("paths", {}).get(key)
    if p is None:
        raise CliError(f"no {what} given (flag or config paths.{key})")
    return p


def _seed(args, config):
    if args.seed is not None:
        return int(args.seed)
    return int(config.get("seed", 0))


def save_field(sites, cats, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "category"])
        for (x, y), c in zip(sites, cats):
            w.writerow([int(x), int(y), int(c)])


def load_field(path):
    sites = []
    cats = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sites.append((int(row["x"]), int(row["y"])))
            cats.append(int(row["category"]))
    return np.array(sites, dtype=np.int64), np.array(cats, dtype=np.int64)


def cmd_bme_fit(args):
    config = _load_config(args.config)
    cats, pi10, pi01 = bme.load_marginals(
        _path(args.marginals, config, "marginals", "marginals file"))
    spec = bme.PatternSpec.from_unit_lag(cats, pi10, pi01)
    tol = float(_setting(args.tol, config, "bme_fit", "tol", 1e-10))
    max_sweeps = int(_setting(args.max_sweeps, config, "bme_fit",
                              "max_sweeps", 100_000))
    out = _path(args.out, config, "pattern", "output path")
    try:
        pmf = bme.deming_stephan(spec, tol=tol, max_sweeps=max_sweeps)
    except bme.NotConverged as err:
        # still write the best iterate so the caller can inspect the residual
        bme.save_pattern(err.best, out)
        with open(out) as fh:
            doc = json.load(fh)
        doc["warning"] = {"message": "IPF did not reach tolerance",
                          "deviation": float(err.deviation), "tol": tol}
        with open(out, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        print(f"bme-fit: not converged: {err}", file=sys.stderr)
        return 2
    bme.save_pattern(pmf, out)
    print(f"bme-fit: wrote {out} (deviation <= {tol:g})")
    return 0


def cmd_estimate_map(args):
    config = _load_config(args.config)
    pmf = bme.load_pattern(_path(args.pattern, config, "pattern",
                                 "pattern file"))
    cov_x = grf.load_covariance(_path(args.cov_x, config, "cov_x",
                                      "x covariance"))
    cov_y = grf.load_covariance(_path(args.cov_y, config, "cov_y",
                                      "y covariance"))
    blk = "estimate_map"
    t0 = float(_setting(args.t0, config, blk, "t0", 500.0))
    alpha = float(_setting(args.alpha, config, blk, "alpha", 0.9995))
    iters = int(_setting(args.iterations, config, blk, "iterations", 9000))
    n_mc = int(_setting(args.mc_samples, config, blk, "mc_samples", 20_000))
    mean_nodes = float(_setting(args.prior_mean, config, blk,
                                "prior_mean_nodes", 20.0))
    snap = _setting(args.snapshots, config, blk, "snapshots", "")
    snapshot_at = [int(s) for s in str(snap).split(",") if s != ""]
    out = _path(args.out, config, "map", "output path")
    rng = np.random.default_rng(_seed(args, config))
    cfg = estimator.MismatchConfig(pmf, cov_x, cov_y, n_samples=n_mc)
    prior = estimator.PriorSpec(mean_nodes, pmf.categories)
    schedule = estimator.AnnealSchedule(t0, alpha, iters)
    result = estimator.anneal(cfg, prior, schedule, rng,
                              snapshot_at=snapshot_at)
    tessellation.save_map(result.tmap, out)
    if args.trace is not None:
        estimator.write_trace(result.trace, args.trace)
    for it, snap_map in sorted(result.snapshots.items()):
        spath = _snapshot_path(out, it)
        tessellation.save_map(snap_map, spath)
        print(f"estimate-map: snapshot iteration {it} -> {spath}")
    print(f"estimate-map: best mismatch {result.mismatch:.6g} "
          f"({result.tmap.node_count} nodes) -> {out}")
    return 0


def _snapshot_path(out, iteration):
    stem, dot, ext = out.rpartition(".")
    if not dot:
        return f"{out}.iter{iteration:05d}"
    return f"{stem}.iter{iteration:05d}.{ext}"


def _grid_sites(spec_str):
    try:
        nx, ny = (int(v) for v in spec_str.lower().split("x"))
    except ValueError:
        raise CliError(f"bad grid spec {spec_str!r}, expected like 20x20")
    if nx < 1 or ny < 1:
        raise CliError("grid dimensions must be positive")
    xs, ys = np.meshgrid(np.arange(1, nx + 1), np.arange(1, ny + 1),
                         indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel()])


def cmd_simulate_field(args):
    config = _load_config(args.config)
    tmap = tessellation.load_map(_path(args.map, config, "map", "map file"))
    cov_x = grf.load_covariance(_path(args.cov_x, config, "cov_x",
                                      "x covariance"))
    cov_y = grf.load_covariance(_path(args.cov_y, config, "cov_y",
                                      "y covariance"))
    grid = str(_setting(args.grid, config, "simulate_field", "grid", "20x20"))
    out = _path(args.out, config, "field", "output path")
    sites = _grid_sites(grid)
    rng = np.random.default_rng(_seed(args, config))
    x = grf.simulate_unconditional(sites, cov_x, rng)
    y = grf.simulate_unconditional(sites, cov_y, rng)
    cats = tessellation.map_field(tmap, x, y)
    save_field(sites, cats, out)
    print(f"simulate-field: wrote {sites.shape[0]} sites -> {out}")
    return 0


def cmd_condition(args):
    config = _load_config(args.config)
    tmap = tessellation.load_map(_path(args.map, config, "map", "map file"))
    cov_x = grf.load_covariance(_path(args.cov_x, config, "cov_x",
                                      "x covariance"))
    cov_y = grf.load_covariance(_path(args.cov_y, config, "cov_y",
                                      "y covariance"))
    event = sampler.load_event(_path(args.event, config, "event",
                                     "event file"))
    blk = "condition"
    iters = int(_setting(args.iterations, config, blk, "iterations", 200))
    warmup = int(_setting(args.warmup, config, blk, "warmup", 5))
    sweeps = int(_setting(args.sweeps, config, blk, "sweeps", 3))
    out = _path(args.out, config, "latent", "output path")
    rng = np.random.default_rng(_seed(args, config))
    state, diag = sampler.run_conditional(tmap, event, cov_x, cov_y,
                                          iters=iters, rng=rng,
                                          warmup=warmup, sweeps=sweeps)
    sampler.save_latent(event, state, tmap, out)
    if args.diagnostics is not None:
        sampler.save_diagnostics(diag, args.diagnostics)
    print(f"condition: {iters} iterations over {event.n} sites -> {out}")
    return 0


def cmd_validate(args):
    config = _load_config(args.config)
    tmap = tessellation.load_map(_path(args.map, config, "map", "map file"))
    cov_x = grf.load_covariance(_path(args.cov_x, config, "cov_x",
                                      "x covariance"))
    cov_y = grf.load_covariance(_path(args.cov_y, config, "cov_y",
                                      "y covariance"))
    event = sampler.load_event(_path(args.event, config, "event",
                                     "event file"))
    blk = "validate"
    n_subsets = int(_setting(args.n_subsets, config, blk, "n_subsets", 50))
    m = int(_setting(args.replicates, config, blk, "replicates", 50))
    chain_iters = int(_setting(args.chain_iterations, config, blk,
                               "chain_iterations", 200))
    burn_in = int(_setting(args.burn_in, config, blk, "burn_in", 100))
    warmup = int(_setting(args.warmup, config, blk, "warmup", 5))
    threads = int(_setting(args.threads, config, blk, "threads", 1))
    out = _path(args.out, config, "score", "output path")
    rng = np.random.default_rng(_seed(args, config))
    report = scoring.unordered_score(tmap, cov_x, cov_y, event, rng,
                                     n_subsets=n_subsets, m=m,
                                     chain_iters=chain_iters,
                                     burn_in=burn_in, warmup=warmup,
                                     n_jobs=threads)
    scoring.save_report(report, out)
    print(f"validate: total score {report.total:.4f} over {event.n} sites "
          f"-> {out}")
    return 0


def render_field(sites, cats, categories, fmt="pgm"):
    """Rasterize a complete rectangular field to PGM (gray) or PPM bytes.

    One pixel per site; image rows run from the largest y (top) down.
    Grays are evenly spaced by category index; PPM uses a fixed 8-color
    palette, cycled.
    """
    xs = np.unique(sites[:, 0])
    ys = np.unique(sites[:, 1])
    nx, ny = xs.shape[0], ys.shape[0]
    if nx * ny != sites.shape[0]:
        raise CliError("field is not a complete rectangular grid")
    xi = {int(v): i for i, v in enumerate(xs)}
    yi = {int(v): i for i, v in enumerate(ys)}
    cat_idx = {int(c): i for i, c in enumerate(categories)}
    k = len(categories)
    grid = np.zeros((ny, nx), dtype=np.int64)
    for (x, y), c in zip(sites, cats):
        if int(c) not in cat_idx:
            raise CliError(f"field category {int(c)} not in the palette set")
        grid[ny - 1 - yi[int(y)], xi[int(x)]] = cat_idx[int(c)]
    if fmt == "pgm":
        if k > 1:
            levels = np.array([round(255 * i / (k - 1)) for i in range(k)],
                              dtype=np.uint8)
        else:
            levels = np.array([255], dtype=np.uint8)
        body = levels[grid].tobytes()
        return b"P5\n%d %d\n255\n" % (nx, ny) + body
    if fmt == "ppm":
        pal = np.array([_PPM_PALETTE[i % len(_PPM_PALETTE)] for i in range(k)],
                       dtype=np.uint8)
        body = pal[grid].tobytes()
        return b"P6\n%d %d\n255\n" % (nx, ny) + body
    raise CliError(f"unknown render format {fmt!r}")


def cmd_render(args):
    config = _load_config(args.config)
    sites, cats = load_field(_path(args.field, config, "field", "field file"))
    out = _path(args.out, config, "image", "output path")
    fmt = _setting(args.format, config, "render", "format", None)
    if fmt is None:
        fmt = "ppm" if out.endswith(".ppm") else "pgm"
    categories = _setting(args.categories, config, "render", "categories",
                          None)
    if categories is None:
        categories = [int(c) for c in np.unique(cats)]
    else:
        categories = [int(c) for c in str(categories).split(",")]
    data = render_field(sites, cats, categories, fmt)
    with open(out, "wb") as fh:
        fh.write(data)
    print(f"render: wrote {fmt} image -> {out}")
    return 0


def _add_common(p):
    p.add_argument("--config", help="JSON config with defaults")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--out", help="output path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pluritess",
        description="Categorical fields from truncated bigaussians over "
                    "colored Voronoi truncation maps")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bme-fit", help="fit the max-entropy pattern "
                                       "distribution from unit-lag marginals")
    _add_common(p)
    p.add_argument("--marginals")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-sweeps", type=int, dest="max_sweeps")
    p.set_defaults(func=cmd_bme_fit)

    p = sub.add_parser("estimate-map", help="anneal a truncation map "
                                            "against a pattern distribution")
    _add_common(p)
    p.add_argument("--pattern")
    p.add_argument("--cov-x", dest="cov_x")
    p.add_argument("--cov-y", dest="cov_y")
    p.add_argument("--t0", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--mc-samples", type=int, dest="mc_samples")
    p.add_argument("--prior-mean", type=float, dest="prior_mean")
    p.add_argument("--trace", help="write the annealing trace CSV here")
    p.add_argument("--snapshots", help="comma-separated iterations to dump")
    p.set_defaults(func=cmd_estimate_map)

    p = sub.add_parser("simulate-field", help="unconditional categorical "
                                              "field on a grid")
    _add_common(p)
    p.add_argument("--map")
    p.add_argument("--cov-x", dest="cov_x")
    p.add_argument("--cov-y", dest="cov_y")
    p.add_argument("--grid", help="like 20x20")
    p.set_defaults(func=cmd_simulate_field)

    p = sub.add_parser("condition", help="condition latent fields to an "
                                         "observed event")
    _add_common(p)
    p.add_argument("--map")
    p.add_argument("--cov-x", dest="cov_x")
    p.add_argument("--cov-y", dest="cov_y")
    p.add_argument("--event")
    p.add_argument("--iterations", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--diagnostics", help="write per-iteration log-density CSV")
    p.set_defaults(func=cmd_condition)

    p = sub.add_parser("validate", help="unordered logarithmic score of a "
                                        "map against observations")
    _add_common(p)
    p.add_argument("--map")
    p.add_argument("--cov-x", dest="cov_x")
    p.add_argument("--cov-y", dest="cov_y")
    p.add_argument("--event")
    p.add_argument("--n-subsets", type=int, dest="n_subsets")
    p.add_argument("--replicates", type=int)
    p.add_argument("--chain-iterations", type=int, dest="chain_iterations")
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--warmup", type=int)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("render", help="rasterize a field CSV to PGM/PPM")
    _add_common(p)
    p.add_argument("--field")
    p.add_argument("--format", choices=["pgm", "ppm"])
    p.add_argument("--categories", help="comma-separated palette order")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, FileNotFoundError, ValueError) as err:
        print(f"{args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
