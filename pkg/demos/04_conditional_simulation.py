"""Conditional simulation: latent Gibbs sampling under hard category data.

Conditioning a truncated bigaussian on observed categories means
sampling the two latent fields restricted to the (non-convex) product
of map regions the observations select.  The sampler interleaves a
standard site-by-site Gibbs scan with a propagative scan that moves a
pivot site first and drags the rest of the field along by kriging,
which restores mixing when the per-site truncation domains are tight.

Two checks run below.  First an exactness check on the smallest
nontrivial case -- two adjacent sites, two categories -- against plain
rejection sampling from the unconstrained bivariate law.  Second a
60-observation run on a 20x20 field with the latent log-density
diagnostics that flag stuck chains.
"""

import numpy as np

from pluritess import (CovarianceFactor, CovarianceModel, Event, PriorSpec,
                       TruncationMap, assert_feasible, covariance_matrix,
                       iter_conditional, map_field, run_conditional,
                       sample_prior, simulate_unconditional)

cov = CovarianceModel("gaussian", 3.0)

# --- two-site exactness ------------------------------------------------
sites = np.array([[0, 0], [1, 0]], dtype=np.int64)
tmap = TruncationMap([[-1.0, 0.0], [1.0, 0.0]], [0, 1], (0, 1))
event = Event(sites, np.array([0, 1]))

burn, keep = 500, 20_000
xs = np.empty((keep, 2))
rng = np.random.default_rng(5)
for it, state in iter_conditional(tmap, event, cov, cov, rng, burn + keep):
    if it > burn:
        xs[it - burn - 1] = state.x

# oracle: draw correlated pairs, keep those with x0 < 0 < x1
sigma = covariance_matrix(sites, cov)
chol = CovarianceFactor(sigma).chol
orng = np.random.default_rng(17)
z = orng.standard_normal((2_000_000, 2)) @ chol.T
kept = z[(z[:, 0] < 0.0) & (z[:, 1] > 0.0)]
print("two adjacent sites, categories (0, 1), latent correlation "
      f"{sigma[0, 1]:.3f}:")
print(f"  sampler   mean x = ({xs[:, 0].mean():+.4f}, {xs[:, 1].mean():+.4f})")
print(f"  rejection mean x = ({kept[:, 0].mean():+.4f}, "
      f"{kept[:, 1].mean():+.4f})   ({kept.shape[0]:,} accepted)")
edges = np.linspace(-4, 4, 21)
h1 = np.histogram2d(xs[:, 0], xs[:, 1], bins=(edges, edges))[0]
h2 = np.histogram2d(kept[:, 0], kept[:, 1], bins=(edges, edges))[0]
tv = 0.5 * np.abs(h1 / h1.sum() - h2 / h2.sum()).sum()
print(f"  total-variation distance of the 20x20 histograms: {tv:.4f}")

# --- a real conditioning run -------------------------------------------
rng = np.random.default_rng(10)
ref = sample_prior(PriorSpec(20.0, (0, 1, 2, 3)), rng)
gx, gy = np.meshgrid(np.arange(1, 21), np.arange(1, 21), indexing="ij")
grid = np.column_stack([gx.ravel(), gy.ravel()]).astype(np.int64)
field = map_field(ref,
                  simulate_unconditional(grid, CovarianceModel("gaussian", 2.0), rng),
                  simulate_unconditional(grid, CovarianceModel("gaussian", 2.0), rng))
mask = np.isin(grid[:, 0], (10, 15, 20))
event = Event(grid[mask], field[mask])
print(f"\nconditioning a {ref.nodes.shape[0]}-node, 4-category map on "
      f"{event.n} observations (columns x = 10, 15, 20):")

cov2 = CovarianceModel("gaussian", 2.0)
state, diag = run_conditional(ref, event, cov2, cov2, iters=150,
                              rng=np.random.default_rng(31))
assert_feasible(state, ref, event)
for key in ("logdens_x", "logdens_y"):
    tr = diag[key]
    print(f"  {key}: start {tr[0]:9.2f}   mean of last 50 {tr[-50:].mean():9.2f}"
          f"   sd {tr[-50:].std():6.2f}")
print("  final state feasible: yes")
print("\nflat traces with finite variance after the early transient are the")
print("expected picture; a monotone drift would signal a stuck chain.")
