"""Maximum-entropy distribution of the five-point pattern.

The pattern is the cross (center, +x, -x, +y, -y) on the unit grid; the
constraints are the two unit-lag bivariate categorical distributions,
each applied to both same-orientation position pairs (stationarity).
The max-entropy table under those marginal constraints is computed by
iterative proportional fitting (successive I-projections).

Dense tables are 5-D arrays with one axis per pattern position, category
index along each axis; the flat serialization order is base-|C|
little-endian over (center, +x, -x, +y, -y) — numpy's Fortran ravel.
"""

import json

import numpy as np

# pattern positions, in axis order: center, +x, -x, +y, -y
PATTERN_OFFSETS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))
# constrained position pairs and the orientation whose bivariate law each
# one carries: (i, j, orientation) with offset[j] - offset[i] == orientation
PAIR_LAYOUT = (
    (0, 1, (1, 0)),
    (2, 0, (1, 0)),
    (0, 3, (0, 1)),
    (4, 0, (0, 1)),
)


class AbsoluteContinuityViolation(ValueError):
    """Target marginal puts mass where the current table has none."""


class NotConverged(RuntimeError):
    """Proportional fitting failed to reach tolerance.

    Attributes: `deviation` (best max-abs marginal error seen) and
    `best` (the table that achieved it).
    """

    def __init__(self, message, deviation, best):
        super().__init__(message)
        self.deviation = deviation
        self.best = best


def _as_table(p):
    return p.table if isinstance(p, PatternPmf) else np.asarray(p, dtype=float)


def marginalize(table, positions):
    """Marginal of a dense pattern table on an ordered position subset."""
    table = _as_table(table)
    positions = tuple(int(i) for i in positions)
    others = tuple(a for a in range(table.ndim) if a not in positions)
    m = table.sum(axis=others)
    # sum() keeps the surviving axes in ascending order; restore the
    # requested order
    kept = sorted(positions)
    perm = tuple(kept.index(p) for p in positions)
    return np.transpose(m, perm)


def ipf_project(table, positions, target):
    """I-projection onto the set of tables with the given subset marginal.

    Rescales `table` so its `positions`-marginal equals `target`; cells
    under a zero current marginal stay zero, and a positive target there
    raises AbsoluteContinuityViolation.
    """
    table = _as_table(table)
    target = np.asarray(target, dtype=float)
    cur = marginalize(table, positions)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cur > 0.0, target / np.where(cur > 0.0, cur, 1.0), 0.0)
    if np.any((cur == 0.0) & (target > 1e-15)):
        raise AbsoluteContinuityViolation(
            "target marginal has mass on a zero cell of the current table")
    out = table.copy()
    moved = np.moveaxis(out, positions, range(len(positions)))
    moved *= ratio.reshape(ratio.shape + (1,) * (table.ndim - len(positions)))
    return out


def entropy(p):
    """Shannon entropy (nats) of a dense table."""
    t = _as_table(p).ravel()
    nz = t[t > 0.0]
    return float(-(nz * np.log(nz)).sum())


def kl_divergence(p, q):
    """KL divergence D(p || q); +inf when p puts mass where q has none."""
    pt = _as_table(p).ravel()
    qt = _as_table(q).ravel()
    mask = pt > 0.0
    if np.any(qt[mask] == 0.0):
        return float("inf")
    return float((pt[mask] * np.log(pt[mask] / qt[mask])).sum())


class PatternPmf:
    """Dense pattern distribution over the five-point cross."""

    __slots__ = ("table", "categories")

    def __init__(self, table, categories):
        categories = tuple(int(c) for c in categories)
        k = len(categories)
        table = np.asarray(table, dtype=float)
        if table.shape != (k,) * len(PATTERN_OFFSETS):
            raise ValueError(
                f"table shape {table.shape} != {(k,) * len(PATTERN_OFFSETS)}")
        if table.min() < -1e-12:
            raise ValueError("pattern table has negative entries")
        total = table.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pattern table sums to {total}, not 1")
        table = np.clip(table, 0.0, None)
        table.setflags(write=False)
        self.table = table
        self.categories = categories

    @property
    def k(self):
        return len(self.categories)

    @property
    def flat(self):
        """Base-|C| little-endian flat view (center digit least significant)."""
        return self.table.ravel(order="F")

    @classmethod
    def from_flat(cls, flat, categories):
        k = len(categories)
        table = np.asarray(flat, dtype=float).reshape(
            (k,) * len(PATTERN_OFFSETS), order="F")
        return cls(table, categories)

    @classmethod
    def uniform(cls, categories):
        k = len(categories)
        n = len(PATTERN_OFFSETS)
        return cls(np.full((k,) * n, 1.0 / k ** n), categories)

    def marginal(self, positions):
        return marginalize(self.table, positions)

    def support_categories(self):
        """Categories with positive mass at any pattern position."""
        out = []
        for ci, c in enumerate(self.categories):
            if any(marginalize(self.table, (pos,))[ci] > 0.0
                   for pos in range(len(PATTERN_OFFSETS))):
                out.append(c)
        return tuple(out)


class PatternSpec:
    """Marginal constraints for the pattern fit.

    Four constrained pairs; both pairs of an orientation share one
    bivariate target (stationarity), stored as target[a, b] =
    P(Z(s) = cats[a], Z(s + h) = cats[b]).
    """

    __slots__ = ("categories", "pairs")

    def __init__(self, categories, pairs):
        self.categories = tuple(int(c) for c in categories)
        k = len(self.categories)
        checked = []
        for (i, j, orient, target) in pairs:
            target = np.asarray(target, dtype=float)
            if target.shape != (k, k):
                raise ValueError(f"pair target must be {k}x{k}")
            if target.min() < 0.0:
                raise ValueError("pair target has negative entries")
            if abs(target.sum() - 1.0) > 1e-9:
                raise ValueError("pair target must sum to 1")
            di = (PATTERN_OFFSETS[j][0] - PATTERN_OFFSETS[i][0],
                  PATTERN_OFFSETS[j][1] - PATTERN_OFFSETS[i][1])
            if di != tuple(orient):
                raise ValueError(
                    f"pair ({i},{j}) does not realize orientation {orient}")
            t = target.copy()
            t.setflags(write=False)
            checked.append((int(i), int(j), tuple(orient), t))
        self.pairs = tuple(checked)

    @classmethod
    def from_unit_lag(cls, categories, pi_h10, pi_h01):
        """Constraints from the two unit-lag bivariate distributions."""
        by_orient = {(1, 0): np.asarray(pi_h10, dtype=float),
                     (0, 1): np.asarray(pi_h01, dtype=float)}
        pairs = [(i, j, orient, by_orient[orient])
                 for (i, j, orient) in PAIR_LAYOUT]
        return cls(categories, pairs)

    @classmethod
    def from_pattern_pmf(cls, pmf):
        """Constraints matching an existing pattern table's pair marginals."""
        pairs = [(i, j, orient, marginalize(pmf.table, (i, j)))
                 for (i, j, orient) in PAIR_LAYOUT]
        return cls(pmf.categories, pairs)

    def deviation(self, table):
        """Max abs difference between table pair-marginals and targets."""
        table = _as_table(table)
        dev = 0.0
        for (i, j, _o, target) in self.pairs:
            dev = max(dev, float(np.abs(marginalize(table, (i, j)) - target).max()))
        return dev


def deming_stephan(spec, init=None, tol=1e-10, max_sweeps=100_000,
                   order="cyclic", rng=None):
    """Fit the max-entropy pattern table to a PatternSpec by IPF.

    Starting from `init` (uniform by default, which yields the true
    maximum-entropy solution), successively I-projects onto each pair
    constraint until every pair marginal matches within `tol` (max abs).
    `order` is "cyclic" or "random" (requires rng).  Raises NotConverged
    carrying the best table seen.
    """
    k = len(spec.categories)
    if init is None:
        table = np.full((k,) * len(PATTERN_OFFSETS),
                        1.0 / k ** len(PATTERN_OFFSETS))
    else:
        table = _as_table(init).copy()
        if table.shape != (k,) * len(PATTERN_OFFSETS):
            raise ValueError("init table has the wrong shape")
    if order not in ("cyclic", "random"):
        raise ValueError("order must be 'cyclic' or 'random'")
    if order == "random" and rng is None:
        raise ValueError("random order needs an rng")

    npairs = len(spec.pairs)
    best_dev = np.inf
    best = table
    for _ in range(int(max_sweeps)):
        if order == "cyclic":
            idx = range(npairs)
        else:
            idx = rng.integers(0, npairs, size=npairs)
        for pi in idx:
            i, j, _o, target = spec.pairs[pi]
            table = ipf_project(table, (i, j), target)
        dev = spec.deviation(table)
        if dev < best_dev:
            best_dev = dev
            best = table
        if dev <= tol:
            return PatternPmf(table / table.sum(), spec.categories)
    raise NotConverged(
        f"IPF stalled at deviation {best_dev:.3e} (tol {tol:g})",
        best_dev, PatternPmf(best / best.sum(), spec.categories))


def unit_lag_frequencies(sites, cats, categories):
    """Empirical unit-lag bivariate distributions of a categorical field.

    Counts ordered neighbor pairs along +x and +y.  Each adjacency is
    counted in both orders: the model's unit-lag pair is exchangeable
    (isotropic latent fields through a common map), and the symmetrized
    estimate is what makes the four pattern constraints mutually
    consistent.  Returns (pi_h10, pi_h01).
    """
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, 2)
    cats = np.asarray(cats).reshape(-1)
    categories = tuple(int(c) for c in categories)
    k = len(categories)
    pos = {c: i for i, c in enumerate(categories)}
    ci = np.array([pos[int(c)] for c in cats])
    index = {(int(x), int(y)): i for i, (x, y) in enumerate(sites)}
    out = []
    for h in ((1, 0), (0, 1)):
        counts = np.zeros((k, k))
        for i, (x, y) in enumerate(sites):
            j = index.get((int(x) + h[0], int(y) + h[1]))
            if j is not None:
                counts[ci[i], ci[j]] += 1.0
        counts = counts + counts.T
        if counts.sum() == 0.0:
            raise ValueError(f"no neighbor pairs along {h}")
        out.append(counts / counts.sum())
    return out[0], out[1]


def save_marginals(categories, pi_h10, pi_h01, path):
    doc = {"categories": [int(c) for c in categories],
           "pi_h10": np.asarray(pi_h10, dtype=float).tolist(),
           "pi_h01": np.asarray(pi_h01, dtype=float).tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_marginals(path):
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("categories", "pi_h10", "pi_h01"):
        if key not in doc:
            raise ValueError(f"marginals file missing '{key}'")
    return (tuple(int(c) for c in doc["categories"]),
            np.asarray(doc["pi_h10"], dtype=float),
            np.asarray(doc["pi_h01"], dtype=float))


def save_pattern(pmf, path):
    doc = {"categories": [int(c) for c in pmf.categories],
           "offsets": [list(o) for o in PATTERN_OFFSETS],
           "table": pmf.flat.tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_pattern(path):
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("categories", "table"):
        if key not in doc:
            raise ValueError(f"pattern file missing '{key}'")
    return PatternPmf.from_flat(doc["table"], doc["categories"])
