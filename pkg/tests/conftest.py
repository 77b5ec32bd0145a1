"""Shared fixtures and independent oracles used across the test suite."""

import numpy as np
import pytest

from pluritess.bme import PATTERN_OFFSETS, PatternPmf, PatternSpec


def cross2(a, b):
    # z-component of the 2-D cross product; works on (..., 2) arrays.
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def point_in_triangle(p, v1, v2, v3, tol=0.0):
    """Sign-based membership oracle, independent of the library's own test."""
    p = np.asarray(p, dtype=float)
    d1 = cross2(np.subtract(v2, v1), p - np.asarray(v1, dtype=float))
    d2 = cross2(np.subtract(v3, v2), p - np.asarray(v2, dtype=float))
    d3 = cross2(np.subtract(v1, v3), p - np.asarray(v3, dtype=float))
    neg = (d1 < -tol) | (d2 < -tol) | (d3 < -tol)
    pos = (d1 > tol) | (d2 > tol) | (d3 > tol)
    return ~(neg & pos)


def mc_triangle_mass(verts, n, rng):
    """Monte-Carlo estimate of standard bigaussian mass of a triangle.

    Returns (estimate, standard_error).
    """
    pts = rng.standard_normal((n, 2))
    inside = point_in_triangle(pts, *[np.asarray(v, float) for v in verts])
    p_hat = inside.mean()
    se = np.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / n)
    return p_hat, se


def random_pmf(shape, rng, zeros=0.0):
    """Random strictly-positive pmf; optionally zero out a fraction of cells."""
    t = rng.gamma(1.0, 1.0, size=shape)
    if zeros > 0.0:
        mask = rng.random(shape) < zeros
        # never zero everything
        if mask.all():
            mask.flat[0] = False
        t[mask] = 0.0
    return t / t.sum()


def consistent_marginals(k, rng):
    """Random feasible unit-lag marginal pair (pi_h10, pi_h01, witness pmf).

    The shared-orientation constraints force both bivariate tables to be
    exchangeable with a common single-site marginal m.  Build pi_h10 as a
    symmetrized random table, then Sinkhorn-scale a second symmetric table
    to the same marginal m; the witness pmf (center + conditionally
    independent neighbors through reversible kernels) satisfies all four
    constraints exactly, proving feasibility.
    """
    g = rng.gamma(1.0, 1.0, size=(k, k))
    s_x = g + g.T
    s_x /= s_x.sum()
    m = s_x.sum(axis=1)

    h = rng.gamma(1.0, 1.0, size=(k, k))
    s_y = h + h.T
    for _ in range(500):
        r = s_y.sum(axis=1)
        d = np.sqrt(m / r)
        s_y = s_y * d[:, None] * d[None, :]
        if np.abs(s_y.sum(axis=1) - m).max() < 1e-15:
            break

    a_kern = s_x / m[:, None]  # A(b|a), reversible wrt m
    b_kern = s_y / m[:, None]
    table = (
        m[:, None, None, None, None]
        * a_kern[:, :, None, None, None]
        * a_kern[:, None, :, None, None]
        * b_kern[:, None, None, :, None]
        * b_kern[:, None, None, None, :]
    )
    witness = PatternPmf(table / table.sum(), tuple(range(k)))
    return s_x, s_y, witness


def spec_from_tables(k, pi_h10, pi_h01):
    return PatternSpec.from_unit_lag(tuple(range(k)), pi_h10, pi_h01)


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def pattern_cov(model):
    """Covariance of the 5-site pattern cross under a CovarianceModel."""
    pts = np.asarray(PATTERN_OFFSETS, dtype=float)
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    return model.k(d)
