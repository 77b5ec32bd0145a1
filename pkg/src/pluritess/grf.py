"""Stationary Gaussian field utilities on finite site sets.

Covariance models (unit sill), dense covariance matrices, jittered
Cholesky factors with the derived quantities the samplers need
(precision, log-density, simple-kriging predictions), and unconditional
simulation.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

_LOG_2PI = float(np.log(2.0 * np.pi))

# exponent scale factors per range convention: "exp_minus_h_over_a_sq"
# means C(h) = exp(-(h/a)^2) exactly; "practical_range" rescales so that
# C(a) ~ 0.05.
_CONVENTION_FACTOR = {"exp_minus_h_over_a_sq": 1.0, "practical_range": 3.0}
_KINDS = ("gaussian", "exponential", "spherical")

_JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


class FactorizationFailure(RuntimeError):
    """Raised when a covariance matrix resists Cholesky even after jitter."""


@dataclass(frozen=True)
class CovarianceModel:
    """Isotropic unit-sill covariance: kind, range, range convention."""

    kind: str = "gaussian"
    range: float = 10.0
    range_convention: str = "exp_minus_h_over_a_sq"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if not self.range > 0.0:
            raise ValueError("range must be positive")
        if self.range_convention not in _CONVENTION_FACTOR:
            raise ValueError(
                f"unknown range convention {self.range_convention!r}")

    def k(self, h):
        """Covariance at (array of) separation distances h >= 0."""
        h = np.asarray(h, dtype=float)
        f = _CONVENTION_FACTOR[self.range_convention]
        u = h / self.range
        if self.kind == "gaussian":
            return np.exp(-f * u * u)
        if self.kind == "exponential":
            return np.exp(-f * u)
        u = np.minimum(u, 1.0)  # spherical: exact support at the range
        return 1.0 - 1.5 * u + 0.5 * u ** 3


def covariance_matrix(sites, model):
    """Dense covariance of a site list under the model (unit diagonal)."""
    s = np.asarray(sites, dtype=float).reshape(-1, 2)
    d = np.sqrt(((s[:, None, :] - s[None, :, :]) ** 2).sum(-1))
    c = model.k(d)
    np.fill_diagonal(c, 1.0)
    return c


class CovarianceFactor:
    """Cholesky factor of a covariance matrix plus derived quantities.

    Jitter escalates through (0, 1e-12, 1e-10, 1e-8, 1e-6) until the
    factorization succeeds; FactorizationFailure beyond that.
    """

    __slots__ = ("matrix", "chol", "jitter", "_precision", "_logdet")

    def __init__(self, matrix):
        matrix = np.ascontiguousarray(matrix, dtype=float)
        n = matrix.shape[0]
        last = None
        for jit in _JITTERS:
            try:
                self.chol = cholesky(matrix + jit * np.eye(n), lower=True)
                self.jitter = jit
                break
            except np.linalg.LinAlgError as err:
                last = err
        else:
            raise FactorizationFailure(
                f"covariance not factorizable with jitter up to {_JITTERS[-1]}"
            ) from last
        self.matrix = matrix
        self._precision = None
        self._logdet = None

    @classmethod
    def build(cls, sites, model):
        return cls(covariance_matrix(sites, model))

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def precision(self):
        if self._precision is None:
            self._precision = cho_solve((self.chol, True), np.eye(self.n))
        return self._precision

    @property
    def logdet(self):
        if self._logdet is None:
            self._logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        return self._logdet

    def logpdf(self, v):
        """Centered multivariate normal log-density of the vector v."""
        w = solve_triangular(self.chol, v, lower=True)
        return float(-0.5 * (self.n * _LOG_2PI + self.logdet + w @ w))

    def krige_weights(self, c0):
        """Simple-kriging weights for a target with covariance vector c0."""
        return cho_solve((self.chol, True), c0)


def simulate_unconditional(sites, model, rng):
    """One mean-zero draw of the field at the given sites."""
    factor = CovarianceFactor.build(sites, model)
    return factor.chol @ rng.standard_normal(factor.n)


def krige(cond_sites, cond_values, model, target, factor=None):
    """Simple-kriging mean and variance at a target site.

    Empty conditioning returns the prior (0, 1).  `factor` may carry a
    prebuilt CovarianceFactor of the conditioning sites.
    """
    cond_sites = np.asarray(cond_sites, dtype=float).reshape(-1, 2)
    cond_values = np.asarray(cond_values, dtype=float).reshape(-1)
    if cond_sites.shape[0] == 0:
        return 0.0, 1.0
    if cond_sites.shape[0] != cond_values.shape[0]:
        raise ValueError("conditioning sites and values disagree in length")
    if factor is None:
        factor = CovarianceFactor.build(cond_sites, model)
    t = np.asarray(target, dtype=float).reshape(2)
    c0 = model.k(np.sqrt(((cond_sites - t) ** 2).sum(-1)))
    w = factor.krige_weights(c0)
    mean = float(w @ cond_values)
    var = float(np.clip(1.0 - c0 @ w, 0.0, 1.0))
    return mean, var


def save_covariance(model, path):
    doc = {"kind": model.kind, "range": model.range,
           "range_convention": model.range_convention}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_covariance(path):
    with open(path) as fh:
        doc = json.load(fh)
    if "kind" not in doc or "range" not in doc:
        raise ValueError("covariance file needs 'kind' and 'range'")
    return CovarianceModel(
        kind=doc["kind"], range=float(doc["range"]),
        range_convention=doc.get("range_convention", "exp_minus_h_over_a_sq"))
