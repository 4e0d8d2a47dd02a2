"""Gaussian summaries of feature matrices and the Frechet distance between them.

All arithmetic is float64 whatever the input dtype.  The matrix square root
works on the symmetric product ``sqrt(S1) @ S2 @ sqrt(S1)``, whose trace of
square root equals that of ``sqrtm(S1 @ S2)`` without complex arithmetic.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InsufficientSamplesError, NotPSDError, ValidationError

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
CLAMP_REL = 1e-10
NEGATIVE_EIG_REL = 1e-6
DEFAULT_JITTER = 1e-6


@dataclass
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray
    sample_count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise DimensionMismatchError(f"covariance shape {self.cov.shape} does not match mean length {d}")
        _check_symmetric(self.cov)

    @property
    def dim(self):
        return self.mean.shape[0]

    def to_dict(self):
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(), "sample_count": self.sample_count}


def _check_symmetric(s):
    scale = max(1.0, float(np.linalg.norm(s)))
    asym = float(np.linalg.norm(s - s.T))
    if asym > SYMMETRY_TOL * scale:
        raise ValidationError(f"matrix is not symmetric (||S - S^T||_F = {asym:.3e})")


def _values(f):
    return np.asarray(getattr(f, "values", f), dtype=np.float64)


def summarize(f) -> GaussianSummary:
    """Column means and the unbiased (n - 1) covariance of a feature matrix."""
    x = _values(f)
    if x.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 samples for a covariance, got {n}")
    mu = x.mean(axis=0)
    xc = x - mu
    s = xc.T @ xc / (n - 1)
    return GaussianSummary(mu, (s + s.T) / 2.0, n)


def _clamped_eig(s, vectors=True, clamp=CLAMP_REL):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {s.shape}")
    _check_symmetric(s)
    sym = (s + s.T) / 2.0
    if vectors:
        w, v = np.linalg.eigh(sym)
    else:
        w, v = np.linalg.eigvalsh(sym), None
    lam_max = float(w.max()) if w.size else 0.0
    if w.size and w.min() < -NEGATIVE_EIG_REL * max(lam_max, 0.0):
        raise NotPSDError(f"matrix is not PSD: smallest eigenvalue {w.min():.3e}, largest {lam_max:.3e}")
    w = np.where(w < clamp * max(lam_max, 0.0), 0.0, w)
    return w, v


def _root(s, clamp):
    w, v = _clamped_eig(s, clamp=clamp)
    r = (v * np.sqrt(w)) @ v.T
    return (r + r.T) / 2.0


def sqrt_psd(s) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix by eigendecomposition.

    Eigenvalues below ``1e-10 * lambda_max`` are treated as zero.
    """
    return _root(s, CLAMP_REL)


def trace_sqrt_product(s1, s2) -> float:
    """``Tr((S1 S2)^(1/2))``.

    The eigenvalues of ``sqrt(S1) S2 sqrt(S1)`` are the squared singular values
    of ``sqrt(S1) sqrt(S2)``, so the trace is that product's nuclear norm.  The
    SVD keeps small terms accurate to ``eps * ||S||``; square-rooting
    eigenvalues of the product directly would only give ``sqrt(eps)``.
    Only round-off negatives are clamped here.
    """
    a = _root(s1, 0.0)
    b = _root(s2, 0.0)
    return float(np.linalg.svd(a @ b, compute_uv=False).sum())


def frechet(g1: GaussianSummary, g2: GaussianSummary, jitter=None) -> float:
    """Squared Frechet distance between two Gaussians.

    ``||mu1 - mu2||^2 + Tr(S1) + Tr(S2) - 2 Tr((S1 S2)^(1/2))``, clamped at zero.
    ``jitter`` adds ``jitter * I`` to both covariances (useful when n <= d).
    """
    if g1.dim != g2.dim:
        raise DimensionMismatchError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    s1, s2 = g1.cov, g2.cov
    if jitter:
        eye = np.eye(g1.dim) * float(jitter)
        s1, s2 = s1 + eye, s2 + eye
    diff = g1.mean - g2.mean
    value = float(diff @ diff) + float(np.trace(s1)) + float(np.trace(s2)) - 2.0 * trace_sqrt_product(s1, s2)
    if value < 0.0:
        if value < -1e-6:
            log.warning("frechet distance %.3e is negative beyond round-off; clamped to 0", value)
        value = 0.0
    return value


def frechet_features(f1, f2, jitter=None) -> float:
    return frechet(summarize(f1), summarize(f2), jitter=jitter)
