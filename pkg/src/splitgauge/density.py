"""Gaussian-mixture density probe and bits-per-dimension.

The mixture is fitted by EM started from a hard assignment to greedy k-means++
seeds.  Covariances carry a
ridge from the fixed penalty ``-0.5 * reg * n * sum_k tr(inv(S_k))``, whose
M-step is ``S_k = scatter_k / N_k + reg * (n / N_k) * I``.  With one component
that is exactly ``cov + reg * I``.  Because the penalty does not depend on the
responsibilities, every EM iteration is guaranteed not to decrease the
penalised mean log-likelihood recorded in ``fit_trace`` (equal to the plain
mean log-likelihood when ``reg == 0``).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from . import prng
from .errors import DimensionMismatchError, ValidationError

LN2 = math.log(2.0)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    fit_trace: list = field(default_factory=list)
    covariance: str = "full"
    reg: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
            "covariance": self.covariance,
            "reg": self.reg,
            "fit_trace": list(self.fit_trace),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d):
        model = cls(np.asarray(d["weights"], dtype=np.float64), np.asarray(d["means"], dtype=np.float64),
                    np.asarray(d["covs"], dtype=np.float64), list(d.get("fit_trace", [])),
                    d.get("covariance", "full"), float(d.get("reg", 0.0)), dict(d.get("meta", {})))
        if model.means.ndim != 2 or model.covs.shape != (model.k, model.dim, model.dim):
            raise ValidationError("inconsistent GMM array shapes")
        if abs(model.weights.sum() - 1.0) > 1e-9:
            raise ValidationError("GMM weights do not sum to one")
        return model

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class BpdResult:
    bpd: float
    mean_nll_nats: float
    n: int
    d: int

    def to_dict(self):
        return {"bpd": self.bpd, "mean_nll_nats": self.mean_nll_nats, "n": self.n, "d": self.d}


def _component_logpdf(x, means, covs, diagonal):
    """n x k log densities and, per component, ``tr(inv(S_k))``."""
    n, d = x.shape
    k = means.shape[0]
    out = np.empty((n, k))
    tr_inv = np.empty(k)
    for j in range(k):
        diff = x - means[j]
        if diagonal:
            var = np.diag(covs[j])
            out[:, j] = -0.5 * (np.sum(diff * diff / var, axis=1) + np.log(var).sum() + d * _LOG_2PI)
            tr_inv[j] = float(np.sum(1.0 / var))
            continue
        try:
            chol = cholesky(covs[j], lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValidationError(f"component {j} covariance is not positive definite") from exc
        sol = solve_triangular(chol, diff.T, lower=True)
        out[:, j] = -0.5 * (np.sum(sol * sol, axis=0) + d * _LOG_2PI) - np.log(np.diag(chol)).sum()
        inv_chol = solve_triangular(chol, np.eye(d), lower=True)
        tr_inv[j] = float(np.sum(inv_chol * inv_chol))
    return out, tr_inv


def _log_joint(model, x):
    logpdf, tr_inv = _component_logpdf(x, model.means, model.covs, model.covariance == "diag")
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    return logpdf + logw, tr_inv


def log_likelihood(model: GmmModel, f) -> np.ndarray:
    """Per-row log density under the mixture (nats)."""
    x = np.asarray(getattr(f, "values", f), dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise DimensionMismatchError(f"model has dimension {model.dim}, data has shape {x.shape}")
    joint, _ = _log_joint(model, x)
    return logsumexp(joint, axis=1)


def _kmeanspp(x, k, seed):
    """Greedy k-means++: each step draws ``2 + ln k`` candidates by squared
    distance and keeps the one that lowers the total potential most."""
    n = x.shape[0]
    trials = 2 + int(math.log(k))
    stream = prng.key(seed, "gmm-init")
    u = prng.uniform(stream.advance(1), k * trials).reshape(k, trials)
    centers = [int(prng.bounded(stream, [n])[0])]
    dist = np.sum((x - x[centers[0]]) ** 2, axis=1)
    for j in range(1, k):
        total = dist.sum()
        if total <= 0:
            # every point coincides with a chosen centre
            centers.append(j % n)
            continue
        cand = np.minimum(np.searchsorted(np.cumsum(dist), u[j] * total, side="right"), n - 1)
        new = np.minimum(dist[None, :], ((x[None, :, :] - x[cand][:, None, :]) ** 2).sum(axis=2))
        best = int(np.argmin(new.sum(axis=1)))
        centers.append(int(cand[best]))
        dist = new[best]
    return x[centers].copy()


def _initial_resp(x, centers):
    """Hard assignment of every row to its nearest seed centre."""
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros_like(d2)
    resp[np.arange(x.shape[0]), np.argmin(d2, axis=1)] = 1.0
    return resp


def _m_step(x, resp, reg, diagonal):
    n, d = x.shape
    nk = np.maximum(resp.sum(axis=0), 1e-10 * n)
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    covs = np.empty((resp.shape[1], d, d))
    for j in range(resp.shape[1]):
        diff = x - means[j]
        if diagonal:
            var = (resp[:, j] @ (diff * diff)) / nk[j] + reg * n / nk[j]
            covs[j] = np.diag(var)
        else:
            s = (diff * resp[:, j:j + 1]).T @ diff / nk[j]
            covs[j] = (s + s.T) / 2.0 + np.eye(d) * (reg * n / nk[j])
    return weights, means, covs


def default_reg(x):
    var = float(np.mean(np.var(x, axis=0)))
    return 1e-6 * var if var > 0 else 1e-6


def fit_gmm(f, k, seed=0, tol=1e-6, max_iter=200, reg=None, covariance="full") -> GmmModel:
    x = np.asarray(getattr(f, "values", f), dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if k < 1 or n < k:
        raise ValidationError(f"need n >= k >= 1, got n = {n}, k = {k}")
    if covariance not in ("full", "diag"):
        raise ValidationError(f"covariance must be 'full' or 'diag', got {covariance!r}")
    reg = default_reg(x) if reg is None else float(reg)
    if reg < 0:
        raise ValidationError("reg must be non-negative")
    diagonal = covariance == "diag"

    centers = _kmeanspp(x, k, seed)
    resp = _initial_resp(x, centers)
    if np.all(resp.sum(axis=0) > d):
        weights, means, covs = _m_step(x, resp, reg, diagonal)
    else:
        # some seed owns too few rows for a covariance; start from the global one
        xc = x - x.mean(axis=0)
        glob = xc.T @ xc / n
        if diagonal:
            glob = np.diag(np.diag(glob))
        weights, means, covs = np.full(k, 1.0 / k), centers, np.repeat((glob + np.eye(d) * reg)[None], k, axis=0)
    model = GmmModel(weights, means, covs, [], covariance, reg)

    trace = []
    converged = False
    for _ in range(max_iter):
        joint, tr_inv = _log_joint(model, x)
        ll = logsumexp(joint, axis=1)
        objective = float(ll.mean() - 0.5 * reg * tr_inv.sum())
        if not math.isfinite(objective):
            raise ValidationError("non-finite likelihood; input is degenerate for this model")
        trace.append(objective)
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            converged = True
            break
        resp = np.exp(joint - ll[:, None])
        model.weights, model.means, model.covs = _m_step(x, resp, reg, diagonal)
    else:
        joint, tr_inv = _log_joint(model, x)
        trace.append(float(logsumexp(joint, axis=1).mean() - 0.5 * reg * tr_inv.sum()))
    model.fit_trace = trace
    model.meta = {"seed": int(seed), "k": int(k), "n": int(n), "tol": tol, "max_iter": int(max_iter),
                  "iterations": len(trace), "converged": converged}
    return model


def bpd(model: GmmModel, f) -> BpdResult:
    """Mean negative log-likelihood in bits per feature dimension."""
    ll = log_likelihood(model, f)
    if ll.size == 0:
        raise ValidationError("cannot evaluate bits-per-dim on an empty matrix")
    nll = float(-ll.mean())
    d = model.dim
    return BpdResult(nll / (d * LN2), nll, int(ll.size), d)
