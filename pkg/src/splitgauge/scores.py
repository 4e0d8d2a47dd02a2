"""Inception Score from a matrix of class posteriors."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .ingest import ProbMatrix

LOG_CLAMP = 1e-12


@dataclass
class IsResult:
    score: float
    mean_kl: float
    marginal: np.ndarray
    fold_scores: list = field(default_factory=list)

    def to_dict(self):
        out = {"score": self.score, "mean_kl": self.mean_kl, "marginal": self.marginal.tolist()}
        if self.fold_scores:
            out["fold_scores"] = list(self.fold_scores)
        return out


def _mean_kl(p):
    marginal = p.mean(axis=0)
    logp = np.log(np.maximum(p, LOG_CLAMP))
    logm = np.log(np.maximum(marginal, LOG_CLAMP))
    kl = (p * (logp - logm)).sum(axis=1)
    return float(kl.mean()), marginal


def inception_score(p, splits=1) -> IsResult:
    """exp of the mean KL between each row and the row-mean (marginal) distribution.

    ``splits > 1`` additionally scores contiguous folds and reports their mean
    as ``score``; by default one score is computed over all rows.
    """
    rows = p.rows if isinstance(p, ProbMatrix) else ProbMatrix(p).rows
    n = rows.shape[0]
    if n == 0:
        raise ValidationError("inception score needs at least one row")
    mean_kl, marginal = _mean_kl(rows)
    if splits <= 1:
        return IsResult(float(np.exp(mean_kl)), mean_kl, marginal)
    if splits > n:
        raise ValidationError(f"cannot split {n} rows into {splits} folds")
    folds = [float(np.exp(_mean_kl(chunk)[0])) for chunk in np.array_split(rows, splits)]
    return IsResult(float(np.mean(folds)), mean_kl, marginal, folds)
