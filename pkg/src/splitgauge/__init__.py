"""Split-integrity auditing: subset FID, Inception Score, stratified remix, GMM bits-per-dim.

The submodules ``audit`` and ``remix`` hold the main entry points of the same name.
"""

__version__ = "0.1.0"

from .audit import AuditReport, DecisionRule, sample_subsets
from .density import GmmModel, bpd, fit_gmm
from .embedder import EmbedderConfig, FeatureMatrix, embed_reference, load_features, save_features
from .gaussian import GaussianSummary, frechet, sqrt_psd, summarize
from .ingest import Dataset, ProbMatrix, read_probs, read_raw, read_svhn_mat, write_raw
from .remix import RemixPlan, apply_plan
from .scores import IsResult, inception_score

__all__ = [
    "AuditReport", "DecisionRule", "sample_subsets",
    "GmmModel", "bpd", "fit_gmm",
    "EmbedderConfig", "FeatureMatrix", "embed_reference", "load_features", "save_features",
    "GaussianSummary", "frechet", "sqrt_psd", "summarize",
    "Dataset", "ProbMatrix", "read_probs", "read_raw", "read_svhn_mat", "write_raw",
    "RemixPlan", "apply_plan",
    "IsResult", "inception_score",
]
