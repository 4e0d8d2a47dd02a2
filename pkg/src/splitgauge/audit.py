"""Subset-FID audit of a train/test split.

For each seed three equally sized subsets are drawn without replacement: two
disjoint ones from train (``train_prime``, ``train_double_prime``) and one
from test.  If both splits come from one distribution, the FID between the two
train subsets ("within") and between a train and a test subset ("cross")
should agree.  A cross FID well above the within FID flags a mismatch.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import prng
from .embedder import FeatureMatrix, check_same_dim
from .errors import CapacityError, ValidationError
from .gaussian import frechet, summarize

DEFAULT_M = 10_000
DEFAULT_SEEDS = (1, 2, 3, 4, 5)

MATCH = "match"
MISMATCH = "mismatch"
INCONCLUSIVE = "inconclusive"

# Reference subset-FID / IS values (mean, std over 5 seeds).  Only reproducible
# with pretrained Inception features of the real datasets.
REFERENCE_TABLE = {
    "svhn": {
        "fid_within": (3.309, 0.029), "fid_cross": (16.687, 0.325),
        "is_train": (8.507, 0.114), "is_test": (8.142, 0.501),
        "sizes": (73_257, 26_032),
    },
    "svhn-remix": {
        "fid_within": (3.334, 0.018), "fid_cross": (3.326, 0.015),
        "is_train": (8.348, 0.568), "is_test": (8.269, 0.549),
        "sizes": (73_257, 26_032),
    },
    "cifar10": {
        "fid_within": (5.196, 0.040), "fid_cross": (5.206, 0.031),
        "is_train": (7.700, 0.043), "is_test": (7.692, 0.023),
    },
}


@dataclass(frozen=True)
class DecisionRule:
    tau: float = 1.5
    tau_low: float = 1.2
    z_min: float = 3.0

    def __post_init__(self):
        if not self.tau_low <= self.tau:
            raise ValidationError(f"tau_low ({self.tau_low}) must not exceed tau ({self.tau})")


@dataclass
class SubsetTriple:
    train_prime: np.ndarray
    train_double_prime: np.ndarray
    test_prime: np.ndarray
    m: int
    seed: int


def sample_subsets(train_n, test_n, m, seed) -> SubsetTriple:
    """Draw the three index subsets for one seed.

    Train indices come from one partial shuffle of ``range(train_n)``: the
    first ``m`` draws form ``train_prime``, the next ``m`` ``train_double_prime``.
    """
    if m < 1:
        raise ValidationError(f"subset size must be positive, got {m}")
    if 2 * m > train_n:
        raise CapacityError(f"train split too small: 2 * m = {2 * m} exceeds {train_n} samples")
    if m > test_n:
        raise CapacityError(f"test split too small: m = {m} exceeds {test_n} samples")
    tr = prng.sample_without_replacement(prng.key(seed, "subset-sample/train"), train_n, 2 * m)
    te = prng.sample_without_replacement(prng.key(seed, "subset-sample/test"), test_n, m)
    return SubsetTriple(tr[:m], tr[m:], te, m, seed)


def _z_gap(diff, denom):
    if denom > 0:
        return diff / denom
    if diff == 0:
        return 0.0
    return math.copysign(math.inf, diff)


def decide(within_mean, within_std, cross_mean, cross_std, rule=DecisionRule()):
    """Return ``(gap_ratio, z_gap, verdict)`` for aggregated FID statistics."""
    ratio = cross_mean / within_mean if within_mean > 0 else (math.inf if cross_mean > 0 else 1.0)
    z = _z_gap(cross_mean - within_mean, math.hypot(within_std, cross_std))
    if ratio > rule.tau and z > rule.z_min:
        verdict = MISMATCH
    elif ratio < rule.tau_low and z < rule.z_min:
        verdict = MATCH
    else:
        verdict = INCONCLUSIVE
    return ratio, z, verdict


@dataclass
class SeedRow:
    seed: int
    fid_within: float
    fid_cross: float


@dataclass
class AuditReport:
    per_seed: list
    within_mean: float
    within_std: float
    cross_mean: float
    cross_std: float
    gap_ratio: float
    z_gap: float
    verdict: str
    config: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows, rule=DecisionRule(), config=None):
        if len(rows) < 2:
            raise ValidationError("need at least two seeds to estimate spread")
        within = np.array([r.fid_within for r in rows])
        cross = np.array([r.fid_cross for r in rows])
        wm, ws = float(within.mean()), float(within.std(ddof=1))
        cm, cs = float(cross.mean()), float(cross.std(ddof=1))
        ratio, z, verdict = decide(wm, ws, cm, cs, rule)
        return cls(list(rows), wm, ws, cm, cs, ratio, z, verdict, dict(config or {}))

    def to_dict(self):
        out = asdict(self)
        out["per_seed"] = [asdict(r) for r in self.per_seed]
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["per_seed"] = [SeedRow(**r) for r in d["per_seed"]]
        return cls(**d)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", "fid_within", "fid_cross"])
            for r in self.per_seed:
                writer.writerow([r.seed, repr(r.fid_within), repr(r.fid_cross)])


def _seed_row(train, test, m, seed, jitter):
    t = sample_subsets(train.shape[0], test.shape[0], m, seed)
    anchor = summarize(train[t.train_double_prime])
    within = frechet(anchor, summarize(train[t.train_prime]), jitter=jitter)
    cross = frechet(anchor, summarize(test[t.test_prime]), jitter=jitter)
    return SeedRow(int(seed), within, cross)


def audit(train_f, test_f, m=DEFAULT_M, seeds=DEFAULT_SEEDS, rule=DecisionRule(), jitter=None,
          threads=1) -> AuditReport:
    """Run the subset-FID protocol over ``seeds`` and aggregate.

    Seeds are independent and may run in parallel; each seed's subsets come
    from its own streams, so the report does not depend on ``threads``.
    """
    if isinstance(train_f, FeatureMatrix) and isinstance(test_f, FeatureMatrix):
        check_same_dim(train_f, test_f)
    train = np.asarray(getattr(train_f, "values", train_f), dtype=np.float64)
    test = np.asarray(getattr(test_f, "values", test_f), dtype=np.float64)
    if train.shape[1] != test.shape[1]:
        raise ValidationError(f"feature dimensions differ: {train.shape[1]} vs {test.shape[1]}")
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ValidationError(f"duplicate seeds in {seeds}")
    if len(seeds) < 2:
        raise ValidationError("need at least two seeds to estimate spread")
    # capacity errors surface before any work is scheduled
    sample_subsets(train.shape[0], test.shape[0], m, seeds[0])

    def job(s):
        return _seed_row(train, test, m, s, jitter)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(job, seeds))
    else:
        rows = [job(s) for s in seeds]
    config = {"m": m, "seeds": seeds, "rule": asdict(rule), "jitter": jitter,
              "train_n": int(train.shape[0]), "test_n": int(test.shape[0]), "dim": int(train.shape[1])}
    return AuditReport.from_rows(rows, rule, config)
