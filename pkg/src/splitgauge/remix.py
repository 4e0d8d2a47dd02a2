"""Stratified remix of a train/test split.

Both splits are pooled class by class, each class pool is shuffled with its
own stream ``(seed, "remix/class-<c>")``, and the first ``n_train(c)`` entries
go to the new train split.  Split sizes and per-class counts therefore match
the originals exactly.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import prng
from .errors import LabelDriftError, ValidationError
from .ingest import Dataset

TRAIN, TEST = 0, 1


@dataclass
class RemixPlan:
    """``new_train``/``new_test`` are ``(n, 2)`` arrays of ``(source_split, source_index)``.

    Rows are sorted by source split, then index.  The label arrays record what
    each referenced sample was labeled at planning time.
    """

    new_train: np.ndarray
    new_test: np.ndarray
    seed: int
    new_train_labels: np.ndarray = None
    new_test_labels: np.ndarray = None
    source_sizes: tuple = None

    def to_dict(self):
        out = {
            "seed": int(self.seed),
            "new_train": self.new_train.tolist(),
            "new_test": self.new_test.tolist(),
        }
        if self.new_train_labels is not None:
            out["new_train_labels"] = self.new_train_labels.tolist()
            out["new_test_labels"] = self.new_test_labels.tolist()
        if self.source_sizes is not None:
            out["source_sizes"] = {"train": self.source_sizes[0], "test": self.source_sizes[1]}
        return out

    @classmethod
    def from_dict(cls, d):
        def pairs(key):
            return np.asarray(d[key], dtype=np.int64).reshape(-1, 2)

        labels = {}
        for key in ("new_train_labels", "new_test_labels"):
            if key in d:
                labels[key] = np.asarray(d[key], dtype=np.int64)
        sizes = d.get("source_sizes")
        return cls(pairs("new_train"), pairs("new_test"), int(d["seed"]),
                   labels.get("new_train_labels"), labels.get("new_test_labels"),
                   (sizes["train"], sizes["test"]) if sizes else None)

    def dumps(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def summary(self):
        out = {"seed": int(self.seed), "new_train_size": len(self.new_train),
               "new_test_size": len(self.new_test)}
        for name, arr in (("new_train", self.new_train), ("new_test", self.new_test)):
            out[f"{name}_from_test"] = int((arr[:, 0] == TEST).sum()) if len(arr) else 0
        if self.new_train_labels is not None:
            out["train_class_counts"] = np.bincount(self.new_train_labels).tolist()
            out["test_class_counts"] = np.bincount(self.new_test_labels).tolist()
        return out


def _check_labels(labels, class_count, name):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValidationError(f"{name} labels must be 1-D")
    if labels.size and labels.min() < 0:
        raise ValidationError(f"{name} labels contain negative values")
    if class_count is not None and labels.size and labels.max() >= class_count:
        raise ValidationError(f"{name} label {labels.max()} out of range [0, {class_count})")
    return labels


def remix(train_labels, test_labels, seed, class_count=None) -> RemixPlan:
    train_labels = _check_labels(train_labels, class_count, "train")
    test_labels = _check_labels(test_labels, class_count, "test")
    pool_split = np.concatenate([np.full(train_labels.size, TRAIN), np.full(test_labels.size, TEST)])
    pool_index = np.concatenate([np.arange(train_labels.size), np.arange(test_labels.size)])
    pool_label = np.concatenate([train_labels, test_labels])
    k = int(pool_label.max()) + 1 if pool_label.size else 0
    n_train = np.bincount(train_labels, minlength=k)
    base = prng.key(seed, "remix")
    to_train = np.zeros(pool_label.size, dtype=bool)
    for c in range(k):
        members = np.flatnonzero(pool_label == c)
        if members.size == 0:
            continue
        order = members[prng.permutation(base.child(f"class-{c}"), members.size)]
        to_train[order[:n_train[c]]] = True

    def side(mask):
        pairs = np.stack([pool_split[mask], pool_index[mask]], axis=1).astype(np.int64)
        return pairs, pool_label[mask]

    # pool order is already (split, index), so boolean masking keeps rows sorted
    tr, trl = side(to_train)
    te, tel = side(~to_train)
    return RemixPlan(tr, te, int(seed), trl, tel, (int(train_labels.size), int(test_labels.size)))


def identity_plan(train_labels, test_labels) -> RemixPlan:
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    tr = np.stack([np.full(train_labels.size, TRAIN), np.arange(train_labels.size)], axis=1)
    te = np.stack([np.full(test_labels.size, TEST), np.arange(test_labels.size)], axis=1)
    return RemixPlan(tr.astype(np.int64), te.astype(np.int64), 0, train_labels, test_labels,
                     (int(train_labels.size), int(test_labels.size)))


def _gather(pairs, recorded, sources, getter, name):
    out = []
    for split, src in enumerate(sources):
        sel = pairs[:, 0] == split
        idx = pairs[sel, 1]
        n = len(src)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            bad = idx[(idx < 0) | (idx >= n)][0]
            raise ValidationError(f"{name}: index {bad} out of range for source split {split} of size {n}")
    bad_split = ~np.isin(pairs[:, 0], (TRAIN, TEST))
    if bad_split.any():
        raise ValidationError(f"{name}: unknown source split code {pairs[bad_split][0, 0]}")
    labels = np.empty(len(pairs), dtype=np.int64)
    for split, src in enumerate(sources):
        sel = pairs[:, 0] == split
        labels[sel] = src.labels[pairs[sel, 1]]
    if recorded is not None:
        drift = np.flatnonzero(labels != recorded)
        if drift.size:
            s, i = pairs[drift[0]]
            raise LabelDriftError(
                f"{name}: sample (split {s}, index {i}) is labeled {labels[drift[0]]}, "
                f"plan recorded {recorded[drift[0]]}")
    return getter(pairs), labels


def apply_plan(plan: RemixPlan, train: Dataset, test: Dataset):
    """Materialise the remixed datasets described by ``plan``."""
    if plan.source_sizes is not None and plan.source_sizes != (len(train), len(test)):
        raise LabelDriftError(
            f"plan was built for split sizes {plan.source_sizes}, got {(len(train), len(test))}")
    if train.images.shape[1:] != test.images.shape[1:]:
        raise ValidationError("train and test images have different shapes")
    k = max(train.class_count, test.class_count)
    sources = (train, test)

    def images(pairs):
        out = np.empty((len(pairs),) + train.images.shape[1:], dtype=np.uint8)
        for split, src in enumerate(sources):
            sel = pairs[:, 0] == split
            out[sel] = src.images[pairs[sel, 1]]
        return out

    tr_img, tr_lab = _gather(plan.new_train, plan.new_train_labels, sources, images, "new_train")
    te_img, te_lab = _gather(plan.new_test, plan.new_test_labels, sources, images, "new_test")
    return Dataset(tr_img, tr_lab, k), Dataset(te_img, te_lab, k)


def apply_plan_rows(plan: RemixPlan, train_rows, test_rows):
    """Same as :func:`apply_plan` for plain row arrays (e.g. feature matrices)."""
    train_rows = np.asarray(train_rows)
    test_rows = np.asarray(test_rows)

    def take(pairs):
        out = np.empty((len(pairs),) + train_rows.shape[1:], dtype=train_rows.dtype)
        for split, src in enumerate((train_rows, test_rows)):
            sel = pairs[:, 0] == split
            idx = pairs[sel, 1]
            if idx.size and (idx.min() < 0 or idx.max() >= len(src)):
                raise ValidationError(f"plan index out of range for source split {split}")
            out[sel] = src[idx]
        return out

    return take(plan.new_train), take(plan.new_test)
