"""Synthetic Gaussian-mixture features and controlled train/test mismatches.

Mixture components carry a class label (default: their index).  Mismatch
modes change only the *test* split's component weights:

``none``
    test weights equal train weights.
``density_skew``
    the densest component (smallest covariance log-determinant) has its weight
    multiplied by ``1 + strength * SKEW_GAIN``.  If other components share its
    label, they are scaled down so that label's total mass is unchanged and the
    skew stays inside the class; otherwise all weights are renormalised.
``subpop_drop``
    weights of the selected components (default: the most diffuse one) are
    multiplied by ``1 - strength`` and everything is renormalised.

A pixel mode renders each draw as a constant-colour image plus pixel noise so
the same splits can be pushed through the reference embedder.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import prng
from .embedder import FeatureMatrix
from .errors import ValidationError
from .gaussian import sqrt_psd
from .ingest import Dataset

SKEW_GAIN = 4.0
MODES = ("none", "density_skew", "subpop_drop")
PIXEL_CHUNK = 256


@dataclass
class Component:
    weight: float
    mean: np.ndarray
    cov: np.ndarray
    label: int = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise ValidationError(f"component covariance shape {self.cov.shape} does not match dim {d}")
        if self.weight < 0:
            raise ValidationError("component weights must be non-negative")


@dataclass
class GeneratorSpec:
    components: list
    seed: int = 0
    n: int = 1000
    _roots: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.components:
            raise ValidationError("generator spec needs at least one component")
        dims = {c.mean.shape[0] for c in self.components}
        if len(dims) != 1:
            raise ValidationError(f"components have different dimensions: {sorted(dims)}")
        for i, c in enumerate(self.components):
            if c.label is None:
                c.label = i
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValidationError(f"component weights sum to {self.weights.sum()!r}, not 1")
        # also rejects non-PSD covariances
        self._roots = [sqrt_psd(c.cov) for c in self.components]

    @property
    def dim(self):
        return self.components[0].mean.shape[0]

    @property
    def weights(self):
        return np.array([c.weight for c in self.components], dtype=np.float64)

    @property
    def labels(self):
        return np.array([c.label for c in self.components], dtype=np.int64)

    def densest(self):
        return int(np.argmin(_logdets(self)))

    def to_dict(self):
        return {"seed": self.seed, "n": self.n, "components": [
            {"weight": c.weight, "mean": c.mean.tolist(), "cov": c.cov.tolist(), "label": int(c.label)}
            for c in self.components]}

    @classmethod
    def from_dict(cls, d):
        comps = []
        for c in d["components"]:
            mean = np.asarray(c["mean"], dtype=np.float64)
            if "cov" in c:
                cov = c["cov"]
            else:
                cov = np.eye(mean.size) * float(c.get("cov_scale", 1.0))
            comps.append(Component(float(c["weight"]), mean, cov, c.get("label")))
        return cls(comps, int(d.get("seed", 0)), int(d.get("n", 1000)))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _logdets(spec):
    out = []
    for c in spec.components:
        sign, logdet = np.linalg.slogdet(c.cov)
        out.append(logdet if sign > 0 else -np.inf)
    return np.array(out)


def three_component_spec(d=16, seed=0, n=1000) -> GeneratorSpec:
    """Default mismatch benchmark: class 0 = tight 'easy' + broad 'hard' component, class 1 = broad."""
    if d < 2:
        raise ValidationError("three_component_spec needs d >= 2")
    e1, e2 = np.eye(d)[0], np.eye(d)[1]
    comps = [
        Component(0.3, np.zeros(d), 0.5 * np.eye(d), 0),
        Component(0.3, 2.5 * e1, np.eye(d), 0),
        Component(0.4, -2.5 * e2, np.eye(d), 1),
    ]
    return GeneratorSpec(comps, seed, n)


def mismatch_weights(spec: GeneratorSpec, mode="none", strength=0.0, drop=None) -> np.ndarray:
    if mode not in MODES:
        raise ValidationError(f"unknown mismatch mode {mode!r}; expected one of {MODES}")
    if not 0.0 <= strength <= 1.0:
        raise ValidationError(f"strength must lie in [0, 1], got {strength}")
    w = spec.weights.copy()
    if mode == "none" or strength == 0.0:
        return w
    if mode == "density_skew":
        h = spec.densest()
        group = spec.labels == spec.labels[h]
        mass = w[group].sum()
        w[h] *= 1.0 + strength * SKEW_GAIN
        if group.sum() > 1:
            w[group] *= mass / w[group].sum()
        else:
            w /= w.sum()
        return w
    targets = [int(np.argmax(_logdets(spec)))] if drop is None else list(drop)
    for j in targets:
        w[j] *= 1.0 - strength
    if w.sum() <= 0:
        raise ValidationError("subpop_drop removed all probability mass from the test split")
    return w / w.sum()


def sample_components(weights, n, seed, domain) -> np.ndarray:
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    u = prng.uniform(prng.key(seed, f"{domain}/assign"), n)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(weights) - 1)


def sample_mixture(spec: GeneratorSpec, n, seed, domain, weights=None):
    """``(values, component_ids)`` for ``n`` draws; ``weights`` overrides the spec's."""
    w = spec.weights if weights is None else np.asarray(weights, dtype=np.float64)
    comp = sample_components(w, n, seed, domain)
    z = prng.gauss(prng.key(seed, f"{domain}/noise"), n * spec.dim).reshape(n, spec.dim)
    x = np.empty_like(z)
    for j, c in enumerate(spec.components):
        sel = comp == j
        x[sel] = c.mean + z[sel] @ spec._roots[j]
    return x, comp


def gen_features(spec: GeneratorSpec) -> FeatureMatrix:
    x, _ = sample_mixture(spec, spec.n, spec.seed, "synth/features")
    return FeatureMatrix(x, "synthetic", spec.seed)


@dataclass
class MismatchSplit:
    train: FeatureMatrix
    test: FeatureMatrix
    train_labels: np.ndarray
    test_labels: np.ndarray
    train_components: np.ndarray
    test_components: np.ndarray
    test_weights: np.ndarray


def inject_mismatch(spec, mode="none", strength=0.0, split_sizes=(12000, 5000), seed=0, drop=None):
    """Draw a train split from ``spec`` and a test split under the given mismatch mode."""
    n_train, n_test = split_sizes
    tw = mismatch_weights(spec, mode, strength, drop)
    xtr, ctr = sample_mixture(spec, n_train, seed, "synth/train")
    xte, cte = sample_mixture(spec, n_test, seed, "synth/test", weights=tw)
    labels = spec.labels
    return MismatchSplit(FeatureMatrix(xtr, "synthetic", seed), FeatureMatrix(xte, "synthetic", seed),
                         labels[ctr], labels[cte], ctr, cte, tw)


def render_images(spec, components, seed, domain, image_shape=(32, 32, 3)) -> np.ndarray:
    """Constant-colour images with Gaussian pixel noise, one per component id.

    Component ``j`` has base colour ``127.5 + 60 tanh(mean_j[c mod d])`` in
    channel ``c`` and noise std ``40 sqrt(tr(cov_j) / d)``.  Noise comes from
    the ``(seed, domain + "/pixels")`` stream in fixed-size row chunks, each at
    its own counter offset.
    """
    h, w, ch = image_shape
    d = spec.dim
    base = np.array([[127.5 + 60.0 * np.tanh(c.mean[i % d]) for i in range(ch)] for c in spec.components])
    scale = np.array([40.0 * np.sqrt(max(np.trace(c.cov), 0.0) / d) for c in spec.components])
    n = len(components)
    per = h * w * ch
    out = np.empty((n, h, w, ch), dtype=np.uint8)
    stream = prng.key(seed, f"{domain}/pixels")
    for lo in range(0, n, PIXEL_CHUNK):
        hi = min(n, lo + PIXEL_CHUNK)
        z = prng.gauss(stream.advance(2 * lo * per), (hi - lo) * per).reshape(hi - lo, h, w, ch)
        comp = components[lo:hi]
        img = base[comp][:, None, None, :] + scale[comp][:, None, None, None] * z
        out[lo:hi] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return out


def inject_mismatch_pixels(spec, mode="none", strength=0.0, split_sizes=(12000, 5000), seed=0,
                           image_shape=(32, 32, 3), drop=None):
    """Pixel-space version of :func:`inject_mismatch`, returning two Datasets."""
    n_train, n_test = split_sizes
    tw = mismatch_weights(spec, mode, strength, drop)
    ctr = sample_components(spec.weights, n_train, seed, "synth/train")
    cte = sample_components(tw, n_test, seed, "synth/test")
    k = int(spec.labels.max()) + 1
    labels = spec.labels
    train = Dataset(render_images(spec, ctr, seed, "synth/train", image_shape), labels[ctr], k)
    test = Dataset(render_images(spec, cte, seed, "synth/test", image_shape), labels[cte], k)
    return train, test


def analytic_frechet_commuting(mu1, cov1, mu2, cov2) -> float:
    """Closed form for simultaneously diagonal covariances: sum of per-axis 1-D terms."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    s1, s2 = np.diag(np.asarray(cov1, float)), np.diag(np.asarray(cov2, float))
    return float(np.sum((mu1 - mu2) ** 2) + np.sum((np.sqrt(s1) - np.sqrt(s2)) ** 2))
