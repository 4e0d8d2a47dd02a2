"""Feature matrices and the built-in reference embedder.

The reference embedder is a fixed, seeded stand-in for a pretrained network:

1. rescale pixels to [-1, 1];
2. edge-pad height and width up to multiples of the pooling grid, then average
   each channel over every grid cell (``grid_h * grid_w * C`` inputs);
3. multiply by a projection whose entries are standard normals from the
   ``(seed, "embed-projection")`` stream, scaled by ``1 / sqrt(inputs)``;
4. apply ``tanh``.

Real Inception activations enter through :func:`load_features`.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _accel, prng
from .errors import DimensionMismatchError, ValidationError
from .ingest import FEATURE_MAGIC, Dataset, read_matrix, write_matrix

CHUNK_ROWS = 2048


@dataclass
class FeatureMatrix:
    values: np.ndarray
    embedder_id: str = "external"
    seed: int = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {self.values.shape}")
        if self.values.shape[1] <= 0:
            raise ValidationError("feature dimension must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("feature matrix contains non-finite entries")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def rows(self, index) -> "FeatureMatrix":
        return FeatureMatrix(self.values[np.asarray(index, dtype=np.int64)], self.embedder_id, self.seed)


def check_same_dim(*mats):
    dims = {m.dim for m in mats}
    if len(dims) > 1:
        raise DimensionMismatchError(f"feature dimensions differ: {sorted(dims)}")


@dataclass(frozen=True)
class EmbedderConfig:
    pooled_grid: tuple = (8, 8)
    projection_dim: int = 64
    seed: int = 0
    nonlinearity: str = "tanh"

    def __post_init__(self):
        gh, gw = self.pooled_grid
        if gh <= 0 or gw <= 0:
            raise ValidationError(f"pooled_grid must be positive, got {self.pooled_grid}")
        if self.projection_dim <= 0:
            raise ValidationError("projection_dim must be positive")
        if self.nonlinearity != "tanh":
            raise ValidationError("only the tanh nonlinearity is supported")

    def input_dim(self, channels):
        return self.pooled_grid[0] * self.pooled_grid[1] * channels

    def check(self, image_shape):
        h, w, c = image_shape
        gh, gw = self.pooled_grid
        if gh > h or gw > w:
            raise ValidationError(f"pooled_grid {self.pooled_grid} is finer than the {h}x{w} images")
        if self.projection_dim > 4 * self.input_dim(c):
            raise ValidationError(
                f"projection_dim {self.projection_dim} exceeds 4 x pooled inputs ({self.input_dim(c)})")

    @property
    def tag(self):
        gh, gw = self.pooled_grid
        return f"reference-g{gh}x{gw}-d{self.projection_dim}-s{self.seed}"


def projection_matrix(cfg: EmbedderConfig, input_dim: int) -> np.ndarray:
    z = prng.gauss(prng.key(cfg.seed, "embed-projection"), input_dim * cfg.projection_dim)
    return z.reshape(input_dim, cfg.projection_dim) / np.sqrt(input_dim)


def pooled_inputs(images, cfg: EmbedderConfig) -> np.ndarray:
    n, h, w, c = images.shape
    gh, gw = cfg.pooled_grid
    cell = (-(-h // gh)) * (-(-w // gw))
    sums = _accel.patch_sums(images, gh, gw)
    return (sums.reshape(n, -1) / cell) / 127.5 - 1.0


def embed_reference(data: Dataset, cfg: EmbedderConfig = EmbedderConfig(), threads=1) -> FeatureMatrix:
    images = data.images if isinstance(data, Dataset) else np.asarray(data, dtype=np.uint8)
    n, h, w, c = images.shape
    cfg.check((h, w, c))
    proj = projection_matrix(cfg, cfg.input_dim(c))

    def run(lo):
        return np.tanh(pooled_inputs(images[lo:lo + CHUNK_ROWS], cfg) @ proj)

    starts = range(0, n, CHUNK_ROWS)
    if threads > 1 and n > CHUNK_ROWS:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(lo) for lo in starts]
    values = np.concatenate(parts) if parts else np.empty((0, cfg.projection_dim))
    return FeatureMatrix(values, cfg.tag, cfg.seed)


def load_features(path) -> FeatureMatrix:
    return FeatureMatrix(read_matrix(path, FEATURE_MAGIC), "external")


def save_features(path, f, dtype="f8"):
    values = f.values if isinstance(f, FeatureMatrix) else f
    write_matrix(path, values, FEATURE_MAGIC, dtype=dtype)
