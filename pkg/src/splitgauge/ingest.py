"""Readers and writers for every on-disk artifact.

Owned formats (all integers little-endian):

``SGTD0001`` raw labeled tensors
    magic, u32 N, H, W, C, K, then N*H*W*C pixel bytes (N x H x W x C,
    C-order), then N u32 labels.
``FEATMTX1`` / ``PROBMTX1`` dense matrices
    magic, u32 rows, u32 cols, u8 dtype (0 = f32, 1 = f64), row-major payload.

Readers compare header-implied sizes with the actual file size *before*
allocating anything for the payload.
"""

import csv
import io
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataTypeError,
    FormatError,
    StructureError,
    TruncatedError,
    UnsupportedFormatError,
    ValidationError,
)

RAW_MAGIC = b"SGTD0001"
FEATURE_MAGIC = b"FEATMTX1"
PROB_MAGIC = b"PROBMTX1"
HDF5_SIGNATURE = b"\x89HDF\r\n\x1a\n"
ROW_SUM_TOL = 1e-6

_RAW_HEADER = struct.Struct("<8s5I")
_MATRIX_HEADER = struct.Struct("<8sIIB")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


@dataclass
class Dataset:
    """Labeled image tensors: ``images`` is N x H x W x C uint8, ``labels`` N ints in [0, K)."""

    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.dtype != np.uint8:
            raise DataTypeError(f"images must be uint8, got {self.images.dtype}")
        if self.images.ndim != 4:
            raise ValidationError(f"images must be 4-D (N, H, W, C), got shape {self.images.shape}")
        n, h, w, c = self.images.shape
        if min(h, w, c) <= 0:
            raise ValidationError(f"H, W, C must be positive, got {(h, w, c)}")
        if self.labels.shape != (n,):
            raise ValidationError(f"expected {n} labels, got shape {self.labels.shape}")
        self.class_count = int(self.class_count)
        if n and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValidationError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return self.images.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.class_count == other.class_count
                and self.images.shape == other.images.shape
                and np.array_equal(self.images, other.images)
                and np.array_equal(self.labels, other.labels))

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.images[index], self.labels[index], self.class_count)


def infer_class_count(labels) -> int:
    labels = np.asarray(labels)
    return int(labels.max()) + 1 if labels.size else 0


# ---------------------------------------------------------------------------
# raw labeled tensors
# ---------------------------------------------------------------------------

def write_raw(path, data: Dataset):
    n, h, w, c = data.images.shape
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, n, h, w, c, data.class_count))
        fh.write(data.images.tobytes(order="C"))
        fh.write(data.labels.astype("<u4").tobytes())


def read_raw(path) -> Dataset:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        head = fh.read(_RAW_HEADER.size)
        if len(head) < _RAW_HEADER.size:
            raise TruncatedError(f"{path}: header truncated ({len(head)} bytes)")
        magic, n, h, w, c, k = _RAW_HEADER.unpack(head)
        if magic != RAW_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {RAW_MAGIC!r}")
        if min(h, w, c) == 0:
            raise FormatError(f"{path}: zero image dimension in header {(h, w, c)}")
        pixels = n * h * w * c
        expected = _RAW_HEADER.size + pixels + 4 * n
        if size < expected:
            raise TruncatedError(f"{path}: header implies {expected} bytes, file has {size}")
        if size > expected:
            raise FormatError(f"{path}: {size - expected} trailing bytes after declared payload")
        images = np.frombuffer(fh.read(pixels), dtype=np.uint8).reshape(n, h, w, c)
        labels = np.frombuffer(fh.read(4 * n), dtype="<u4").astype(np.int64)
    try:
        return Dataset(images.copy(), labels, k)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# dense matrices (features, probabilities)
# ---------------------------------------------------------------------------

def write_matrix(path, values, magic: bytes, dtype="f8"):
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValidationError(f"matrix must be 2-D, got shape {values.shape}")
    code = {"f4": 0, "f8": 1}[np.dtype(dtype).str[1:]]
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(magic, rows, cols, code))
        fh.write(np.ascontiguousarray(values, dtype=_DTYPES[code]).tobytes())


def read_matrix(path, magic: bytes) -> np.ndarray:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        head = fh.read(_MATRIX_HEADER.size)
        if len(head) < _MATRIX_HEADER.size:
            raise TruncatedError(f"{path}: header truncated ({len(head)} bytes)")
        got, rows, cols, code = _MATRIX_HEADER.unpack(head)
        if got != magic:
            raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
        if code not in _DTYPES:
            raise FormatError(f"{path}: unsupported dtype code {code} (0 = f32, 1 = f64)")
        dt = _DTYPES[code]
        expected = _MATRIX_HEADER.size + rows * cols * dt.itemsize
        if size < expected:
            raise TruncatedError(f"{path}: header implies {expected} bytes, file has {size}")
        if size > expected:
            raise FormatError(f"{path}: {size - expected} trailing bytes after declared payload")
        payload = fh.read(rows * cols * dt.itemsize)
    return np.frombuffer(payload, dtype=dt).reshape(rows, cols).astype(dt.newbyteorder("="))


# ---------------------------------------------------------------------------
# probability matrices
# ---------------------------------------------------------------------------

@dataclass
class ProbMatrix:
    """N x K class-posterior rows, each summing to one."""

    rows: np.ndarray

    def __post_init__(self):
        self.rows = validate_probs(self.rows)

    @property
    def shape(self):
        return self.rows.shape


def validate_probs(rows) -> np.ndarray:
    """Check non-negativity and row sums; renormalise rows within tolerance of one."""
    p = np.array(rows, dtype=np.float64)
    if p.ndim != 2:
        raise ValidationError(f"probability matrix must be 2-D, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("probability matrix contains non-finite entries")
    if np.any(p < 0):
        bad = np.argwhere(p < 0)[0]
        raise ValidationError(f"negative probability at row {bad[0]}, column {bad[1]}")
    sums = p.sum(axis=1)
    off = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(off):
        r = int(np.flatnonzero(off)[0])
        raise ValidationError(f"row {r} sums to {sums[r]!r}, outside 1 +/- {ROW_SUM_TOL}")
    if p.shape[0]:
        p /= sums[:, None]
    return p


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def parse_probs_csv(text: str) -> ProbMatrix:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(x.strip() for x in r)]
    if rows and not all(_is_number(x) for x in rows[0]):
        rows = rows[1:]
    if not rows:
        return ProbMatrix(np.empty((0, 0)))
    width = len(rows[0])
    values = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValidationError(f"ragged CSV: row {i} has {len(row)} columns, expected {width}")
        try:
            values.append([float(x) for x in row])
        except ValueError as exc:
            raise ValidationError(f"row {i}: {exc}") from exc
    return ProbMatrix(np.array(values))


def read_probs(path) -> ProbMatrix:
    """CSV (optional header row) or PROBMTX1 binary, detected by magic."""
    with open(path, "rb") as fh:
        head = fh.read(len(PROB_MAGIC))
    if head == PROB_MAGIC:
        return ProbMatrix(read_matrix(path, PROB_MAGIC))
    with open(path, encoding="utf-8") as fh:
        return parse_probs_csv(fh.read())


def write_probs(path, probs, binary=False):
    rows = probs.rows if isinstance(probs, ProbMatrix) else np.asarray(probs)
    if binary:
        write_matrix(path, rows, PROB_MAGIC)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# label files: one non-negative integer per line
# ---------------------------------------------------------------------------

def read_labels(path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                value = int(line)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not an integer label: {line!r}") from None
            if value < 0:
                raise ValidationError(f"{path}:{lineno}: negative label {value}")
            out.append(value)
    return np.array(out, dtype=np.int64)


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)


# ---------------------------------------------------------------------------
# MATLAB Level-5 subset
# ---------------------------------------------------------------------------

_MI_INT8, _MI_UINT8, _MI_INT16, _MI_UINT16, _MI_INT32, _MI_UINT32 = 1, 2, 3, 4, 5, 6
_MI_SINGLE, _MI_DOUBLE, _MI_INT64, _MI_UINT64 = 7, 9, 12, 13
_MI_MATRIX, _MI_COMPRESSED = 14, 15

_MI_DTYPES = {
    _MI_INT8: "i1", _MI_UINT8: "u1", _MI_INT16: "i2", _MI_UINT16: "u2",
    _MI_INT32: "i4", _MI_UINT32: "u4", _MI_SINGLE: "f4", _MI_DOUBLE: "f8",
    _MI_INT64: "i8", _MI_UINT64: "u8",
}
_MX_UINT8 = 9
_MX_NUMERIC = {
    6: "f8", 7: "f4", 8: "i1", 9: "u1", 10: "i2", 11: "u2",
    12: "i4", 13: "u4", 14: "i8", 15: "u8",
}


@dataclass
class _MatVar:
    name: str
    mx_class: int
    dims: tuple
    mi_type: int
    data: memoryview
    is_complex: bool


class _Level5:
    def __init__(self, buf: memoryview, endian: str, origin: str):
        self.buf = buf
        self.e = endian
        self.origin = origin

    def tag(self, pos, limit):
        if pos + 8 > limit:
            raise TruncatedError(f"{self.origin}: element tag at byte {pos} runs past end")
        first, second = struct.unpack_from(self.e + "II", self.buf, pos)
        if first >> 16:
            # small data element: type and size packed into the first word
            size = first >> 16
            if size > 4:
                raise FormatError(f"{self.origin}: small element at byte {pos} claims {size} bytes")
            return first & 0xFFFF, pos + 4, size, pos + 8, True
        start = pos + 8
        if start + second > limit:
            raise TruncatedError(
                f"{self.origin}: element at byte {pos} declares {second} bytes, "
                f"only {limit - start} remain")
        return first, start, second, start + second, False

    def variables(self):
        pos, end = 128, len(self.buf)
        while pos < end:
            if end - pos < 8 and not any(self.buf[pos:end]):
                break
            mi, start, size, nxt, _ = self.tag(pos, end)
            if mi == _MI_COMPRESSED:
                try:
                    raw = zlib.decompress(self.buf[start:start + size])
                except zlib.error as exc:
                    raise FormatError(f"{self.origin}: corrupt compressed element at byte {pos}: {exc}") from exc
                inner = _Level5(memoryview(raw), self.e, self.origin)
                imi, istart, isize, _, _ = inner.tag(0, len(raw))
                if imi == _MI_MATRIX:
                    yield inner.matrix(istart, istart + isize)
            elif mi == _MI_MATRIX:
                yield self.matrix(start, start + size)
            pos = nxt

    def matrix(self, pos, end):
        parts = []
        while pos < end and len(parts) < 5:
            mi, start, size, nxt, small = self.tag(pos, end)
            parts.append((mi, start, size))
            # sub-elements are padded to 8-byte boundaries
            pos = nxt if small else min(end, nxt + (-size % 8))
        if len(parts) < 3:
            raise StructureError(f"{self.origin}: matrix element with only {len(parts)} sub-elements")
        (_, fstart, fsize), (dmi, dstart, dsize), (_, nstart, nsize) = parts[:3]
        flags = struct.unpack_from(self.e + "I", self.buf, fstart)[0]
        mx_class = flags & 0xFF
        is_complex = bool(flags & 0x800)
        if dmi != _MI_INT32 or dsize % 4:
            raise StructureError(f"{self.origin}: malformed dimensions sub-element")
        dims = struct.unpack_from(f"{self.e}{dsize // 4}i", self.buf, dstart)
        name = bytes(self.buf[nstart:nstart + nsize]).decode("ascii", "replace")
        if mx_class in _MX_NUMERIC and len(parts) >= 4:
            rmi, rstart, rsize = parts[3]
            data = self.buf[rstart:rstart + rsize]
        else:
            rmi, data = 0, memoryview(b"")
        return _MatVar(name, mx_class, tuple(dims), rmi, data, is_complex)


def _numeric(var: _MatVar, e: str, origin: str) -> np.ndarray:
    if var.mx_class not in _MX_NUMERIC:
        raise DataTypeError(f"{origin}: variable {var.name!r} has non-numeric MATLAB class {var.mx_class}")
    if var.is_complex:
        raise DataTypeError(f"{origin}: variable {var.name!r} is complex")
    if var.mi_type not in _MI_DTYPES:
        raise DataTypeError(f"{origin}: variable {var.name!r} stored with unsupported type {var.mi_type}")
    stored = np.dtype(e + _MI_DTYPES[var.mi_type])
    count = int(np.prod(var.dims, dtype=np.int64))
    if len(var.data) != count * stored.itemsize:
        raise StructureError(
            f"{origin}: variable {var.name!r} has dims {var.dims} but {len(var.data)} data bytes")
    arr = np.frombuffer(var.data, dtype=stored, count=count)
    return arr.reshape(var.dims, order="F")


def detect_mat_variant(head: bytes) -> str:
    """Classify the first bytes of a ``.mat`` file: 'level5', 'hdf5', or 'unknown'."""
    if head[:8] == HDF5_SIGNATURE or head[512:520] == HDF5_SIGNATURE:
        return "hdf5"
    if len(head) >= 128:
        if head[:10] == b"MATLAB 7.3" or head[124:126] in (b"\x00\x02", b"\x02\x00"):
            return "hdf5"
        if head[126:128] in (b"IM", b"MI"):
            return "level5"
    return "unknown"


def read_svhn_mat(path, remap_label_ten=False, class_count=None) -> Dataset:
    """Read an SVHN-style ``.mat`` file (``X``: H x W x C x N uint8, ``y``: N x 1).

    With ``remap_label_ten`` the SVHN convention "10 means digit 0" is applied.
    ``class_count`` defaults to ``max(label) + 1``.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    variant = detect_mat_variant(raw[:520])
    if variant == "hdf5":
        raise UnsupportedFormatError(
            f"{path}: HDF5-based MATLAB v7.3 container is not supported; "
            "re-save with -v7 or convert with write_raw")
    if variant != "level5":
        raise FormatError(f"{path}: not a MATLAB Level-5 file")
    endian = "<" if raw[126:128] == b"IM" else ">"
    reader = _Level5(memoryview(raw), endian, str(path))
    found = {}
    for var in reader.variables():
        if var.name in ("X", "y"):
            found[var.name] = var
    missing = [v for v in ("X", "y") if v not in found]
    if missing:
        raise StructureError(f"{path}: missing variable(s) {', '.join(missing)}")
    xv = found["X"]
    if xv.mx_class != _MX_UINT8:
        raise DataTypeError(f"{path}: X must be uint8, MATLAB class code is {xv.mx_class}")
    if len(xv.dims) != 4:
        raise StructureError(f"{path}: X must be 4-D (H x W x C x N), got dims {xv.dims}")
    x = _numeric(xv, endian, str(path))
    y = _numeric(found["y"], endian, str(path)).ravel(order="F")
    images = np.ascontiguousarray(np.transpose(x, (3, 0, 1, 2)), dtype=np.uint8)
    if y.shape[0] != images.shape[0]:
        raise StructureError(f"{path}: X holds {images.shape[0]} samples but y has {y.shape[0]}")
    if y.size and (not np.all(np.isfinite(y)) or np.any(y != np.round(y)) or y.min() < 0):
        raise ValidationError(f"{path}: labels must be non-negative integers")
    labels = y.astype(np.int64)
    if remap_label_ten:
        labels[labels == 10] = 0
    k = infer_class_count(labels) if class_count is None else int(class_count)
    return Dataset(images, labels, k)
