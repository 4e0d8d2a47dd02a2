"""Hot integer kernels, each with a numba and a plain numpy/python implementation.

The numba versions are used when numba imports and ``SPLITGAUGE_NO_JIT`` is not
set to a truthy value.  Both paths are integer-exact, so they return identical
results; ``tests/test_accel.py`` checks that and ``benchmarks/bench_kernels.py``
times them against each other.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None

_FLAG = os.environ.get("SPLITGAUGE_NO_JIT", "").strip().lower()
JIT_ENABLED = numba is not None and _FLAG not in ("1", "true", "yes", "on")

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
ATTEMPT_STRIDE = np.uint64(1 << 40)
_LOW32 = np.uint64(0xFFFFFFFF)
_TWO32 = np.uint64(1 << 32)
_S30, _S27, _S31, _S32 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(32)


# ---------------------------------------------------------------------------
# numpy / python reference paths
# ---------------------------------------------------------------------------

def _mix64_np(z):
    z = (z ^ (z >> _S30)) * MIX1
    z = (z ^ (z >> _S27)) * MIX2
    return z ^ (z >> _S31)


def splitmix_block_py(key, start, count):
    with np.errstate(over="ignore"):
        ctr = np.arange(1, count + 1, dtype=np.uint64) + np.uint64(start)
        return _mix64_np(np.uint64(key) + ctr * GOLDEN)


def _lemire_np(words, bounds):
    x = words >> _S32
    m = x * bounds
    low = m & _LOW32
    thresh = (_TWO32 - bounds) % bounds
    ok = low >= thresh
    return m >> _S32, ok


def bounded_draws_py(key, start, bounds):
    bounds = np.asarray(bounds, dtype=np.uint64)
    n = bounds.shape[0]
    out = np.empty(n, dtype=np.int64)
    pending = np.arange(n, dtype=np.uint64)
    attempt = 0
    with np.errstate(over="ignore"):
        while pending.size:
            ctr = np.uint64(start) + pending + np.uint64(attempt) * ATTEMPT_STRIDE
            words = _mix64_np(np.uint64(key) + (ctr + np.uint64(1)) * GOLDEN)
            vals, ok = _lemire_np(words, bounds[pending.astype(np.int64)])
            idx = pending[ok].astype(np.int64)
            out[idx] = vals[ok].astype(np.int64)
            pending = pending[~ok]
            attempt += 1
    return out


def shuffle_swaps_py(arr, draws):
    n = arr.shape[0]
    # list indexing is much faster than numpy scalar indexing in a python loop
    items = arr.tolist()
    for t in range(n - 1):
        i = n - 1 - t
        j = int(draws[t])
        items[i], items[j] = items[j], items[i]
    arr[:] = items


def partial_swaps_py(n, draws):
    m = draws.shape[0]
    pos = {}
    out = np.empty(m, dtype=np.int64)
    # sparse Fisher-Yates: only touched slots are materialised
    for t in range(m):
        j = t + int(draws[t])
        vt = pos.get(t, t)
        vj = pos.get(j, j)
        out[t] = vj
        pos[j] = vt
    return out


def patch_sums_py(images, grid_h, grid_w):
    n, h, w, c = images.shape
    ph = -(-h // grid_h)
    pw = -(-w // grid_w)
    padded = np.pad(images, ((0, 0), (0, ph * grid_h - h), (0, pw * grid_w - w), (0, 0)),
                    mode="edge")
    blocks = padded.reshape(n, grid_h, ph, grid_w, pw, c).astype(np.int64)
    return blocks.sum(axis=(2, 4))


# ---------------------------------------------------------------------------
# numba paths
# ---------------------------------------------------------------------------

def _mix64_scalar(z):
    z = (z ^ (z >> _S30)) * MIX1
    z = (z ^ (z >> _S27)) * MIX2
    return z ^ (z >> _S31)


def _splitmix_block_loop(key, start, count):
    out = np.empty(count, dtype=np.uint64)
    base = np.uint64(key)
    s = np.uint64(start)
    for i in range(count):
        out[i] = _mix64_nb(base + (s + np.uint64(i) + np.uint64(1)) * GOLDEN)
    return out


def _bounded_draws_loop(key, start, bounds):
    n = bounds.shape[0]
    out = np.empty(n, dtype=np.int64)
    base = np.uint64(key)
    s0 = np.uint64(start)
    for i in range(n):
        b = np.uint64(bounds[i])
        thresh = (_TWO32 - b) % b
        attempt = np.uint64(0)
        while True:
            ctr = s0 + np.uint64(i) + attempt * ATTEMPT_STRIDE
            word = _mix64_nb(base + (ctr + np.uint64(1)) * GOLDEN)
            m = (word >> _S32) * b
            if (m & _LOW32) >= thresh:
                out[i] = np.int64(m >> _S32)
                break
            attempt += np.uint64(1)
    return out


def _shuffle_swaps_loop(arr, draws):
    n = arr.shape[0]
    for t in range(n - 1):
        i = n - 1 - t
        j = draws[t]
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp


def _partial_swaps_loop(n, draws):
    m = draws.shape[0]
    perm = np.arange(n, dtype=np.int64)
    for t in range(m):
        j = t + draws[t]
        tmp = perm[t]
        perm[t] = perm[j]
        perm[j] = tmp
    return perm[:m].copy()


def _patch_sums_loop(images, grid_h, grid_w):
    n, h, w, c = images.shape
    ph = -(-h // grid_h)
    pw = -(-w // grid_w)
    out = np.zeros((n, grid_h, grid_w, c), dtype=np.int64)
    for s in range(n):
        for y in range(ph * grid_h):
            yy = min(y, h - 1)
            gy = y // ph
            for x in range(pw * grid_w):
                xx = min(x, w - 1)
                gx = x // pw
                for ch in range(c):
                    out[s, gy, gx, ch] += images[s, yy, xx, ch]
    return out


if numba is not None:
    _mix64_nb = numba.njit(cache=True, inline="always")(_mix64_scalar)
    splitmix_block_nb = numba.njit(cache=True)(_splitmix_block_loop)
    bounded_draws_nb = numba.njit(cache=True)(_bounded_draws_loop)
    shuffle_swaps_nb = numba.njit(cache=True)(_shuffle_swaps_loop)
    partial_swaps_nb = numba.njit(cache=True)(_partial_swaps_loop)
    patch_sums_nb = numba.njit(cache=True)(_patch_sums_loop)
else:  # pragma: no cover
    splitmix_block_nb = bounded_draws_nb = shuffle_swaps_nb = None
    partial_swaps_nb = patch_sums_nb = None


def splitmix_block(key, start, count):
    """``count`` consecutive 64-bit words of the stream keyed by ``key``."""
    if JIT_ENABLED:
        return splitmix_block_nb(np.uint64(key), np.uint64(start), count)
    return splitmix_block_py(key, start, count)


def bounded_draws(key, start, bounds):
    """Unbiased integers ``out[i]`` in ``[0, bounds[i])``; bounds must be <= 2**32."""
    bounds = np.ascontiguousarray(bounds, dtype=np.uint64)
    if JIT_ENABLED:
        return bounded_draws_nb(np.uint64(key), np.uint64(start), bounds)
    return bounded_draws_py(key, start, bounds)


def shuffle_swaps(arr, draws):
    """Apply Durstenfeld swaps in place; ``draws[t]`` is in ``[0, n - t)``."""
    if JIT_ENABLED:
        shuffle_swaps_nb(arr, draws)
    else:
        shuffle_swaps_py(arr, draws)


def partial_swaps(n, draws):
    """First ``len(draws)`` slots of a forward partial Fisher-Yates over ``range(n)``."""
    if JIT_ENABLED:
        return partial_swaps_nb(n, draws)
    return partial_swaps_py(n, draws)


def patch_sums(images, grid_h, grid_w):
    """Per-channel integer sums over a ``grid_h x grid_w`` grid of edge-padded patches."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if JIT_ENABLED:
        return patch_sums_nb(images, grid_h, grid_w)
    return patch_sums_py(images, grid_h, grid_w)
