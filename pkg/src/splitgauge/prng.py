"""Counter-based random streams shared by every seeded operation.

A stream is addressed by ``(seed, domain)``; word ``i`` of the stream is

    mix64(stream_word + (i + 1) * 0x9E3779B97F4A7C15)      (mod 2**64)

where ``mix64`` is the SplitMix64 finaliser and

    stream_word = mix64(mix64(seed + 0x9E3779B97F4A7C15) ^ fnv1a64(domain)).

Because any word can be computed directly from its index, streams can be cut
into chunks and evaluated in any order without changing the output.  Integer
outputs are bit-identical on every platform.  Floating-point transforms
(``uniform``, ``gauss``) go through numpy's ``log``/``cos``/``sqrt``.

Bounded integers use Lemire's multiply-shift on the top 32 bits of a word,
rejecting the biased low region; attempt ``a`` of draw ``i`` reads word
``counter + i + a * 2**40``.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _accel

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_M64 = (1 << 64) - 1
MAX_BOUND = 1 << 32


def _mix64(z):
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _M64
    return h


@dataclass(frozen=True)
class StreamKey:
    seed: int
    domain: str
    counter: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _M64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        if not 0 <= self.counter <= _M64:
            raise ValueError(f"counter out of range: {self.counter}")

    @property
    def word(self) -> int:
        return _mix64(_mix64(self.seed + 0x9E3779B97F4A7C15) ^ fnv1a64(self.domain.encode("utf-8")))

    def advance(self, n: int) -> "StreamKey":
        return replace(self, counter=self.counter + n)

    def child(self, suffix: str) -> "StreamKey":
        """Independent stream for a sub-task, e.g. one class of a remix."""
        return StreamKey(self.seed, f"{self.domain}/{suffix}")


def key(seed: int, domain: str) -> StreamKey:
    return StreamKey(int(seed), domain)


def u64_block(k: StreamKey, count: int) -> np.ndarray:
    """Words ``k.counter .. k.counter + count - 1`` as ``uint64``."""
    return _accel.splitmix_block(k.word, k.counter, int(count))


def next_u64(k: StreamKey) -> int:
    """The word at ``k.counter``."""
    return _mix64(k.word + (k.counter + 1) * 0x9E3779B97F4A7C15)


def uniform(k: StreamKey, count: int) -> np.ndarray:
    """Doubles in ``[0, 1)`` built from the top 53 bits of each word."""
    return (u64_block(k, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def gauss(k: StreamKey, count: int) -> np.ndarray:
    """Standard normals by Box-Muller (cosine branch only).

    Variate ``i`` consumes words ``2i`` and ``2i + 1``; the first is mapped to
    ``(0, 1]`` so the log is always finite.
    """
    words = u64_block(k, 2 * count).reshape(count, 2) >> np.uint64(11)
    u1 = (words[:, 0].astype(np.float64) + 1.0) * 2.0**-53
    u2 = words[:, 1].astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def bounded(k: StreamKey, bounds) -> np.ndarray:
    """One unbiased integer in ``[0, bounds[i])`` per entry of ``bounds``."""
    bounds = np.asarray(bounds, dtype=np.int64)
    if bounds.size and (bounds.min() < 1 or bounds.max() > MAX_BOUND):
        raise ValueError("bounds must lie in [1, 2**32]")
    return _accel.bounded_draws(k.word, k.counter, bounds.astype(np.uint64))


def shuffle(k: StreamKey, items):
    """Fisher-Yates (Durstenfeld) shuffle; returns a new array, input untouched.

    Step ``t`` swaps slot ``n - 1 - t`` with a slot drawn uniformly from
    ``[0, n - t)`` using draw ``t`` of the stream.
    """
    arr = np.array(items, copy=True)
    n = arr.shape[0] if arr.ndim else 0
    if n < 2:
        return arr
    return arr[permutation(k, n)]


def permutation(k: StreamKey, n: int) -> np.ndarray:
    """``shuffle(k, range(n))`` as an index array."""
    perm = np.arange(n, dtype=np.int64)
    if n < 2:
        return perm
    draws = bounded(k, np.arange(n, 1, -1, dtype=np.int64))
    _accel.shuffle_swaps(perm, draws)
    return perm


def sample_without_replacement(k: StreamKey, n: int, m: int) -> np.ndarray:
    """``m`` distinct indices from ``range(n)``, in draw order.

    A forward partial Fisher-Yates: draw ``t`` picks uniformly among the
    ``n - t`` slots not yet taken.  Any prefix of the result is itself a
    uniform sample without replacement, which is what lets callers carve
    disjoint subsets from one draw.
    """
    if m < 0 or n < 0:
        raise ValueError("n and m must be non-negative")
    if m > n:
        raise ValueError(f"cannot sample {m} items without replacement from {n}")
    if m == 0:
        return np.empty(0, dtype=np.int64)
    draws = bounded(k, np.arange(n, n - m, -1, dtype=np.int64))
    return _accel.partial_swaps(n, draws)
