"""Counter-based random streams.

A :class:`RandomStream` is a Philox-4x64 key/counter pair.  The 128-bit key is
``(seed, stream_id)`` so streams with different ids are independent by
construction, and the counter makes any position of a stream addressable.
Sub-streams are derived by hashing labels into a fresh stream id, which keeps
sharded runs reproducible for a fixed ``(seed, shards)``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK128 = (1 << 128) - 1


@dataclass(frozen=True)
class RandomStream:
    seed: int
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        for name, value, mask in (
            ("seed", self.seed, _MASK64),
            ("stream_id", self.stream_id, _MASK64),
            ("counter", self.counter, _MASK128),
        ):
            if int(value) != value or value < 0 or value > mask:
                raise ValueError(f"{name} must be an unsigned integer within range, got {value!r}")

    def generator(self) -> np.random.Generator:
        """Fresh numpy Generator positioned at this stream's counter."""
        bits = np.random.Philox(
            key=np.array([self.seed, self.stream_id], dtype=np.uint64),
            counter=np.array(
                [self.counter & _MASK64, self.counter >> 64, 0, 0], dtype=np.uint64
            ),
        )
        return np.random.Generator(bits)

    def substream(self, *labels) -> "RandomStream":
        """Independent child stream identified by ``labels`` (ints or strings)."""
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<QQ", self.seed, self.stream_id))
        for label in labels:
            h.update(b"\x00")
            h.update(str(label).encode("utf-8"))
        (sid,) = struct.unpack("<Q", h.digest())
        return RandomStream(self.seed, sid, 0)

    def shards(self, count: int) -> list["RandomStream"]:
        return [self.substream("shard", i) for i in range(count)]

    def advance(self, blocks: int) -> "RandomStream":
        return RandomStream(self.seed, self.stream_id, (self.counter + blocks) & _MASK128)


def as_stream(rng) -> RandomStream:
    """Accept a RandomStream or an integer seed."""
    if isinstance(rng, RandomStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomStream(int(rng))
    raise TypeError(f"expected RandomStream or int seed, got {type(rng).__name__}")


def split_counts(n: int, shards: int) -> list[int]:
    """Split ``n`` draws into ``shards`` near-equal, deterministic chunks."""
    if shards < 1:
        raise ValueError("shards must be >= 1")
    base, extra = divmod(n, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def run_sharded(
    fn: Callable[[int, RandomStream], object],
    n: int,
    rng: RandomStream,
    shards: int = 1,
    max_workers: int | None = None,
) -> Sequence:
    """Evaluate ``fn(count, stream)`` per shard and return results in shard order.

    Each shard draws from its own sub-stream; the reduction order is the shard
    order regardless of completion order, so results are deterministic.
    """
    counts = split_counts(n, shards)
    streams = rng.shards(shards)
    if shards == 1:
        return [fn(counts[0], streams[0])]
    from concurrent.futures import ThreadPoolExecutor
    import os

    workers = max_workers or min(shards, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, c, s) for c, s in zip(counts, streams)]
        return [f.result() for f in futures]
