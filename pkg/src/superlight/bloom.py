"""Bloom filters with double hashing, and perfect Bloom filters: filters sized
so that no address of a known registry is a false positive.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Collection, Iterable, Sequence

import numpy as np

from .crypto import hash256

TAG_BLOOM_H1 = b"\x05"
TAG_BLOOM_H2 = b"\x06"

DEFAULT_K = 3
SEARCH_START = 64
SCAN_BRACKET = 1024


@dataclass(frozen=True)
class BloomFilter:
    """``bits`` is an int bitmask: index i is set iff ``bits >> i & 1``."""

    bit_len: int
    k: int = DEFAULT_K
    bits: int = 0

    def __post_init__(self) -> None:
        if self.bit_len < 1 or self.k < 1:
            raise ValueError("bit_len and k must be positive")
        if self.bits < 0 or self.bits >> self.bit_len:
            raise ValueError("bits outside the filter")

    @classmethod
    def empty(cls, bit_len: int, k: int = DEFAULT_K) -> "BloomFilter":
        return cls(bit_len, k, 0)

    @classmethod
    def all_ones(cls, bit_len: int, k: int = DEFAULT_K) -> "BloomFilter":
        return cls(bit_len, k, (1 << bit_len) - 1)

    def popcount(self) -> int:
        return bin(self.bits).count("1")

    def to_bytes(self) -> bytes:
        """Bit array packed LSB-first."""
        return self.bits.to_bytes((self.bit_len + 7) // 8, "little")


@lru_cache(maxsize=1 << 16)
def _digests(addr: bytes) -> tuple[int, int]:
    h1 = int.from_bytes(hash256(TAG_BLOOM_H1 + addr)[:8], "little")
    h2 = int.from_bytes(hash256(TAG_BLOOM_H2 + addr)[:8], "little")
    return h1, h2


def bloom_indices(addr: bytes, bit_len: int, k: int) -> list[int]:
    """idx_i = (h1 + i*h2) mod bit_len for i in 0..k-1."""
    if bit_len < 1 or k < 1:
        raise ValueError("bit_len and k must be positive")
    h1, h2 = _digests(addr)
    return [(h1 + i * h2) % bit_len for i in range(k)]


def bloom_insert(f: BloomFilter, addr: bytes) -> BloomFilter:
    bits = f.bits
    for idx in bloom_indices(addr, f.bit_len, f.k):
        bits |= 1 << idx
    return BloomFilter(f.bit_len, f.k, bits)


def bloom_query(f: BloomFilter, addr: bytes) -> bool:
    return all(f.bits >> idx & 1 for idx in bloom_indices(addr, f.bit_len, f.k))


def bloom_from(addrs: Iterable[bytes], bit_len: int, k: int = DEFAULT_K) -> BloomFilter:
    f = BloomFilter.empty(bit_len, k)
    for addr in addrs:
        f = bloom_insert(f, addr)
    return f


class _FeasibilityCheck:
    """Vectorised perfectness test for one (participants, others) split."""

    def __init__(self, members: Sequence[bytes], others: Sequence[bytes], k: int) -> None:
        self.k = k
        self.m1, self.m2 = self._split(members)
        self.o1, self.o2 = self._split(others)
        self.tested: list[int] = []

    @staticmethod
    def _split(addrs: Sequence[bytes]) -> tuple[np.ndarray, np.ndarray]:
        pairs = [_digests(a) for a in addrs]
        h1 = np.array([p[0] for p in pairs], dtype=np.uint64)
        h2 = np.array([p[1] for p in pairs], dtype=np.uint64)
        return h1, h2

    def _indices(self, h1: np.ndarray, h2: np.ndarray, s: int) -> np.ndarray:
        # reduce first so every intermediate fits comfortably in int64
        a = (h1 % np.uint64(s)).astype(np.int64)
        b = (h2 % np.uint64(s)).astype(np.int64)
        i = np.arange(self.k, dtype=np.int64)
        return (a[:, None] + i[None, :] * b[:, None]) % s

    def __call__(self, s: int) -> bool:
        self.tested.append(s)
        if len(self.o1) == 0:
            return True
        bitmap = np.zeros(s, dtype=bool)
        bitmap[self._indices(self.m1, self.m2, s).ravel()] = True
        hits = bitmap[self._indices(self.o1, self.o2, s)].all(axis=1)
        return not hits.any()


def find_perfect_size(check, schedule: str = "linear", start: int = SEARCH_START, scan_bracket: int = SCAN_BRACKET) -> int:
    """Smallest size accepted by ``check`` under the given search schedule.

    ``linear`` tries 1, 2, 3, ... and so returns the true minimum.
    ``doubling`` doubles from ``start`` until ``check`` passes, bisects the
    bracket (last failure, first success] while it is wider than
    ``scan_bracket`` and scans what is left. Feasibility is not monotone in
    the size, so ``doubling`` can miss small feasible sizes below the bracket;
    it never returns more than the first success it sees.
    """
    if schedule == "linear":
        s = 1
        while not check(s):
            s += 1
        return s
    if schedule != "doubling":
        raise ValueError(f"unknown search schedule {schedule!r}")
    lo, hi = 0, start
    while not check(hi):
        lo, hi = hi, hi * 2
    while hi - lo > scan_bracket:
        mid = (lo + hi) // 2
        if check(mid):
            hi = mid
        else:
            lo = mid
    for s in range(lo + 1, hi):
        if check(s):
            return s
    return hi


def build_perfect_bloom(
    participants: Collection[bytes],
    registry: Sequence[bytes],
    k: int = DEFAULT_K,
    schedule: str = "linear",
) -> BloomFilter:
    """Filter that is true for every participant and false for every other
    registry address."""
    if not registry:
        raise ValueError("registry is empty")
    members = set(participants)
    known = set(registry)
    if not members <= known:
        raise ValueError("participants must be registered addresses")
    if not members:
        return BloomFilter.empty(1, k)
    ordered = [a for a in registry if a in members]
    others = [a for a in registry if a not in members]
    size = find_perfect_size(_FeasibilityCheck(ordered, others, k), schedule)
    return bloom_from(ordered, size, k)


@dataclass(frozen=True)
class GrowthRecord:
    n: int
    m: int
    k: int
    perfect_bits: int

    @property
    def baseline_bits(self) -> int:
        return 256 * self.m


def growth_addresses(n: int, seed: int) -> list[bytes]:
    rng = random.Random(seed)
    return [rng.randbytes(32) for _ in range(n)]


def growth_experiment(
    n: int, m_values: Iterable[int], k: int = DEFAULT_K, seed: int = 0, schedule: str = "linear"
) -> list[GrowthRecord]:
    """Perfect filter size for the first ``m`` of ``n`` seeded addresses."""
    addrs = growth_addresses(n, seed)
    records = []
    for m in m_values:
        if not 0 <= m <= n:
            raise ValueError(f"m={m} outside 0..{n}")
        f = build_perfect_bloom(addrs[:m], addrs, k, schedule)
        records.append(GrowthRecord(n, m, k, f.bit_len))
    return records


def growth_csv(records: Iterable[GrowthRecord]) -> str:
    lines = ["n,m,k,perfect_bits,baseline_bits"]
    lines += [f"{r.n},{r.m},{r.k},{r.perfect_bits},{r.baseline_bits}" for r in records]
    return "\n".join(lines) + "\n"
