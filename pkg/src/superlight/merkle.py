"""Binary Merkle trees with side-annotated proofs, plus the two-layer block tree
(an outer tree over per-address bucket leaves, each leaf committing to an inner
tree over that bucket's transaction ids).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .codec import Writer
from .crypto import hash256

TAG_NODE = b"\x01"
TAG_BUCKET_LEAF = b"\x02"

MAX_PATH_LEN = 64


class Side(Enum):
    LEFT = 0
    RIGHT = 1


@dataclass(frozen=True)
class MerklePath:
    """Siblings from the leaf upwards. ``side`` is where the sibling sits."""

    steps: tuple[tuple[bytes, Side], ...] = ()

    def __post_init__(self) -> None:
        if len(self.steps) > MAX_PATH_LEN:
            raise ValueError("Merkle path too long")

    def __len__(self) -> int:
        return len(self.steps)


def hash_node(left: bytes, right: bytes) -> bytes:
    return hash256(TAG_NODE + left + right)


def _levels(leaves: Sequence[bytes]) -> list[list[bytes]]:
    if not leaves:
        raise ValueError("Merkle tree needs at least one leaf")
    level = list(leaves)
    levels = [level]
    while len(level) > 1:
        if len(level) % 2:
            level = level + [level[-1]]
            levels[-1] = level
        level = [hash_node(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        levels.append(level)
    return levels


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    """Root over already-hashed leaves. A single leaf is its own root; an odd
    node at any level is paired with itself."""
    return _levels(leaves)[-1][0]


def merkle_prove(leaves: Sequence[bytes], index: int) -> MerklePath:
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range")
    steps = []
    for level in _levels(leaves)[:-1]:
        if index % 2:
            steps.append((level[index - 1], Side.LEFT))
        else:
            steps.append((level[index + 1], Side.RIGHT))
        index //= 2
    return MerklePath(tuple(steps))


def merkle_fold(leaf: bytes, path: MerklePath) -> bytes:
    h = leaf
    for sibling, side in path.steps:
        h = hash_node(sibling, h) if side is Side.LEFT else hash_node(h, sibling)
    return h


def merkle_verify(leaf: bytes, path: MerklePath, root: bytes) -> bool:
    return merkle_fold(leaf, path) == root


@dataclass(frozen=True)
class BucketLeaf:
    address_index: int
    relative_balance: int
    bucket_root: bytes


def bucket_leaf_digest(leaf: BucketLeaf) -> bytes:
    w = Writer().u32(leaf.address_index).i128(leaf.relative_balance).raw(leaf.bucket_root)
    return hash256(TAG_BUCKET_LEAF + w.getvalue())


def block_top_root(buckets: Sequence[BucketLeaf]) -> bytes:
    """Outer root over bucket leaves, which must be strictly ascending by index."""
    for prev, cur in zip(buckets, buckets[1:]):
        if cur.address_index <= prev.address_index:
            raise ValueError("bucket leaves must be strictly ascending by address index")
    return merkle_root([bucket_leaf_digest(b) for b in buckets])
