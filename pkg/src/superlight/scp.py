"""Self-contained proofs: building them from a client's own archive and checking
them against block headers alone.

A proof has one unit per block whose Bloom filter is positive for the proving
address, newest first. Each unit carries that address's complete bucket for
the block, so the verifier can recompute the bucket commitment (hash-list
headers) or the bucket leaf and its path to the top root (Merkle-root headers)
and accumulate the address's balance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .bloom import bloom_query
from .ledger import (
    AddressRegistry,
    BlockHeader,
    ChainParams,
    HashList,
    ProofUnit,
    SelfContainedProof,
    Transaction,
    TxCore,
    address_of,
    check_header_signature,
    relative_balance,
)
from .merkle import BucketLeaf, MerklePath, bucket_leaf_digest, merkle_root, merkle_verify

__all__ = [
    "ArchiveEntry",
    "InvalidProof",
    "LostTransaction",
    "MissingProof",
    "ProofError",
    "ProofUnit",
    "ScpVerdict",
    "SelfContainedProof",
    "build_scp",
    "positive_heights",
    "spendable_balance",
    "verify_scp",
]


class ProofError(Exception):
    reason = "InvalidProof"


class MissingProof(ProofError):
    reason = "MissingProof"

    def __init__(self, height: int) -> None:
        super().__init__(f"no proof unit for Bloom-positive height {height}")
        self.height = height


class InvalidProof(ProofError):
    reason = "InvalidProof"


class LostTransaction(Exception):
    """The archive lacks a bucket the chain says exists: funds are unrecoverable."""


@dataclass(frozen=True)
class ArchiveEntry:
    """What a client keeps per Bloom-positive block: its bucket and, in
    Merkle-root mode, the path from the bucket leaf to the top root."""

    txs: tuple[TxCore, ...]
    path: MerklePath = MerklePath()


def positive_heights(addr: bytes, headers: Sequence[BlockHeader]) -> list[int]:
    """Heights whose filter is positive for ``addr``, newest first.

    Filters are only exact over addresses registered at that height, so
    heights before the address's registration are skipped.
    """
    out = []
    registered = False
    for h in headers:
        if not registered and any(address_of(pk) == addr for pk in h.new_addresses):
            registered = True
        if registered and bloom_query(h.bloom, addr):
            out.append(h.height)
    return out[::-1]


def build_scp(addr: bytes, headers: Sequence[BlockHeader], archive: Mapping[int, ArchiveEntry]) -> SelfContainedProof:
    units = []
    for height in positive_heights(addr, headers):
        entry = archive.get(height)
        if entry is None:
            raise LostTransaction(f"unrecoverable: lost transaction at height {height}")
        units.append(ProofUnit(height, tuple(sorted(entry.txs, key=lambda tx: tx.id)), entry.path))
    return SelfContainedProof(tuple(units))


def _check_unit(unit: ProofUnit, addr: bytes, index: int, header: BlockHeader) -> int:
    txs = unit.bucket_txs
    if not txs:
        raise InvalidProof(f"empty unit at height {unit.height}")
    ids = [tx.id for tx in txs]
    if any(a >= b for a, b in zip(ids, ids[1:])):
        raise InvalidProof(f"unit at height {unit.height} not sorted by tx id")
    if not all(tx.involves(addr) for tx in txs):
        raise InvalidProof(f"unit at height {unit.height} has a foreign transaction")
    rel = relative_balance(txs, addr)

    if isinstance(header.commitment, HashList):
        committed = next((b for b in header.commitment.buckets if b.address_index == index), None)
        if committed is None:
            raise InvalidProof(f"no bucket for the address at height {unit.height}")
        if committed.relative_balance != rel or committed.tx_ids != tuple(ids):
            raise InvalidProof(f"bucket mismatch at height {unit.height}")
        if unit.merkle_path.steps:
            raise InvalidProof("hash-list units carry no Merkle path")
    else:
        leaf = bucket_leaf_digest(BucketLeaf(index, rel, merkle_root(ids)))
        if not merkle_verify(leaf, unit.merkle_path, header.commitment.top_root):
            raise InvalidProof(f"Merkle root mismatch at height {unit.height}")
    return rel


def spendable_balance(
    proof: SelfContainedProof,
    addr: bytes,
    headers: Sequence[BlockHeader],
    registry: AddressRegistry,
    check_signatures: bool = True,
) -> int:
    """Walk from the tip to genesis accumulating ``addr``'s balance.

    Raises MissingProof when a Bloom-positive height has no unit and
    InvalidProof when a unit does not match its header. The running total may
    dip below zero mid-walk; only the final value means anything.
    """
    index = registry.get_index(addr)
    if index is None:
        if proof.units:
            raise InvalidProof("unregistered address cannot have proof units")
        return 0
    positive = set(positive_heights(addr, headers))
    balance = 0
    i = 0
    registered_before = [0]
    for h in headers:
        registered_before.append(registered_before[-1] + len(h.new_addresses))
    for header in reversed(headers):
        if header.height not in positive:
            continue
        if i >= len(proof.units) or proof.units[i].height != header.height:
            raise MissingProof(header.height)
        unit = proof.units[i]
        balance += _check_unit(unit, addr, index, header)
        if check_signatures and not check_header_signature(header, registry.prefix(registered_before[header.height + 1])):
            raise InvalidProof(f"aggregate signature invalid at height {header.height}")
        i += 1
    if i != len(proof.units):
        raise InvalidProof("proof has units for heights that are not Bloom-positive")
    return balance


@dataclass(frozen=True)
class ScpVerdict:
    accepted: bool
    balance: int | None = None
    reason: str | None = None
    missing_height: int | None = None


def verify_scp(
    tx: Transaction,
    headers: Sequence[BlockHeader],
    registry: AddressRegistry,
    params: ChainParams | None = None,
    check_signatures: bool = True,
) -> ScpVerdict:
    """Accept iff the proof is complete and the proven balance covers
    amount + fee (the fee already includes any new-address fee)."""
    try:
        balance = spendable_balance(tx.proof, tx.core.sender, headers, registry, check_signatures)
    except MissingProof as exc:
        return ScpVerdict(False, None, exc.reason, exc.height)
    except ProofError as exc:
        return ScpVerdict(False, None, exc.reason)
    if tx.core.amount + tx.core.fee > balance:
        return ScpVerdict(False, balance, "InsufficientFunds")
    return ScpVerdict(True, balance)
