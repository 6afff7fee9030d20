"""Chain data model: transactions, per-address buckets, block headers in both
header modes, the address registry, genesis, canonical encodings and header
validation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

from .bloom import BloomFilter, bloom_query
from .codec import Reader, Writer
from .crypto import (
    PUBKEY_LEN,
    SIG_LEN,
    DecodeError,
    PublicKey,
    SecretKey,
    Signature,
    SignTriple,
    bls_aggregate,
    bls_aggregate_verify,
    bls_sign,
    hash256,
    keygen,
)
from .merkle import BucketLeaf, MerklePath, Side, block_top_root, merkle_root

TAG_TX_ID = b"\x03"
TAG_ADDRESS = b"\x04"
TAG_HEADER_BODY = b"\x07"

# one-byte domain tags prefixed to every signed message
SIGN_TX = b"\x10"
SIGN_ROOT = b"\x11"
SIGN_PROPOSER = b"\x12"

ZERO_HASH = bytes(32)
MAX_AMOUNT = 2**64 - 1

HASH_LIST = "hash_list"
MERKLE_ROOT = "merkle_root"
HEADER_MODES = (HASH_LIST, MERKLE_ROOT)
_MODE_BYTE = {HASH_LIST: 0, MERKLE_ROOT: 1}

MINT_INDEX = 0
MINT_SECRET, MINT_KEY = keygen(hash256(b"superlight/mint"))


def address_of(pk: PublicKey) -> bytes:
    return hash256(TAG_ADDRESS + pk.data)


MINT_ADDRESS = address_of(MINT_KEY)


# -- transactions -----------------------------------------------------------

TX_CORE_LEN = 32 + 32 + 8 + 8 + 8


@dataclass(frozen=True)
class TxCore:
    sender: bytes
    receiver: bytes
    amount: int
    fee: int
    nonce: int

    def __post_init__(self) -> None:
        if len(self.sender) != 32 or len(self.receiver) != 32:
            raise ValueError("addresses are 32 bytes")
        if self.sender == self.receiver:
            raise ValueError("sender and receiver must differ")
        if not 1 <= self.amount <= MAX_AMOUNT:
            raise ValueError("amount must be a positive 64-bit value")
        if not 0 <= self.fee <= MAX_AMOUNT or not 0 <= self.nonce <= MAX_AMOUNT:
            raise ValueError("fee and nonce are unsigned 64-bit values")

    def encode(self) -> bytes:
        return (
            Writer().raw(self.sender).raw(self.receiver).u64(self.amount).u64(self.fee).u64(self.nonce).getvalue()
        )

    @classmethod
    def read(cls, r: Reader) -> "TxCore":
        try:
            return cls(r.raw(32), r.raw(32), r.u64(), r.u64(), r.u64())
        except ValueError as exc:
            if isinstance(exc, DecodeError):
                raise
            raise DecodeError(f"invalid transaction: {exc}") from None

    @cached_property
    def id(self) -> bytes:
        return hash256(TAG_TX_ID + self.encode())

    def involves(self, addr: bytes) -> bool:
        return addr == self.sender or addr == self.receiver


def tx_id(core: TxCore) -> bytes:
    return core.id


def tx_message(txid: bytes) -> bytes:
    return SIGN_TX + txid


def root_message(root: bytes) -> bytes:
    return SIGN_ROOT + root


def relative_balance(txs: Iterable[TxCore], addr: bytes) -> int:
    """Net change for ``addr``: +amount per receipt, -(amount + fee) per send."""
    total = 0
    for tx in txs:
        if tx.receiver == addr:
            total += tx.amount
        elif tx.sender == addr:
            total -= tx.amount + tx.fee
        else:
            raise ValueError("transaction does not involve the address")
    return total


# -- self-contained proofs (data only; construction and checking live in scp) --


@dataclass(frozen=True)
class ProofUnit:
    height: int
    bucket_txs: tuple[TxCore, ...]
    merkle_path: MerklePath = MerklePath()


@dataclass(frozen=True)
class SelfContainedProof:
    units: tuple[ProofUnit, ...] = ()

    def heights(self) -> list[int]:
        return [u.height for u in self.units]


def write_proof(w: Writer, proof: SelfContainedProof) -> None:
    w.varint(len(proof.units))
    for unit in proof.units:
        w.u64(unit.height).varint(len(unit.bucket_txs))
        for tx in unit.bucket_txs:
            w.raw(tx.encode())
        w.varint(len(unit.merkle_path.steps))
        for sibling, side in unit.merkle_path.steps:
            w.u8(side.value).raw(sibling)


def read_proof(r: Reader) -> SelfContainedProof:
    units = []
    for _ in range(r.varint()):
        height = r.u64()
        txs = tuple(TxCore.read(r) for _ in range(r.varint()))
        n_steps = r.varint()
        if n_steps > 64:
            raise DecodeError("Merkle path too long")
        steps = []
        for _ in range(n_steps):
            side = r.u8()
            if side > 1:
                raise DecodeError("invalid path side")
            steps.append((r.raw(32), Side(side)))
        units.append(ProofUnit(height, txs, MerklePath(tuple(steps))))
    return SelfContainedProof(tuple(units))


def encode_proof(proof: SelfContainedProof) -> bytes:
    w = Writer()
    write_proof(w, proof)
    return w.getvalue()


def decode_proof(data: bytes) -> SelfContainedProof:
    r = Reader(data)
    proof = read_proof(r)
    r.finish()
    return proof


@dataclass(frozen=True)
class Transaction:
    """A transfer as submitted to miners. ``receiver_key`` is only carried when
    the receiver is not registered yet, so the miner can register it."""

    core: TxCore
    sender_sig: Signature
    receiver_sig: Signature | None
    proof: SelfContainedProof
    receiver_key: PublicKey | None = None

    @property
    def id(self) -> bytes:
        return self.core.id


def encode_transaction(tx: Transaction) -> bytes:
    w = Writer().raw(tx.core.encode()).raw(tx.sender_sig.data)
    if tx.receiver_sig is None:
        w.u8(0)
    else:
        w.u8(1).raw(tx.receiver_sig.data)
    if tx.receiver_key is None:
        w.u8(0)
    else:
        w.u8(1).raw(tx.receiver_key.data)
    write_proof(w, tx.proof)
    return w.getvalue()


def decode_transaction(data: bytes) -> Transaction:
    r = Reader(data)
    core = TxCore.read(r)
    sender_sig = Signature.from_bytes(r.raw(SIG_LEN))
    receiver_sig = _read_optional(r, lambda: Signature.from_bytes(r.raw(SIG_LEN)))
    receiver_key = _read_optional(r, lambda: PublicKey.from_bytes(r.raw(PUBKEY_LEN)))
    proof = read_proof(r)
    r.finish()
    return Transaction(core, sender_sig, receiver_sig, proof, receiver_key)


def _read_optional(r: Reader, read):
    flag = r.u8()
    if flag > 1:
        raise DecodeError("invalid presence flag")
    return read() if flag else None


# -- registry ---------------------------------------------------------------


class AddressRegistry:
    """Append-only list of public keys in first-appearance order."""

    def __init__(self, keys: Iterable[PublicKey] = ()) -> None:
        self._keys: list[PublicKey] = []
        self._addrs: list[bytes] = []
        self._index: dict[bytes, int] = {}
        for pk in keys:
            self.append(pk)

    def append(self, pk: PublicKey) -> int:
        addr = address_of(pk)
        if addr in self._index:
            raise ValueError("address already registered")
        self._index[addr] = len(self._keys)
        self._keys.append(pk)
        self._addrs.append(addr)
        return self._index[addr]

    def extended(self, keys: Iterable[PublicKey]) -> "AddressRegistry":
        out = AddressRegistry()
        out._keys = list(self._keys)
        out._addrs = list(self._addrs)
        out._index = dict(self._index)
        for pk in keys:
            out.append(pk)
        return out

    def prefix(self, n: int) -> "AddressRegistry":
        return AddressRegistry(self._keys[:n])

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, addr: bytes) -> bool:
        return addr in self._index

    def index_of(self, addr: bytes) -> int:
        return self._index[addr]

    def get_index(self, addr: bytes) -> int | None:
        return self._index.get(addr)

    def key(self, index: int) -> PublicKey:
        return self._keys[index]

    def key_of(self, addr: bytes) -> PublicKey:
        return self._keys[self._index[addr]]

    def address(self, index: int) -> bytes:
        return self._addrs[index]

    @property
    def addresses(self) -> list[bytes]:
        return list(self._addrs)

    @property
    def keys(self) -> list[PublicKey]:
        return list(self._keys)


# -- buckets and commitments ------------------------------------------------


@dataclass(frozen=True)
class TxBucket:
    address_index: int
    address: bytes
    txs: tuple[TxCore, ...]
    relative_balance: int
    bucket_root: bytes

    @property
    def tx_ids(self) -> tuple[bytes, ...]:
        return tuple(tx.id for tx in self.txs)

    def commitment(self) -> "BucketCommitment":
        return BucketCommitment(self.address_index, self.relative_balance, self.tx_ids)

    def leaf(self) -> BucketLeaf:
        return BucketLeaf(self.address_index, self.relative_balance, self.bucket_root)


def make_bucket(address_index: int, addr: bytes, txs: Iterable[TxCore]) -> TxBucket:
    ordered = tuple(sorted(txs, key=lambda tx: tx.id))
    if not ordered:
        raise ValueError("a bucket needs at least one transaction")
    return TxBucket(
        address_index,
        addr,
        ordered,
        relative_balance(ordered, addr),
        merkle_root([tx.id for tx in ordered]),
    )


def build_buckets(txs: Sequence[TxCore], registry: AddressRegistry) -> list[TxBucket]:
    """One bucket per address appearing as sender or receiver, sorted by
    registry index. Every transaction lands in exactly two buckets."""
    by_addr: dict[bytes, list[TxCore]] = {}
    for tx in txs:
        by_addr.setdefault(tx.sender, []).append(tx)
        by_addr.setdefault(tx.receiver, []).append(tx)
    buckets = [make_bucket(registry.index_of(a), a, group) for a, group in by_addr.items()]
    return sorted(buckets, key=lambda b: b.address_index)


@dataclass(frozen=True)
class BucketCommitment:
    address_index: int
    relative_balance: int
    tx_ids: tuple[bytes, ...]


@dataclass(frozen=True)
class HashList:
    buckets: tuple[BucketCommitment, ...] = ()

    mode = HASH_LIST


@dataclass(frozen=True)
class MerkleRoot:
    top_root: bytes = ZERO_HASH

    mode = MERKLE_ROOT


Commitment = Union[HashList, MerkleRoot]


def commitment_for(mode: str, buckets: Sequence[TxBucket]) -> Commitment:
    if mode == HASH_LIST:
        return HashList(tuple(b.commitment() for b in buckets))
    if mode == MERKLE_ROOT:
        return MerkleRoot(block_top_root([b.leaf() for b in buckets]) if buckets else ZERO_HASH)
    raise ValueError(f"unknown header mode {mode!r}")


# -- headers ----------------------------------------------------------------


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: bytes
    new_addresses: tuple[PublicKey, ...]
    bloom: BloomFilter
    commitment: Commitment
    agg_sig: Signature
    proposer_index: int

    @property
    def mode(self) -> str:
        return self.commitment.mode


def _write_body(w: Writer, h: BlockHeader) -> None:
    w.u64(h.height).raw(h.prev_hash)
    w.varint(len(h.new_addresses))
    for pk in h.new_addresses:
        w.raw(pk.data)
    w.u8(h.bloom.k).varint(h.bloom.bit_len).raw(h.bloom.to_bytes())
    w.u8(_MODE_BYTE[h.mode])
    if isinstance(h.commitment, HashList):
        w.varint(len(h.commitment.buckets))
        for b in h.commitment.buckets:
            w.u32(b.address_index).i128(b.relative_balance).varint(len(b.tx_ids))
            for tid in b.tx_ids:
                w.raw(tid)
    else:
        w.raw(h.commitment.top_root)
    w.u32(h.proposer_index)


def header_body(h: BlockHeader) -> bytes:
    """Everything but the aggregate signature."""
    w = Writer()
    _write_body(w, h)
    return w.getvalue()


def body_hash(h: BlockHeader) -> bytes:
    return hash256(TAG_HEADER_BODY + header_body(h))


def proposer_message(h: BlockHeader) -> bytes:
    return SIGN_PROPOSER + body_hash(h)


def encode_header(h: BlockHeader) -> bytes:
    return header_body(h) + h.agg_sig.data


def _strictly_ascending(values: Sequence) -> bool:
    return all(a < b for a, b in zip(values, values[1:]))


def decode_header(data: bytes) -> BlockHeader:
    r = Reader(data)
    height = r.u64()
    prev_hash = r.raw(32)
    new_addresses = tuple(PublicKey.from_bytes(r.raw(PUBKEY_LEN)) for _ in range(r.varint()))
    k = r.u8()
    bit_len = r.varint()
    if k < 1 or bit_len < 1:
        raise DecodeError("Bloom filter needs k >= 1 and bit_len >= 1")
    bits = int.from_bytes(r.raw((bit_len + 7) // 8), "little")
    if bits >> bit_len:
        raise DecodeError("non-zero Bloom padding bits")
    bloom = BloomFilter(bit_len, k, bits)
    mode = r.u8()
    if mode == 0:
        buckets = []
        for _ in range(r.varint()):
            index = r.u32()
            rel = r.i128()
            ids = tuple(r.raw(32) for _ in range(r.varint()))
            if not ids or not _strictly_ascending(ids):
                raise DecodeError("bucket tx ids must be non-empty and strictly ascending")
            buckets.append(BucketCommitment(index, rel, ids))
        if not _strictly_ascending([b.address_index for b in buckets]):
            raise DecodeError("buckets must be strictly ascending by address index")
        commitment: Commitment = HashList(tuple(buckets))
    elif mode == 1:
        commitment = MerkleRoot(r.raw(32))
    else:
        raise DecodeError(f"unknown header mode byte {mode}")
    proposer_index = r.u32()
    agg_sig = Signature.from_bytes(r.raw(SIG_LEN))
    r.finish()
    return BlockHeader(height, prev_hash, new_addresses, bloom, commitment, agg_sig, proposer_index)


def header_hash(h: BlockHeader) -> bytes:
    return hash256(encode_header(h))


# -- params and genesis -----------------------------------------------------


@dataclass(frozen=True)
class ChainParams:
    """Chain-wide parameters. A genesis allocation of 0 registers the key
    without minting to it."""

    header_mode: str = HASH_LIST
    bloom_k: int = 3
    new_address_fee: int = 1
    genesis_allocations: tuple[tuple[PublicKey, int], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.header_mode not in HEADER_MODES:
            raise ValueError(f"unknown header mode {self.header_mode!r}")
        if self.new_address_fee < 0:
            raise ValueError("new_address_fee must be non-negative")
        if not self.genesis_allocations:
            raise ValueError("genesis needs at least one allocation")
        if any(amount < 0 for _, amount in self.genesis_allocations):
            raise ValueError("allocations must be non-negative")


def genesis_transactions(params: ChainParams) -> list[TxCore]:
    return [
        TxCore(MINT_ADDRESS, address_of(pk), amount, 0, nonce)
        for nonce, (pk, amount) in enumerate(params.genesis_allocations)
        if amount > 0
    ]


def seal_header(unsigned: BlockHeader, signatures: Sequence[Signature], proposer_sk: SecretKey) -> BlockHeader:
    """Add the proposer's signature over the body and aggregate everything."""
    proposer_sig = bls_sign(proposer_sk, proposer_message(unsigned))
    agg = bls_aggregate([*signatures, proposer_sig])
    return BlockHeader(
        unsigned.height,
        unsigned.prev_hash,
        unsigned.new_addresses,
        unsigned.bloom,
        unsigned.commitment,
        agg,
        unsigned.proposer_index,
    )


# placeholder used while a header is being assembled; replaced by seal_header
UNSIGNED = Signature(bytes([0xC0]) + bytes(SIG_LEN - 1))


def build_genesis(params: ChainParams, secret_keys: Mapping[bytes, SecretKey]) -> BlockHeader:
    """Genesis block: mint transfers to every funded allocation.

    ``secret_keys`` maps address -> secret key for every funded allocation;
    their endorsements are part of the genesis aggregate.
    """
    from .bloom import build_perfect_bloom

    keys = [MINT_KEY] + [pk for pk, _ in params.genesis_allocations]
    registry = AddressRegistry(keys)
    txs = genesis_transactions(params)
    buckets = build_buckets(txs, registry)
    participants = {b.address for b in buckets}
    bloom = build_perfect_bloom(participants, registry.addresses, params.bloom_k)
    commitment = commitment_for(params.header_mode, buckets)
    unsigned = BlockHeader(0, ZERO_HASH, tuple(keys), bloom, commitment, UNSIGNED, MINT_INDEX)

    sigs = []
    if isinstance(commitment, HashList):
        for tx in txs:
            sigs.append(bls_sign(MINT_SECRET, tx_message(tx.id)))
            sigs.append(bls_sign(secret_keys[tx.receiver], tx_message(tx.id)))
    elif txs:
        msg = root_message(commitment.top_root)
        sigs.append(bls_sign(MINT_SECRET, msg))
        for tx in txs:
            sigs.append(bls_sign(secret_keys[tx.receiver], msg))
    return seal_header(unsigned, sigs, MINT_SECRET)


# -- validation -------------------------------------------------------------


class HeaderError(str, enum.Enum):
    BAD_LINK = "BAD_LINK"  # (a) height / parent hash
    DUPLICATE_ADDRESS = "DUPLICATE_ADDRESS"  # (b)
    BLOOM_MISMATCH = "BLOOM_MISMATCH"  # (c)
    BAD_SIGNATURE = "BAD_SIGNATURE"  # (d)
    BAD_COMMITMENT = "BAD_COMMITMENT"  # (e)
    WRONG_MODE = "WRONG_MODE"
    BAD_PROPOSER = "BAD_PROPOSER"
    MINT_OUTSIDE_GENESIS = "MINT_OUTSIDE_GENESIS"
    UNUSED_NEW_ADDRESS = "UNUSED_NEW_ADDRESS"


class InvalidHeader(Exception):
    def __init__(self, code: HeaderError, detail: str = "") -> None:
        super().__init__(f"{code.value}: {detail}" if detail else code.value)
        self.code = code
        self.detail = detail


def bloom_positive_indices(bloom: BloomFilter, registry: AddressRegistry) -> list[int]:
    return [i for i, addr in enumerate(registry.addresses) if bloom_query(bloom, addr)]


def required_triples(h: BlockHeader, registry: AddressRegistry) -> list[SignTriple]:
    """Every (key, message) the aggregate signature must cover. ``registry``
    must already include the header's new addresses."""
    triples = [SignTriple(registry.key(h.proposer_index), proposer_message(h))]
    if isinstance(h.commitment, HashList):
        for b in h.commitment.buckets:
            pk = registry.key(b.address_index)
            triples += [SignTriple(pk, tx_message(tid)) for tid in b.tx_ids]
    else:
        msg = root_message(h.commitment.top_root)
        triples += [SignTriple(registry.key(i), msg) for i in bloom_positive_indices(h.bloom, registry)]
    return triples


def check_header_signature(h: BlockHeader, registry: AddressRegistry) -> bool:
    try:
        return bls_aggregate_verify(required_triples(h, registry), h.agg_sig)
    except (DecodeError, ValueError, IndexError):
        return False


def validate_header(
    h: BlockHeader,
    registry: AddressRegistry,
    prev: BlockHeader | None,
    params: ChainParams,
) -> AddressRegistry:
    """Check ``h`` against its parent and the registry as of the parent.

    Returns the registry extended by the header's new addresses; raises
    InvalidHeader naming the first failed clause.
    """
    # (a) link
    if prev is None:
        if h.height != 0 or h.prev_hash != ZERO_HASH:
            raise InvalidHeader(HeaderError.BAD_LINK, "genesis must have height 0 and a zero parent")
    elif h.height != prev.height + 1 or h.prev_hash != header_hash(prev):
        raise InvalidHeader(HeaderError.BAD_LINK, f"does not extend height {prev.height}")
    if h.mode != params.header_mode:
        raise InvalidHeader(HeaderError.WRONG_MODE, h.mode)

    # (b) new addresses
    new_addrs = [address_of(pk) for pk in h.new_addresses]
    if len(set(new_addrs)) != len(new_addrs) or any(a in registry for a in new_addrs):
        raise InvalidHeader(HeaderError.DUPLICATE_ADDRESS)
    if prev is None and (len(registry) or not h.new_addresses or h.new_addresses[0] != MINT_KEY):
        raise InvalidHeader(HeaderError.DUPLICATE_ADDRESS, "genesis must register the mint key first")
    ext = registry.extended(h.new_addresses)
    if not 0 <= h.proposer_index < len(ext):
        raise InvalidHeader(HeaderError.BAD_PROPOSER, str(h.proposer_index))

    # (e) commitment structure
    positives = bloom_positive_indices(h.bloom, ext)
    if isinstance(h.commitment, HashList):
        buckets = h.commitment.buckets
        indices = [b.address_index for b in buckets]
        if not _strictly_ascending(indices) or any(i >= len(ext) for i in indices):
            raise InvalidHeader(HeaderError.BAD_COMMITMENT, "bucket indices unsorted or unknown")
        seen: dict[bytes, int] = {}
        for b in buckets:
            if not b.tx_ids or not _strictly_ascending(b.tx_ids):
                raise InvalidHeader(HeaderError.BAD_COMMITMENT, "bucket tx ids empty or unsorted")
            for tid in b.tx_ids:
                seen[tid] = seen.get(tid, 0) + 1
        if any(count != 2 for count in seen.values()):
            raise InvalidHeader(HeaderError.BAD_COMMITMENT, "every tx id must appear in exactly two buckets")
        involved = indices
    else:
        if (h.commitment.top_root == ZERO_HASH) != (not positives):
            raise InvalidHeader(HeaderError.BAD_COMMITMENT, "zero root iff no participants")
        involved = positives

    # (c) Bloom exactness over the registry
    if h.bloom.k != params.bloom_k or positives != list(involved):
        raise InvalidHeader(HeaderError.BLOOM_MISMATCH)
    if prev is not None:
        if MINT_INDEX in positives:
            raise InvalidHeader(HeaderError.MINT_OUTSIDE_GENESIS)
        pos = set(positives)
        if any(i not in pos for i in range(len(registry), len(ext))):
            raise InvalidHeader(HeaderError.UNUSED_NEW_ADDRESS)

    # (d) aggregate signature
    if not check_header_signature(h, ext):
        raise InvalidHeader(HeaderError.BAD_SIGNATURE)
    return ext


def registry_after(headers: Sequence[BlockHeader]) -> AddressRegistry:
    return AddressRegistry(pk for h in headers for pk in h.new_addresses)


def registration_height(addr: bytes, headers: Sequence[BlockHeader]) -> int | None:
    for h in headers:
        if any(address_of(pk) == addr for pk in h.new_addresses):
            return h.height
    return None
