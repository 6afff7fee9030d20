"""Light-client and miner state machines.

Clients keep block headers plus their own buckets, create and endorse
transactions, and build self-contained proofs. Miners are clients that also
hold a pool of admitted transactions and assemble blocks. In hash-list mode a
block is published directly from the endorsements already attached to its
transactions; in Merkle-root mode the miner first proposes the fixed
transaction set and waits for every involved address to sign the top root.

The functions here mutate the state they are given and never touch another
node's state; all interaction goes through messages.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .bloom import build_perfect_bloom, bloom_query
from .codec import Reader, Writer
from .crypto import (
    PUBKEY_LEN,
    SIG_LEN,
    DecodeError,
    PublicKey,
    SecretKey,
    Signature,
    SignTriple,
    bls_sign,
    bls_verify,
    public_key,
)
from .ledger import (
    MINT_ADDRESS,
    UNSIGNED,
    AddressRegistry,
    BlockHeader,
    ChainParams,
    MERKLE_ROOT,
    HashList,
    HeaderError,
    InvalidHeader,
    SelfContainedProof,
    Transaction,
    TxBucket,
    TxCore,
    address_of,
    build_buckets,
    commitment_for,
    genesis_transactions,
    header_hash,
    root_message,
    seal_header,
    tx_message,
    validate_header,
)
from .merkle import MerklePath, block_top_root, bucket_leaf_digest, merkle_prove
from .scp import ArchiveEntry, build_scp, spendable_balance, verify_scp

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10


class InsufficientFunds(Exception):
    pass


class EndorsementRefused(Exception):
    pass


# -- client -----------------------------------------------------------------


@dataclass
class ClientState:
    sk: SecretKey
    params: ChainParams
    headers: list[BlockHeader] = field(default_factory=list)
    processed: set[bytes] = field(default_factory=set)
    registry: AddressRegistry = field(default_factory=AddressRegistry)
    archive: dict[int, ArchiveEntry] = field(default_factory=dict)
    nonce_counter: int = 0
    # transactions this client signed (as sender or receiver) and not yet seen on-chain
    known_txs: dict[bytes, TxCore] = field(default_factory=dict)
    # own outgoing transactions not yet seen on-chain
    pending_out: dict[bytes, Transaction] = field(default_factory=dict)
    # Merkle-root mode: root -> (height, own bucket) for proposals this client endorsed
    endorsed: dict[bytes, tuple[int, ArchiveEntry]] = field(default_factory=dict)
    orphans: dict[int, list[BlockHeader]] = field(default_factory=dict)
    rejected: dict[bytes, str] = field(default_factory=dict)
    rejection_log: list[tuple[int, str]] = field(default_factory=list)

    @property
    def pk(self) -> PublicKey:
        return public_key(self.sk)

    @property
    def address(self) -> bytes:
        return address_of(self.pk)

    @property
    def tip(self) -> BlockHeader | None:
        return self.headers[-1] if self.headers else None

    @property
    def height(self) -> int:
        return len(self.headers) - 1

    def proof(self) -> SelfContainedProof:
        return build_scp(self.address, self.headers, self.archive)

    def balance(self) -> int:
        return spendable_balance(self.proof(), self.address, self.headers, self.registry, check_signatures=False)


def client_on_header(state: ClientState, header: BlockHeader) -> bool:
    """Process a received header. Returns True if it should be re-broadcast.

    Already-processed headers are ignored. Invalid headers are logged and
    dropped. Headers from the future are held until their parent arrives.
    """
    hh = header_hash(header)
    if hh in state.processed or hh in state.rejected:
        return False
    if header.height > len(state.headers):
        state.orphans.setdefault(header.height, []).append(header)
        return False
    try:
        if header.height < len(state.headers):
            raise InvalidHeader(HeaderError.BAD_LINK, f"height {header.height} is already taken")
        state.registry = validate_header(header, state.registry, state.tip, state.params)
    except InvalidHeader as exc:
        state.rejected[hh] = exc.code.value
        state.rejection_log.append((header.height, exc.code.value))
        log.debug("rejected header %d: %s", header.height, exc)
        return False
    state.headers.append(header)
    state.processed.add(hh)
    _record_own_bucket(state, header)
    for orphan in state.orphans.pop(header.height + 1, []):
        client_on_header(state, orphan)
    return True


def _record_own_bucket(state: ClientState, header: BlockHeader) -> None:
    addr = state.address
    if addr not in state.registry or not bloom_query(header.bloom, addr):
        return
    if header.height == 0:
        entry = _genesis_entry(state)
    elif isinstance(header.commitment, HashList):
        index = state.registry.index_of(addr)
        bucket = next((b for b in header.commitment.buckets if b.address_index == index), None)
        if bucket is None:
            return  # filter positive before registration cannot happen; defensive
        missing = [tid for tid in bucket.tx_ids if tid not in state.known_txs]
        if missing:
            log.error("lost transaction: header %d references unknown tx ids", header.height)
            return
        entry = ArchiveEntry(tuple(state.known_txs[tid] for tid in bucket.tx_ids))
    else:
        endorsed = state.endorsed.pop(header.commitment.top_root, None)
        if endorsed is None:
            log.error("lost transaction: no endorsed proposal for header %d", header.height)
            return
        entry = endorsed[1]
    state.archive[header.height] = entry
    for tx in entry.txs:
        state.known_txs.pop(tx.id, None)
        state.pending_out.pop(tx.id, None)


def _genesis_entry(state: ClientState) -> ArchiveEntry:
    # genesis contents follow from the chain params, which every client holds
    buckets = build_buckets(genesis_transactions(state.params), state.registry)
    pos = next(i for i, b in enumerate(buckets) if b.address == state.address)
    path = MerklePath()
    if state.params.header_mode == MERKLE_ROOT:
        path = merkle_prove([bucket_leaf_digest(b.leaf()) for b in buckets], pos)
    return ArchiveEntry(buckets[pos].txs, path)


def client_create_tx(
    state: ClientState, receiver: PublicKey, amount: int, fee: int, check_funds: bool = True
) -> tuple[TxCore, Signature, SelfContainedProof]:
    """Create and sign a transfer. The receiver's endorsement is still needed.

    If the receiver is not registered yet the new-address fee is added to
    ``fee``.
    """
    receiver_addr = address_of(receiver)
    if receiver_addr == state.address:
        raise ValueError("cannot send to self")
    if receiver_addr not in state.registry:
        fee += state.params.new_address_fee
    proof = state.proof()
    if check_funds:
        available = spendable_balance(proof, state.address, state.headers, state.registry, check_signatures=False)
        available -= sum(tx.core.amount + tx.core.fee for tx in state.pending_out.values())
        if amount + fee > available:
            raise InsufficientFunds(f"need {amount + fee}, have {available}")
    core = TxCore(state.address, receiver_addr, amount, fee, state.nonce_counter)
    state.nonce_counter += 1
    sig = bls_sign(state.sk, tx_message(core.id))
    state.known_txs[core.id] = core
    return core, sig, proof


def receiver_endorse(state: ClientState, core: TxCore) -> Signature:
    if core.receiver != state.address:
        raise EndorsementRefused("transaction is not addressed to this client")
    state.known_txs[core.id] = core
    return bls_sign(state.sk, tx_message(core.id))


def finish_tx(state: ClientState, core: TxCore, sender_sig: Signature, receiver_sig: Signature,
              proof: SelfContainedProof, receiver: PublicKey) -> Transaction:
    """Bundle an endorsed transaction for submission and remember it as pending."""
    key = receiver if address_of(receiver) not in state.registry else None
    tx = Transaction(core, sender_sig, receiver_sig, proof, key)
    state.pending_out[core.id] = tx
    return tx


def refresh_pending(state: ClientState) -> list[Transaction]:
    """Re-attach fresh proofs to pending outgoing transactions (after a new
    Bloom-positive header made their proofs stale)."""
    if not state.pending_out:
        return []
    proof = state.proof()
    out = []
    for tid, tx in sorted(state.pending_out.items()):
        fresh = Transaction(tx.core, tx.sender_sig, tx.receiver_sig, proof,
                            tx.receiver_key if tx.core.receiver not in state.registry else None)
        state.pending_out[tid] = fresh
        out.append(fresh)
    return out


# -- phase messages ---------------------------------------------------------

PROPOSE = "propose_block"
ENDORSE = "endorse"
PUBLISH = "publish_header"


@dataclass(frozen=True)
class Proposal:
    """Phase 1 of Merkle-root mode: the fixed transaction set of a block."""

    height: int
    prev_hash: bytes
    txs: tuple[TxCore, ...]
    new_keys: tuple[PublicKey, ...]
    top_root: bytes


@dataclass(frozen=True)
class PhaseMessage:
    kind: str
    height: int
    payload: object  # Proposal | SignTriple | BlockHeader


def encode_proposal(p: Proposal) -> bytes:
    w = Writer().u64(p.height).raw(p.prev_hash).varint(len(p.txs))
    for tx in p.txs:
        w.raw(tx.encode())
    w.varint(len(p.new_keys))
    for pk in p.new_keys:
        w.raw(pk.data)
    return w.raw(p.top_root).getvalue()


def decode_proposal(data: bytes) -> Proposal:
    r = Reader(data)
    height = r.u64()
    prev = r.raw(32)
    txs = tuple(TxCore.read(r) for _ in range(r.varint()))
    keys = tuple(PublicKey.from_bytes(r.raw(PUBKEY_LEN)) for _ in range(r.varint()))
    root = r.raw(32)
    r.finish()
    return Proposal(height, prev, txs, keys, root)


def encode_triple(t: SignTriple) -> bytes:
    if t.sig is None:
        raise ValueError("endorsement triple needs a signature")
    return Writer().raw(t.pk.data).raw(t.sig.data).varint(len(t.msg)).raw(t.msg).getvalue()


def decode_triple(data: bytes) -> SignTriple:
    r = Reader(data)
    pk = PublicKey.from_bytes(r.raw(PUBKEY_LEN))
    sig = Signature.from_bytes(r.raw(SIG_LEN))
    msg = r.raw(r.varint())
    r.finish()
    return SignTriple(pk, msg, sig)


def client_on_proposal(state: ClientState, proposal: Proposal) -> SignTriple | None:
    """Endorse a Merkle-root proposal if this client is involved and every
    transaction in its bucket is one it signed. Returns None otherwise."""
    addr = state.address
    mine = [tx for tx in proposal.txs if tx.involves(addr)]
    if not mine or proposal.height != len(state.headers):
        return None
    if state.tip is not None and proposal.prev_hash != header_hash(state.tip):
        return None
    if any(tx.id not in state.known_txs for tx in mine):
        return None
    try:
        ext = state.registry.extended(proposal.new_keys)
        buckets = build_buckets(list(proposal.txs), ext)
        leaves = [b.leaf() for b in buckets]
        if block_top_root(leaves) != proposal.top_root:
            return None
    except (KeyError, ValueError):
        return None
    pos = next(i for i, b in enumerate(buckets) if b.address == addr)
    path = merkle_prove([bucket_leaf_digest(b.leaf()) for b in buckets], pos)
    state.endorsed[proposal.top_root] = (proposal.height, ArchiveEntry(buckets[pos].txs, path))
    msg = root_message(proposal.top_root)
    return SignTriple(state.pk, msg, bls_sign(state.sk, msg))


# -- miner ------------------------------------------------------------------


@dataclass
class MinerState:
    client: ClientState
    pool: dict[bytes, Transaction] = field(default_factory=dict)
    included_ids: set[bytes] = field(default_factory=set)

    @property
    def params(self) -> ChainParams:
        return self.client.params


@dataclass(frozen=True)
class AdmitResult:
    admitted: bool
    reason: str | None = None
    balance: int | None = None


def _sender_load(pool: Iterable[Transaction], sender: bytes) -> int:
    return sum(t.core.amount + t.core.fee for t in pool if t.core.sender == sender)


def miner_admit_tx(state: MinerState, tx: Transaction) -> AdmitResult:
    """Admit ``tx`` to the pool iff its endorsements and proof check out
    against the current tip, jointly with other pooled spends of the sender."""
    client = state.client
    core = tx.core
    reg = client.registry
    if tx.id in state.pool:
        return AdmitResult(False, "Duplicate")
    if tx.id in state.included_ids or any(tx.id == t.id for u in tx.proof.units for t in u.bucket_txs):
        return AdmitResult(False, "AlreadyIncluded")
    if core.sender == MINT_ADDRESS or core.sender not in reg:
        return AdmitResult(False, "UnknownSender")
    if any(u.height > client.height for u in tx.proof.units):
        return AdmitResult(False, "AheadOfTip")
    if tx.receiver_sig is None:
        return AdmitResult(False, "MissingEndorsement")
    if core.receiver in reg:
        receiver_key = reg.key_of(core.receiver)
    else:
        receiver_key = tx.receiver_key
        if receiver_key is None or address_of(receiver_key) != core.receiver:
            return AdmitResult(False, "MissingReceiverKey")
        if core.fee < state.params.new_address_fee:
            return AdmitResult(False, "NewAddressFee")
    msg = tx_message(tx.id)
    try:
        sigs_ok = bls_verify(reg.key_of(core.sender), msg, tx.sender_sig) and bls_verify(
            receiver_key, msg, tx.receiver_sig
        )
    except DecodeError:
        sigs_ok = False
    if not sigs_ok:
        return AdmitResult(False, "BadSignature")

    verdict = verify_scp(tx, client.headers, reg, state.params, check_signatures=False)
    if not verdict.accepted:
        reason = verdict.reason
        if reason == "MissingProof" and all(u.height < verdict.missing_height for u in tx.proof.units):
            reason = "StaleProof"
        return AdmitResult(False, reason, verdict.balance)
    load = _sender_load(state.pool.values(), core.sender)
    if load + core.amount + core.fee > verdict.balance:
        return AdmitResult(False, "JointOverspend", verdict.balance)
    state.pool[tx.id] = tx
    return AdmitResult(True, None, verdict.balance)


def miner_on_header(state: MinerState, header: BlockHeader) -> tuple[bool, list[tuple[Transaction, str]]]:
    """Client processing plus pool upkeep: pooled transactions are re-checked
    against the new tip and dropped if they no longer pass. Returns the
    broadcast flag and the dropped transactions with reasons."""
    broadcast = client_on_header(state.client, header)
    if not broadcast:
        return False, []
    for h in state.client.headers[-1:]:
        if isinstance(h.commitment, HashList):
            state.included_ids.update(t for b in h.commitment.buckets for t in b.tx_ids)
    dropped = []
    old = sorted(state.pool.values(), key=_pool_order)
    state.pool = {}
    for tx in old:
        res = miner_admit_tx(state, tx)
        if not res.admitted:
            dropped.append((tx, res.reason or "Rejected"))
    return True, dropped


def _pool_order(tx: Transaction) -> tuple[int, bytes]:
    return (-tx.core.fee, tx.id)


@dataclass
class PendingBlock:
    """A Merkle-root block waiting for root endorsements."""

    unsigned: BlockHeader
    proposal: Proposal
    txs: tuple[Transaction, ...]
    participants: dict[bytes, PublicKey]  # address -> key, all Bloom-positive addresses
    proposer_sk: SecretKey
    endorsements: dict[bytes, Signature] = field(default_factory=dict)
    rounds: int = 1


@dataclass(frozen=True)
class RePropose:
    remaining: tuple[Transaction, ...]
    dropped: tuple[Transaction, ...]
    silent: tuple[bytes, ...]


def _assemble(state: MinerState, txs: Sequence[Transaction]) -> tuple[BlockHeader, list[TxBucket], AddressRegistry]:
    client = state.client
    new_keys: list[PublicKey] = []
    seen: set[bytes] = set()
    for tx in txs:
        addr = tx.core.receiver
        if addr not in client.registry and addr not in seen:
            seen.add(addr)
            new_keys.append(tx.receiver_key)
    ext = client.registry.extended(new_keys)
    buckets = build_buckets([tx.core for tx in txs], ext)
    bloom = build_perfect_bloom({b.address for b in buckets}, ext.addresses, state.params.bloom_k)
    prev_hash = header_hash(client.tip)
    unsigned = BlockHeader(
        client.tip.height + 1,
        prev_hash,
        tuple(new_keys),
        bloom,
        commitment_for(state.params.header_mode, buckets),
        UNSIGNED,
        ext.index_of(client.address),
    )
    return unsigned, buckets, ext


def select_transactions(state: MinerState) -> list[Transaction]:
    return sorted(state.pool.values(), key=_pool_order)


def miner_assemble_block(
    state: MinerState, txs: Sequence[Transaction] | None = None
) -> tuple[PhaseMessage, PendingBlock | None]:
    """Start a block on the miner's tip.

    Hash-list mode and empty blocks are published at once (the returned
    message is ``publish_header``). Otherwise a ``propose_block`` message is
    returned with the pending block that collects root endorsements.
    """
    if txs is None:
        txs = select_transactions(state)
    unsigned, buckets, ext = _assemble(state, txs)
    sk = state.client.sk
    if isinstance(unsigned.commitment, HashList) or not txs:
        sigs = [s for tx in txs for s in (tx.sender_sig, tx.receiver_sig)]
        header = seal_header(unsigned, sigs, sk)
        return PhaseMessage(PUBLISH, header.height, header), None
    proposal = Proposal(
        unsigned.height,
        unsigned.prev_hash,
        tuple(tx.core for tx in txs),
        unsigned.new_addresses,
        unsigned.commitment.top_root,
    )
    participants = {b.address: ext.key(b.address_index) for b in buckets}
    pending = PendingBlock(unsigned, proposal, tuple(txs), participants, sk)
    return PhaseMessage(PROPOSE, unsigned.height, proposal), pending


def phase2_collect(
    pending: PendingBlock, endorse_msgs: Iterable[SignTriple], final: bool = True
) -> BlockHeader | RePropose | None:
    """Fold endorsements into ``pending``.

    Returns the sealed header once every participant has signed the proposed
    root. Otherwise returns None while waiting, or, when ``final``, a
    RePropose without the transactions of the silent parties. Endorsements
    over another root, from non-participants or with bad signatures are
    ignored.
    """
    expected = root_message(pending.proposal.top_root)
    for t in endorse_msgs:
        addr = address_of(t.pk)
        if t.msg != expected or t.sig is None or pending.participants.get(addr) != t.pk:
            continue
        try:
            if bls_verify(t.pk, t.msg, t.sig):
                pending.endorsements[addr] = t.sig
        except DecodeError:
            continue
    if set(pending.endorsements) == set(pending.participants):
        sigs = [pending.endorsements[a] for a in sorted(pending.endorsements)]
        return seal_header(pending.unsigned, sigs, pending.proposer_sk)
    if not final:
        return None
    silent = set(pending.participants) - set(pending.endorsements)
    remaining = tuple(tx for tx in pending.txs if not (tx.core.sender in silent or tx.core.receiver in silent))
    dropped = tuple(tx for tx in pending.txs if tx not in remaining)
    return RePropose(remaining, dropped, tuple(sorted(silent)))
