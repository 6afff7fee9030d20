import dataclasses

import pytest

from helpers import ChainBuilder
from superlight.crypto import bls_sign
from superlight.ledger import HASH_LIST, MERKLE_ROOT, ProofUnit, SelfContainedProof, encode_header, decode_header
from superlight.node import (
    PROPOSE,
    PUBLISH,
    ClientState,
    EndorsementRefused,
    InsufficientFunds,
    Proposal,
    RePropose,
    client_create_tx,
    client_on_header,
    client_on_proposal,
    decode_proposal,
    decode_triple,
    encode_proposal,
    encode_triple,
    miner_admit_tx,
    miner_assemble_block,
    miner_on_header,
    phase2_collect,
    receiver_endorse,
    refresh_pending,
    select_transactions,
)

MODES = [HASH_LIST, MERKLE_ROOT]


@pytest.fixture(params=MODES)
def chain(request):
    return ChainBuilder(request.param, {"alice": 100, "bob": 0, "carol": 0}, late=("dave",))


# -- clients --------------------------------------------------------------------


def test_headers_are_processed_once(chain):
    alice = chain.clients["alice"]
    assert not client_on_header(alice, chain.genesis)
    h = chain.seal([])
    assert client_on_header(alice, h)
    assert not client_on_header(alice, decode_header(encode_header(h)))
    assert alice.height == 1


def test_future_headers_wait_for_their_parent(chain):
    h1 = chain.block([])
    h2 = chain.block([])
    late = ClientState(chain.clients["bob"].sk, chain.params)
    client_on_header(late, chain.genesis)
    assert not client_on_header(late, h2)
    assert late.height == 0 and 2 in late.orphans
    assert client_on_header(late, h1)
    assert late.height == 2 and not late.orphans


def test_invalid_header_is_logged_and_dropped(chain):
    h = chain.seal([])
    bad = dataclasses.replace(h, agg_sig=bls_sign(chain.clients["alice"].sk, b"x"))
    alice = chain.clients["alice"]
    assert not client_on_header(alice, bad)
    assert alice.rejection_log == [(1, "BAD_SIGNATURE")]
    assert not client_on_header(alice, bad)
    assert len(alice.rejection_log) == 1


def test_competing_header_at_taken_height(chain):
    chain.block([])
    other = chain.seal([])  # built on the new tip, so height 2: fine
    assert other.height == 2
    alice = chain.clients["alice"]
    stale = dataclasses.replace(other, height=1)
    assert not client_on_header(alice, stale)
    assert alice.rejection_log[-1] == (1, "BAD_LINK")


def test_create_tx_checks_funds_including_pending(chain):
    alice = chain.clients["alice"]
    bob = chain.clients["bob"]
    chain.make_tx("alice", "bob", 60, 1, check_funds=True)
    with pytest.raises(InsufficientFunds):
        client_create_tx(alice, bob.pk, 39, 1)
    client_create_tx(alice, bob.pk, 38, 1)


def test_create_tx_adds_new_address_fee(chain):
    tx = chain.make_tx("alice", "dave", 10, 1)
    assert tx.core.fee == 2 and tx.receiver_key == chain.clients["dave"].pk
    tx = chain.make_tx("alice", "bob", 10, 1)
    assert tx.core.fee == 1 and tx.receiver_key is None


def test_cannot_send_to_self(chain):
    alice = chain.clients["alice"]
    with pytest.raises(ValueError):
        client_create_tx(alice, alice.pk, 1, 0)


def test_endorse_only_own_transactions(chain):
    core, _, _ = client_create_tx(chain.clients["alice"], chain.clients["bob"].pk, 1, 0)
    with pytest.raises(EndorsementRefused):
        receiver_endorse(chain.clients["carol"], core)
    receiver_endorse(chain.clients["bob"], core)


def test_nodes_keep_only_their_own_bodies(chain):
    chain.block([chain.make_tx("alice", "bob", 10, 1), chain.make_tx("alice", "carol", 10, 1)])
    chain.block([chain.make_tx("bob", "carol", 5, 0)])
    for name, c in chain.clients.items():
        for entry in c.archive.values():
            assert all(tx.involves(c.address) for tx in entry.txs), name
    assert chain.clients["bob"].archive.keys() == {1, 2}
    assert chain.clients["alice"].archive.keys() == {0, 1}


def test_included_tx_leaves_pending(chain):
    tx = chain.make_tx("alice", "bob", 10, 1)
    assert tx.id in chain.clients["alice"].pending_out
    chain.block([tx])
    assert not chain.clients["alice"].pending_out


def test_refresh_pending_attaches_current_proof(chain):
    alice = chain.clients["alice"]
    waiting = chain.make_tx("alice", "carol", 10, 0)
    chain.block([chain.make_tx("alice", "bob", 10, 1)])
    (fresh,) = refresh_pending(alice)
    assert fresh.id == waiting.id
    assert fresh.proof.heights() == [1, 0] and waiting.proof.heights() == [0]


# -- miners -----------------------------------------------------------------------


def admit(chain, tx):
    return miner_admit_tx(chain.miner, tx).reason


def test_admission_accepts_and_dedups(chain):
    tx = chain.make_tx("alice", "bob", 10, 1)
    assert miner_admit_tx(chain.miner, tx).admitted
    assert admit(chain, tx) == "Duplicate"


def test_admission_rejects_already_included(chain):
    tx = chain.make_tx("alice", "bob", 10, 1)
    chain.block([tx])
    assert admit(chain, tx) in ("AlreadyIncluded", "StaleProof")
    refreshed = dataclasses.replace(tx, proof=chain.clients["alice"].proof())
    assert admit(chain, refreshed) == "AlreadyIncluded"


def test_admission_rejects_unknown_sender(chain):
    dave, bob = chain.clients["dave"], chain.clients["bob"]
    core, sig, proof = client_create_tx(dave, bob.pk, 1, 0, check_funds=False)
    from superlight.ledger import Transaction

    tx = Transaction(core, sig, receiver_endorse(bob, core), proof)
    assert admit(chain, tx) == "UnknownSender"


def test_admission_defers_proofs_from_the_future(chain):
    tx = chain.make_tx("alice", "bob", 10, 1)
    future = SelfContainedProof((ProofUnit(5, tx.proof.units[0].bucket_txs),) + tx.proof.units)
    assert admit(chain, dataclasses.replace(tx, proof=future)) == "AheadOfTip"


def test_admission_needs_both_signatures(chain):
    tx = chain.make_tx("alice", "bob", 10, 1)
    assert admit(chain, dataclasses.replace(tx, receiver_sig=None)) == "MissingEndorsement"
    assert admit(chain, dataclasses.replace(tx, receiver_sig=tx.sender_sig)) == "BadSignature"
    forged = bls_sign(chain.clients["carol"].sk, b"\x10" + tx.id)
    assert admit(chain, dataclasses.replace(tx, sender_sig=forged)) == "BadSignature"


def test_admission_checks_new_receiver_key_and_fee(chain):
    tx = chain.make_tx("alice", "dave", 10, 0)
    assert admit(chain, dataclasses.replace(tx, receiver_key=None)) == "MissingReceiverKey"
    assert admit(chain, dataclasses.replace(tx, receiver_key=chain.clients["bob"].pk)) == "MissingReceiverKey"
    cheap = ChainBuilder(chain.mode, {"alice": 100}, late=("dave",), new_address_fee=5)
    core, sig, proof = client_create_tx(cheap.clients["alice"], cheap.clients["dave"].pk, 10, 0)
    from superlight.ledger import Transaction

    short = dataclasses.replace(core, fee=4)
    d = cheap.clients["dave"]
    a = cheap.clients["alice"]
    tx = Transaction(short, bls_sign(a.sk, b"\x10" + short.id), bls_sign(d.sk, b"\x10" + short.id), proof, d.pk)
    assert miner_admit_tx(cheap.miner, tx).reason == "NewAddressFee"


def test_admission_rejects_overspend_and_bad_proofs(chain):
    assert admit(chain, chain.make_tx("alice", "bob", 100, 1)) == "InsufficientFunds"
    old = chain.clients["alice"].proof()
    chain.block([chain.make_tx("alice", "bob", 10, 1)])
    stale = dataclasses.replace(chain.make_tx("alice", "bob", 1, 0), proof=old)
    assert admit(chain, stale) == "StaleProof"
    tx = chain.make_tx("alice", "bob", 1, 0)
    unit = tx.proof.units[0]
    bogus = dataclasses.replace(unit.bucket_txs[0], amount=unit.bucket_txs[0].amount + 1)
    broken = SelfContainedProof((ProofUnit(unit.height, (bogus,), unit.merkle_path),) + tx.proof.units[1:])
    assert admit(chain, dataclasses.replace(tx, proof=broken)) == "InvalidProof"


def test_admission_checks_joint_spend(chain):
    assert miner_admit_tx(chain.miner, chain.make_tx("alice", "bob", 60, 1)).admitted
    assert admit(chain, chain.make_tx("alice", "carol", 39, 1)) == "JointOverspend"
    assert miner_admit_tx(chain.miner, chain.make_tx("alice", "carol", 38, 1)).admitted


def test_pool_is_rechecked_on_new_header(chain):
    a = chain.make_tx("alice", "bob", 10, 1)
    b = chain.make_tx("alice", "carol", 10, 1)
    miner_admit_tx(chain.miner, a)
    miner_admit_tx(chain.miner, b)
    header = chain.seal([a])
    accepted, dropped = miner_on_header(chain.miner, header)
    assert accepted
    assert {t.id for t, _ in dropped} == {a.id, b.id}
    for c in chain.clients.values():
        client_on_header(c, header)
    (fresh,) = refresh_pending(chain.clients["alice"])
    assert miner_admit_tx(chain.miner, fresh).admitted


def test_block_order_is_fee_then_id(chain):
    low = chain.make_tx("alice", "bob", 1, 0)
    high = chain.make_tx("alice", "carol", 1, 3)
    mid = chain.make_tx("alice", "bob", 2, 1)
    for t in (low, high, mid):
        assert miner_admit_tx(chain.miner, t).admitted
    assert select_transactions(chain.miner) == [high, mid, low]


def test_hash_list_blocks_publish_directly():
    chain = ChainBuilder(HASH_LIST, {"alice": 100, "bob": 0})
    msg, pending = miner_assemble_block(chain.miner, [chain.make_tx("alice", "bob", 1, 0)])
    assert msg.kind == PUBLISH and pending is None


def test_empty_merkle_block_publishes_directly():
    chain = ChainBuilder(MERKLE_ROOT, {"alice": 100, "bob": 0})
    msg, pending = miner_assemble_block(chain.miner, [])
    assert msg.kind == PUBLISH and pending is None


# -- two-phase protocol -------------------------------------------------------


@pytest.fixture
def merkle():
    return ChainBuilder(MERKLE_ROOT, {"alice": 100, "bob": 0, "carol": 0})


def test_proposal_and_triple_round_trip(merkle):
    tx = merkle.make_tx("alice", "bob", 10, 1)
    msg, pending = miner_assemble_block(merkle.miner, [tx])
    assert msg.kind == PROPOSE
    assert decode_proposal(encode_proposal(msg.payload)) == msg.payload
    t = client_on_proposal(merkle.clients["alice"], msg.payload)
    assert decode_triple(encode_triple(t)) == t


def test_uninvolved_or_unknown_proposals_are_not_endorsed(merkle):
    tx = merkle.make_tx("alice", "bob", 10, 1)
    msg, _ = miner_assemble_block(merkle.miner, [tx])
    assert client_on_proposal(merkle.clients["carol"], msg.payload) is None
    # a transaction bob never endorsed
    core, _, _ = client_create_tx(merkle.clients["alice"], merkle.clients["bob"].pk, 5, 0)
    p = msg.payload
    sneaky = Proposal(p.height, p.prev_hash, p.txs + (core,), p.new_keys, p.top_root)
    assert client_on_proposal(merkle.clients["bob"], sneaky) is None
    wrong_root = Proposal(p.height, p.prev_hash, p.txs, p.new_keys, bytes(32))
    assert client_on_proposal(merkle.clients["alice"], wrong_root) is None


def test_phase_two_waits_then_seals(merkle):
    tx = merkle.make_tx("alice", "bob", 10, 1)
    msg, pending = miner_assemble_block(merkle.miner, [tx])
    ta = client_on_proposal(merkle.clients["alice"], msg.payload)
    tb = client_on_proposal(merkle.clients["bob"], msg.payload)
    assert phase2_collect(pending, [ta], final=False) is None
    header = phase2_collect(pending, [tb], final=False)
    merkle.deliver(header)
    assert merkle.headers[-1] == header
    assert merkle.clients["bob"].archive[1].txs == (tx.core,)


def test_phase_two_ignores_bad_endorsements(merkle):
    tx = merkle.make_tx("alice", "bob", 10, 1)
    msg, pending = miner_assemble_block(merkle.miner, [tx])
    ta = client_on_proposal(merkle.clients["alice"], msg.payload)
    carol = merkle.clients["carol"]
    outsider = dataclasses.replace(ta, pk=carol.pk, sig=bls_sign(carol.sk, ta.msg))
    forged = dataclasses.replace(ta, sig=bls_sign(carol.sk, ta.msg))
    assert phase2_collect(pending, [outsider, forged], final=False) is None
    assert not pending.endorsements


def test_silent_party_triggers_repropose(merkle):
    t1 = merkle.make_tx("alice", "bob", 10, 1)
    t2 = merkle.make_tx("alice", "carol", 10, 1)
    msg, pending = miner_assemble_block(merkle.miner, [t1, t2])
    triples = [client_on_proposal(merkle.clients[n], msg.payload) for n in ("alice", "carol")]
    result = phase2_collect(pending, triples, final=True)
    assert isinstance(result, RePropose)
    assert result.dropped == (t1,) and result.remaining == (t2,)
    assert result.silent == (merkle.clients["bob"].address,)
    header = merkle.seal(list(result.remaining))
    merkle.deliver(header)
    assert merkle.clients["carol"].balance() == 10
