"""Wire-format test vectors. Frozen copies live in tests/data/vectors.json."""

from __future__ import annotations

from .bloom import bloom_indices
from .crypto import bls_aggregate, bls_sign, hash256, keygen
from .ledger import (
    HASH_LIST,
    MERKLE_ROOT,
    ChainParams,
    TxCore,
    address_of,
    build_genesis,
    encode_header,
    header_hash,
    tx_message,
)
from .merkle import merkle_prove, merkle_root


def vector_keys(name: str):
    return keygen(hash256(b"superlight/vector/" + name.encode()))


def golden_vectors() -> dict:
    sk_a, pk_a = vector_keys("alice")
    sk_b, pk_b = vector_keys("bob")
    msg = b"superlight test vector"
    sig_a = bls_sign(sk_a, msg)
    sig_b = bls_sign(sk_b, msg)

    leaves = [hash256(bytes([i])) for i in range(5)]
    path = merkle_prove(leaves, 2)

    core = TxCore(address_of(pk_a), address_of(pk_b), 40, 1, 0)
    addr = address_of(pk_a)

    genesis = {}
    for mode in (HASH_LIST, MERKLE_ROOT):
        params = ChainParams(mode, 3, 1, ((pk_a, 100), (pk_b, 0)))
        g = build_genesis(params, {address_of(pk_a): sk_a, address_of(pk_b): sk_b})
        genesis[mode] = {"hex": encode_header(g).hex(), "hash": header_hash(g).hex()}

    return {
        "bls": {
            "alice_sk": sk_a.to_bytes().hex(),
            "alice_pk": pk_a.data.hex(),
            "bob_pk": pk_b.data.hex(),
            "message": msg.hex(),
            "alice_sig": sig_a.data.hex(),
            "aggregate_sig": bls_aggregate([sig_a, sig_b]).data.hex(),
        },
        "merkle": {
            "leaves": [x.hex() for x in leaves],
            "roots": [merkle_root(leaves[:n]).hex() for n in range(1, 6)],
            "path_5_2": [[sib.hex(), side.name] for sib, side in path.steps],
        },
        "bloom": {
            "address": addr.hex(),
            "indices_1000_3": bloom_indices(addr, 1000, 3),
        },
        "tx": {
            "core": core.encode().hex(),
            "id": core.id.hex(),
            "sign_message": tx_message(core.id).hex(),
        },
        "genesis": genesis,
    }
