"""Hashing and BLS signatures over BLS12-381 (min-sig: 48-byte signatures in G1,
96-byte public keys in G2).

Group arithmetic and pairings come from ``py_arkworks_bls12381``; the scheme
itself (key derivation, hash-to-G1, message augmentation, aggregation and
aggregate verification) lives here.

Every signed message is augmented with the signer's compressed public key
before hashing to the curve, so aggregate verification is safe against
rogue-key attacks without a proof-of-possession registry.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from py_arkworks_bls12381 import GT, G1Point, G2Point, Scalar

# BLS12-381 parameters
FIELD_P = 0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB
GROUP_ORDER = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001
G1_COFACTOR = 0x396C8C005555E1568C00AAAB0000AAAB

PUBKEY_LEN = 96
SIG_LEN = 48
HASH_LEN = 32

_H2C_DST = b"SUPERLIGHT-BLS12381G1-SHA512-TAI-AUG-v1"
_KEYGEN_DST = b"SUPERLIGHT-KEYGEN-v1"
_SQRT_EXP = (FIELD_P + 1) // 4


class DecodeError(ValueError):
    """Raised for malformed or non-canonical encodings."""


def hash256(data: bytes) -> bytes:
    """SHA-256. The single hash function used for ids, trees and headers."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class SecretKey:
    scalar: int

    def __post_init__(self) -> None:
        if not 0 < self.scalar < GROUP_ORDER:
            raise ValueError("secret scalar out of range")

    def to_bytes(self) -> bytes:
        return self.scalar.to_bytes(32, "little")

    def __repr__(self) -> str:
        return "SecretKey(<hidden>)"


@dataclass(frozen=True)
class PublicKey:
    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) != PUBKEY_LEN:
            raise DecodeError(f"public key must be {PUBKEY_LEN} bytes")

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicKey":
        pk = cls(bytes(data))
        _decode_g2(pk.data)
        return pk

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True)
class Signature:
    """A single or aggregate signature; both are one G1 element on the wire."""

    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) != SIG_LEN:
            raise DecodeError(f"signature must be {SIG_LEN} bytes")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Signature":
        sig = cls(bytes(data))
        _decode_g1(sig.data)
        return sig

    def hex(self) -> str:
        return self.data.hex()


AggregateSignature = Signature


@dataclass(frozen=True)
class SignTriple:
    pk: PublicKey
    msg: bytes
    sig: Signature | None = None

    def __post_init__(self) -> None:
        if not self.msg:
            raise ValueError("signed messages must be non-empty")


# -- point codecs -----------------------------------------------------------


@lru_cache(maxsize=1 << 14)
def _decode_g1(data: bytes) -> G1Point:
    try:
        point = G1Point.from_compressed_bytes(data)
    except Exception as exc:
        raise DecodeError(f"invalid G1 encoding: {exc}") from None
    if bytes(point.to_compressed_bytes()) != data:
        raise DecodeError("non-canonical G1 encoding")
    if point == G1Point.identity():
        raise DecodeError("identity signature not accepted")
    return point


@lru_cache(maxsize=1 << 14)
def _decode_g2(data: bytes) -> G2Point:
    try:
        point = G2Point.from_compressed_bytes(data)
    except Exception as exc:
        raise DecodeError(f"invalid G2 encoding: {exc}") from None
    if bytes(point.to_compressed_bytes()) != data:
        raise DecodeError("non-canonical G2 encoding")
    if point == G2Point.identity():
        raise DecodeError("identity public key not accepted")
    return point


def _g1_bytes(point: G1Point) -> bytes:
    return bytes(point.to_compressed_bytes())


# -- hash to G1 (try-and-increment, then cofactor clearing) -----------------


@lru_cache(maxsize=1 << 16)
def hash_to_g1(msg: bytes) -> G1Point:
    """Deterministically map ``msg`` to a point of the prime-order subgroup of G1.

    Not constant time; the inputs here are public.
    """
    for ctr in range(256):
        digest = hashlib.sha512(_H2C_DST + bytes([ctr]) + msg).digest()
        x = int.from_bytes(digest, "big") % FIELD_P
        rhs = (pow(x, 3, FIELD_P) + 4) % FIELD_P
        y = pow(rhs, _SQRT_EXP, FIELD_P)
        if y * y % FIELD_P != rhs:
            continue
        enc = bytearray(x.to_bytes(48, "big"))
        enc[0] |= 0x80  # compressed
        if digest[0] & 1:
            enc[0] |= 0x20  # pick the lexicographically larger y
        point = G1Point.from_compressed_bytes_unchecked(bytes(enc)) * Scalar(G1_COFACTOR)
        if point != G1Point.identity():
            return point
    raise RuntimeError("hash_to_g1 failed to find a point")  # probability ~2^-256


def _augment(pk: PublicKey, msg: bytes) -> bytes:
    return pk.data + msg


# -- keys and signatures ----------------------------------------------------


def keygen(seed: bytes) -> tuple[SecretKey, PublicKey]:
    """Derive a key pair from a 32-byte seed. Same seed, same keys."""
    if len(seed) != 32:
        raise ValueError("seed must be 32 bytes")
    material = seed
    while True:
        material = hashlib.sha512(_KEYGEN_DST + material).digest()
        scalar = int.from_bytes(material, "big") % GROUP_ORDER
        if scalar:
            break
    sk = SecretKey(scalar)
    return sk, public_key(sk)


@lru_cache(maxsize=1 << 12)
def public_key(sk: SecretKey) -> PublicKey:
    return PublicKey(bytes((G2Point() * Scalar(sk.scalar)).to_compressed_bytes()))


def bls_sign(sk: SecretKey, msg: bytes) -> Signature:
    if not msg:
        raise ValueError("signed messages must be non-empty")
    pk = public_key(sk)
    return Signature(_g1_bytes(hash_to_g1(_augment(pk, msg)) * Scalar(sk.scalar)))


def bls_verify(pk: PublicKey, msg: bytes, sig: Signature) -> bool:
    """Check e(sig, g2) == e(H(pk || msg), pk).

    Malformed encodings raise DecodeError instead of returning False.
    """
    pk_point = _decode_g2(pk.data)
    sig_point = _decode_g1(sig.data)
    if not msg:
        return False
    h = hash_to_g1(_augment(pk, msg))
    return GT.pairing(sig_point, G2Point()) == GT.pairing(h, pk_point)


def bls_aggregate(sigs: Sequence[Signature]) -> Signature:
    if not sigs:
        raise ValueError("cannot aggregate an empty signature list")
    acc = _decode_g1(sigs[0].data)
    for sig in sigs[1:]:
        acc = acc + _decode_g1(sig.data)
    if acc == G1Point.identity():
        raise ValueError("aggregate is the identity element")
    return Signature(_g1_bytes(acc))


def bls_aggregate_verify(triples: Iterable[SignTriple], agg: Signature) -> bool:
    """Check e(agg, g2) == prod_i e(H(pk_i || m_i), pk_i).

    Duplicate (pk, msg) pairs raise ValueError. Any ``sig`` on the triples is
    ignored; only ``agg`` is checked.
    """
    pairs = tuple((t.pk.data, t.msg) for t in triples)
    if not pairs:
        raise ValueError("aggregate verification needs at least one triple")
    if len(set(pairs)) != len(pairs):
        raise ValueError("duplicate (public key, message) pair")
    # canonical order makes the memo key independent of triple order
    return _aggregate_check(tuple(sorted(pairs)), agg.data)


@lru_cache(maxsize=1 << 12)
def _aggregate_check(pairs: tuple[tuple[bytes, bytes], ...], agg: bytes) -> bool:
    agg_point = _decode_g1(agg)
    g1s, g2s = [], []
    for pk_bytes, msg in pairs:
        pk = PublicKey(pk_bytes)
        g2s.append(_decode_g2(pk_bytes))
        g1s.append(hash_to_g1(_augment(pk, msg)))
    return GT.pairing(agg_point, G2Point()) == GT.multi_pairing(g1s, g2s)
