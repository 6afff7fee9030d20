"""Human-readable listings of headers, chains and proofs.

The output format is stable: golden tests compare it byte for byte.
"""

from __future__ import annotations

from .ledger import BlockHeader, HashList, SelfContainedProof, TxCore, header_hash


def _tx_line(tx: TxCore) -> str:
    return (
        f"tx {tx.id.hex()} from {tx.sender.hex()[:16]} to {tx.receiver.hex()[:16]}"
        f" amount {tx.amount} fee {tx.fee} nonce {tx.nonce}"
    )


def format_header(h: BlockHeader) -> str:
    lines = [
        f"header {h.height}",
        f"  hash          {header_hash(h).hex()}",
        f"  prev_hash     {h.prev_hash.hex()}",
        f"  mode          {h.mode}",
        f"  proposer      {h.proposer_index}",
        f"  new_addresses {len(h.new_addresses)}",
    ]
    lines += [f"    {pk.data.hex()}" for pk in h.new_addresses]
    lines.append(f"  bloom         k={h.bloom.k} bits={h.bloom.bit_len} set={h.bloom.popcount()}")
    lines.append(f"    {h.bloom.to_bytes().hex()}")
    if isinstance(h.commitment, HashList):
        lines.append(f"  buckets       {len(h.commitment.buckets)}")
        for b in h.commitment.buckets:
            lines.append(f"    address {b.address_index} relative_balance {b.relative_balance:+d}")
            lines += [f"      {tid.hex()}" for tid in b.tx_ids]
    else:
        lines.append(f"  top_root      {h.commitment.top_root.hex()}")
    lines.append(f"  agg_sig       {h.agg_sig.data.hex()}")
    return "\n".join(lines) + "\n"


def format_chain(headers: list[BlockHeader]) -> str:
    return "".join(format_header(h) for h in headers)


def format_proof(proof: SelfContainedProof) -> str:
    lines = [f"proof units {len(proof.units)}"]
    for u in proof.units:
        lines.append(f"  unit height {u.height} txs {len(u.bucket_txs)} path {len(u.merkle_path)}")
        lines += [f"    {_tx_line(tx)}" for tx in u.bucket_txs]
        lines += [f"    sibling {side.name.lower():5} {sib.hex()}" for sib, side in u.merkle_path.steps]
    return "\n".join(lines) + "\n"
