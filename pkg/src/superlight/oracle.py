"""Full-ledger replay: the ground truth for balances.

Deliberately shares no code with the ledger or proof machinery. It sees whole
block contents as plain tuples and just moves coins around a dict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

# (sender, receiver, amount, fee); any hashable account labels
Transfer = tuple[object, object, int, int]


@dataclass
class Replay:
    balances: dict[object, int] = field(default_factory=dict)
    burned: int = 0
    overspends: list[tuple[int, Transfer]] = field(default_factory=list)

    def balance(self, who: object) -> int:
        return self.balances.get(who, 0)

    def can_spend(self, who: object, amount: int, fee: int) -> bool:
        return self.balance(who) >= amount + fee


def replay(allocations: Mapping[object, int], blocks: Iterable[Sequence[Transfer]]) -> Replay:
    """Apply every transfer in block order. Within a block, debits are checked
    against the balance at the start of the block plus the block's own credits
    (a block is atomic)."""
    state = Replay(dict(allocations))
    for height, block in enumerate(blocks, start=1):
        start = dict(state.balances)
        credits: dict[object, int] = {}
        debits: dict[object, int] = {}
        for sender, receiver, amount, fee in block:
            credits[receiver] = credits.get(receiver, 0) + amount
            debits[sender] = debits.get(sender, 0) + amount + fee
            state.burned += fee
        for who in sorted(set(credits) | set(debits), key=repr):
            state.balances[who] = start.get(who, 0) + credits.get(who, 0) - debits.get(who, 0)
        for tx in block:
            if state.balances[tx[0]] < 0:
                state.overspends.append((height, tx))
    return state
