"""Direct chain construction for tests: no simulator, no network."""

from __future__ import annotations

from dataclasses import dataclass, field

from superlight.crypto import hash256, keygen
from superlight.ledger import (
    HASH_LIST,
    BlockHeader,
    ChainParams,
    Transaction,
    address_of,
    build_genesis,
)
from superlight.node import (
    ClientState,
    MinerState,
    PUBLISH,
    client_create_tx,
    client_on_header,
    client_on_proposal,
    finish_tx,
    miner_assemble_block,
    miner_on_header,
    phase2_collect,
    receiver_endorse,
)

MINER = "miner"


def keys_for(name: str):
    return keygen(hash256(b"test/" + name.encode()))


@dataclass
class ChainBuilder:
    """A miner plus one client per name. ``allocations`` are registered at
    genesis in order; ``late`` names exist but are not registered."""

    mode: str = HASH_LIST
    allocations: dict[str, int] = field(default_factory=dict)
    late: tuple[str, ...] = ()
    new_address_fee: int = 1

    def __post_init__(self) -> None:
        names = [MINER, *self.allocations, *self.late]
        self.keys = {n: keys_for(n) for n in names}
        alloc = [(self.keys[MINER][1], 0)] + [(self.keys[n][1], a) for n, a in self.allocations.items()]
        self.params = ChainParams(self.mode, 3, self.new_address_fee, tuple(alloc))
        secret = {address_of(pk): sk for sk, pk in self.keys.values()}
        self.genesis = build_genesis(self.params, secret)
        self.clients = {n: ClientState(self.keys[n][0], self.params) for n in names if n != MINER}
        self.miner = MinerState(ClientState(self.keys[MINER][0], self.params))
        self.blocks: list[list[Transaction]] = []
        self.deliver(self.genesis)

    @property
    def headers(self) -> list[BlockHeader]:
        return self.miner.client.headers

    @property
    def registry(self):
        return self.miner.client.registry

    def name_of(self, addr: bytes) -> str:
        return next(n for n, (_, pk) in self.keys.items() if address_of(pk) == addr)

    def deliver(self, header: BlockHeader) -> None:
        miner_on_header(self.miner, header)
        for c in self.clients.values():
            client_on_header(c, header)

    def make_tx(self, sender: str, receiver: str, amount: int, fee: int, check_funds: bool = False) -> Transaction:
        s, r = self.clients[sender], self.clients[receiver]
        core, sig, proof = client_create_tx(s, r.pk, amount, fee, check_funds=check_funds)
        return finish_tx(s, core, sig, receiver_endorse(r, core), proof, r.pk)

    def seal(self, txs: list[Transaction]) -> BlockHeader:
        msg, pending = miner_assemble_block(self.miner, txs)
        if msg.kind == PUBLISH:
            return msg.payload
        triples = []
        for c in self.clients.values():
            t = client_on_proposal(c, msg.payload)
            if t is not None:
                triples.append(t)
        header = phase2_collect(pending, triples)
        assert isinstance(header, BlockHeader), header
        return header

    def block(self, txs: list[Transaction]) -> BlockHeader:
        header = self.seal(txs)
        self.deliver(header)
        assert self.headers[-1] == header
        self.blocks.append(list(txs))
        return header

    def transfers(self) -> list[list[tuple[str, str, int, int]]]:
        return [
            [(self.name_of(t.core.sender), self.name_of(t.core.receiver), t.core.amount, t.core.fee) for t in blk]
            for blk in self.blocks
        ]

    def oracle_allocations(self) -> dict[str, int]:
        return {n: a for n, a in self.allocations.items() if a}


def random_equivalence_run(seed: int, mode: str) -> tuple[int, list[str]]:
    """One random chain (<= 20 blocks, <= 10 addresses, <= 100 transfers).

    Before each block, random transfers are proposed with fresh proofs. The
    SCP verdict for each must equal the oracle's balance check on the chain so
    far. Accepted transfers that fit the sender's balance jointly are mined.
    Returns the number of comparisons and any disagreements.
    """
    import random

    from superlight.oracle import replay
    from superlight.scp import verify_scp

    rng = random.Random(seed)
    n_addr = rng.randint(2, 10)
    n_late = rng.randint(0, n_addr - 1)
    names = [f"a{i}" for i in range(n_addr)]
    allocations = {n: rng.choice([0, rng.randint(1, 200)]) for n in names[: n_addr - n_late]}
    if not any(allocations.values()):
        allocations[names[0]] = rng.randint(1, 200)
    chain = ChainBuilder(mode, allocations, tuple(names[n_addr - n_late :]), new_address_fee=rng.randint(0, 2))
    n_blocks = rng.randint(1, 20)
    budget = rng.randint(1, 100)
    compared = 0
    problems: list[str] = []
    for height in range(1, n_blocks + 1):
        oracle = replay(chain.oracle_allocations(), chain.transfers())
        registered = [n for n in names if address_of(chain.keys[n][1]) in chain.registry]
        per_block = min(budget, rng.randint(0, 8))
        budget -= per_block
        mined: list[Transaction] = []
        spent: dict[str, int] = {}
        for _ in range(per_block):
            sender = rng.choice(registered)
            receiver = rng.choice([n for n in names if n != sender])
            held = oracle.balance(sender)
            amount = max(1, rng.randint(held // 2, held + 10) if held and rng.random() < 0.8 else rng.randint(1, 50))
            tx = chain.make_tx(sender, receiver, amount, rng.randint(0, 3))
            verdict = verify_scp(tx, chain.headers, chain.registry)
            expected = oracle.can_spend(sender, tx.core.amount, tx.core.fee)
            compared += 1
            if verdict.accepted != expected:
                problems.append(
                    f"seed {seed} {mode} h{height}: {sender} pays {tx.core.amount}+{tx.core.fee}, "
                    f"scp {verdict} oracle balance {held}"
                )
            cost = tx.core.amount + tx.core.fee
            if verdict.accepted and spent.get(sender, 0) + cost <= held:
                spent[sender] = spent.get(sender, 0) + cost
                mined.append(tx)
            else:
                # never mined: forget it so later proofs stay honest
                chain.clients[sender].pending_out.pop(tx.id)
                chain.clients[sender].known_txs.pop(tx.id)
                chain.clients[receiver].known_txs.pop(tx.id)
        chain.block(mined)
    final = replay(chain.oracle_allocations(), chain.transfers())
    if final.overspends:
        problems.append(f"seed {seed} {mode}: oracle saw overspends {final.overspends}")
    for n in names:
        c = chain.clients[n]
        if c.address in chain.registry:
            compared += 1
            if c.balance() != final.balance(n):
                problems.append(f"seed {seed} {mode}: {n} scp balance {c.balance()} oracle {final.balance(n)}")
    return compared, problems
