"""Deterministic discrete-event simulator for Superlight nodes.

Scenario files are line oriented::

    # comments start with '#'
    seed 7
    mode hash_list            # or merkle_root
    param slot 10             # steps per proposer slot
    param timeout 10          # phase-2 endorsement timeout (Merkle-root mode)
    param new_address_fee 1
    param k 3
    max_steps 200
    actor alice client 100
    actor charlie miner 0
    actor dave client 0 late  # not registered at genesis
    at 5 send alice bob 40 1
    at 9 go_offline bob
    at 20 go_online bob
    at 9 adversary mallory rogue_bloom_all_ones
    expect balance alice 59
    expect chains_equal

Events run in (step, actor name, sequence number) order. Every message gets
a delay of 1-3 steps drawn from a generator seeded by the scenario seed, and
each (sender, receiver) edge is FIFO. Messages to an offline actor are held
until it comes back online.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .codec import Reader
from .crypto import DecodeError, PublicKey, SecretKey, Signature, hash256, keygen
from .ledger import (
    HASH_LIST,
    HEADER_MODES,
    MERKLE_ROOT,
    BlockHeader,
    ChainParams,
    ProofUnit,
    SelfContainedProof,
    Transaction,
    TxCore,
    address_of,
    build_genesis,
    decode_header,
    decode_transaction,
    encode_header,
    encode_transaction,
    header_hash,
    seal_header,
)
from .bloom import BloomFilter, bloom_query
from .node import (
    PUBLISH,
    ClientState,
    EndorsementRefused,
    InsufficientFunds,
    MinerState,
    PendingBlock,
    RePropose,
    client_create_tx,
    client_on_header,
    client_on_proposal,
    decode_proposal,
    decode_triple,
    encode_proposal,
    encode_triple,
    finish_tx,
    miner_admit_tx,
    miner_assemble_block,
    miner_on_header,
    phase2_collect,
    receiver_endorse,
    refresh_pending,
)
from .oracle import replay
from .scp import LostTransaction, ProofError, spendable_balance

ADVERSARIES = ("rogue_bloom_all_ones", "omit_bucket_tx", "drop_endorsements", "double_proof_reuse")
ROLES = ("client", "miner")
DEFAULT_SLOT = {HASH_LIST: 10, MERKLE_ROOT: 40}


class ScenarioError(ValueError):
    def __init__(self, line: int, col: int, msg: str) -> None:
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


# -- scenario model ---------------------------------------------------------


@dataclass(frozen=True)
class ActorSpec:
    name: str
    role: str
    allocation: int
    late: bool = False


@dataclass(frozen=True)
class Event:
    step: int
    action: str
    args: tuple
    line: int = 0

    @property
    def actor(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class Check:
    name: str
    args: tuple[str, ...] = ()
    line: int = 0

    def __str__(self) -> str:
        return " ".join((self.name, *self.args))


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    mode: str = HASH_LIST
    slot: int | None = None
    timeout: int = 10
    new_address_fee: int = 1
    bloom_k: int = 3
    max_steps: int = 200
    actors: list[ActorSpec] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def slot_len(self) -> int:
        return self.slot or DEFAULT_SLOT[self.mode]

    def actor(self, name: str) -> ActorSpec:
        for a in self.actors:
            if a.name == name:
                return a
        raise KeyError(name)


CHECK_ARITY = {
    "balance": 2,
    "scp_balance": 2,
    "chain_length": 1,
    "chains_equal": 0,
    "rejection": 2,
    "no_rejections": 0,
    "scp_agrees": 0,
    "own_bodies_only": 0,
    "no_overspend": 0,
    "onchain": 3,
    "not_onchain": 3,
}

_ACTION_ARITY = {"send": 4, "go_offline": 1, "go_online": 1}


def _int(tok: str, line: int, col: int) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise ScenarioError(line, col, f"expected an integer, got {tok!r}") from None
    if v < 0:
        raise ScenarioError(line, col, "expected a non-negative integer")
    return v


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    scn = Scenario(name=name)
    last_step = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        toks: list[tuple[str, int]] = []
        col = 0
        for part in body.split():
            col = body.index(part, col) + 1
            toks.append((part, col))
            col += len(part) - 1
        if not toks:
            continue
        word, c0 = toks[0]
        args = [t for t, _ in toks[1:]]
        cols = [c for _, c in toks[1:]]
        end_col = len(body.rstrip()) + 1

        def need(n: int) -> None:
            if len(args) < n:
                raise ScenarioError(lineno, end_col, f"'{word}' needs {n} argument(s)")
            if len(args) > n:
                raise ScenarioError(lineno, cols[n], f"unexpected token {args[n]!r}")

        if word == "seed":
            need(1)
            scn.seed = _int(args[0], lineno, cols[0])
        elif word == "mode":
            need(1)
            if args[0] not in HEADER_MODES:
                raise ScenarioError(lineno, cols[0], f"unknown mode {args[0]!r}")
            scn.mode = args[0]
        elif word == "max_steps":
            need(1)
            scn.max_steps = _int(args[0], lineno, cols[0])
        elif word == "param":
            need(2)
            key, value = args[0], _int(args[1], lineno, cols[1])
            if key == "slot":
                if value < 1:
                    raise ScenarioError(lineno, cols[1], "slot must be positive")
                scn.slot = value
            elif key == "timeout":
                scn.timeout = value
            elif key == "new_address_fee":
                scn.new_address_fee = value
            elif key == "k":
                if value < 1:
                    raise ScenarioError(lineno, cols[1], "k must be positive")
                scn.bloom_k = value
            else:
                raise ScenarioError(lineno, cols[0], f"unknown parameter {key!r}")
        elif word == "actor":
            if len(args) not in (3, 4):
                need(3)
            actor_name, role = args[0], args[1]
            if role not in ROLES:
                raise ScenarioError(lineno, cols[1], f"unknown role {role!r}")
            if any(a.name == actor_name for a in scn.actors):
                raise ScenarioError(lineno, cols[0], f"duplicate actor {actor_name!r}")
            late = False
            if len(args) == 4:
                if args[3] != "late":
                    raise ScenarioError(lineno, cols[3], f"unexpected token {args[3]!r}")
                late = True
            allocation = _int(args[2], lineno, cols[2])
            if late and allocation:
                raise ScenarioError(lineno, cols[2], "late actors cannot have a genesis allocation")
            scn.actors.append(ActorSpec(actor_name, role, allocation, late))
        elif word == "at":
            if len(args) < 2:
                raise ScenarioError(lineno, end_col, "'at' needs a step and an action")
            step = _int(args[0], lineno, cols[0])
            if step < last_step:
                raise ScenarioError(lineno, cols[0], "event steps must be non-decreasing")
            last_step = step
            action, rest, rest_cols = args[1], args[2:], cols[2:]
            if action == "adversary":
                if len(rest) < 2:
                    raise ScenarioError(lineno, end_col, "'adversary' needs an actor and a behavior")
                if rest[1] not in ADVERSARIES:
                    raise ScenarioError(lineno, rest_cols[1], f"unknown adversary behavior {rest[1]!r}")
                ev_args: tuple = tuple(rest)
            elif action in _ACTION_ARITY:
                n = _ACTION_ARITY[action]
                if len(rest) != n:
                    raise ScenarioError(lineno, cols[1], f"'{action}' needs {n} argument(s)")
                if action == "send":
                    ev_args = (rest[0], rest[1], _int(rest[2], lineno, rest_cols[2]), _int(rest[3], lineno, rest_cols[3]))
                    if ev_args[2] < 1:
                        raise ScenarioError(lineno, rest_cols[2], "amount must be positive")
                else:
                    ev_args = (rest[0],)
            else:
                raise ScenarioError(lineno, cols[1], f"unknown action {action!r}")
            scn.events.append(Event(step, action, ev_args, lineno))
        elif word == "expect":
            if not args:
                raise ScenarioError(lineno, end_col, "'expect' needs a check name")
            if args[0] not in CHECK_ARITY:
                raise ScenarioError(lineno, cols[0], f"unknown check {args[0]!r}")
            if len(args) - 1 != CHECK_ARITY[args[0]]:
                raise ScenarioError(lineno, cols[0], f"'{args[0]}' needs {CHECK_ARITY[args[0]]} argument(s)")
            scn.checks.append(Check(args[0], tuple(args[1:]), lineno))
        else:
            raise ScenarioError(lineno, c0, f"unknown directive {word!r}")

    if not scn.actors:
        raise ScenarioError(1, 1, "scenario declares no actors")
    if not any(a.role == "miner" for a in scn.actors):
        raise ScenarioError(1, 1, "scenario needs at least one miner")
    if all(a.late for a in scn.actors):
        raise ScenarioError(1, 1, "at least one actor must be registered at genesis")
    return scn


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    return parse_scenario(p.read_text(), p.stem)


def validate_scenario(scn: Scenario) -> None:
    """Reject references to unknown actors before anything runs."""
    names = {a.name for a in scn.actors}
    for ev in scn.events:
        refs = ev.args[:2] if ev.action == "send" else ev.args[:1]
        for ref in refs:
            if ref not in names:
                raise ScenarioError(ev.line, 1, f"unknown actor {ref!r}")
    for chk in scn.checks:
        refs = {"balance": 1, "scp_balance": 1, "onchain": 2, "not_onchain": 2}.get(chk.name, 0)
        for ref in chk.args[:refs]:
            if ref not in names:
                raise ScenarioError(chk.line, 1, f"unknown actor {ref!r}")


def actor_keys(name: str) -> tuple[SecretKey, PublicKey]:
    return keygen(hash256(b"superlight/actor/" + name.encode()))


def scenario_params(scn: Scenario) -> ChainParams:
    allocations = tuple((actor_keys(a.name)[1], a.allocation) for a in scn.actors if not a.late)
    return ChainParams(scn.mode, scn.bloom_k, scn.new_address_fee, allocations)


# -- report -----------------------------------------------------------------


@dataclass
class SimReport:
    scenario: str
    seed: int
    mode: str
    steps: int
    chain_length: int
    chain_tips: dict[str, str]
    chain_lengths: dict[str, int]
    oracle_balances: dict[str, int]
    scp_balances: dict[str, object]
    onchain: list[tuple[int, str, str, int, int]]
    rejected_headers: list[tuple[int, str, int, str]]
    rejected_txs: list[tuple[int, str, str, str, int, str]]
    evicted_txs: list[tuple[int, str, str, str, int, str]]
    admitted_overspends: list[tuple[int, str, str, int]]
    oracle_overspends: int
    foreign_bodies: list[str]
    honest: list[str]
    message_count: int
    verdicts: list[tuple[str, bool]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.verdicts)

    def render_text(self) -> str:
        out = [
            f"scenario: {self.scenario}",
            f"seed: {self.seed}",
            f"mode: {self.mode}",
            f"steps: {self.steps}",
            f"chain_length: {self.chain_length}",
            f"messages: {self.message_count}",
            "",
            "balances (oracle / scp):",
        ]
        for name in sorted(self.oracle_balances):
            out.append(f"  {name}: {self.oracle_balances[name]} / {self.scp_balances.get(name)}")
        out.append("chains:")
        for name in sorted(self.chain_tips):
            out.append(f"  {name}: length {self.chain_lengths[name]} tip {self.chain_tips[name][:16]}")
        out.append("on-chain transactions:")
        out += [f"  h{h} {s} -> {r} amount {a} fee {f}" for h, s, r, a, f in self.onchain]
        out.append("rejected headers:")
        out += [f"  step {st} {node} h{h} {code}" for st, node, h, code in self.rejected_headers]
        out.append("rejected transactions:")
        out += [f"  step {st} {node} {s} -> {r} amount {a} {why}" for st, node, s, r, a, why in self.rejected_txs]
        out.append("evicted transactions:")
        out += [f"  step {st} {node} {s} -> {r} amount {a} {why}" for st, node, s, r, a, why in self.evicted_txs]
        out.append(f"admitted overspends: {len(self.admitted_overspends)}")
        out.append(f"foreign bodies held: {', '.join(self.foreign_bodies) or 'none'}")
        out.append("verdicts:")
        out += [f"  {'PASS' if ok else 'FAIL'} {text}" for text, ok in self.verdicts]
        return "\n".join(out) + "\n"

    def render_kv(self) -> str:
        kv = [
            ("scenario", self.scenario),
            ("seed", self.seed),
            ("mode", self.mode),
            ("steps", self.steps),
            ("chain_length", self.chain_length),
            ("messages", self.message_count),
            ("rejected_headers", len(self.rejected_headers)),
            ("rejected_txs", len(self.rejected_txs)),
            ("admitted_overspends", len(self.admitted_overspends)),
        ]
        kv += [(f"balance.{n}", self.oracle_balances[n]) for n in sorted(self.oracle_balances)]
        kv += [(f"scp_balance.{n}", self.scp_balances[n]) for n in sorted(self.scp_balances)]
        kv += [(f"tip.{n}", self.chain_tips[n]) for n in sorted(self.chain_tips)]
        kv += [(f"check.{i}", f"{'pass' if ok else 'fail'} {t}") for i, (t, ok) in enumerate(self.verdicts)]
        kv.append(("passed", str(self.passed).lower()))
        return "".join(f"{k}={v}\n" for k, v in kv)


def assert_report(report: SimReport, checks: Iterable[Check]) -> list[tuple[str, bool]]:
    results = []
    for chk in checks:
        if chk.name not in CHECK_ARITY:
            raise ValueError(f"unknown check {chk.name!r}")
        a = chk.args
        if chk.name == "balance":
            ok = report.oracle_balances.get(a[0]) == int(a[1])
        elif chk.name == "scp_balance":
            ok = report.scp_balances.get(a[0]) == int(a[1])
        elif chk.name == "chain_length":
            ok = report.chain_length == int(a[0])
        elif chk.name == "chains_equal":
            ok = len({report.chain_tips[n] for n in report.honest}) == 1
        elif chk.name == "rejection":
            kind, code = a
            if kind == "header":
                ok = any(c == code for *_, c in report.rejected_headers)
            elif kind == "tx":
                ok = any(r[-1] == code for r in report.rejected_txs)
            else:
                raise ValueError(f"rejection kind must be header or tx, not {kind!r}")
        elif chk.name == "no_rejections":
            ok = not report.rejected_headers and not report.rejected_txs
        elif chk.name == "scp_agrees":
            ok = all(report.scp_balances[n] == report.oracle_balances[n] for n in report.oracle_balances)
        elif chk.name == "own_bodies_only":
            ok = not report.foreign_bodies
        elif chk.name == "no_overspend":
            ok = not report.admitted_overspends and not report.oracle_overspends
        else:
            found = any(s == a[0] and r == a[1] and amt == int(a[2]) for _, s, r, amt, _ in report.onchain)
            ok = found if chk.name == "onchain" else not found
        results.append((str(chk), ok))
    return results


# -- simulation -------------------------------------------------------------


@dataclass
class _Actor:
    spec: ActorSpec
    state: ClientState
    miner: MinerState | None = None
    online: bool = True
    held: list = field(default_factory=list)
    behaviors: dict[str, tuple[str, ...]] = field(default_factory=dict)
    # txid -> (core, sender_sig, proof, receiver key) awaiting the receiver's endorsement
    outbox: dict[bytes, tuple] = field(default_factory=dict)
    first_proof: SelfContainedProof | None = None
    pending_block: PendingBlock | None = None
    deferred: list[Transaction] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.spec.name


class Simulation:
    def __init__(self, scn: Scenario, seed: int | None = None) -> None:
        validate_scenario(scn)
        self.scn = scn
        self.seed = scn.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.params = scenario_params(scn)
        self.keys = {a.name: actor_keys(a.name) for a in scn.actors}
        self.names_by_addr = {address_of(pk): n for n, (_, pk) in self.keys.items()}
        secret = {address_of(pk): sk for sk, pk in self.keys.values()}
        self.genesis = build_genesis(self.params, secret)
        self.actors: dict[str, _Actor] = {}
        for spec in scn.actors:
            state = ClientState(self.keys[spec.name][0], self.params)
            actor = _Actor(spec, state)
            if spec.role == "miner":
                actor.miner = MinerState(state)
            self.actors[spec.name] = actor
        self.miners = [a.name for a in scn.actors if a.role == "miner"]
        self.queue: list = []
        self.seq = 0
        self.edge_clock: dict[tuple[str, str], int] = {}
        self.in_flight = 0
        self.now = 0
        self.message_count = 0
        self.block_contents: dict[bytes, list[TxCore]] = {}
        self.rejected_headers: list = []
        self.rejected_txs: list = []
        self.evicted_txs: list = []
        self.admitted_overspends: list = []

    # scheduling

    def _push(self, step: int, actor: str, kind: str, data: object) -> None:
        heapq.heappush(self.queue, (step, actor, self.seq, kind, data))
        self.seq += 1

    def send(self, src: str, dst: str, kind: str, payload: bytes) -> None:
        self.message_count += 1
        at = max(self.now + self.rng.randint(1, 3), self.edge_clock.get((src, dst), 0))
        self.edge_clock[(src, dst)] = at
        self.in_flight += 1
        self._push(at, dst, "deliver", (src, kind, payload))

    def broadcast(self, src: str, kind: str, payload: bytes, to: Iterable[str] | None = None) -> None:
        for name in sorted(self.actors if to is None else to):
            if name != src:
                self.send(src, name, kind, payload)

    def name_of(self, addr: bytes) -> str:
        return self.names_by_addr.get(addr, addr.hex()[:8])

    def _log_tx(self, log: list, node: str, core: TxCore, reason: str) -> None:
        log.append((self.now, node, self.name_of(core.sender), self.name_of(core.receiver), core.amount, reason))

    # main loop

    def run(self) -> SimReport:
        enc = encode_header(self.genesis)
        for actor in self.actors.values():
            self._on_header(actor, decode_header(enc), relay=False)
        for ev in self.scn.events:
            self._push(ev.step, ev.actor, "action", ev)
        self.pending_actions = len(self.scn.events)
        self._push(self.scn.slot_len, self.miners[0], "slot", 1)
        while self.queue:
            step, name, _, kind, data = heapq.heappop(self.queue)
            if step > self.scn.max_steps:
                break
            self.now = step
            actor = self.actors[name]
            if kind == "deliver":
                self.in_flight -= 1
                if actor.online:
                    self._deliver(actor, *data)
                else:
                    actor.held.append(data)
            elif kind == "action":
                self.pending_actions -= 1
                self._action(actor, data)
            elif kind == "slot":
                if self._quiescent():
                    break
                self._slot(actor, data)
                nxt = data + 1
                self._push(step + self.scn.slot_len, self.miners[(nxt - 1) % len(self.miners)], "slot", nxt)
            elif kind == "deadline":
                self._deadline(actor, data)
        return self._report()

    def _quiescent(self) -> bool:
        if self.pending_actions or self.in_flight:
            return False
        for a in self.actors.values():
            # stale pending_out entries alone keep nothing moving
            if a.outbox or a.held or a.pending_block or a.deferred:
                return False
            if a.miner is not None and a.miner.pool:
                return False
        return True

    # actions

    def _action(self, actor: _Actor, ev: Event) -> None:
        if ev.action == "go_offline":
            actor.online = False
        elif ev.action == "go_online":
            actor.online = True
            held, actor.held = actor.held, []
            for msg in held:
                self._deliver(actor, *msg)
        elif ev.action == "adversary":
            actor.behaviors[ev.args[1]] = tuple(ev.args[2:])
        elif ev.action == "send":
            self._start_send(actor, self.actors[ev.args[1]], ev.args[2], ev.args[3])

    def _start_send(self, actor: _Actor, receiver: _Actor, amount: int, fee: int) -> None:
        state = actor.state
        probe = TxCore(state.address, receiver.state.address, amount, fee, state.nonce_counter)
        if not actor.online:
            self._log_tx(self.rejected_txs, actor.name, probe, "SenderOffline")
            return
        adversarial = "omit_bucket_tx" in actor.behaviors or "double_proof_reuse" in actor.behaviors
        try:
            core, sig, proof = client_create_tx(state, receiver.state.pk, amount, fee, check_funds=not adversarial)
        except InsufficientFunds:
            self._log_tx(self.rejected_txs, actor.name, probe, "InsufficientFunds")
            return
        if actor.first_proof is None:
            actor.first_proof = proof
        if "double_proof_reuse" in actor.behaviors:
            proof = actor.first_proof
        if "omit_bucket_tx" in actor.behaviors:
            proof = omit_bucket_tx(proof, state.address)
        actor.outbox[core.id] = (core, sig, proof, receiver.state.pk)
        self.send(actor.name, receiver.name, "tx_request", core.encode())

    # message handling

    def _deliver(self, actor: _Actor, src: str, kind: str, payload: bytes) -> None:
        handler = {
            "tx_request": self._on_tx_request,
            "tx_endorse": self._on_tx_endorse,
            "tx_submit": self._on_tx_submit,
            "header": self._on_header_bytes,
            "propose": self._on_propose,
            "endorse": self._on_endorse,
        }[kind]
        try:
            handler(actor, src, payload)
        except DecodeError as exc:
            self.rejected_txs.append((self.now, actor.name, src, "-", 0, f"DecodeError:{exc}"))

    def _on_tx_request(self, actor: _Actor, src: str, payload: bytes) -> None:
        r = Reader(payload)
        core = TxCore.read(r)
        r.finish()
        if self.scn.mode == HASH_LIST and "drop_endorsements" in actor.behaviors:
            self._log_tx(self.rejected_txs, actor.name, core, "EndorsementRefused")
            return
        try:
            sig = receiver_endorse(actor.state, core)
        except EndorsementRefused:
            self._log_tx(self.rejected_txs, actor.name, core, "EndorsementRefused")
            return
        self.send(actor.name, src, "tx_endorse", core.id + sig.data)

    def _on_tx_endorse(self, actor: _Actor, src: str, payload: bytes) -> None:
        txid, sig = payload[:32], Signature.from_bytes(payload[32:])
        entry = actor.outbox.pop(txid, None)
        if entry is None:
            return
        core, sender_sig, proof, receiver_pk = entry
        tx = finish_tx(actor.state, core, sender_sig, sig, proof, receiver_pk)
        self._submit(actor, tx)

    def _submit(self, actor: _Actor, tx: Transaction) -> None:
        data = encode_transaction(tx)
        if actor.miner is not None:
            self._admit(actor, tx)
        self.broadcast(actor.name, "tx_submit", data, to=self.miners)

    def _on_tx_submit(self, actor: _Actor, src: str, payload: bytes) -> None:
        if actor.miner is not None:
            self._admit(actor, decode_transaction(payload))

    def _admit(self, actor: _Actor, tx: Transaction) -> None:
        res = miner_admit_tx(actor.miner, tx)
        if res.admitted:
            self._audit_admission(actor, tx)
        elif res.reason == "AheadOfTip":
            actor.deferred.append(tx)
        elif res.reason != "Duplicate":
            self._log_tx(self.rejected_txs, actor.name, tx.core, res.reason)

    def _audit_admission(self, actor: _Actor, tx: Transaction) -> None:
        """Cross-check an admission with the oracle on the miner's own chain."""
        oracle = self._oracle(actor.state.headers)
        sender = self.name_of(tx.core.sender)
        load = sum(t.core.amount + t.core.fee for t in actor.miner.pool.values() if t.core.sender == tx.core.sender)
        if oracle.balance(sender) < load:
            self.admitted_overspends.append((self.now, actor.name, sender, tx.core.amount))

    def _on_header(self, actor: _Actor, header: BlockHeader, relay: bool = True) -> None:
        before = len(actor.state.rejection_log)
        if actor.miner is not None:
            accepted, dropped = miner_on_header(actor.miner, header)
            for tx, why in dropped:
                self._log_tx(self.evicted_txs, actor.name, tx.core, why)
        else:
            accepted = client_on_header(actor.state, header)
        for height, code in actor.state.rejection_log[before:]:
            self.rejected_headers.append((self.now, actor.name, height, code))
        if not accepted:
            return
        if relay:
            self.broadcast(actor.name, "header", encode_header(header))
        if actor.deferred:
            deferred, actor.deferred = actor.deferred, []
            for tx in deferred:
                self._admit(actor, tx)
        if actor.state.pending_out and not actor.behaviors and bloom_query(header.bloom, actor.state.address):
            for tx in refresh_pending(actor.state):
                self._submit(actor, tx)

    def _on_header_bytes(self, actor: _Actor, src: str, payload: bytes) -> None:
        self._on_header(actor, decode_header(payload))

    def _on_propose(self, actor: _Actor, src: str, payload: bytes) -> None:
        if "drop_endorsements" in actor.behaviors:
            return
        triple = client_on_proposal(actor.state, decode_proposal(payload))
        if triple is not None:
            self.send(actor.name, src, "endorse", encode_triple(triple))

    def _on_endorse(self, actor: _Actor, src: str, payload: bytes) -> None:
        pending = actor.pending_block
        if pending is None:
            return
        result = phase2_collect(pending, [decode_triple(payload)], final=False)
        if isinstance(result, BlockHeader):
            self._publish(actor, result, pending)

    # block production

    def _slot(self, actor: _Actor, slot_no: int) -> None:
        if not actor.online or actor.pending_block is not None:
            return
        self._propose(actor, None, rounds=1)

    def _propose(self, actor: _Actor, txs: list[Transaction] | None, rounds: int) -> None:
        msg, pending = miner_assemble_block(actor.miner, txs)
        if msg.kind == PUBLISH:
            self._publish(actor, msg.payload, None, txs if txs is not None else None)
            return
        pending.rounds = rounds
        actor.pending_block = pending
        own = client_on_proposal(actor.state, msg.payload) if "drop_endorsements" not in actor.behaviors else None
        if own is not None:
            phase2_collect(pending, [own], final=False)
        self.broadcast(actor.name, "propose", encode_proposal(msg.payload))
        self._push(self.now + self.scn.timeout, actor.name, "deadline", pending)

    def _deadline(self, actor: _Actor, pending: PendingBlock) -> None:
        if actor.pending_block is not pending:
            return
        result = phase2_collect(pending, [], final=True)
        if isinstance(result, BlockHeader):
            self._publish(actor, result, pending)
            return
        actor.pending_block = None
        assert isinstance(result, RePropose)
        for tx in result.dropped:
            actor.miner.pool.pop(tx.id, None)
            self._log_tx(self.rejected_txs, actor.name, tx.core, "EndorsementTimeout")
        self._propose(actor, list(result.remaining), pending.rounds + 1)

    def _publish(
        self,
        actor: _Actor,
        header: BlockHeader,
        pending: PendingBlock | None,
        txs: list[Transaction] | None = None,
    ) -> None:
        if pending is not None:
            actor.pending_block = None
            cores = [tx.core for tx in pending.txs]
            sigs = [pending.endorsements[a] for a in sorted(pending.endorsements)]
        else:
            chosen = txs if txs is not None else sorted(actor.miner.pool.values(), key=lambda t: (-t.core.fee, t.id))
            cores = [tx.core for tx in chosen]
            sigs = [s for tx in chosen for s in (tx.sender_sig, tx.receiver_sig)]
        if "rogue_bloom_all_ones" in actor.behaviors:
            header = rogue_bloom(header, sigs, actor.state.sk)
        self.block_contents[header_hash(header)] = cores
        self._on_header(actor, header, relay=False)
        self.broadcast(actor.name, "header", encode_header(header))

    # report

    def _oracle(self, headers: list[BlockHeader]):
        allocations = {a.name: a.allocation for a in self.scn.actors if a.allocation}
        blocks = []
        for h in headers[1:]:
            cores = self.block_contents.get(header_hash(h), [])
            blocks.append([(self.name_of(c.sender), self.name_of(c.receiver), c.amount, c.fee) for c in cores])
        return replay(allocations, blocks)

    def _report(self) -> SimReport:
        honest = [n for n in sorted(self.actors) if not self.actors[n].behaviors]
        chains = {n: a.state.headers for n, a in self.actors.items()}
        ref_name = max(honest or sorted(self.actors), key=lambda n: len(chains[n]))
        reference = chains[ref_name]
        oracle = self._oracle(reference)
        onchain = []
        for h in reference[1:]:
            for c in self.block_contents.get(header_hash(h), []):
                onchain.append((h.height, self.name_of(c.sender), self.name_of(c.receiver), c.amount, c.fee))
        scp_balances: dict[str, object] = {}
        for name, a in sorted(self.actors.items()):
            try:
                scp_balances[name] = spendable_balance(a.state.proof(), a.state.address, a.state.headers, a.state.registry)
            except (ProofError, LostTransaction) as exc:
                scp_balances[name] = f"error:{type(exc).__name__}"
        foreign = []
        for name, a in sorted(self.actors.items()):
            addr = a.state.address
            held = [tx for e in a.state.archive.values() for tx in e.txs]
            held += list(a.state.known_txs.values()) + [t.core for t in a.state.pending_out.values()]
            if a.miner is not None:
                held += [t.core for t in a.miner.pool.values()]
            if any(not tx.involves(addr) for tx in held):
                foreign.append(name)
        report = SimReport(
            scenario=self.scn.name,
            seed=self.seed,
            mode=self.scn.mode,
            steps=self.now,
            chain_length=len(reference),
            chain_tips={n: header_hash(c[-1]).hex() for n, c in sorted(chains.items())},
            chain_lengths={n: len(c) for n, c in sorted(chains.items())},
            oracle_balances={a.name: oracle.balance(a.name) for a in self.scn.actors},
            scp_balances=scp_balances,
            onchain=onchain,
            rejected_headers=self.rejected_headers,
            rejected_txs=self.rejected_txs,
            evicted_txs=self.evicted_txs,
            admitted_overspends=self.admitted_overspends,
            oracle_overspends=len(oracle.overspends),
            foreign_bodies=foreign,
            honest=honest,
            message_count=self.message_count,
        )
        report.verdicts = assert_report(report, self.scn.checks)
        return report


def run_scenario(scn: Scenario, seed: int | None = None) -> SimReport:
    return Simulation(scn, seed).run()


# -- adversary helpers ------------------------------------------------------


def omit_bucket_tx(proof: SelfContainedProof, addr: bytes) -> SelfContainedProof:
    """Example-1 style fraud: drop one debit from the newest unit that has two."""
    units = list(proof.units)
    for i, unit in enumerate(units):
        debits = [tx for tx in unit.bucket_txs if tx.sender == addr]
        if len(debits) >= 2:
            kept = tuple(tx for tx in unit.bucket_txs if tx is not debits[-1])
            units[i] = ProofUnit(unit.height, kept, unit.merkle_path)
            break
    return SelfContainedProof(tuple(units))


def rogue_bloom(header: BlockHeader, sigs: list[Signature], sk: SecretKey) -> BlockHeader:
    """Set every filter bit and re-seal with whatever signatures the miner holds."""
    bloom = BloomFilter.all_ones(header.bloom.bit_len, header.bloom.k)
    unsigned = BlockHeader(
        header.height, header.prev_hash, header.new_addresses, bloom, header.commitment, header.agg_sig, header.proposer_index
    )
    return seal_header(unsigned, sigs, sk)
