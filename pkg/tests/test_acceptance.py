"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line; the lines are
repeated in the pytest terminal summary. Run directly for just the lines:

    python3 tests/test_acceptance.py
"""

from __future__ import annotations

import hashlib
import random
import sys
import time
from importlib import resources
from pathlib import Path


sys.path.insert(0, str(Path(__file__).parent))

from helpers import random_equivalence_run  # noqa: E402
from superlight.bloom import build_perfect_bloom, growth_experiment  # noqa: E402
from superlight.crypto import SignTriple, bls_aggregate, bls_aggregate_verify, bls_sign, bls_verify, hash256, keygen  # noqa: E402
from superlight.merkle import merkle_prove, merkle_root, merkle_verify  # noqa: E402
from superlight.simnet import Simulation, load_scenario  # noqa: E402

RESULTS: list[str] = []
SCENARIOS = resources.files("superlight") / "scenarios"


def record(n: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# 1 -----------------------------------------------------------------------------


def test_1_bloom_growth():
    t0 = time.perf_counter()
    records = growth_experiment(500, range(10, 500, 10), k=3, seed=0)
    elapsed = time.perf_counter() - t0
    at400 = next(r.perfect_bits for r in records if r.m == 400)
    below = all(r.perfect_bits < r.baseline_bits for r in records)
    ok = at400 <= 6000 and below and elapsed < 60
    record(1, ok, f"n=500 m=400 -> {at400} bits (<= 6000); all m in 10..490 below 256*m: {below}; {elapsed:.1f}s (< 60s)")


# 2 -----------------------------------------------------------------------------


def _ref_query(bit_len: int, k: int, bits: int, addr: bytes) -> bool:
    h1 = int.from_bytes(hashlib.sha256(b"\x05" + addr).digest()[:8], "little")
    h2 = int.from_bytes(hashlib.sha256(b"\x06" + addr).digest()[:8], "little")
    return all(bits >> ((h1 + i * h2) % bit_len) & 1 for i in range(k))


def test_2_perfect_filter_property():
    rng = random.Random(2)
    cases = violations = 0
    for _ in range(1000):
        n = rng.randint(1, 200)
        registry = [rng.randbytes(32) for _ in range(n)]
        members = set(rng.sample(registry, rng.randint(0, n)))
        f = build_perfect_bloom(members, registry, k=rng.randint(1, 5))
        cases += 1
        violations += sum(_ref_query(f.bit_len, f.k, f.bits, a) != (a in members) for a in registry)
    record(2, cases >= 1000 and violations == 0, f"{cases} random cases, {violations} false positives/negatives")


# 3 -----------------------------------------------------------------------------


def test_3_merkle_suite():
    from test_merkle import ref_root, run_mutations

    failures = 0
    pairs = 0
    for n in range(1, 17):
        leaves = [hashlib.sha256(bytes([n, i])).digest() for i in range(n)]
        root = merkle_root(leaves)
        failures += root != ref_root(leaves)
        for i in range(n):
            pairs += 1
            failures += not merkle_verify(leaves[i], merkle_prove(leaves, i), root)
    tried, accepted = run_mutations(10_000, seed=3)
    ok = failures == 0 and tried >= 10_000 and accepted == 0
    record(3, ok, f"{pairs} (size, index) round trips, {failures} failures; {tried} mutations, {accepted} accepted")


# 4 -----------------------------------------------------------------------------


def test_4_bls_aggregate_equals_conjunction():
    rng = random.Random(4)
    keys = [keygen(hash256(b"acceptance-4" + bytes([i]))) for i in range(10)]
    spare_sk, spare_pk = keys[9]
    mismatches = instances = mutations = survived = 0
    for n in range(1, 9):
        for trial in range(4):
            msgs = [rng.randbytes(8) for _ in range(n)]
            triples, sigs = [], []
            for i in range(n):
                sk, pk = keys[i]
                # sometimes sign the wrong message so the conjunction is false
                signed = msgs[i] if trial == 0 or rng.random() < 0.8 else msgs[i] + b"!"
                sigs.append(bls_sign(sk, signed))
                triples.append(SignTriple(pk, msgs[i]))
            agg = bls_aggregate(sigs)
            conj = all(bls_verify(t.pk, t.msg, s) for t, s in zip(triples, sigs))
            instances += 1
            mismatches += bls_aggregate_verify(triples, agg) != conj
            if not conj:
                continue
            for i in range(n):
                t = triples[i]
                variants = [
                    SignTriple(spare_pk, t.msg),
                    SignTriple(t.pk, t.msg + b"x"),
                ]
                for v in variants:
                    mutations += 1
                    survived += bls_aggregate_verify(triples[:i] + [v] + triples[i + 1 :], agg)
                # swap in a signature on another message for this signer
                mutations += 1
                other = bls_sign(keys[i][0], t.msg + b"y")
                survived += bls_aggregate_verify(triples, bls_aggregate(sigs[:i] + [other] + sigs[i + 1 :]))
    ok = mismatches == 0 and survived == 0
    record(4, ok, f"{instances} instances n<=8, {mismatches} mismatches; {mutations} single-triple mutations, {survived} accepted")


# 5 -----------------------------------------------------------------------------

RUNS_PER_MODE = 300


def test_5_scp_oracle_equivalence():
    t0 = time.perf_counter()
    runs = compared = 0
    problems: list[str] = []
    for seed in range(RUNS_PER_MODE):
        for mode in ("hash_list", "merkle_root"):
            c, p = random_equivalence_run(seed, mode)
            runs += 1
            compared += c
            problems += p
    elapsed = time.perf_counter() - t0
    ok = runs >= 500 and not problems and elapsed < 300
    detail = f"{runs} random chains, {compared} verdicts compared, {len(problems)} disagreements, {elapsed:.0f}s (< 300s)"
    if problems:
        detail += "; first: " + problems[0]
    record(5, ok, detail)


# 6 -----------------------------------------------------------------------------


def _run(name: str):
    scn = load_scenario(SCENARIOS / f"{name}.scn")
    sim = Simulation(scn)
    return sim, sim.run()


def test_6_attack_scenarios():
    notes = []
    ok = True
    for name, code in (("rogue_bloom", "BLOOM_MISMATCH"), ("rogue_bloom_merkle", "MINT_OUTSIDE_GENESIS")):
        sim, rep = _run(name)
        rogue_heights = {h for _, node, h, c in rep.rejected_headers if c == code}
        rejecters = {node for _, node, _, c in rep.rejected_headers if c == code}
        all_reject = set(rep.honest) <= rejecters
        chains_ok = len({rep.chain_tips[n] for n in rep.honest}) == 1
        ok &= rep.passed and all_reject and chains_ok and bool(rogue_heights)
        notes.append(f"(a) {name}: rejected by {len(rejecters & set(rep.honest))}/{len(rep.honest)} honest nodes")
    for name in ("omission", "omission_merkle"):
        _, rep = _run(name)
        ok &= rep.passed and any(r[-1] == "InvalidProof" for r in rep.rejected_txs)
        notes.append(f"(b) {name}: InvalidProof {rep.passed}")
    _, rep = _run("spent_proof_replay")
    ok &= rep.passed and not any(s == "alice" and r == "carol" for _, s, r, _, _ in rep.onchain)
    notes.append(f"(c) spent_proof_replay: {[r[-1] for r in rep.rejected_txs][:1]}")
    record(6, ok, "; ".join(notes))


# 7 -----------------------------------------------------------------------------


def test_7_end_to_end_use_case():
    notes = []
    ok = True
    for name in ("alice_bob", "alice_bob_merkle"):
        sim, rep = _run(name)
        balances = {n: rep.oracle_balances[n] for n in ("alice", "bob", "carol")}
        want = {"alice": 59, "bob": 14, "carol": 25}
        clients = [sim.actors[n].state.headers for n in ("alice", "bob", "carol")]
        same = clients[0] == clients[1] == clients[2]
        bob_cites = any(
            u.bucket_txs and u.bucket_txs[0].receiver == sim.actors["bob"].state.address
            for u in sim.actors["bob"].state.proof().units
        )
        good = balances == want and same and not rep.foreign_bodies and rep.scp_balances["bob"] == 14 and bob_cites
        ok &= good
        notes.append(f"{name}: {balances}, identical chains {same}, foreign bodies {rep.foreign_bodies or 'none'}")
    record(7, ok, "; ".join(notes))


# 8 -----------------------------------------------------------------------------


def test_8_determinism(tmp_path):
    from click.testing import CliRunner

    from superlight.cli import bundled_scenarios, main

    runner = CliRunner()
    differing = []
    names = bundled_scenarios()
    for name in names:
        outs = []
        for i in range(2):
            d = tmp_path / f"{name}-{i}"
            runner.invoke(main, ["simulate", name, "--out", str(d)])
            outs.append({str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
        if outs[0] != outs[1] or not outs[0]:
            differing.append(name)
    record(8, not differing, f"{len(names)} scenarios run twice, byte-identical reports and chain dumps; differing: {differing or 'none'}")


if __name__ == "__main__":
    import tempfile

    for fn in [test_1_bloom_growth, test_2_perfect_filter_property, test_3_merkle_suite,
               test_4_bls_aggregate_equals_conjunction, test_5_scp_oracle_equivalence,
               test_6_attack_scenarios, test_7_end_to_end_use_case]:
        try:
            fn()
        except AssertionError:
            pass
    with tempfile.TemporaryDirectory() as d:
        try:
            test_8_determinism(Path(d))
        except AssertionError:
            pass
