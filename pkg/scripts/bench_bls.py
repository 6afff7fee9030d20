"""Timing harness for the signature primitives. Reports numbers only.

    python3 scripts/bench_bls.py --reps 20 --max-n 64
"""

import argparse
import statistics
import time

from superlight.crypto import (
    SignTriple,
    bls_aggregate,
    bls_aggregate_verify,
    bls_sign,
    bls_verify,
    hash256,
    keygen,
)


def timed(fn, reps: int) -> float:
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--max-n", type=int, default=64)
    args = ap.parse_args()

    keys = [keygen(hash256(b"bench" + i.to_bytes(4, "big"))) for i in range(args.max_n)]
    sk, pk = keys[0]
    counter = iter(range(10**9))

    # fresh messages each time so the hash-to-curve cache does not flatter the numbers
    def sign_fresh():
        bls_sign(sk, b"m" + next(counter).to_bytes(8, "big"))

    print(f"sign                {timed(sign_fresh, args.reps) * 1e3:8.2f} ms")
    msg = b"fixed message"
    sig = bls_sign(sk, msg)
    print(f"verify (cached H)   {timed(lambda: bls_verify(pk, msg, sig), args.reps) * 1e3:8.2f} ms")

    n = 1
    while n <= args.max_n:
        msgs = [b"agg" + i.to_bytes(4, "big") for i in range(n)]
        sigs = [bls_sign(s, m) for (s, _), m in zip(keys, msgs)]
        triples = [SignTriple(p, m) for (_, p), m in zip(keys, msgs)]
        agg = bls_aggregate(sigs)
        t_agg = timed(lambda: bls_aggregate(sigs), args.reps)
        # results are cached per input, so only the first call is a real verification
        t0 = time.perf_counter()
        bls_aggregate_verify(triples, agg)
        t_ver = time.perf_counter() - t0
        print(f"n={n:4d} aggregate {t_agg * 1e3:8.2f} ms   aggregate_verify {t_ver * 1e3:8.2f} ms")
        n *= 2


if __name__ == "__main__":
    main()
