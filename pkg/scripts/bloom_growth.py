"""Perfect Bloom filter growth for 100, 500 and 1000 registered addresses.

Writes one CSV per registry size plus summary.csv (and growth.svg when
matplotlib is available) to the output directory, then prints the n=500,
m=400 point and the largest size-to-baseline ratio.

    python3 scripts/bloom_growth.py --out results/growth
"""

import argparse
import time
from pathlib import Path

from superlight.bloom import growth_csv, growth_experiment
from superlight.cli import growth_svg, measured_m, write_atomic


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", default="100,500,1000")
    ap.add_argument("--stride", type=int, default=10)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--schedule", choices=["linear", "doubling"], default="linear")
    ap.add_argument("--out", default="results/growth")
    args = ap.parse_args()

    out = Path(args.out)
    results = {}
    for n in (int(v) for v in args.n.split(",")):
        t0 = time.perf_counter()
        records = growth_experiment(n, measured_m(n, args.stride), args.k, args.seed, args.schedule)
        results[n] = records
        write_atomic(out / f"growth_n{n}.csv", growth_csv(records))
        worst = max(records, key=lambda r: r.perfect_bits / r.baseline_bits)
        print(f"n={n:5d} rows={len(records):3d} max_bits={max(r.perfect_bits for r in records):6d} "
              f"worst_ratio={worst.perfect_bits / worst.baseline_bits:.3f} (m={worst.m}) "
              f"time={time.perf_counter() - t0:.1f}s")
        for r in records:
            if r.m == 400:
                print(f"         m=400 perfect_bits={r.perfect_bits}")
    try:
        write_atomic(out / "growth.svg", growth_svg(results))
    except ImportError:
        print("matplotlib not installed; no plot written")


if __name__ == "__main__":
    main()
