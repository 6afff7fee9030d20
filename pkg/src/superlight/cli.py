"""Command-line entry point.

Exit codes: 0 success, 1 scenario assertions failed, 2 usage, parse or decode
error. The output directory can also be set with SUPERLIGHT_OUT.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path

import click

from .bloom import DEFAULT_K, growth_csv, growth_experiment
from .crypto import DecodeError
from .dump import format_chain, format_header, format_proof
from .ledger import decode_header, decode_proof, encode_header, encode_proof
from .scp import LostTransaction
from .simnet import ScenarioError, Simulation, parse_scenario
from .vectors import golden_vectors

DEFAULT_SEED = 0
OUT_ENV = "SUPERLIGHT_OUT"


def write_atomic(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def bundled_scenarios() -> list[str]:
    root = resources.files("superlight") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def _scenario_text(path: str) -> tuple[str, str]:
    p = Path(path)
    if p.is_file():
        return p.read_text(), p.stem
    name = p.name[:-4] if p.name.endswith(".scn") else p.name
    if p.parent == Path(".") and name in bundled_scenarios():
        res = resources.files("superlight") / "scenarios" / f"{name}.scn"
        return res.read_text(), name
    raise click.UsageError(f"no such scenario file: {path}")


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


@click.group()
def main() -> None:
    """Superlight light-client blockchain toolkit."""


@main.command()
@click.argument("scenario")
@click.option("--seed", type=int, default=None, help="Override the scenario's seed.")
@click.option("--out", type=click.Path(file_okay=False), envvar=OUT_ENV, default=None,
              help=f"Directory for the report and chain dumps (env {OUT_ENV}).")
@click.option("--kv", is_flag=True, help="Print key=value output instead of the text report.")
def simulate(scenario: str, seed: int | None, out: str | None, kv: bool) -> None:
    """Run a scenario file (or the name of a bundled scenario)."""
    text, name = _scenario_text(scenario)
    try:
        scn = parse_scenario(text, name)
        sim = Simulation(scn, seed)
    except ScenarioError as exc:
        _fail(f"{scenario}: {exc}")
    report = sim.run()
    click.echo(report.render_kv() if kv else report.render_text(), nl=False)
    if out is not None:
        root = Path(out)
        write_atomic(root / "report.txt", report.render_text())
        write_atomic(root / "report.kv", report.render_kv())
        for node, actor in sorted(sim.actors.items()):
            node_dir = root / "nodes" / node
            for h in actor.state.headers:
                write_atomic(node_dir / "chain" / f"{h.height:06d}.hdr", encode_header(h))
            try:
                proof = actor.state.proof()
            except LostTransaction:  # a node with lost buckets has no proof to dump
                continue
            write_atomic(node_dir / "proof.scp", encode_proof(proof))
    sys.exit(0 if report.passed else 1)


@main.command("list-scenarios")
def list_scenarios() -> None:
    """List the bundled scenarios."""
    for name in bundled_scenarios():
        click.echo(name)


def _int_list(ctx, param, value: str) -> list[int]:
    try:
        values = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter("expected comma-separated integers") from None
    if not values or any(v < 1 for v in values):
        raise click.BadParameter("expected positive integers")
    return values


def measured_m(n: int, stride: int) -> list[int]:
    """Participant counts stride, 2*stride, ... below n (just n when n <= stride)."""
    return list(range(stride, n, stride)) or [n]


@main.command("bloom-growth")
@click.option("--n", "n_values", default="100,500,1000", callback=_int_list, show_default=True,
              help="Registry sizes, comma separated.")
@click.option("--stride", type=click.IntRange(min=1), default=10, show_default=True, help="Step between participant counts.")
@click.option("--k", type=click.IntRange(min=1), default=DEFAULT_K, show_default=True, help="Hash functions per address.")
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True, help="Seed for the synthetic addresses.")
@click.option("--schedule", type=click.Choice(["linear", "doubling"]), default="linear", show_default=True,
              help="Size search: every size from 1 up, or doubling then bisection.")
@click.option("--plot/--no-plot", default=True, show_default=True, help="Also write growth.svg (needs matplotlib).")
@click.option("--out", type=click.Path(file_okay=False), envvar=OUT_ENV, required=True,
              help=f"Output directory (env {OUT_ENV}).")
def bloom_growth(n_values: list[int], stride: int, k: int, seed: int, schedule: str, plot: bool, out: str) -> None:
    """Perfect Bloom filter size against the number of participating addresses."""
    root = Path(out)
    results = {}
    summary = ["n,rows,max_perfect_bits,max_ratio_to_baseline,all_below_baseline"]
    for n in n_values:
        records = growth_experiment(n, measured_m(n, stride), k, seed, schedule)
        results[n] = records
        write_atomic(root / f"growth_n{n}.csv", growth_csv(records))
        ratio = max(r.perfect_bits / r.baseline_bits for r in records)
        below = all(r.perfect_bits < r.baseline_bits for r in records)
        summary.append(f"{n},{len(records)},{max(r.perfect_bits for r in records)},{ratio:.4f},{str(below).lower()}")
        click.echo(f"n={n}: {len(records)} rows, max {max(r.perfect_bits for r in records)} bits")
    write_atomic(root / "summary.csv", "\n".join(summary) + "\n")
    if plot:
        try:
            svg = growth_svg(results)
        except ImportError:
            click.echo("matplotlib not installed; skipping growth.svg", err=True)
        else:
            write_atomic(root / "growth.svg", svg)


def growth_svg(results: dict) -> str:
    import io

    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "superlight"
    fig, ax = plt.subplots(figsize=(6, 4))
    for n, records in sorted(results.items()):
        ax.plot([r.m for r in records], [r.perfect_bits for r in records], label=f"{n} addresses")
    ax.set_xlabel("participating addresses")
    ax.set_ylabel("perfect filter size (bits)")
    ax.legend()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


@main.command()
@click.argument("path", type=click.Path(exists=True))
def dump(path: str) -> None:
    """Print a header (.hdr), a chain directory or a proof (.scp)."""
    p = Path(path)
    try:
        if p.is_dir():
            files = sorted(p.glob("*.hdr")) or sorted(p.glob("chain/*.hdr"))
            if not files:
                _fail(f"{path}: no .hdr files")
            click.echo(format_chain([decode_header(f.read_bytes()) for f in files]), nl=False)
        elif p.suffix == ".scp":
            click.echo(format_proof(decode_proof(p.read_bytes())), nl=False)
        else:
            click.echo(format_header(decode_header(p.read_bytes())), nl=False)
    except (DecodeError, ValueError) as exc:
        _fail(f"{path}: cannot decode: {exc}")


@main.command()
def vectors() -> None:
    """Print the wire-format test vectors as JSON."""
    click.echo(json.dumps(golden_vectors(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
