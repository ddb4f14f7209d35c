"""Command line front end.

Subcommands mirror the library workflow: generate keys, generate lookups
against those keys, build and save an index, answer a lookup file, run a
benchmark that emits one CSV, and fit the affine cost model to a CSV.

Generators require an explicit --seed; there is no silent entropy source
anywhere, so every artifact is reproducible from its command line.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import backend
from .costmodel import fit_cost_model
from .encoding import Mode
from .errors import OracleMismatch, RxError
from .harness import INDEX_NAMES, run_experiment, write_csv
from .index import build_index, load_index, save_index
from .workloads import (
    KEY_PATTERNS,
    KeySpec,
    LookupSpec,
    gen_keys,
    gen_lookups,
    load_workload,
    save_workload,
)


def _parse_mode(name: str, bits: str) -> Mode:
    if name == "naive":
        return Mode.naive()
    if name == "extended":
        return Mode.extended()
    try:
        bx, by, bz = (int(p) for p in bits.split(","))
    except ValueError:
        raise RxError(f"--bits wants X,Y,Z integers, got {bits!r}")
    return Mode.three_d(bx, by, bz)


def _add_key_spec_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--pattern", choices=KEY_PATTERNS, default="dense")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--theta", type=float, default=1.0,
                   help="zipf pattern skew for key draws")
    p.add_argument("--multiplicity", type=int, default=1,
                   help="copies of each distinct key")
    p.add_argument("--keys-sorted", action="store_true")


def _add_lookup_spec_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--kind", choices=("point", "range"), default="point")
    p.add_argument("--range-hits", type=int, default=1,
                   help="stored rows each range should cover")
    p.add_argument("--hit-rate", type=float, default=1.0)
    p.add_argument("--zipf", type=float, default=0.0,
                   help="skew of hit draws over distinct keys, 0 = uniform")
    p.add_argument("--lookups-sorted", action="store_true")
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("--miss-placement", choices=("gaps", "outofrange"),
                   default="outofrange")
    p.add_argument("--require-exact", action="store_true",
                   help="fail instead of approximating the per-range hit count")


def _add_rx_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("naive", "extended", "3d"), default="3d")
    p.add_argument("--bits", default="23,23,18",
                   help="3d mode bit split as X,Y,Z (low to high)")
    p.add_argument("--primitive", choices=("triangle", "sphere", "aabb"),
                   default="triangle")
    p.add_argument("--no-compaction", action="store_true")
    p.add_argument("--refittable", action="store_true")
    p.add_argument("--leaf-size", type=int, default=4)
    p.add_argument("--fan-cap", type=int, default=4096,
                   help="abort threshold for 3d range ray fans")
    p.add_argument("--origin-style", choices=("offset", "zero"), default="offset")


def _key_spec(args) -> KeySpec:
    return KeySpec(
        count=args.count,
        seed=args.seed,
        pattern=args.pattern,
        stride=args.stride,
        theta=args.theta,
        multiplicity=args.multiplicity,
        sorted=args.keys_sorted,
    )


def _lookup_spec(args, count: int, seed: int) -> LookupSpec:
    return LookupSpec(
        count=count,
        seed=seed,
        kind=args.kind,
        range_hits=args.range_hits,
        hit_rate=args.hit_rate,
        zipf=args.zipf,
        sorted=args.lookups_sorted,
        batches=args.batches,
        miss_placement=args.miss_placement,
    )


def cmd_gen_keys(args) -> int:
    keys, _values = gen_keys(_key_spec(args))
    save_workload(args.out, "keys", keys)
    print(f"wrote {keys.size} keys ({np.unique(keys).size} distinct) to {args.out}")
    return 0


def cmd_gen_lookups(args) -> int:
    kind, keys = load_workload(args.keys)
    if kind != "keys":
        raise RxError(f"{args.keys} holds {kind}, not keys")
    spec = _lookup_spec(args, args.count, args.seed)
    lookups = gen_lookups(spec, keys, require_exact=args.require_exact)
    save_workload(args.out, "points" if spec.kind == "point" else "ranges", lookups)
    print(f"wrote {spec.count} {spec.kind} lookups to {args.out}")
    return 0


def cmd_build(args) -> int:
    kind, keys = load_workload(args.keys)
    if kind != "keys":
        raise RxError(f"{args.keys} holds {kind}, not keys")
    mode = _parse_mode(args.mode, args.bits)
    idx = build_index(
        keys,
        mode=mode,
        primitive_kind=args.primitive,
        compaction=not args.no_compaction,
        refittable=args.refittable,
        max_leaf_size=args.leaf_size,
        ray_fan_cap=args.fan_cap,
        origin_style=args.origin_style,
    )
    save_index(idx, args.out)
    tree = idx.tree
    print(f"built {mode} {args.primitive} index over {keys.size} keys: "
          f"{tree.node_count} nodes, {tree.footprint_bytes()} bytes; saved to {args.out}")
    return 0


def cmd_lookup(args) -> int:
    idx = load_index(args.index)
    kind, payload = load_workload(args.lookups)
    if kind == "keys":
        raise RxError(f"{args.lookups} holds keys, not lookups")
    if kind == "ranges":
        res = idx.range_lookup_batch(payload[:, 0], payload[:, 1])
    else:
        res = idx.point_lookup_batch(payload)
    hits = res.hit_counts
    counters = ", ".join(f"{k}={v}" for k, v in res.totals().items())
    print(f"{res.num_queries} queries: {int(hits.sum())} hits, "
          f"{int((hits == 0).sum())} misses; {counters}")
    if args.out:
        with open(args.out, "w") as f:
            for i in range(res.num_queries):
                rows = res.rows_for(i)
                line = " ".join(str(int(r)) for r in rows) if rows.size else "-"
                f.write(line + "\n")
        print(f"per-query rows written to {args.out}")
    return 0


def cmd_bench(args) -> int:
    names = list(INDEX_NAMES) if args.index == "all" else [args.index]
    if args.kind == "range" and "ht" in names:
        if args.index == "all":
            names.remove("ht")
            print("note: skipping ht, it answers point lookups only", file=sys.stderr)
    mode = _parse_mode(args.mode, args.bits)
    key_spec = KeySpec(
        count=args.keys,
        seed=args.seed,
        pattern=args.pattern,
        stride=args.stride,
        theta=args.theta,
        multiplicity=args.multiplicity,
        sorted=args.keys_sorted,
    )
    lookup_spec = _lookup_spec(args, args.lookups, args.seed)
    records = []
    for name in names:
        records.extend(run_experiment(
            name, key_spec, lookup_spec,
            runs=args.runs,
            experiment=args.experiment,
            mode=mode,
            primitive_kind=args.primitive,
            compaction=not args.no_compaction,
            refittable=args.refittable,
            max_leaf_size=args.leaf_size,
            ray_fan_cap=args.fan_cap,
            origin_style=args.origin_style,
            require_exact=args.require_exact,
        ))
    if args.csv == "-":
        write_csv(sys.stdout, records)
    else:
        write_csv(args.csv, records)
        print(f"wrote {len(records)} rows to {args.csv}")
    return 0


def cmd_fit_cost(args) -> int:
    import csv as csvmod
    from collections import defaultdict

    cols = [c.strip() for c in args.cost.split("+") if c.strip()]
    per_group = defaultdict(float)
    lookups = {}
    with open(args.csv) as f:
        for row in csvmod.DictReader(f):
            if args.index and row["index"] != args.index:
                continue
            key = (int(row["range_hits"]), int(row["run"]))
            per_group[key] += sum(float(row[c]) for c in cols)
            lookups[key] = int(row["lookups"])
    if not per_group:
        raise RxError("no matching rows in the CSV")
    spans = defaultdict(list)
    for (s, _run), total in per_group.items():
        spans[s].append(total / lookups[(s, _run)])
    obs = [(s, float(np.mean(costs))) for s, costs in sorted(spans.items())]
    fit = fit_cost_model(obs)
    print(f"cost({args.cost}) = {fit.traversal:.4f} + s * {fit.intersect:.4f}  "
          f"(residual {fit.residual:.4f}, R^2 {fit.r_squared:.6f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rxindex",
        description="key lookups answered by ray casts against a bounding volume hierarchy",
    )
    ap.add_argument("--backend", choices=("auto", "numba", "numpy"), default=None,
                    help="kernel backend override for this invocation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-keys", help="generate a key file")
    p.add_argument("--seed", type=int, required=True)
    _add_key_spec_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_keys)

    p = sub.add_parser("gen-lookups", help="generate a lookup file against a key file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--keys", required=True, help="key file from gen-keys")
    _add_lookup_spec_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_lookups)

    p = sub.add_parser("build", help="build an index from a key file and save it")
    p.add_argument("--keys", required=True)
    _add_rx_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("lookup", help="answer a lookup file with a saved index")
    p.add_argument("--index", required=True, help="index file from build")
    p.add_argument("--lookups", required=True, help="lookup file from gen-lookups")
    p.add_argument("--out", help="write per-query row ids here")
    p.set_defaults(fn=cmd_lookup)

    p = sub.add_parser("bench", help="run an experiment and emit CSV")
    p.add_argument("--index", choices=INDEX_NAMES + ("all",), default="all")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--keys", type=int, required=True, help="number of keys")
    p.add_argument("--pattern", choices=KEY_PATTERNS, default="dense")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--multiplicity", type=int, default=1)
    p.add_argument("--keys-sorted", action="store_true")
    p.add_argument("--lookups", type=int, required=True, help="number of lookups")
    p.add_argument("--kind", choices=("point", "range"), default="point")
    p.add_argument("--range-hits", type=int, default=1)
    p.add_argument("--hit-rate", type=float, default=1.0)
    p.add_argument("--zipf", type=float, default=0.0)
    p.add_argument("--lookups-sorted", action="store_true")
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("--miss-placement", choices=("gaps", "outofrange"),
                   default="outofrange")
    p.add_argument("--require-exact", action="store_true")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--experiment", default="bench")
    _add_rx_args(p)
    p.add_argument("--csv", default="-", help="output path, - for stdout")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("fit-cost", help="fit cost = A + s*B to a bench CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--index", default="rx", help="index name to fit, empty for all rows")
    p.add_argument("--cost", default="primitive_tests",
                   help="counter columns to sum, joined by +")
    p.set_defaults(fn=cmd_fit_cost)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.backend and args.backend != "auto":
        backend.set_backend(args.backend)
    try:
        return args.fn(args)
    except OracleMismatch as e:
        print(f"oracle mismatch: {e}", file=sys.stderr)
        return 2
    except RxError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
