"""Experiment harness: build, validate against the oracle, run, emit CSV.

A run is a pure function of (index choice, key spec, lookup spec), so the
emitted CSV is byte-identical across repeats except for the wall-clock
column, which is informational only. The real performance observables are
the deterministic work counters.

Every experiment starts with a warmup pass that doubles as a correctness
gate: a subsample of the lookups is answered both by the index under test
and by the sort-scan oracle, and any disagreement aborts the experiment
with OracleMismatch before a single row is written.

The checksum column folds the per-query aggregate sums (values[rowID]
summed over each query's hits, miss marker for empty results) into one
64-bit value, ordered by query position; every index must produce the
same checksum for the same workload.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, fields

import numpy as np

from .baselines import BPlusTreeIndex, HashTableIndex, SortedArrayIndex
from .encoding import Mode
from .errors import OracleMismatch, RxError
from .index import build_index
from .oracle import point_oracle, range_oracle, results_equal
from .workloads import KeySpec, LookupSpec, gen_keys, gen_lookups

INDEX_NAMES = ("rx", "sa", "ht", "bp")
CSV_COLUMNS = (
    "index", "mode", "primitive", "experiment", "seed", "run", "batch",
    "keys", "lookups", "hit_rate", "zipf", "multiplicity", "range_hits",
    "nodes_visited", "aabb_tests", "primitive_tests", "probe_slots",
    "comparisons", "checksum", "wall_ms",
)
CSV_HEADER = ",".join(CSV_COLUMNS)

_COUNTER_COLUMNS = (
    "nodes_visited", "aabb_tests", "primitive_tests", "probe_slots", "comparisons",
)

_PHI = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)


def fold_checksum(sums: np.ndarray) -> int:
    """Position-sensitive 64-bit fold of the per-query aggregate sums."""
    if sums.size == 0:
        return 0
    with np.errstate(over="ignore"):
        z = sums.astype(np.uint64) ^ (np.arange(sums.size, dtype=np.uint64) * _PHI)
        z ^= z >> np.uint64(30)
        z *= _MIX_A
        z ^= z >> np.uint64(27)
        z *= _MIX_B
        z ^= z >> np.uint64(31)
    return int(np.bitwise_xor.reduce(z))


@dataclass
class ExperimentRecord:
    """One CSV row; field order is the column order."""

    index: str
    mode: str
    primitive: str
    experiment: str
    seed: str
    run: int
    batch: int
    keys: int
    lookups: int
    hit_rate: float
    zipf: float
    multiplicity: int
    range_hits: int
    nodes_visited: int
    aabb_tests: int
    primitive_tests: int
    probe_slots: int
    comparisons: int
    checksum: int
    wall_ms: float

    def as_row(self) -> list:
        vals = []
        for f in fields(self):
            v = getattr(self, f.name)
            vals.append(f"{v:.3f}" if f.name == "wall_ms" else v)
        return vals


def build_named_index(
    name: str,
    keys,
    *,
    mode: Mode | None = None,
    primitive_kind: str = "triangle",
    compaction: bool = True,
    refittable: bool = False,
    max_leaf_size: int = 4,
    ray_fan_cap: int = 4096,
    origin_style: str = "offset",
    seed: int = 0,
):
    """One entry point for all four index families."""
    if name == "rx":
        return build_index(
            keys,
            mode=mode,
            primitive_kind=primitive_kind,
            compaction=compaction,
            refittable=refittable,
            max_leaf_size=max_leaf_size,
            ray_fan_cap=ray_fan_cap,
            origin_style=origin_style,
        )
    if name == "sa":
        return SortedArrayIndex.build(keys)
    if name == "ht":
        return HashTableIndex.build(keys, seed=seed)
    if name == "bp":
        return BPlusTreeIndex.build(keys)
    raise ValueError(f"index must be one of {INDEX_NAMES}, got {name!r}")


def _lookup(index, lookups: np.ndarray):
    if lookups.ndim == 2:
        return index.range_lookup_batch(lookups[:, 0], lookups[:, 1])
    return index.point_lookup_batch(lookups)


def _oracle(keys, lookups: np.ndarray):
    if lookups.ndim == 2:
        return range_oracle(keys, lookups[:, 0], lookups[:, 1])
    return point_oracle(keys, lookups)


def validate_against_oracle(index, keys, lookups: np.ndarray, sample: int = 1024) -> None:
    """Answer a lookup subsample twice and require exact agreement."""
    sub = lookups[: min(sample, lookups.shape[0])]
    got = _lookup(index, sub)
    want = _oracle(keys, sub)
    if not results_equal(got, want):
        diff = np.nonzero(got.hit_counts != want.hit_counts)[0]
        where = int(diff[0]) if diff.size else -1
        raise OracleMismatch(
            f"index answers disagree with the sort-scan oracle "
            f"(first differing query: {where})"
        )


def run_experiment(
    index_name: str,
    key_spec: KeySpec,
    lookup_spec: LookupSpec,
    *,
    runs: int = 1,
    experiment: str = "adhoc",
    mode: Mode | None = None,
    primitive_kind: str = "triangle",
    compaction: bool = True,
    refittable: bool = False,
    max_leaf_size: int = 4,
    ray_fan_cap: int = 4096,
    origin_style: str = "offset",
    require_exact: bool = False,
    warmup_validate: bool = True,
    csv_out=None,
) -> list[ExperimentRecord]:
    """Generate the workload, build one index, run, return CSV records.

    csv_out may be a path or a writable text file; header plus one row per
    (run, batch) are written when given.
    """
    if index_name not in INDEX_NAMES:
        raise ValueError(f"index must be one of {INDEX_NAMES}, got {index_name!r}")
    if mode is None:
        mode = Mode.three_d()
    keys, values = gen_keys(key_spec)
    lookups = gen_lookups(lookup_spec, keys, require_exact=require_exact)
    if index_name == "ht" and lookups.ndim == 2:
        raise RxError("hash table index does not answer range lookups")

    index = build_named_index(
        index_name,
        keys,
        mode=mode,
        primitive_kind=primitive_kind,
        compaction=compaction,
        refittable=refittable,
        max_leaf_size=max_leaf_size,
        ray_fan_cap=ray_fan_cap,
        origin_style=origin_style,
        seed=key_spec.seed,
    )
    if warmup_validate:
        validate_against_oracle(index, keys, lookups)

    if key_spec.seed == lookup_spec.seed:
        seed_label = str(key_spec.seed)
    else:
        seed_label = f"{key_spec.seed}:{lookup_spec.seed}"
    exp_label = experiment
    if lookup_spec.zipf > 0:
        exp_label = f"{experiment}|zipf-ranks=sorted"
    mode_label = str(mode) if index_name == "rx" else "-"
    prim_label = primitive_kind if index_name == "rx" else "-"
    range_hits = lookup_spec.range_hits if lookup_spec.kind == "range" else 0

    batch_slices = np.array_split(np.arange(lookups.shape[0]), lookup_spec.batches)
    records = []
    for run in range(runs):
        for b, sl in enumerate(batch_slices):
            chunk = lookups[sl]
            t0 = time.perf_counter()
            res = _lookup(index, chunk)
            wall_ms = (time.perf_counter() - t0) * 1e3
            totals = res.totals()
            sums = res.sums(values)
            records.append(ExperimentRecord(
                index=index_name,
                mode=mode_label,
                primitive=prim_label,
                experiment=exp_label,
                seed=seed_label,
                run=run,
                batch=b,
                keys=keys.size,
                lookups=lookups.shape[0],
                hit_rate=lookup_spec.hit_rate,
                zipf=lookup_spec.zipf,
                multiplicity=key_spec.multiplicity,
                range_hits=range_hits,
                checksum=fold_checksum(sums),
                wall_ms=wall_ms,
                **{c: totals.get(c, 0) for c in _COUNTER_COLUMNS},
            ))
    if csv_out is not None:
        write_csv(csv_out, records)
    return records


def write_csv(out, records: list) -> None:
    """Write header plus rows to a path or text stream."""
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as f:
            _write_csv_stream(f, records)
    else:
        _write_csv_stream(out, records)


def _write_csv_stream(f, records) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.as_row())


def records_to_csv_text(records: list) -> str:
    buf = io.StringIO()
    _write_csv_stream(buf, records)
    return buf.getvalue()
