"""Seeded workload generation: key columns, lookup batches, file round-trip.

Everything here is a pure function of its spec (including the seed), so
any experiment can be regenerated bit-for-bit. Key generation and lookup
generation use separate derived RNG streams; the same numeric seed may be
used for both without correlating them.

Zipf-skewed lookups draw key ranks, rank 1 being the smallest distinct
stored key (ascending key order); the result CSV flags this choice in its
experiment fingerprint so the convention travels with the data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .encoding import _as_u64_array
from .errors import (
    DomainOverflow,
    EmptyInput,
    ExactHitCountNeedsDenseKeys,
    RxError,
)

KEY_PATTERNS = ("dense", "strided", "uniform32", "uniform64", "zipf")
LOOKUP_KINDS = ("point", "range")
MISS_PLACEMENTS = ("gaps", "outofrange")

_WKLD_MAGIC = b"RXWKLD1"
_KIND_TAGS = {"keys": 0, "points": 1, "ranges": 2}
_KIND_NAMES = {v: k for k, v in _KIND_TAGS.items()}

_U64_MAX = (1 << 64) - 1


@dataclass(frozen=True)
class KeySpec:
    """Distinct-key pattern, duplication factor, ordering, seed."""

    count: int  # distinct keys before multiplicity
    seed: int
    pattern: str = "dense"
    stride: int = 1
    theta: float = 1.0  # zipf pattern only
    multiplicity: int = 1
    sorted: bool = False

    def __post_init__(self) -> None:
        if self.pattern not in KEY_PATTERNS:
            raise ValueError(f"pattern must be one of {KEY_PATTERNS}")
        if self.count < 1:
            raise EmptyInput("key count must be at least 1")
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be at least 1")
        if self.pattern == "strided" and self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.pattern == "zipf" and self.theta < 0:
            raise ValueError("theta must be non-negative")


@dataclass(frozen=True)
class LookupSpec:
    """Lookup batch shape: kind, hit rate, skew, ordering, batching, seed."""

    count: int
    seed: int
    kind: str = "point"
    range_hits: int = 1  # intended hits per range (the span on dense keys)
    hit_rate: float = 1.0
    zipf: float = 0.0
    sorted: bool = False
    batches: int = 1
    miss_placement: str = "outofrange"

    def __post_init__(self) -> None:
        if self.kind not in LOOKUP_KINDS:
            raise ValueError(f"kind must be one of {LOOKUP_KINDS}")
        if self.miss_placement not in MISS_PLACEMENTS:
            raise ValueError(f"miss_placement must be one of {MISS_PLACEMENTS}")
        if self.count < 1:
            raise EmptyInput("lookup count must be at least 1")
        if not 0.0 <= self.hit_rate <= 1.0:
            raise ValueError("hit_rate must be within [0, 1]")
        if self.zipf < 0:
            raise ValueError("zipf theta must be non-negative")
        if self.kind == "range" and self.range_hits < 1:
            raise ValueError("range_hits must be at least 1")
        if self.batches < 1 or self.batches > self.count:
            raise ValueError("batches must be in [1, count]")


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def zipf_ranks(rng: np.random.Generator, draws: int, num_ranks: int, theta: float) -> np.ndarray:
    """0-based ranks, rank 0 most likely; theta=0 degenerates to uniform."""
    if num_ranks < 1:
        raise EmptyInput("need at least one rank")
    if theta == 0.0:
        return rng.integers(0, num_ranks, size=draws, dtype=np.int64)
    w = np.arange(1, num_ranks + 1, dtype=np.float64) ** -float(theta)
    cum = np.cumsum(w)
    cum /= cum[-1]
    return np.searchsorted(cum, rng.random(draws), side="right").astype(np.int64)


def gen_keys(spec: KeySpec) -> tuple[np.ndarray, np.ndarray]:
    """(keys, values): the key column and its aggregation values column.

    values[i] is simply the rowID i, which makes every aggregate sum an
    independently checkable quantity.
    """
    rng = _rng(spec.seed, 0)
    n = spec.count
    if spec.pattern == "dense":
        base = np.arange(n, dtype=np.uint64)
    elif spec.pattern == "strided":
        if n * spec.stride > _U64_MAX:
            raise DomainOverflow(
                f"count {n} * stride {spec.stride} exceeds the 64-bit key space"
            )
        base = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(spec.stride)
    elif spec.pattern == "uniform32":
        base = rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    elif spec.pattern == "uniform64":
        base = rng.integers(0, _U64_MAX, size=n, dtype=np.uint64, endpoint=True)
    else:  # zipf over the value range [0, n)
        base = zipf_ranks(rng, n, n, spec.theta).astype(np.uint64)
    keys = np.repeat(base, spec.multiplicity)
    if spec.sorted:
        keys = np.sort(keys)
    else:
        keys = rng.permutation(keys)
    values = np.arange(keys.size, dtype=np.int64)
    return keys, values


def _absent_in_span(rng, uniq: np.ndarray, need: int) -> np.ndarray:
    """Sample absent keys strictly inside [min, max] of the stored keys."""
    lo = int(uniq[0])
    hi = int(uniq[-1])
    span = hi - lo + 1
    gaps = span - uniq.size
    if gaps <= 0:
        raise RxError("key set is dense on its span; no in-domain gaps exist")
    if span <= 4 * uniq.size + 4096:
        absent = np.setdiff1d(
            np.arange(lo, hi + 1, dtype=np.uint64), uniq, assume_unique=True
        )
        return absent[rng.integers(0, absent.size, size=need, dtype=np.int64)]
    out = []
    got = 0
    while got < need:
        cand = rng.integers(lo, hi, size=max(64, 2 * (need - got)), dtype=np.uint64, endpoint=True)
        pos = np.searchsorted(uniq, cand)
        pos = np.minimum(pos, uniq.size - 1)
        absent = cand[uniq[pos] != cand]
        out.append(absent[: need - got])
        got += out[-1].size
    return np.concatenate(out)


def gen_lookups(spec: LookupSpec, keys, require_exact: bool = False) -> np.ndarray:
    """Lookup batch over the stored keys: (n,) points or (n, 2) ranges.

    Hits draw (optionally Zipf-skewed) ranks of the distinct stored keys;
    misses are placed per spec. require_exact enforces the dense-key setup
    under which every range returns exactly range_hits rows.
    """
    uniq = np.unique(_as_u64_array(np.asarray(keys)))
    if uniq.size == 0:
        raise EmptyInput("cannot generate lookups for an empty key column")
    rng = _rng(spec.seed, 1)
    n = spec.count
    n_hits = int(round(n * spec.hit_rate))
    n_miss = n - n_hits
    hit_mask = np.zeros(n, dtype=bool)
    hit_mask[rng.permutation(n)[:n_hits]] = True

    if spec.kind == "point":
        out = np.empty(n, dtype=np.uint64)
        out[hit_mask] = uniq[zipf_ranks(rng, n_hits, uniq.size, spec.zipf)]
        if n_miss:
            out[~hit_mask] = _miss_points(rng, uniq, n_miss, spec.miss_placement)
        if spec.sorted:
            out = np.sort(out)
        return out

    s = spec.range_hits
    if require_exact:
        dense = uniq.size == int(uniq[-1]) - int(uniq[0]) + 1
        if not dense:
            raise ExactHitCountNeedsDenseKeys(
                "exact per-range hit counts need a gap-free key set"
            )
        eligible = uniq.size - s + 1
        if eligible < 1:
            raise ExactHitCountNeedsDenseKeys(
                f"span {s} exceeds the {uniq.size} distinct keys"
            )
    else:
        eligible = uniq.size
    if n_miss and spec.miss_placement == "gaps":
        raise ValueError(
            "range misses need out-of-range placement; a gap lower bound "
            "does not keep the whole span empty"
        )
    lows = np.empty(n, dtype=np.uint64)
    lows[hit_mask] = uniq[zipf_ranks(rng, n_hits, eligible, spec.zipf)]
    if n_miss:
        top = int(uniq[-1])
        first_free = top + 1
        last_free = _U64_MAX - (s - 1)
        if first_free > last_free:
            raise DomainOverflow(
                "no room above the maximum stored key for miss ranges"
            )
        lows[~hit_mask] = rng.integers(
            first_free, last_free, size=n_miss, dtype=np.uint64, endpoint=True
        )
    wrap_guard = np.uint64(_U64_MAX - (s - 1))
    highs = np.where(
        lows > wrap_guard, np.uint64(_U64_MAX), lows + np.uint64(s - 1)
    )
    out = np.stack([lows, highs], axis=1)
    if spec.sorted:
        order = np.lexsort((out[:, 1], out[:, 0]))
        out = out[order]
    return out


def _miss_points(rng, uniq, need, placement) -> np.ndarray:
    if placement == "outofrange":
        top = int(uniq[-1])
        if top >= _U64_MAX:
            raise DomainOverflow("no key space above the maximum stored key")
        return rng.integers(top + 1, _U64_MAX, size=need, dtype=np.uint64, endpoint=True)
    return _absent_in_span(rng, uniq, need)


def save_workload(path, kind: str, data: np.ndarray) -> None:
    """Write keys/points/ranges as the flat seekable interchange format."""
    if kind not in _KIND_TAGS:
        raise ValueError(f"kind must be one of {tuple(_KIND_TAGS)}")
    arr = _as_u64_array(np.asarray(data))
    if kind == "ranges":
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("ranges payload must have shape (n, 2)")
        count = arr.shape[0]
    else:
        if arr.ndim != 1:
            raise ValueError("keys/points payload must be one-dimensional")
        count = arr.size
    with open(path, "wb") as f:
        f.write(_WKLD_MAGIC)
        f.write(bytes([_KIND_TAGS[kind]]))
        f.write(struct.pack("<Q", count))
        f.write(np.ascontiguousarray(arr, dtype="<u8").tobytes())


def load_workload(path) -> tuple[str, np.ndarray]:
    try:
        f = open(path, "rb")
    except OSError as e:
        raise RxError(f"cannot read workload file {path}: {e.strerror}") from e
    with f:
        magic = f.read(len(_WKLD_MAGIC))
        if magic != _WKLD_MAGIC:
            raise RxError("not a workload file (bad magic)")
        tag = f.read(1)
        if len(tag) != 1 or tag[0] not in _KIND_NAMES:
            raise RxError("unknown workload kind tag")
        kind = _KIND_NAMES[tag[0]]
        raw = f.read(8)
        if len(raw) != 8:
            raise RxError("truncated workload file")
        (count,) = struct.unpack("<Q", raw)
        per = 2 if kind == "ranges" else 1
        payload = f.read(8 * per * count)
        if len(payload) != 8 * per * count:
            raise RxError("truncated workload file")
        arr = np.frombuffer(payload, dtype="<u8").astype(np.uint64)
    return kind, arr.reshape(count, 2) if kind == "ranges" else arr
