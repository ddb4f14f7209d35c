"""Order-preserving mappings from 64-bit keys to float32 scene coordinates.

Three modes:

* naive: x = float(k), limited to k < 2^23 (above that, adjacent integers
  collapse onto the same float32).
* extended: x = bit_cast<float32>(2*k + C) with C the bit pattern of 0.5f.
  Positive float32 bit patterns sort like the floats themselves, so the
  mapping is order-preserving up to k < 2^29. Keys sit 2 ULPs apart and the
  odd patterns in between are the gap values.
* 3d: the key is bit-split into (x, y, z) components, most significant in z,
  so (z, y, x) compares lexicographically like the key.

Every encoded coordinate is exactly representable in float32; callers can do
exact arithmetic on the lattice.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import KeyOutOfDomain, NotAValidEncoding

NAIVE_LIMIT = 1 << 23
EXTENDED_LIMIT = 1 << 29
# bit pattern of float32 0.5, the offset that keeps all encodings positive
EXTENDED_OFFSET = 0x3F000000
# a component value above this cannot carry half-unit gaps in float32
COMPONENT_LIMIT = 1 << 23

U64_MASK = (1 << 64) - 1


class CoordTriple(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Decomposition:
    """Bit widths for the 3d split; x holds the least significant bits."""

    bits_x: int
    bits_y: int
    bits_z: int

    def __post_init__(self) -> None:
        widths = (self.bits_x, self.bits_y, self.bits_z)
        if any(b < 0 for b in widths) or sum(widths) != 64:
            raise ValueError(
                "decomposition widths must be non-negative and sum to 64, "
                f"got {widths}"
            )

    @property
    def high_bits(self) -> int:
        """Width of the combined non-x part (one ray per distinct value)."""
        return 64 - self.bits_x


DEFAULT_DECOMPOSITION = Decomposition(23, 23, 18)


@dataclass(frozen=True)
class Mode:
    """Encoding mode tag plus the 3d split when applicable."""

    kind: str  # "naive" | "extended" | "3d"
    decomposition: Decomposition | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("naive", "extended", "3d"):
            raise ValueError(f"unknown mode kind {self.kind!r}")
        if self.kind == "3d" and self.decomposition is None:
            object.__setattr__(self, "decomposition", DEFAULT_DECOMPOSITION)
        if self.kind != "3d" and self.decomposition is not None:
            raise ValueError("decomposition only applies to 3d mode")

    @staticmethod
    def naive() -> "Mode":
        return Mode("naive")

    @staticmethod
    def extended() -> "Mode":
        return Mode("extended")

    @staticmethod
    def three_d(bits_x: int = 23, bits_y: int = 23, bits_z: int = 18) -> "Mode":
        return Mode("3d", Decomposition(bits_x, bits_y, bits_z))

    def __str__(self) -> str:
        if self.kind == "3d":
            d = self.decomposition
            return f"3d({d.bits_x},{d.bits_y},{d.bits_z})"
        return self.kind


def _as_u64_array(keys) -> np.ndarray:
    arr = np.asarray(keys)
    if arr.size == 0:
        return arr.astype(np.uint64)
    if arr.dtype == np.uint64:
        return arr
    if arr.dtype.kind == "i":
        if arr.size and arr.min() < 0:
            raise KeyOutOfDomain("negative key; normalize_to_u64 first")
        return arr.astype(np.uint64)
    if arr.dtype.kind == "u":
        return arr.astype(np.uint64)
    raise TypeError(f"keys must be integers, got dtype {arr.dtype}")


def decompose(keys, decomp: Decomposition) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split u64 keys into (x, y, z) component value arrays."""
    ks = _as_u64_array(keys)
    bx, by = np.uint64(decomp.bits_x), np.uint64(decomp.bits_y)
    mask_x = np.uint64((1 << decomp.bits_x) - 1)
    mask_y = np.uint64((1 << decomp.bits_y) - 1)
    x = ks & mask_x
    y = (ks >> bx) & mask_y
    shift_z = np.uint64(decomp.bits_x + decomp.bits_y)
    z = ks >> shift_z if decomp.bits_z else np.zeros_like(ks)
    return x, y, z


def in_domain(keys, mode: Mode) -> np.ndarray:
    """Boolean mask: which keys the mode can encode exactly."""
    ks = _as_u64_array(keys)
    if mode.kind == "naive":
        return ks < NAIVE_LIMIT
    if mode.kind == "extended":
        return ks < EXTENDED_LIMIT
    x, y, z = decompose(ks, mode.decomposition)
    lim = np.uint64(COMPONENT_LIMIT)
    return (x < lim) & (y < lim) & (z < lim)


def max_encodable(mode: Mode) -> int | None:
    """Largest key of a contiguous [0, m] domain, or None if gappy.

    naive/extended domains are plain prefixes. A 3d domain is a prefix iff
    every field below the highest nonzero-width field is unconstrained
    (width <= 23); then only the top field caps the key range.
    """
    if mode.kind == "naive":
        return NAIVE_LIMIT - 1
    if mode.kind == "extended":
        return EXTENDED_LIMIT - 1
    d = mode.decomposition
    widths = [d.bits_x, d.bits_y, d.bits_z]
    nonzero = [i for i, w in enumerate(widths) if w > 0]
    top = nonzero[-1] if nonzero else 0
    if any(widths[i] > 23 for i in nonzero[:-1]):
        return None
    shift = sum(widths[:top])
    top_cap = min(widths[top], 23)
    m = (1 << (shift + top_cap)) - 1
    return min(m, U64_MASK)


def encode_array(keys, mode: Mode, validate: bool = True) -> np.ndarray:
    """Encode u64 keys to an (N, 3) float32 coordinate array."""
    ks = _as_u64_array(keys)
    if validate:
        ok = in_domain(ks, mode)
        if not np.all(ok):
            bad = int(ks[np.argmin(ok)])
            raise KeyOutOfDomain(f"key {bad} not encodable in mode {mode}")
    out = np.zeros((ks.size, 3), dtype=np.float32)
    if mode.kind == "naive":
        out[:, 0] = ks.astype(np.float32)
    elif mode.kind == "extended":
        patterns = (ks * np.uint64(2) + np.uint64(EXTENDED_OFFSET)).astype(np.uint32)
        out[:, 0] = patterns.view(np.float32)
    else:
        x, y, z = decompose(ks, mode.decomposition)
        out[:, 0] = x.astype(np.float32)
        out[:, 1] = y.astype(np.float32)
        out[:, 2] = z.astype(np.float32)
    return out


def encode(key: int, mode: Mode) -> CoordTriple:
    """Encode one key; raises KeyOutOfDomain when the mode cannot hold it."""
    coords = encode_array(np.asarray([key], dtype=np.uint64), mode)[0]
    return CoordTriple(float(coords[0]), float(coords[1]), float(coords[2]))


def _f32_bits(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def _check_f32_exact(c: float) -> float:
    f = float(np.float32(c))
    if f != float(c):
        raise NotAValidEncoding(f"coordinate {c!r} is not a float32 value")
    return f


def decode(coords, mode: Mode) -> int:
    """Invert encode; raises NotAValidEncoding for off-lattice coordinates."""
    x, y, z = (_check_f32_exact(c) for c in coords)
    if mode.kind in ("naive", "extended") and (y != 0.0 or z != 0.0):
        raise NotAValidEncoding("y and z must be zero in this mode")
    if mode.kind == "naive":
        if x < 0 or x >= NAIVE_LIMIT or not float(x).is_integer():
            raise NotAValidEncoding(f"{x!r} is not an encoded key")
        return int(x)
    if mode.kind == "extended":
        if not x > 0:
            raise NotAValidEncoding(f"{x!r} is not an encoded key")
        u = _f32_bits(x)
        if u < EXTENDED_OFFSET or (u - EXTENDED_OFFSET) % 2:
            raise NotAValidEncoding(f"{x!r} sits in a gap, not on a key")
        k = (u - EXTENDED_OFFSET) // 2
        if k >= EXTENDED_LIMIT:
            raise NotAValidEncoding(f"{x!r} is beyond the extended domain")
        return k
    d = mode.decomposition
    parts = []
    for c, bits in ((x, d.bits_x), (y, d.bits_y), (z, d.bits_z)):
        if c < 0 or not float(c).is_integer():
            raise NotAValidEncoding(f"component {c!r} is not a key component")
        v = int(c)
        if v >= (1 << bits):
            raise NotAValidEncoding(f"component {v} overflows {bits} bits")
        if v >= COMPONENT_LIMIT:
            raise NotAValidEncoding(f"component {v} beyond exact range")
        parts.append(v)
    return parts[0] | (parts[1] << d.bits_x) | (parts[2] << (d.bits_x + d.bits_y))


def decode_array(coords, mode: Mode) -> np.ndarray:
    """Invert encode_array over an (N, 3) float32 block.

    Raises NotAValidEncoding if any row is off the key lattice, naming the
    first offending row.
    """
    arr = np.ascontiguousarray(coords, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("coords must have shape (n, 3)")

    def _reject(bad, why):
        if np.any(bad):
            i = int(np.argmax(bad))
            raise NotAValidEncoding(f"row {i}: {why} ({arr[i].tolist()})")

    x64 = arr[:, 0].astype(np.float64)
    if mode.kind in ("naive", "extended"):
        _reject((arr[:, 1] != 0) | (arr[:, 2] != 0),
                "y and z must be zero in this mode")
    if mode.kind == "naive":
        _reject((x64 < 0) | (x64 >= NAIVE_LIMIT) | (x64 != np.floor(x64)),
                "not an encoded key")
        return x64.astype(np.uint64)
    if mode.kind == "extended":
        _reject(~(x64 > 0), "not an encoded key")
        u = np.ascontiguousarray(arr[:, 0]).view(np.uint32).astype(np.uint64)
        off = np.uint64(EXTENDED_OFFSET)
        _reject((u < off) | ((u - off) % np.uint64(2) == 1),
                "sits in a gap, not on a key")
        k = (u - off) // np.uint64(2)
        _reject(k >= EXTENDED_LIMIT, "beyond the extended domain")
        return k
    d = mode.decomposition
    parts = []
    for col, bits in ((0, d.bits_x), (1, d.bits_y), (2, d.bits_z)):
        c = arr[:, col].astype(np.float64)
        cap = min(1 << bits, COMPONENT_LIMIT)
        _reject((c < 0) | (c != np.floor(c)) | (c >= cap),
                f"component {'xyz'[col]} is not a key component")
        parts.append(c.astype(np.uint64))
    return (parts[0]
            | (parts[1] << np.uint64(d.bits_x))
            | (parts[2] << np.uint64(d.bits_x + d.bits_y)))


def gap_bounds(key: int, mode: Mode) -> tuple[float, float]:
    """Gap values bracketing the key along the x axis.

    naive/3d get half-unit gaps; extended keys are 2 ULPs apart so the gap
    values are the neighboring representable floats.
    """
    x = encode(key, mode).x
    if mode.kind == "extended":
        lo = float(np.nextafter(np.float32(x), np.float32(-np.inf)))
        hi = float(np.nextafter(np.float32(x), np.float32(np.inf)))
        return lo, hi
    return x - 0.5, x + 0.5


def gap_below_x(x: np.ndarray, mode: Mode) -> np.ndarray:
    """Vectorized lower gap for already-encoded x coordinates (float32)."""
    x = np.asarray(x, dtype=np.float32)
    if mode.kind == "extended":
        return np.nextafter(x, np.float32(-np.inf))
    return x - np.float32(0.5)


def gap_above_x(x: np.ndarray, mode: Mode) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if mode.kind == "extended":
        return np.nextafter(x, np.float32(np.inf))
    return x + np.float32(0.5)


def coord_less(a, b) -> bool:
    """Lexicographic (z, y, x) order, the order the encodings must preserve."""
    return (a[2], a[1], a[0]) < (b[2], b[1], b[0])


def normalize_to_u64(value) -> int:
    """Map a supported typed value to u64 so that order is preserved.

    Signed integers get the sign bit flipped; unsigned pass through; floats
    use the usual bit trick (negatives inverted, positives get the top bit
    set), which orders them by value (NaNs land by bit pattern, their
    relative order is unspecified); str/bytes take their first 8 bytes
    big-endian, zero-padded, so u64 order matches lexicographic order on the
    prefix. Python ints are treated as signed 64-bit.
    """
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, np.bool_):
        value = int(value)
    if isinstance(value, np.unsignedinteger):
        return int(value)
    if isinstance(value, (int, np.signedinteger)):
        v = int(value)
        if v < -(1 << 63) or v >= (1 << 63):
            raise ValueError(f"{v} does not fit a signed 64-bit integer")
        return (v & U64_MASK) ^ (1 << 63)
    if isinstance(value, np.float32):
        value = float(value)  # exact widening
    if isinstance(value, (float, np.float64)):
        bits = struct.unpack("<Q", struct.pack("<d", float(value)))[0]
        if bits & (1 << 63):
            return bits ^ U64_MASK
        return bits | (1 << 63)
    if isinstance(value, str):
        value = value.encode("utf-8")
    if isinstance(value, (bytes, bytearray)):
        prefix = bytes(value[:8]).ljust(8, b"\x00")
        return int.from_bytes(prefix, "big")
    raise TypeError(f"cannot normalize values of type {type(value).__name__}")
