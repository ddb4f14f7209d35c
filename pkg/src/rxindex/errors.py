"""Exception types shared across the package."""


class RxError(Exception):
    """Base class for all package-specific errors."""


class KeyOutOfDomain(RxError):
    """Key (or key component) is not representable in the chosen mode."""


class NotAValidEncoding(RxError):
    """Coordinate triple does not decode to any key under the mode."""


class EmptyInput(RxError):
    """An operation that needs at least one element got none."""


class CountMismatch(RxError):
    """Parallel arrays (keys/values, old/new bounds) differ in length."""


class NotRefittable(RxError):
    """Refit requested on a structure not built with the refittable flag."""


class RefittableNotCompactable(RxError):
    """Compaction requested on a refittable structure (or vice versa)."""


class UnsupportedPrimitiveForMode(RxError):
    """Primitive kind cannot represent keys under the chosen mode."""


class RayFanTooLarge(RxError):
    """A range lookup would need more rays than the configured cap."""


class CapacityExceeded(RxError):
    """Hash table load factor bound would be violated."""


class DomainOverflow(RxError):
    """Key generation parameters exceed the 64-bit key space."""


class ExactHitCountNeedsDenseKeys(RxError):
    """Range workload generation with exact hit counts needs dense keys."""


class OracleMismatch(RxError):
    """Index answers disagreed with the sort-scan oracle during warmup."""


class DegenerateSystem(RxError):
    """Cost model fit got fewer than two distinct sizes."""
