"""Pages, write patterns and flip maps.

A page is 1024 words of 64 bits. Bit index 0 is the most significant bit of
each word, so ``np.packbits(d_r, axis=1)`` yields the on-disk byte layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

N_WORDS = 1024
N_BITS = 64
PAGE_BITS = N_WORDS * N_BITS
PAGE_BYTES = PAGE_BITS // 8


class DataPattern(enum.IntEnum):
    SOLID1 = 1
    SOLID0 = 2
    COL_STRIPE = 3
    INV_COL_STRIPE = 4

    @property
    def is_stripe(self) -> bool:
        return self in (DataPattern.COL_STRIPE, DataPattern.INV_COL_STRIPE)

    @property
    def complement(self) -> "DataPattern":
        return _COMPLEMENT[self]


_COMPLEMENT = {
    DataPattern.SOLID1: DataPattern.SOLID0,
    DataPattern.SOLID0: DataPattern.SOLID1,
    DataPattern.COL_STRIPE: DataPattern.INV_COL_STRIPE,
    DataPattern.INV_COL_STRIPE: DataPattern.COL_STRIPE,
}


class Condition(str, enum.Enum):
    NVRT = "NVRT"
    HVRT = "HVRT"
    LVRT = "LVRT"
    NVHT = "NVHT"


# Stripe convention: "1010..." puts a 1 at even bit indices within each word.
_STRIPE_ROW = (np.arange(N_BITS) % 2 == 0).astype(np.uint8)


def _pattern_row(pattern: DataPattern) -> np.ndarray:
    if pattern == DataPattern.SOLID1:
        return np.ones(N_BITS, dtype=np.uint8)
    if pattern == DataPattern.SOLID0:
        return np.zeros(N_BITS, dtype=np.uint8)
    if pattern == DataPattern.COL_STRIPE:
        return _STRIPE_ROW.copy()
    return 1 - _STRIPE_ROW


_ROWS = {p: _pattern_row(p) for p in DataPattern}
_MATRICES = {p: np.broadcast_to(_ROWS[p], (N_WORDS, N_BITS)) for p in DataPattern}
for _m in _MATRICES.values():
    _m.flags.writeable = False


def expected_bit(pattern: DataPattern, word: int, bit: int) -> int:
    """Value written at (word, bit) by ``pattern``."""
    if not (0 <= word < N_WORDS and 0 <= bit < N_BITS):
        raise DomainError(f"cell ({word}, {bit}) outside {N_WORDS}x{N_BITS} page")
    return int(_ROWS[DataPattern(pattern)][bit])


def expected_matrix(pattern: DataPattern) -> np.ndarray:
    """Read-only 1024x64 uint8 view of the written pattern."""
    return _MATRICES[DataPattern(pattern)]


def _as_bits(arr) -> np.ndarray:
    a = np.asarray(arr)
    if a.shape != (N_WORDS, N_BITS):
        raise DomainError(f"bit matrix must be {N_WORDS}x{N_BITS}, got {a.shape}")
    if a.dtype != np.uint8:
        if a.dtype != np.bool_ and np.any((a != 0) & (a != 1)):
            raise DomainError("bit matrix entries must be 0 or 1")
        a = a.astype(np.uint8)
    elif a.max(initial=0) > 1:
        raise DomainError("bit matrix entries must be 0 or 1")
    a = np.array(a, dtype=np.uint8, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PageDump:
    """One page read back at reduced activation latency."""

    module_id: str
    bank: int
    row: int
    pattern: DataPattern
    d_r: np.ndarray
    condition: Condition = Condition.NVRT

    def __post_init__(self):
        if not 0 <= self.bank < 8:
            raise DomainError(f"bank {self.bank} out of range 0..7")
        if self.row < 0:
            raise DomainError(f"row {self.row} is negative")
        object.__setattr__(self, "pattern", DataPattern(self.pattern))
        object.__setattr__(self, "condition", Condition(self.condition))
        object.__setattr__(self, "d_r", _as_bits(self.d_r))

    @classmethod
    def from_bytes(cls, module_id, bank, row, pattern, payload: bytes, condition=Condition.NVRT):
        if len(payload) != PAGE_BYTES:
            raise DomainError(f"payload must be {PAGE_BYTES} bytes, got {len(payload)}")
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(N_WORDS, 8)
        return cls(module_id, bank, row, pattern, np.unpackbits(raw, axis=1), condition)

    def to_bytes(self) -> bytes:
        return np.packbits(self.d_r, axis=1).tobytes()

    def __eq__(self, other):
        if not isinstance(other, PageDump):
            return NotImplemented
        return (
            self.module_id == other.module_id
            and self.bank == other.bank
            and self.row == other.row
            and self.pattern == other.pattern
            and self.condition == other.condition
            and np.array_equal(self.d_r, other.d_r)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FlipMap:
    d_f: np.ndarray
    source_pattern: DataPattern = field(default=DataPattern.SOLID1)

    def popcount(self) -> int:
        return int(np.count_nonzero(self.d_f))


def compute_flip_map(page: PageDump) -> FlipMap:
    d_f = np.bitwise_xor(page.d_r, expected_matrix(page.pattern))
    d_f.flags.writeable = False
    return FlipMap(d_f, page.pattern)


def flips_to_one_count(flip_map: FlipMap, page: PageDump) -> int:
    """Cells written 0 that read back as 1."""
    if flip_map.source_pattern != page.pattern:
        raise DomainError(
            f"flip map built for {flip_map.source_pattern.name}, page written with {page.pattern.name}"
        )
    return int(np.count_nonzero(flip_map.d_f & page.d_r))
