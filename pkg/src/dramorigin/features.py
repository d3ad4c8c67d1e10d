"""The 26-value page-group fingerprint.

Canonical order (frozen; model files carry its fingerprint):

    index  dataset  feature
    f01-06    1     fbc, compression, std_64x1, std_1x8, std_1024x1, std_1x64
    f07-12    2     same six
    f13-18    3     same six
    f19-24    4     same six
    f25       3     flips_to_one
    f26       4     flips_to_one

Datasets are numbered by :class:`DataPattern` value (1 Solid1, 2 Solid0,
3 ColStripe, 4 InvColStripe).
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError
from .pagedata import (
    N_BITS,
    N_WORDS,
    PAGE_BITS,
    PAGE_BYTES,
    DataPattern,
    FlipMap,
    PageDump,
    compute_flip_map,
    flips_to_one_count,
)

N_FEATURES = 26
DEFLATE_LEVEL = 6
DEFLATE_WBITS = -15  # raw RFC 1951 stream, no zlib/gzip framing
DEFLATE_MEMLEVEL = 8
DEFLATE_STRATEGY = zlib.Z_DEFAULT_STRATEGY


@dataclass(frozen=True)
class BlockSpec:
    height: int
    width: int

    @property
    def n_tiles(self) -> int:
        return (N_WORDS // self.height) * (N_BITS // self.width)


BLOCK_64x1 = BlockSpec(64, 1)
BLOCK_1x8 = BlockSpec(1, 8)
BLOCK_1024x1 = BlockSpec(1024, 1)
BLOCK_1x64 = BlockSpec(1, 64)
CANONICAL_BLOCKS = (BLOCK_64x1, BLOCK_1x8, BLOCK_1024x1, BLOCK_1x64)

_PER_DATASET = ("fbc", "compression", "std_64x1", "std_1x8", "std_1024x1", "std_1x64")
FEATURE_NAMES = tuple(
    f"d{ds}_{name}" for ds in range(1, 5) for name in _PER_DATASET
) + ("d3_flips_to_one", "d4_flips_to_one")
CSV_COLUMNS = tuple(f"f{i:02d}" for i in range(1, N_FEATURES + 1))


def feature_order_fingerprint() -> str:
    """Hash of everything that must agree between training and verification."""
    blob = json.dumps(
        {
            "names": FEATURE_NAMES,
            "std": "population",
            "deflate": [DEFLATE_LEVEL, DEFLATE_WBITS, DEFLATE_MEMLEVEL, DEFLATE_STRATEGY],
            "stripe": "even-bit-one,msb-first",
            "page": [N_WORDS, N_BITS],
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def psi1_fbc(flip_map: FlipMap) -> int:
    return flip_map.popcount()


def psi2_flips_to_one(flip_map: FlipMap, page: PageDump) -> int:
    if not page.pattern.is_stripe:
        raise DomainError(f"flips-to-one is only defined for stripe patterns, not {page.pattern.name}")
    return flips_to_one_count(flip_map, page)


def deflate_size(payload: bytes) -> int:
    comp = zlib.compressobj(DEFLATE_LEVEL, zlib.DEFLATED, DEFLATE_WBITS, DEFLATE_MEMLEVEL, DEFLATE_STRATEGY)
    return len(comp.compress(payload)) + len(comp.flush())


def compression_ratio(uncompressed: int, compressed: int) -> float:
    return uncompressed / compressed


def psi3_compression_ratio(page: PageDump) -> float:
    """Raw page size over its DEFLATE size; input is the read-back data."""
    return compression_ratio(PAGE_BYTES, deflate_size(page.to_bytes()))


_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def tile_counts(d_f: np.ndarray, spec: BlockSpec) -> np.ndarray:
    if spec not in CANONICAL_BLOCKS:
        raise DomainError(f"non-canonical block {spec.height}x{spec.width}")
    if spec == BLOCK_1x8:
        # one packed byte per tile; much faster than an 8-wide reduction
        return _POPCOUNT8[np.packbits(d_f, axis=1)].ravel()
    h, w = spec.height, spec.width
    tiles = d_f.reshape(N_WORDS // h, h, N_BITS // w, w)
    return tiles.sum(axis=(1, 3), dtype=np.int32).ravel()


def psi_block_std(flip_map: FlipMap, spec: BlockSpec) -> float:
    """Population standard deviation of per-tile failed-bit counts."""
    return float(np.std(tile_counts(flip_map.d_f, spec).astype(np.float64)))


def _dataset_features(page: PageDump) -> tuple[list[float], FlipMap]:
    fm = compute_flip_map(page)
    vals = [float(psi1_fbc(fm)), psi3_compression_ratio(page)]
    vals.extend(psi_block_std(fm, spec) for spec in CANONICAL_BLOCKS)
    return vals, fm


def check_group(pages: Iterable[PageDump]) -> dict[DataPattern, PageDump]:
    pages = list(pages)
    by_pattern = {}
    for p in pages:
        if p.pattern in by_pattern:
            raise DomainError(f"duplicate {p.pattern.name} page in group")
        by_pattern[p.pattern] = p
    if set(by_pattern) != set(DataPattern) or len(pages) != 4:
        raise DomainError("page group needs exactly one page per data pattern")
    keys = {(p.module_id, p.bank, p.row) for p in pages}
    if len(keys) != 1:
        raise DomainError(f"page group mixes locations {sorted(keys)}")
    return by_pattern


def extract_features(group: Sequence[PageDump]) -> np.ndarray:
    """26-vector for one (module, bank, row) group of four pattern reads."""
    by_pattern = check_group(group)
    out: list[float] = []
    tail: list[float] = []
    for pattern in DataPattern:
        page = by_pattern[pattern]
        vals, fm = _dataset_features(page)
        out.extend(vals)
        if pattern.is_stripe:
            tail.append(float(psi2_flips_to_one(fm, page)))
    vec = np.array(out + tail, dtype=np.float64)
    assert vec.shape == (N_FEATURES,)
    return vec


def validate_vector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (N_FEATURES,):
        raise DomainError(f"feature vector must have {N_FEATURES} entries, got {v.shape}")
    return v


def group_pages(pages: Iterable[PageDump]) -> dict[tuple[int, int], list[PageDump]]:
    """Bucket pages by (bank, row); order inside a bucket follows input order."""
    groups: dict[tuple[int, int], list[PageDump]] = {}
    for p in pages:
        groups.setdefault((p.bank, p.row), []).append(p)
    return groups


__all__ = [
    "BLOCK_1024x1",
    "BLOCK_1x64",
    "BLOCK_1x8",
    "BLOCK_64x1",
    "BlockSpec",
    "CANONICAL_BLOCKS",
    "CSV_COLUMNS",
    "FEATURE_NAMES",
    "N_FEATURES",
    "PAGE_BITS",
    "extract_features",
    "feature_order_fingerprint",
    "group_pages",
    "psi1_fbc",
    "psi2_flips_to_one",
    "psi3_compression_ratio",
    "psi_block_std",
]
