"""Synthetic reduced-tRCD read errors for parametrised memory classes.

A cell fails only by losing charge: true cells (charged = 1) can read 0 and
anti cells (charged = 0) can read 1. Orientation is set per row from the
profile's anti-cell regions. The failure probability of a charged cell is

    base * column_bias[b] * chip_bias[b // 8] * module_jitter[b]
         * pattern_sensitivity[pattern] * block[w // 64, b] * page_noise
         * (weak_multiplier if weak else 1)

clipped to [0, 1]. ``block`` is a log-normal word-locality multiplier per
64x1 tile and ``page_noise`` a log-normal per row; both are drawn once per
row and shared by the four pattern reads.

Seeds are derived hierarchically (master -> module -> row -> pattern) so
output never depends on generation order.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dumpio import ModuleRecord, write_dump
from .errors import DomainError
from .pagedata import N_BITS, N_WORDS, PAGE_BITS, DataPattern, PageDump, expected_matrix

PROFILE_FORMAT_VERSION = 1
N_BANKS = 8
_WEAK_STREAM = 0x5745414B
_READ_STREAM = 0x52454144


@dataclass(frozen=True)
class ClassProfile:
    class_tag: int
    base_prob: float
    column_bias: tuple[float, ...] = (1.0,) * N_BITS
    chip_bias: tuple[float, ...] = (1.0,) * 8
    locality: float = 0.0
    anticell_regions: tuple[tuple[int, int], ...] = ()
    region_period: int = 64
    pattern_sensitivity: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    weak_fraction: float = 0.0
    weak_multiplier: float = 1.0
    noise_scale: float = 0.0
    process_sigma: float = 0.0
    manufacturer: str = ""
    part_number: str = ""
    spd_version: str = ""
    garber_version: str = ""

    def __post_init__(self):
        for name in ("column_bias", "chip_bias", "pattern_sensitivity"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "anticell_regions", tuple(tuple(int(x) for x in r) for r in self.anticell_regions))
        if len(self.column_bias) != N_BITS or len(self.chip_bias) != 8 or len(self.pattern_sensitivity) != 4:
            raise DomainError("profile needs 64 column, 8 chip and 4 pattern multipliers")
        if min(self.column_bias + self.chip_bias + self.pattern_sensitivity) <= 0 or self.weak_multiplier <= 0:
            raise DomainError("multipliers must be positive")
        if not 0.0 <= self.base_prob <= 1.0 or not 0.0 <= self.weak_fraction <= 1.0:
            raise DomainError("probabilities must lie in [0, 1]")
        if self.locality < 0 or self.noise_scale < 0 or self.process_sigma < 0:
            raise DomainError("spread parameters must be non-negative")
        if self.region_period < 1:
            raise DomainError("region_period must be positive")

    def is_anticell_row(self, row: int) -> bool:
        r = row % self.region_period
        return any(lo <= r < hi for lo, hi in self.anticell_regions)

    def module_record(self, module_id: str) -> ModuleRecord:
        return ModuleRecord(module_id, self.manufacturer, self.part_number, self.spd_version,
                            self.garber_version, self.class_tag)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["anticell_regions"] = [list(r) for r in self.anticell_regions]
        for k in ("column_bias", "chip_bias", "pattern_sensitivity"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClassProfile":
        return cls(**d)


def save_profiles(profiles: Sequence[ClassProfile], path) -> None:
    doc = {"format_version": PROFILE_FORMAT_VERSION, "profiles": [p.to_dict() for p in profiles]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_profiles(path) -> list[ClassProfile]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != PROFILE_FORMAT_VERSION:
        raise DomainError(f"unsupported profile format version {doc.get('format_version')!r}")
    return [ClassProfile.from_dict(p) for p in doc["profiles"]]


def _lognormal_unit_mean(rng: np.random.Generator, sigma: float, size) -> np.ndarray:
    if sigma == 0:
        return np.ones(size)
    return np.exp(sigma * rng.standard_normal(size) - 0.5 * sigma * sigma)


@dataclass(frozen=True, eq=False)
class ModuleInstance:
    """One fabricated module: a profile plus its process-variation draw.

    The weak-cell map is realised lazily per (bank, row) from the module seed,
    so it is fixed for the module without being held in memory.
    """

    profile: ClassProfile
    seed: int
    module_id: str
    column_jitter: np.ndarray = field(repr=False)

    def weak_cells(self, bank: int, row: int) -> np.ndarray:
        """Flat indices (word * 64 + bit) of weak cells in one row."""
        f = self.profile.weak_fraction
        if f == 0.0:
            return np.zeros(0, dtype=np.int64)
        rng = np.random.default_rng([self.seed, _WEAK_STREAM, bank, row])
        n = int(rng.binomial(PAGE_BITS, f))
        return np.sort(rng.choice(PAGE_BITS, size=n, replace=False))

    def record(self) -> ModuleRecord:
        return self.profile.module_record(self.module_id)


def realize_module(profile: ClassProfile, seed: int, module_id: str | None = None) -> ModuleInstance:
    rng = np.random.default_rng([seed])
    jitter = _lognormal_unit_mean(rng, profile.process_sigma, N_BITS)
    jitter.flags.writeable = False
    return ModuleInstance(profile, int(seed), module_id or f"c{profile.class_tag}-{seed}", jitter)


def _cell_probabilities(inst: ModuleInstance, bank: int, row: int, read_seed: int) -> np.ndarray:
    prof = inst.profile
    rng = np.random.default_rng([read_seed, _READ_STREAM, bank, row])
    col = np.asarray(prof.column_bias) * np.repeat(prof.chip_bias, 8) * inst.column_jitter
    block = _lognormal_unit_mean(rng, prof.locality, (N_WORDS // 64, N_BITS))
    page = float(_lognormal_unit_mean(rng, prof.noise_scale, 1)[0])
    p = prof.base_prob * page * np.repeat(block, 64, axis=0) * col[None, :]
    weak = inst.weak_cells(bank, row)
    if weak.size:
        p.reshape(-1)[weak] *= prof.weak_multiplier
    return p


def generate_page_group(inst: ModuleInstance, bank: int, row: int, read_seed: int) -> list[PageDump]:
    """Four pattern reads of one row, in DataPattern order."""
    if not 0 <= bank < N_BANKS:
        raise DomainError(f"bank {bank} out of range")
    prof = inst.profile
    p = _cell_probabilities(inst, bank, row, read_seed)
    anti = prof.is_anticell_row(row)
    pages = []
    for pattern in DataPattern:
        written = expected_matrix(pattern)
        charged = (written == 0) if anti else (written == 1)
        prob = np.minimum(p * prof.pattern_sensitivity[pattern - 1], 1.0)
        rng = np.random.default_rng([read_seed, _READ_STREAM, bank, row, int(pattern)])
        flips = (rng.random((N_WORDS, N_BITS), dtype=np.float32) < prob) & charged
        pages.append(PageDump(inst.module_id, bank, row, pattern, written ^ flips.astype(np.uint8)))
    return pages


def row_locations(n_rows: int) -> list[tuple[int, int]]:
    """Interleave banks: location i is (i % 8, i // 8)."""
    return [(i % N_BANKS, i // N_BANKS) for i in range(n_rows)]


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class CorpusEntry:
    file: str
    module_id: str
    class_tag: int
    module_seed: int
    read_seed: int


def corpus_plan(profiles: Sequence[ClassProfile], modules_per_class: int, master_seed: int) -> list[tuple[ClassProfile, CorpusEntry]]:
    plan = []
    for profile in profiles:
        for m in range(modules_per_class):
            module_id = f"class{profile.class_tag}-m{m}"
            module_seed = derive_seed(master_seed, profile.class_tag, m, 0)
            read_seed = derive_seed(master_seed, profile.class_tag, m, 1)
            plan.append((profile, CorpusEntry(f"{module_id}.dmp", module_id, profile.class_tag, module_seed, read_seed)))
    return plan


def module_pages(profile: ClassProfile, entry: CorpusEntry, rows_per_module: int):
    inst = realize_module(profile, entry.module_seed, entry.module_id)
    for bank, row in row_locations(rows_per_module):
        yield from generate_page_group(inst, bank, row, entry.read_seed)


def generate_corpus(profiles: Sequence[ClassProfile], modules_per_class: int, rows_per_module: int,
                    master_seed: int, out_dir) -> list[CorpusEntry]:
    """Write one dump per module plus ``manifest.csv``; returns the manifest rows."""
    if not profiles:
        raise DomainError("no class profiles given")
    tags = [p.class_tag for p in profiles]
    if len(set(tags)) != len(tags):
        raise DomainError("class tags must be unique")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for profile, entry in corpus_plan(profiles, modules_per_class, master_seed):
        write_dump(module_pages(profile, entry, rows_per_module), profile.module_record(entry.module_id),
                   out / entry.file)
        entries.append(entry)
    write_manifest(entries, out / "manifest.csv")
    return entries


MANIFEST_COLUMNS = ("file", "module_id", "class_tag", "module_seed", "read_seed")


def write_manifest(entries: Sequence[CorpusEntry], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in entries:
            w.writerow([e.file, e.module_id, e.class_tag, e.module_seed, e.read_seed])


def read_manifest(path) -> list[CorpusEntry]:
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    return [CorpusEntry(r["file"], r["module_id"], int(r["class_tag"]), int(r["module_seed"]), int(r["read_seed"]))
            for r in rows]


def _smooth_profile(rng: np.random.Generator, n: int, amplitude: float, period: float) -> np.ndarray:
    phase = rng.uniform(0, 2 * np.pi)
    x = np.arange(n)
    shape = np.sin(2 * np.pi * x / period + phase) + 0.5 * rng.standard_normal(n)
    return np.exp(amplitude * shape / np.abs(shape).max())


def default_profiles() -> list[ClassProfile]:
    """Seven synthetic classes mirroring a three-vendor, seven-class layout.

    The numbers are invented; they are not calibrated to any silicon.
    """
    specs = [
        # tag, vendor, part, spd-garber, base, locality, noise, anticell, pattern sens, weak f, weak x, chip amp, col amp
        (1, "VendorA", "A1", "10-C1", 0.0040, 0.30, 0.10, ((0, 16),), (1.0, 1.0, 1.4, 0.8), 0.002, 8.0, 0.30, 0.4),
        (2, "VendorA", "A2", "10-B1", 0.0080, 0.60, 0.10, ((0, 32),), (1.2, 0.9, 1.0, 1.0), 0.004, 6.0, 0.15, 0.7),
        (3, "VendorB", "B1", "10-B1", 0.0025, 0.20, 0.12, ((16, 48),), (0.8, 1.3, 1.1, 1.2), 0.001, 12.0, 0.50, 0.3),
        (4, "VendorB", "B2", "11-B2", 0.0120, 0.45, 0.10, (), (1.0, 1.0, 0.7, 1.5), 0.003, 5.0, 0.20, 0.5),
        (5, "VendorB", "B3", "11-B2", 0.0055, 0.90, 0.12, ((32, 64),), (1.1, 1.1, 1.2, 0.9), 0.006, 4.0, 0.40, 0.9),
        (6, "VendorC", "C1", "10-B1", 0.0160, 0.35, 0.10, ((0, 8), (32, 40)), (0.9, 1.2, 1.0, 1.1), 0.002, 6.0, 0.25, 0.6),
        (7, "VendorC", "C1", "11-B2", 0.0160, 0.35, 0.10, ((8, 24),), (0.9, 1.2, 1.3, 0.8), 0.002, 6.0, 0.25, 0.6),
    ]
    rng = np.random.default_rng(20231004)
    out = []
    for tag, vendor, part, ver, base, loc, noise, anti, sens, wf, wx, chip_amp, col_amp in specs:
        spd, garber = ver.split("-")
        out.append(ClassProfile(
            class_tag=tag,
            base_prob=base,
            column_bias=tuple(_smooth_profile(rng, N_BITS, col_amp, period=rng.choice([8, 16, 32, 64]))),
            chip_bias=tuple(_smooth_profile(rng, 8, chip_amp, period=8)),
            locality=loc,
            anticell_regions=anti,
            region_period=64,
            pattern_sensitivity=sens,
            weak_fraction=wf,
            weak_multiplier=wx,
            noise_scale=noise,
            process_sigma=0.05,
            manufacturer=vendor,
            part_number=part,
            spd_version=spd,
            garber_version=garber,
        ))
    return out


def resolve_profiles(spec: str | os.PathLike | None) -> list[ClassProfile]:
    if spec is None or str(spec) == "default":
        return default_profiles()
    return load_profiles(spec)
