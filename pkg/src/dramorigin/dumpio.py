"""Binary page dumps and feature tables.

Dump layout (little-endian)::

    8s   magic "DRAMDMP1"
    u16  format version (1)
    u8   stripe convention (1: bit 0 of each word is the MSB, even bits hold 1)
    6 x (u16 length, utf-8 bytes)
         module_id, manufacturer, part_number, spd_version, garber_version, condition
    i32  class_tag
    u32  page count
    per page: u8 bank, u32 row, u8 pattern, 8192-byte payload

Hardware captures only need to be packed into this layout to be usable.
"""

from __future__ import annotations

import csv
import io
import math
import os
import struct
from dataclasses import asdict, dataclass
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from .errors import DomainError, FormatError
from .features import CSV_COLUMNS, N_FEATURES
from .pagedata import PAGE_BYTES, Condition, DataPattern, PageDump

MAGIC = b"DRAMDMP1"
FORMAT_VERSION = 1
STRIPE_CONVENTION = 1

_U16 = struct.Struct("<H")
_I32 = struct.Struct("<i")
_U32 = struct.Struct("<I")
_PAGE_HEAD = struct.Struct("<BIB")
_PAGE_SIZE = _PAGE_HEAD.size + PAGE_BYTES


@dataclass(frozen=True)
class ModuleRecord:
    module_id: str
    manufacturer: str = ""
    part_number: str = ""
    spd_version: str = ""
    garber_version: str = ""
    class_tag: int = 0

    def class_key(self) -> tuple[str, str, str, str]:
        """Fields that jointly define a memory class."""
        return (self.manufacturer, self.part_number, self.spd_version, self.garber_version)

    def to_dict(self) -> dict:
        return asdict(self)


def check_class_tags(records: Iterable[ModuleRecord]) -> None:
    """Raise unless class tags and class keys are in one-to-one correspondence."""
    tag_of: dict[tuple, int] = {}
    key_of: dict[int, tuple] = {}
    for r in records:
        k = r.class_key()
        if tag_of.setdefault(k, r.class_tag) != r.class_tag:
            raise DomainError(f"{r.module_id}: same part/SPD/Garber as class {tag_of[k]} but tagged {r.class_tag}")
        if key_of.setdefault(r.class_tag, k) != k:
            raise DomainError(f"{r.module_id}: class {r.class_tag} already used for {key_of[r.class_tag]}")


def assign_class_tags(records: Sequence[ModuleRecord]) -> list[ModuleRecord]:
    """Number classes 1.. in order of first appearance of each class key."""
    tags: dict[tuple, int] = {}
    out = []
    for r in records:
        tag = tags.setdefault(r.class_key(), len(tags) + 1)
        out.append(ModuleRecord(**{**r.to_dict(), "class_tag": tag}))
    return out


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise DomainError("metadata string longer than 65535 bytes")
    return _U16.pack(len(b)) + b


def _header_bytes(meta: ModuleRecord, condition: Condition, n_pages: int) -> bytes:
    parts = [MAGIC, _U16.pack(FORMAT_VERSION), bytes([STRIPE_CONVENTION])]
    for s in (meta.module_id, meta.manufacturer, meta.part_number, meta.spd_version, meta.garber_version, condition.value):
        parts.append(_pack_str(s))
    parts.append(_I32.pack(meta.class_tag))
    parts.append(_U32.pack(n_pages))
    return b"".join(parts)


def write_dump(records: Iterable[PageDump], meta: ModuleRecord, path) -> int:
    """Stream pages to ``path`` (atomically replaced); returns the page count.

    The page count in the header is patched after the last page, so
    ``records`` may be a generator.
    """
    tmp = f"{os.fspath(path)}.tmp{os.getpid()}"
    count = 0
    condition = None
    try:
        with open(tmp, "wb") as f:
            for p in records:
                if p.module_id != meta.module_id:
                    raise DomainError(f"page module_id {p.module_id!r} differs from {meta.module_id!r}")
                if condition is None:
                    condition = p.condition
                    f.write(_header_bytes(meta, condition, 0))
                elif p.condition != condition:
                    raise DomainError(f"pages mix operating conditions {condition.value} and {p.condition.value}")
                f.write(_PAGE_HEAD.pack(p.bank, p.row, int(p.pattern)))
                f.write(p.to_bytes())
                count += 1
            if condition is None:
                f.write(_header_bytes(meta, Condition.NVRT, 0))
            else:
                f.seek(len(_header_bytes(meta, condition, 0)) - _U32.size)
                f.write(_U32.pack(count))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return count


class _Reader:
    def __init__(self, f: BinaryIO):
        self.f = f
        self.offset = 0

    def take(self, n: int, what: str, page_index=None) -> bytes:
        b = self.f.read(n)
        if len(b) != n:
            raise FormatError(f"truncated {what}: wanted {n} bytes, got {len(b)}", self.offset, page_index)
        self.offset += n
        return b


def _read_header(r: _Reader) -> tuple[ModuleRecord, Condition, int]:
    magic = r.f.read(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    r.offset = len(MAGIC)
    (version,) = _U16.unpack(r.take(2, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", r.offset - 2)
    conv = r.take(1, "stripe convention")[0]
    if conv != STRIPE_CONVENTION:
        raise FormatError(f"unknown stripe convention {conv}", r.offset - 1)
    strings = []
    for name in ("module_id", "manufacturer", "part_number", "spd_version", "garber_version", "condition"):
        (n,) = _U16.unpack(r.take(2, f"{name} length"))
        raw = r.take(n, name)
        try:
            strings.append(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"{name} is not valid UTF-8", r.offset - n) from exc
    try:
        condition = Condition(strings.pop())
    except ValueError as exc:
        raise FormatError("unknown operating condition", r.offset) from exc
    (class_tag,) = _I32.unpack(r.take(4, "class tag"))
    (count,) = _U32.unpack(r.take(4, "page count"))
    return ModuleRecord(*strings, class_tag=class_tag), condition, count


def _check_page_head(bank: int, pat: int, start: int, i: int) -> None:
    if pat not in (1, 2, 3, 4):
        raise FormatError(f"unknown pattern id {pat}", start + 5, i)
    if bank >= 8:
        raise FormatError(f"bank {bank} out of range", start, i)


def _iter_pages(r: _Reader, meta: ModuleRecord, condition: Condition, count: int) -> Iterator[PageDump]:
    for i in range(count):
        start = r.offset
        bank, row, pat = _PAGE_HEAD.unpack(r.take(_PAGE_HEAD.size, "page header", i))
        _check_page_head(bank, pat, start, i)
        payload = r.take(PAGE_BYTES, "page payload", i)
        yield PageDump.from_bytes(meta.module_id, bank, row, DataPattern(pat), payload, condition)
    if r.f.read(1):
        raise FormatError(f"trailing bytes after {count} pages", r.offset)


class DumpReader:
    """Streaming access to a dump: header on open, pages on iteration."""

    def __init__(self, path):
        self.path = path
        with open(path, "rb") as f:
            r = _Reader(f)
            self.meta, self.condition, self.n_pages = _read_header(r)
            self._data_offset = r.offset
        self._index = None

    def __iter__(self) -> Iterator[PageDump]:
        with open(self.path, "rb") as f:
            f.seek(self._data_offset)
            r = _Reader(f)
            r.offset = self._data_offset
            yield from _iter_pages(r, self.meta, self.condition, self.n_pages)

    def __len__(self):
        return self.n_pages

    def index(self) -> list[tuple[int, int, DataPattern]]:
        """``(bank, row, pattern)`` of every page, read without decoding payloads."""
        if self._index is None:
            expected = self._data_offset + self.n_pages * _PAGE_SIZE
            size = os.path.getsize(self.path)
            if size < expected:
                missing = (expected - size + _PAGE_SIZE - 1) // _PAGE_SIZE
                raise FormatError(f"truncated dump: {size} bytes, header promises {expected}",
                                  size, self.n_pages - missing)
            if size > expected:
                raise FormatError(f"trailing bytes after {self.n_pages} pages", expected)
            out = []
            with open(self.path, "rb") as f:
                for i in range(self.n_pages):
                    start = self._data_offset + i * _PAGE_SIZE
                    f.seek(start)
                    bank, row, pat = _PAGE_HEAD.unpack(f.read(_PAGE_HEAD.size))
                    _check_page_head(bank, pat, start, i)
                    out.append((bank, row, DataPattern(pat)))
            self._index = out
        return self._index

    def read_pages(self, indices: Iterable[int]) -> Iterator[PageDump]:
        """Decode only the pages at the given positions, in the order given."""
        with open(self.path, "rb") as f:
            for i in indices:
                if not 0 <= i < self.n_pages:
                    raise DomainError(f"page index {i} out of range")
                start = self._data_offset + i * _PAGE_SIZE
                f.seek(start)
                r = _Reader(f)
                r.offset = start
                bank, row, pat = _PAGE_HEAD.unpack(r.take(_PAGE_HEAD.size, "page header", i))
                _check_page_head(bank, pat, start, i)
                payload = r.take(PAGE_BYTES, "page payload", i)
                yield PageDump.from_bytes(self.meta.module_id, bank, row, DataPattern(pat), payload, self.condition)


def read_dump(path) -> tuple[ModuleRecord, list[PageDump]]:
    reader = DumpReader(path)
    return reader.meta, list(reader)


def read_dump_bytes(data: bytes) -> tuple[ModuleRecord, list[PageDump]]:
    r = _Reader(io.BytesIO(data))
    meta, cond, count = _read_header(r)
    return meta, list(_iter_pages(r, meta, cond, count))


def format_float(x: float) -> str:
    """Shortest text that parses back to exactly ``x``; integral values drop the ``.0``."""
    if not math.isfinite(x):
        raise DomainError(f"non-finite feature value {x}")
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def export_features(rows: Iterable[tuple], path) -> None:
    """Write ``(module_id, bank, row, vector)`` rows as CSV, one page group per line."""
    lines = [",".join(("module_id", "bank", "row") + CSV_COLUMNS)]
    for module_id, bank, row, vec in rows:
        v = np.asarray(vec, dtype=np.float64).ravel()
        if v.size != N_FEATURES:
            raise DomainError(f"feature vector must have {N_FEATURES} entries, got {v.size}")
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow([module_id, int(bank), int(row)])
        lines.append(buf.getvalue() + "," + ",".join(format_float(x) for x in v))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_features(path) -> list[tuple[str, int, int, np.ndarray]]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        expected = ["module_id", "bank", "row", *CSV_COLUMNS]
        if header != expected:
            raise FormatError(f"unexpected feature header {header}", 0)
        out = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != 3 + N_FEATURES:
                raise FormatError(f"line {lineno}: expected {3 + N_FEATURES} fields, got {len(rec)}")
            out.append((rec[0], int(rec[1]), int(rec[2]), np.array([float(x) for x in rec[3:]])))
    return out
