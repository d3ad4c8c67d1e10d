import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dramorigin.dumpio import (
    _PAGE_HEAD,
    MAGIC,
    DumpReader,
    _header_bytes,
    ModuleRecord,
    assign_class_tags,
    check_class_tags,
    export_features,
    format_float,
    read_dump,
    read_dump_bytes,
    read_features,
    write_dump,
)
from dramorigin.errors import DomainError, FormatError
from dramorigin.pagedata import Condition, DataPattern, PageDump, expected_matrix

META = ModuleRecord("mod-7", "VendorA", "A2", "10", "B1", 2)


def random_pages(rng, n_rows, module="mod-7"):
    pages = []
    for i in range(n_rows):
        for p in DataPattern:
            pages.append(PageDump(module, i % 8, 1000 + i, p, rng.integers(0, 2, (1024, 64))))
    return pages


def test_single_clean_page_round_trip(tmp_path):
    page = PageDump("mod-7", 3, 9, DataPattern.SOLID1, expected_matrix(DataPattern.SOLID1))
    write_dump([page], META, tmp_path / "a.dmp")
    meta, pages = read_dump(tmp_path / "a.dmp")
    assert meta == META
    assert pages == [page]


def test_empty_dump(tmp_path):
    write_dump([], META, tmp_path / "e.dmp")
    meta, pages = read_dump(tmp_path / "e.dmp")
    assert meta == META and pages == []
    assert len(DumpReader(tmp_path / "e.dmp")) == 0


def test_random_corpus_round_trip(tmp_path, rng):
    pages = random_pages(rng, 100)
    write_dump(pages, META, tmp_path / "r.dmp")
    _, back = read_dump(tmp_path / "r.dmp")
    assert len(back) == 400
    for a, b in zip(pages, back):
        assert a.to_bytes() == b.to_bytes()
        assert (a.bank, a.row, a.pattern) == (b.bank, b.row, b.pattern)


def test_condition_round_trip(tmp_path, rng):
    pages = [PageDump("mod-7", 0, 0, DataPattern.SOLID0, rng.integers(0, 2, (1024, 64)), Condition.NVHT)]
    write_dump(pages, META, tmp_path / "c.dmp")
    assert read_dump(tmp_path / "c.dmp")[1] == pages


def test_header_layout(tmp_path):
    write_dump([], META, tmp_path / "h.dmp")
    raw = (tmp_path / "h.dmp").read_bytes()
    assert raw[:8] == MAGIC == b"DRAMDMP1"
    assert struct.unpack("<H", raw[8:10]) == (1,)
    assert raw[10] == 1
    assert struct.unpack("<H", raw[11:13]) == (5,) and raw[13:18] == b"mod-7"
    assert raw[-4:] == b"\0\0\0\0"


def test_mixed_module_ids_rejected(tmp_path, rng):
    pages = random_pages(rng, 1) + random_pages(rng, 1, module="other")
    with pytest.raises(DomainError):
        write_dump(pages, META, tmp_path / "x.dmp")


def test_bad_magic_names_offset_zero(tmp_path):
    path = tmp_path / "bad.dmp"
    path.write_bytes(b"NOTADUMP" + b"\0" * 40)
    with pytest.raises(FormatError) as err:
        read_dump(path)
    assert err.value.offset == 0
    assert "offset 0" in str(err.value)


def test_truncated_payload_names_page(tmp_path, rng):
    write_dump(random_pages(rng, 1), META, tmp_path / "t.dmp")
    raw = (tmp_path / "t.dmp").read_bytes()
    (tmp_path / "t.dmp").write_bytes(raw[:-100])
    with pytest.raises(FormatError) as err:
        read_dump(tmp_path / "t.dmp")
    assert err.value.page_index == 3


def test_unknown_pattern_id(tmp_path, rng):
    write_dump(random_pages(rng, 1)[:1], META, tmp_path / "p.dmp")
    raw = bytearray((tmp_path / "p.dmp").read_bytes())
    head = len(raw) - 8192 - 6
    raw[head + 5] = 9
    with pytest.raises(FormatError, match="pattern id 9"):
        read_dump_bytes(bytes(raw))


def test_every_prefix_is_diagnosed(rng):
    pages = random_pages(rng, 1)[:2]
    buf = io.BytesIO()
    buf.write(_header_bytes(META, Condition.NVRT, len(pages)))
    for p in pages:
        buf.write(_PAGE_HEAD.pack(p.bank, p.row, int(p.pattern)) + p.to_bytes())
    full = buf.getvalue()
    assert read_dump_bytes(full)[1] == pages
    cut_points = list(range(0, 80)) + list(range(80, len(full), 997)) + [len(full) - 1]
    for n in cut_points:
        with pytest.raises(FormatError):
            read_dump_bytes(full[:n])
    with pytest.raises(FormatError, match="trailing"):
        read_dump_bytes(full + b"\0")


def test_class_tag_rules():
    a = ModuleRecord("a", "VendorA", "A2", "10", "B1", 2)
    b = ModuleRecord("b", "VendorA", "A2", "10", "B1", 2)
    c = ModuleRecord("c", "VendorA", "A2", "11", "B2", 3)
    check_class_tags([a, b, c])
    with pytest.raises(DomainError):
        check_class_tags([a, ModuleRecord("d", "VendorA", "A2", "10", "B1", 5)])
    with pytest.raises(DomainError):
        check_class_tags([a, ModuleRecord("e", "VendorB", "A2", "10", "B1", 2)])
    tagged = assign_class_tags([c, a, b])
    assert [r.class_tag for r in tagged] == [1, 2, 2]


def test_export_empty_is_header_only(tmp_path):
    export_features([], tmp_path / "f.csv")
    text = (tmp_path / "f.csv").read_text()
    assert text == "module_id,bank,row," + ",".join(f"f{i:02d}" for i in range(1, 27)) + "\n"
    assert read_features(tmp_path / "f.csv") == []


def test_export_zero_vector(tmp_path):
    export_features([("m", 1, 2, np.zeros(26))], tmp_path / "z.csv")
    line = (tmp_path / "z.csv").read_text().splitlines()[1]
    assert line == "m,1,2," + ",".join(["0"] * 26)


def test_export_wrong_length(tmp_path):
    with pytest.raises(DomainError):
        export_features([("m", 0, 0, np.zeros(25))], tmp_path / "w.csv")


def test_export_round_trip_random(tmp_path, rng):
    rows = []
    for i in range(1000):
        scale = 10.0 ** rng.integers(-8, 8, 26)
        rows.append((f"mod,{i % 3}", i % 8, i, rng.standard_normal(26) * scale))
    export_features(rows, tmp_path / "r.csv")
    back = read_features(tmp_path / "r.csv")
    assert len(back) == 1000
    for (m, b, r, v), (m2, b2, r2, v2) in zip(rows, back):
        assert (m, b, r) == (m2, b2, r2)
        np.testing.assert_allclose(v2, v, rtol=1e-12, atol=0)


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_is_exact(x):
    assert float(format_float(x)) == x
    assert format(float(format_float(x)), ".15g") == format(x, ".15g")


def test_index_and_random_access(tmp_path, rng):
    pages = random_pages(rng, 3)
    write_dump(pages, META, tmp_path / "i.dmp")
    reader = DumpReader(tmp_path / "i.dmp")
    assert reader.index() == [(p.bank, p.row, p.pattern) for p in pages]
    assert list(reader.read_pages([7, 0, 7])) == [pages[7], pages[0], pages[7]]
    with pytest.raises(DomainError):
        list(reader.read_pages([12]))


def test_index_checks_file_length(tmp_path, rng):
    write_dump(random_pages(rng, 1), META, tmp_path / "t.dmp")
    raw = (tmp_path / "t.dmp").read_bytes()
    (tmp_path / "short.dmp").write_bytes(raw[:-10])
    with pytest.raises(FormatError) as err:
        DumpReader(tmp_path / "short.dmp").index()
    assert err.value.page_index == 3
    (tmp_path / "long.dmp").write_bytes(raw + b"x")
    with pytest.raises(FormatError, match="trailing"):
        DumpReader(tmp_path / "long.dmp").index()


def test_write_from_generator_patches_count(tmp_path, rng):
    pages = random_pages(rng, 2)
    assert write_dump((p for p in pages), META, tmp_path / "g.dmp") == 8
    assert len(DumpReader(tmp_path / "g.dmp")) == 8
    assert read_dump(tmp_path / "g.dmp")[1] == pages


def test_failed_write_leaves_nothing(tmp_path, rng):
    pages = random_pages(rng, 1)
    odd = PageDump("mod-7", 0, 0, DataPattern.SOLID1, pages[0].d_r, Condition.HVRT)
    with pytest.raises(DomainError):
        write_dump(pages + [odd], META, tmp_path / "x.dmp")
    assert list(tmp_path.iterdir()) == []
