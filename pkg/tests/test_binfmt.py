"""Ingestion tests: hex dumps, disassembly listings, PE section tables."""

import io
import struct

import numpy as np
import pytest

import pe_fixture
from secimg.binfmt import (
    ByteBuffer,
    SectionSource,
    parse_asm_sections,
    parse_bytes_file,
    parse_pe,
)
from secimg.errors import AsmBufferMismatch, MalformedBytesLine, MalformedPE
from secimg.sectioning import SectionCategory


# ---------------------------------------------------------------------------
# .bytes hex dumps
# ---------------------------------------------------------------------------


class TestParseBytesFile:
    def test_plain_line(self):
        buf = parse_bytes_file("00401000 4D 5A 90 00")
        assert buf.data == bytes([0x4D, 0x5A, 0x90, 0x00])
        assert buf.origin_address == 0x401000

    def test_unknown_bytes_become_zero(self):
        buf = parse_bytes_file("00401000 ?? ?? 4D")
        assert buf.data == bytes([0x00, 0x00, 0x4D])

    def test_all_unknown_line(self):
        buf = parse_bytes_file("00401000 " + " ".join(["??"] * 16))
        assert buf.data == bytes(16)

    def test_bad_byte_token(self):
        with pytest.raises(MalformedBytesLine) as exc:
            parse_bytes_file("00401000 GG 00")
        assert exc.value.line_no == 1

    def test_bad_address_token(self):
        with pytest.raises(MalformedBytesLine) as exc:
            parse_bytes_file("00401000 00\nXYZ 00")
        assert exc.value.line_no == 2

    def test_overlong_token_rejected(self):
        with pytest.raises(MalformedBytesLine):
            parse_bytes_file("00401000 4D5A")

    def test_non_increasing_address(self):
        text = "00401010 00\n00401000 11"
        with pytest.raises(MalformedBytesLine) as exc:
            parse_bytes_file(text)
        assert exc.value.line_no == 2

    def test_address_gap_concatenates_with_warning(self, caplog):
        text = "00401000 01 02\n00402000 03 04"
        with caplog.at_level("WARNING"):
            buf = parse_bytes_file(text)
        assert buf.data == bytes([1, 2, 3, 4])
        assert any("gap" in r.message for r in caplog.records)
        # anchors let address lookups survive the gap
        assert buf.offset_of(0x401001) == 1
        assert buf.offset_of(0x402001) == 3
        assert buf.offset_of(0x401002) is None

    def test_empty_stream(self):
        buf = parse_bytes_file("")
        assert buf.data == b"" and len(buf) == 0

    def test_accepts_file_object(self):
        buf = parse_bytes_file(io.StringIO("00400000 AA BB\n00400002 CC\n"))
        assert buf.data == bytes([0xAA, 0xBB, 0xCC])

    def test_total_over_valid_lines(self):
        # output length equals the token count; every ?? position is 0x00
        rng = np.random.RandomState(11)
        addr = 0x10000
        lines = []
        expected = bytearray()
        for _ in range(200):
            n = int(rng.randint(1, 17))
            toks = []
            for _ in range(n):
                if rng.rand() < 0.25:
                    toks.append("??")
                    expected.append(0)
                else:
                    v = int(rng.randint(256))
                    toks.append(f"{v:02X}")
                    expected.append(v)
            lines.append(f"{addr:08X} " + " ".join(toks))
            addr += n
        buf = parse_bytes_file("\n".join(lines))
        assert buf.data == bytes(expected)


# ---------------------------------------------------------------------------
# .asm listings
# ---------------------------------------------------------------------------


class TestParseAsmSections:
    def test_three_line_listing(self):
        # hand-computed: origin 0x401000, buffer 0x1100 bytes; .text run covers
        # [0, 0x1000) up to the next run's start, .rdata covers the rest.
        buffer = ByteBuffer(bytes(0x1100), 0x401000)
        text = "\n".join(
            [".text:00401000 push esi", ".text:00401010 mov eax, 1", ".rdata:00402000 db 0"]
        )
        bin = parse_asm_sections(text, buffer, "s")
        assert [(r.name, r.start, r.length) for r in bin.sections] == [
            (".text", 0, 0x1000),
            (".rdata", 0x1000, 0x100),
        ]
        assert all(r.source is SectionSource.ASM_LINE_PREFIX for r in bin.sections)
        assert bin.sections[0].category is SectionCategory.TEXT
        assert bin.sections[1].category is SectionCategory.RDATA
        assert bin.header_span is None
        bin.check_invariants()

    def test_single_unknown_segment(self):
        buffer = ByteBuffer(bytes(64), 0x401000)
        bin = parse_asm_sections("UPX1:00401000 db 0", buffer)
        assert len(bin.sections) == 1
        rec = bin.sections[0]
        assert rec.name == "UPX1"
        assert (rec.start, rec.length) == (0, 64)
        assert rec.category is SectionCategory.OTHER

    def test_addresses_below_origin(self):
        buffer = ByteBuffer(bytes(64), 0x401000)
        text = ".text:00300000 db 0\n.text:00300010 db 0"
        with pytest.raises(AsmBufferMismatch):
            parse_asm_sections(text, buffer)

    def test_no_prefixes(self):
        with pytest.raises(AsmBufferMismatch):
            parse_asm_sections("; just a comment\n", ByteBuffer(bytes(8), 0))

    def test_half_in_range_passes(self):
        # exactly 50% mappable is accepted (error is strictly-fewer-than-half)
        buffer = ByteBuffer(bytes(0x20), 0x401000)
        text = ".text:00401000 a\n.data:00500000 b"
        bin = parse_asm_sections(text, buffer)
        assert [(r.name, r.start, r.length) for r in bin.sections] == [(".text", 0, 0x20)]

    def test_runs_clipped_to_buffer(self):
        buffer = ByteBuffer(bytes(0x18), 0x401000)
        text = ".text:00401000 a\n.rsrc:00401010 b\n.rsrc:00401020 c"
        bin = parse_asm_sections(text, buffer)
        assert [(r.name, r.start, r.length) for r in bin.sections] == [
            (".text", 0, 0x10),
            (".rsrc", 0x10, 0x8),
        ]

    def test_repeated_segment_names_stay_separate(self):
        buffer = ByteBuffer(bytes(0x30), 0x401000)
        text = ".text:00401000 a\n.data:00401010 b\n.text:00401020 c"
        bin = parse_asm_sections(text, buffer)
        assert [(r.name, r.start, r.length) for r in bin.sections] == [
            (".text", 0, 0x10),
            (".data", 0x10, 0x10),
            (".text", 0x20, 0x10),
        ]

    def test_gap_in_bytes_maps_to_cumulative_offsets(self):
        # 16 bytes at 0x401000 then 16 more at 0x402000: the second segment's
        # asm addresses land at cumulative offset 16, not 0x1000.
        text_bytes = "00401000 " + " ".join(["AA"] * 16) + "\n00402000 " + " ".join(["BB"] * 16)
        buffer = parse_bytes_file(text_bytes)
        listing = ".text:00401000 a\n.rsrc:00402000 b"
        bin = parse_asm_sections(listing, buffer)
        assert [(r.name, r.start, r.length) for r in bin.sections] == [
            (".text", 0, 16),
            (".rsrc", 16, 16),
        ]


# ---------------------------------------------------------------------------
# PE section tables
# ---------------------------------------------------------------------------


class TestParsePE:
    def test_two_section_fixture(self):
        pe = pe_fixture.build_pe(
            [
                (".text", 0x1000, 0x1F0, 0x200, 0x200,
                 pe_fixture.SCN_CODE | pe_fixture.SCN_EXECUTE | pe_fixture.SCN_READ),
                (".data", 0x2000, 0x0F0, 0x400, 0x100,
                 pe_fixture.SCN_INIT_DATA | pe_fixture.SCN_READ | pe_fixture.SCN_WRITE),
            ]
        )
        bin = parse_pe(pe, "two_section")
        assert [(r.name, r.start, r.length) for r in bin.sections] == [
            (".text", 512, 512),
            (".data", 1024, 256),
        ]
        assert bin.header_span == (0, 512)
        assert bin.sections[0].category is SectionCategory.TEXT
        assert bin.sections[1].category is SectionCategory.DATA
        assert all(r.source is SectionSource.PE_HEADER_TABLE for r in bin.sections)
        bin.check_invariants()

    def test_bad_magic(self):
        with pytest.raises(MalformedPE):
            parse_pe(b"ZZ" + bytes(128))

    def test_out_of_bounds_section_data(self):
        pe = pe_fixture.build_pe(
            [(".text", 0x1000, 0x200, 0x200, 0x10000, pe_fixture.SCN_CODE)],
            file_size=0x400,
            fill=False,
        )
        with pytest.raises(MalformedPE):
            parse_pe(pe)

    def test_truncated_section_table(self):
        pe = pe_fixture.build_pe(
            [(".text", 0x1000, 0x200, 0x200, 0x100, pe_fixture.SCN_CODE)],
        )
        truncated = pe[: pe_fixture.section_table_offset() + 10]
        with pytest.raises(MalformedPE):
            parse_pe(truncated)

    def test_zero_length_section_kept(self):
        pe = pe_fixture.build_pe(
            [
                (".text", 0x1000, 0x100, 0x200, 0x100, pe_fixture.SCN_CODE),
                (".bss", 0x2000, 0x800, 0, 0,
                 pe_fixture.SCN_UNINIT_DATA | pe_fixture.SCN_READ | pe_fixture.SCN_WRITE),
            ]
        )
        bin = parse_pe(pe)
        by_name = {r.name: r for r in bin.sections}
        assert by_name[".bss"].length == 0
        assert by_name[".bss"].category is SectionCategory.OTHER
        assert bin.header_span == (0, 0x200)

    def test_disguised_code_section(self):
        pe = pe_fixture.build_pe(
            [(".evil", 0x1000, 0x100, 0x200, 0x100,
              pe_fixture.SCN_CODE | pe_fixture.SCN_EXECUTE | pe_fixture.SCN_READ)]
        )
        bin = parse_pe(pe)
        assert bin.sections[0].category is SectionCategory.TEXT

    def test_missing_pe_signature(self):
        pe = bytearray(pe_fixture.build_pe([(".text", 0x1000, 0x10, 0x200, 0x10, 0)]))
        pe[pe_fixture.E_LFANEW : pe_fixture.E_LFANEW + 4] = b"XX\0\0"
        with pytest.raises(MalformedPE):
            parse_pe(bytes(pe))

    def test_nonmonotonic_offsets_resorted(self):
        pe = pe_fixture.build_pe(
            [
                (".data", 0x2000, 0x100, 0x400, 0x100, pe_fixture.SCN_INIT_DATA),
                (".text", 0x1000, 0x200, 0x200, 0x200, pe_fixture.SCN_CODE),
            ]
        )
        bin = parse_pe(pe)
        assert [r.name for r in bin.sections] == [".text", ".data"]
        assert [r.table_index for r in bin.sections] == [1, 0]
        bin.check_invariants()

    def test_reserialization_is_faithful(self):
        sections = [
            (".text", 0x1000, 0x1F0, 0x200, 0x200,
             pe_fixture.SCN_CODE | pe_fixture.SCN_EXECUTE | pe_fixture.SCN_READ),
            (".rsrc", 0x3000, 0x80, 0x400, 0x200,
             pe_fixture.SCN_INIT_DATA | pe_fixture.SCN_READ),
        ]
        pe = pe_fixture.build_pe(sections)
        bin = parse_pe(pe)
        table_off = pe_fixture.section_table_offset()
        for i, hdr in enumerate(bin.raw_headers):
            off = table_off + i * 40
            assert hdr.raw_name == pe[off : off + 8]
            assert hdr.name.encode().ljust(8, b"\0") == pe[off : off + 8]
            repacked = struct.pack(
                "<IIII", hdr.virtual_size, hdr.virtual_address, hdr.raw_size, hdr.raw_offset
            )
            assert repacked == pe[off + 8 : off + 24]
            assert struct.pack("<I", hdr.characteristics) == pe[off + 36 : off + 40]

    def test_random_fixtures_keep_invariants(self):
        rng = np.random.RandomState(3)
        for _ in range(25):
            n = int(rng.randint(1, 6))
            sections = []
            off = 0x400  # clear of the section table even at five entries
            for j in range(n):
                size = int(rng.randint(0, 0x300)) & ~0xF
                sections.append((f".s{j}", 0x1000 * (j + 1), size, off, size, 0x40000040))
                off += max(size, 0x10)
            bin = parse_pe(pe_fixture.build_pe(sections))
            bin.check_invariants()
            assert len(bin.sections) == n
