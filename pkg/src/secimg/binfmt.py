"""Parsers turning raw PE files and BIG-2015 sample pairs into sectioned buffers.

Two ingestion paths produce the same :class:`SectionedBinary` shape:

* ``parse_pe`` reads a PE section table directly (DOS magic, ``PE\\0\\0``
  signature, COFF header, 40-byte section entries).
* ``parse_bytes_file`` + ``parse_asm_sections`` reconstruct sections for
  header-stripped samples shipped as a hex dump plus a disassembly listing
  whose line prefixes (``segname:hexaddr``) mark section runs.

All parsers are pure functions of their inputs; no shared mutable state.
"""

from __future__ import annotations

import bisect
import logging
import re
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable

from .errors import AsmBufferMismatch, MalformedBytesLine, MalformedPE
from .sectioning import CharacteristicsFlags, SectionCategory, categorize_section

log = logging.getLogger(__name__)

DOS_MAGIC = b"MZ"
PE_SIGNATURE = b"PE\x00\x00"
PE_SIG_OFFSET_FIELD = 0x3C
COFF_HEADER_SIZE = 20
SECTION_HEADER_SIZE = 40

_COFF = struct.Struct("<HHIIIHH")
_SECTION_FIELDS = struct.Struct("<IIIIIIHHI")


@dataclass(frozen=True)
class ByteBuffer:
    """Raw sample content plus the source address of its first byte.

    ``chunks`` holds one ``(address, offset)`` anchor per contiguous
    address run; gap-free inputs (and raw PE files) have a single anchor.
    A chunk's byte length is the distance to the next anchor's offset.
    """

    data: bytes
    origin_address: int = 0
    chunks: tuple[tuple[int, int], ...] = ()

    def __len__(self) -> int:
        return len(self.data)

    def _anchors(self) -> tuple[tuple[int, int], ...]:
        return self.chunks or ((self.origin_address, 0),)

    def _chunk_index(self, address: int) -> int:
        starts = [a for a, _ in self._anchors()]
        return bisect.bisect_right(starts, address) - 1

    def offset_of(self, address: int) -> int | None:
        """Buffer offset of ``address``, or None when it falls in a gap/outside."""
        anchors = self._anchors()
        i = self._chunk_index(address)
        if i < 0:
            return None
        addr0, off0 = anchors[i]
        end = anchors[i + 1][1] if i + 1 < len(anchors) else len(self.data)
        delta = address - addr0
        if delta < end - off0:
            return off0 + delta
        return None

    def clamp_offset(self, address: int) -> int:
        """Monotone address-to-offset map for span endpoints (clips into bounds)."""
        anchors = self._anchors()
        i = self._chunk_index(address)
        if i < 0:
            return 0
        addr0, off0 = anchors[i]
        end = anchors[i + 1][1] if i + 1 < len(anchors) else len(self.data)
        return min(off0 + (address - addr0), end)


class SectionSource(Enum):
    PE_HEADER_TABLE = "pe_header_table"
    ASM_LINE_PREFIX = "asm_line_prefix"


@dataclass(frozen=True)
class SectionHeaderRaw:
    """One PE section-table entry, fields preserved verbatim."""

    raw_name: bytes
    name: str
    virtual_size: int
    virtual_address: int
    raw_size: int
    raw_offset: int
    characteristics: int


@dataclass
class SectionRecord:
    """A categorized byte span of one section within a sample's buffer."""

    name: str
    category: SectionCategory
    start: int
    length: int
    source: SectionSource
    table_index: int | None = None

    @property
    def end(self) -> int:
        return self.start + self.length


@dataclass
class SectionedBinary:
    """A sample's full byte content plus its ordered section records.

    Section spans, the optional header span, and any uncovered gaps
    partition the buffer; gap bytes belong to no record.
    """

    sample_id: str
    buffer: ByteBuffer
    sections: list[SectionRecord]
    header_span: tuple[int, int] | None = None
    raw_headers: list[SectionHeaderRaw] | None = None

    def check_invariants(self) -> None:
        """Assert ordering, disjointness and bounds of the section records."""
        prev_end = 0
        prev_start = -1
        for rec in self.sections:
            if rec.start < prev_start:
                raise AssertionError(f"{self.sample_id}: records not sorted by start")
            if rec.length > 0 and rec.start < prev_end:
                raise AssertionError(f"{self.sample_id}: overlapping records at {rec.start}")
            if rec.start + rec.length > len(self.buffer):
                raise AssertionError(f"{self.sample_id}: record past buffer end")
            prev_start = rec.start
            prev_end = max(prev_end, rec.end)


# --------------------------------------------------------------------------
# .bytes hex dumps
# --------------------------------------------------------------------------

_HEX_ADDR_RE = re.compile(r"[0-9A-Fa-f]+\Z")
_HEX_BYTE_RE = re.compile(r"[0-9A-Fa-f]{2}\Z")


def _iter_lines(text: str | IO[str] | Iterable[str]) -> Iterable[str]:
    if isinstance(text, str):
        return text.splitlines()
    return text


def parse_bytes_file(text: str | IO[str] | Iterable[str]) -> ByteBuffer:
    """Decode a hex-dump stream of ``address b0 b1 ...`` lines.

    ``??`` byte tokens (unreadable bytes in the source dump) become 0x00
    rather than being dropped.  Line addresses must increase; address gaps
    are tolerated -- bytes are concatenated and offsets for later address
    lookups are tracked against the cumulative byte count, with a warning.

    Raises:
        MalformedBytesLine: on a token that is neither two hex digits nor
            ``??``, a non-hex address, or a non-increasing line address.
    """
    data = bytearray()
    chunks: list[tuple[int, int]] = []
    origin: int | None = None
    prev_addr = -1
    expected_addr: int | None = None

    for line_no, raw_line in enumerate(_iter_lines(text), 1):
        tokens = raw_line.split()
        if not tokens:
            continue
        addr_tok = tokens[0]
        if not _HEX_ADDR_RE.match(addr_tok):
            raise MalformedBytesLine(f"bad address token {addr_tok!r}", line_no)
        addr = int(addr_tok, 16)
        if addr <= prev_addr:
            raise MalformedBytesLine(
                f"address 0x{addr:X} not increasing (previous 0x{prev_addr:X})", line_no
            )

        decoded = _decode_byte_tokens(tokens[1:], line_no)

        if origin is None:
            origin = addr
            chunks.append((addr, 0))
        elif addr != expected_addr:
            log.warning(
                "address gap at line %d: expected 0x%X, got 0x%X; concatenating",
                line_no, expected_addr, addr,
            )
            chunks.append((addr, len(data)))
        data.extend(decoded)
        prev_addr = addr
        expected_addr = addr + len(decoded)

    if origin is None:
        origin = 0
        chunks.append((0, 0))
    return ByteBuffer(bytes(data), origin, tuple(chunks))


def _decode_byte_tokens(tokens: list[str], line_no: int) -> bytes:
    joined = "".join(tokens)
    if len(joined) == 2 * len(tokens):
        try:
            return bytes.fromhex(joined.replace("??", "00"))
        except ValueError:
            pass  # fall through to locate the offending token
    for tok in tokens:
        if tok != "??" and not _HEX_BYTE_RE.match(tok):
            raise MalformedBytesLine(f"bad byte token {tok!r}", line_no)
    raise MalformedBytesLine("undecodable byte tokens", line_no)


# --------------------------------------------------------------------------
# .asm disassembly listings
# --------------------------------------------------------------------------

_SEG_PREFIX_RE = re.compile(r"^([^\s:]+):([0-9A-Fa-f]{4,16})(?![0-9A-Fa-f])")


def parse_asm_sections(
    text: str | IO[str] | Iterable[str],
    buffer: ByteBuffer,
    sample_id: str = "",
    name_map: dict[str, SectionCategory] | None = None,
) -> SectionedBinary:
    """Recover section records from a listing's ``segname:hexaddr`` prefixes.

    Contiguous runs of one segment name form candidate sections.  Each
    run's span starts at its first line address and extends to the next
    run's start; the final run extends to the buffer's end.  Spans are
    mapped into buffer offsets through the buffer's address anchors,
    clipped to bounds, and overlaps are resolved in favor of the earlier
    run.

    Raises:
        AsmBufferMismatch: when fewer than half the listing's addresses
            fall inside the buffer's address range (inconsistent pair).
    """
    runs: list[tuple[str, int]] = []
    current_name: str | None = None
    total_addrs = 0
    mapped_addrs = 0

    for line in _iter_lines(text):
        m = _SEG_PREFIX_RE.match(line)
        if not m:
            continue
        name, addr = m.group(1), int(m.group(2), 16)
        total_addrs += 1
        if buffer.offset_of(addr) is not None:
            mapped_addrs += 1
        if name != current_name:
            runs.append((name, addr))
            current_name = name

    if total_addrs == 0:
        raise AsmBufferMismatch(f"{sample_id or 'listing'}: no segment prefixes found")
    if mapped_addrs * 2 < total_addrs:
        raise AsmBufferMismatch(
            f"{sample_id or 'listing'}: only {mapped_addrs}/{total_addrs} "
            "listing addresses fall inside the byte buffer"
        )

    spans: list[tuple[str, int, int]] = []
    for i, (name, start_addr) in enumerate(runs):
        start = buffer.clamp_offset(start_addr)
        if i + 1 < len(runs):
            end = buffer.clamp_offset(runs[i + 1][1])
        else:
            end = len(buffer)
        if end > start:
            spans.append((name, start, end))

    spans.sort(key=lambda s: s[1])
    records: list[SectionRecord] = []
    for name, start, end in spans:
        if records and start < records[-1].end:
            start = records[-1].end  # earlier run keeps the overlap
            if start >= end:
                continue
        if records and records[-1].name == name and records[-1].end == start:
            records[-1].length = end - records[-1].start
            continue
        records.append(
            SectionRecord(
                name=name,
                category=categorize_section(name, None, name_map),
                start=start,
                length=end - start,
                source=SectionSource.ASM_LINE_PREFIX,
            )
        )

    return SectionedBinary(sample_id, buffer, records, header_span=None)


# --------------------------------------------------------------------------
# PE section tables
# --------------------------------------------------------------------------


def parse_pe(
    raw: ByteBuffer | bytes,
    sample_id: str = "",
    name_map: dict[str, SectionCategory] | None = None,
) -> SectionedBinary:
    """Read a PE file's section table into a :class:`SectionedBinary`.

    Only the section table is extracted (names, raw spans, characteristics);
    imports, exports and resources are out of scope.  Zero-length sections
    are retained -- they carry a name and flags even though they contribute
    no pixels.  The header span covers everything before the first section's
    raw data.

    Raises:
        MalformedPE: bad DOS/PE magic, truncated headers, or a section
            table/section span reaching past the end of the file.  Such a
            sample is reported and skipped by callers, never zero-filled.
    """
    data = raw.data if isinstance(raw, ByteBuffer) else bytes(raw)

    if len(data) < 2 or data[:2] != DOS_MAGIC:
        raise MalformedPE(f"{sample_id or 'input'}: bad DOS magic")
    if len(data) < PE_SIG_OFFSET_FIELD + 4:
        raise MalformedPE(f"{sample_id or 'input'}: truncated DOS header")
    e_lfanew = struct.unpack_from("<I", data, PE_SIG_OFFSET_FIELD)[0]
    if e_lfanew + 4 + COFF_HEADER_SIZE > len(data):
        raise MalformedPE(f"{sample_id or 'input'}: PE header offset out of bounds")
    if data[e_lfanew : e_lfanew + 4] != PE_SIGNATURE:
        raise MalformedPE(f"{sample_id or 'input'}: missing PE signature")

    (_machine, n_sections, _ts, _symtab, _nsyms, size_opt, _chars) = _COFF.unpack_from(
        data, e_lfanew + 4
    )
    table_off = e_lfanew + 4 + COFF_HEADER_SIZE + size_opt
    if table_off + n_sections * SECTION_HEADER_SIZE > len(data):
        raise MalformedPE(f"{sample_id or 'input'}: section table out of bounds")

    headers: list[SectionHeaderRaw] = []
    for i in range(n_sections):
        off = table_off + i * SECTION_HEADER_SIZE
        raw_name = data[off : off + 8]
        name = raw_name.split(b"\x00", 1)[0].decode("ascii", errors="replace")
        vsize, vaddr, raw_size, raw_offset, _prel, _plin, _nrel, _nlin, chars = (
            _SECTION_FIELDS.unpack_from(data, off + 8)
        )
        if raw_offset + raw_size > len(data):
            raise MalformedPE(
                f"{sample_id or 'input'}: section {name!r} data [{raw_offset:#x}, "
                f"{raw_offset + raw_size:#x}) past end of file ({len(data):#x})"
            )
        headers.append(
            SectionHeaderRaw(raw_name, name, vsize, vaddr, raw_size, raw_offset, chars)
        )

    records = [
        SectionRecord(
            name=h.name,
            category=categorize_section(
                h.name, CharacteristicsFlags.from_word(h.characteristics), name_map
            ),
            start=h.raw_offset,
            length=h.raw_size,
            source=SectionSource.PE_HEADER_TABLE,
            table_index=i,
        )
        for i, h in enumerate(headers)
    ]
    # malformed tables sometimes declare non-monotonic raw offsets; span order
    # follows the file layout while table_index keeps the original order.
    records.sort(key=lambda r: (r.start, r.table_index))
    prev_end = 0
    for rec in records:
        if rec.length > 0 and rec.start < prev_end:
            clipped = min(prev_end, rec.end)
            log.warning(
                "%s: section %r overlaps previous section; clipping start %#x -> %#x",
                sample_id or "input", rec.name, rec.start, clipped,
            )
            rec.length = rec.end - clipped
            rec.start = clipped
        prev_end = max(prev_end, rec.end)
    records.sort(key=lambda r: (r.start, r.table_index))

    first_data = min(
        (h.raw_offset for h in headers if h.raw_size > 0), default=len(data)
    )
    return SectionedBinary(
        sample_id=sample_id,
        buffer=ByteBuffer(data, 0),
        sections=records,
        header_span=(0, first_data),
        raw_headers=headers,
    )
