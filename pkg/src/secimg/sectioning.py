"""Semantic categorization of executable sections.

Sections are bucketed into six classes -- HEADER, TEXT, RDATA, DATA, RSRC
and OTHER -- from their name first and their characteristics flags as a
fallback.  Malware routinely disguises section names, so an unknown name
with code/execute flags still lands in TEXT; a known name always wins over
odd flags (name/flag conflicts are logged, not resolved in favor of flags).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .binfmt import SectionedBinary

log = logging.getLogger(__name__)

# IMAGE_SCN_* bits of the PE section characteristics word.
SCN_CNT_CODE = 0x00000020
SCN_CNT_INITIALIZED_DATA = 0x00000040
SCN_CNT_UNINITIALIZED_DATA = 0x00000080
SCN_MEM_EXECUTE = 0x20000000
SCN_MEM_READ = 0x40000000
SCN_MEM_WRITE = 0x80000000


class SectionCategory(enum.IntEnum):
    """The six section classes, in the canonical channel order."""

    HEADER = 0
    TEXT = 1
    RDATA = 2
    DATA = 3
    RSRC = 4
    OTHER = 5


CANONICAL_ORDER: tuple[SectionCategory, ...] = tuple(SectionCategory)


@dataclass(frozen=True)
class CharacteristicsFlags:
    """The six content/access bits decoded from a section's flag word."""

    code: bool = False
    initialized_data: bool = False
    uninitialized_data: bool = False
    execute: bool = False
    read: bool = False
    write: bool = False

    @classmethod
    def from_word(cls, word: int) -> "CharacteristicsFlags":
        return cls(
            code=bool(word & SCN_CNT_CODE),
            initialized_data=bool(word & SCN_CNT_INITIALIZED_DATA),
            uninitialized_data=bool(word & SCN_CNT_UNINITIALIZED_DATA),
            execute=bool(word & SCN_MEM_EXECUTE),
            read=bool(word & SCN_MEM_READ),
            write=bool(word & SCN_MEM_WRITE),
        )


# Known-name map. .edata/.idata/.tls/.bss/.reloc are deliberately OTHER:
# they are uninitialized or too short to carry usable texture.
BUILTIN_NAME_MAP: dict[str, SectionCategory] = {
    ".text": SectionCategory.TEXT,
    "CODE": SectionCategory.TEXT,
    ".rdata": SectionCategory.RDATA,
    ".rodata": SectionCategory.RDATA,
    ".data": SectionCategory.DATA,
    ".rsrc": SectionCategory.RSRC,
    ".edata": SectionCategory.OTHER,
    ".idata": SectionCategory.OTHER,
    ".tls": SectionCategory.OTHER,
    ".bss": SectionCategory.OTHER,
    ".reloc": SectionCategory.OTHER,
}


def load_name_map(path: str | Path) -> dict[str, SectionCategory]:
    """Read a ``name=CATEGORY`` overlay for the builtin name map.

    One pair per line; blank lines and ``#`` comments are skipped.  HEADER
    is not a legal target: header spans come from the PE layout, not from
    section names.
    """
    overlay: dict[str, SectionCategory] = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, cat = line.partition("=")
        name, cat = name.strip(), cat.strip().upper()
        if not sep or not name or not cat:
            raise ValueError(f"{path}: line {line_no}: expected name=CATEGORY")
        try:
            category = SectionCategory[cat]
        except KeyError:
            raise ValueError(f"{path}: line {line_no}: unknown category {cat!r}") from None
        if category is SectionCategory.HEADER:
            raise ValueError(f"{path}: line {line_no}: HEADER cannot be assigned by name")
        overlay[name] = category
    return overlay


def categorize_section(
    name: str,
    flags: CharacteristicsFlags | None = None,
    name_map: dict[str, SectionCategory] | None = None,
) -> SectionCategory:
    """Assign a category from a section's name, falling back to its flags.

    Resolution order: exact name match (builtin map plus ``name_map``
    overlay), then flag predicates for unknown names, then OTHER.  Name
    always takes precedence; a known name whose flags disagree is logged.
    """
    table = BUILTIN_NAME_MAP if name_map is None else {**BUILTIN_NAME_MAP, **name_map}
    by_name = table.get(name)
    if by_name is not None:
        if flags is not None and _by_flags(flags) not in (by_name, SectionCategory.OTHER):
            log.debug("section %r: flags suggest %s, name map says %s",
                      name, _by_flags(flags).name, by_name.name)
        return by_name
    if flags is not None:
        return _by_flags(flags)
    return SectionCategory.OTHER


def _by_flags(flags: CharacteristicsFlags) -> SectionCategory:
    if flags.code or flags.execute:
        return SectionCategory.TEXT
    if flags.initialized_data and flags.read and not flags.write:
        return SectionCategory.RDATA
    if flags.initialized_data and flags.write:
        return SectionCategory.DATA
    return SectionCategory.OTHER


def category_spans(bin: "SectionedBinary", cat: SectionCategory) -> list[tuple[int, int]]:
    """Byte spans ``(start, length)`` of one category, in file order.

    HEADER is special-cased to the sample's header span (empty for
    BIG-2015-style samples, which ship without a PE header).  Bytes between
    sections belong to no category.
    """
    if cat is SectionCategory.HEADER:
        return [bin.header_span] if bin.header_span is not None else []
    return [(r.start, r.length) for r in bin.sections if r.category is cat]
