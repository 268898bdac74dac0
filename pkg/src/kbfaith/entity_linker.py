"""Alias-dictionary entity linker.

Mentions are found by greedy, left-to-right longest match of normalized text
spans against the alias table. Spans must start and end on word boundaries,
so "US" never matches inside "USAF" but does match in "the US.".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .category import Category
from .kb_store import EntityId, UnknownEntityError, canonical_label  # noqa: F401

log = logging.getLogger(__name__)


class AliasFormatError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


def normalize(text: str) -> str:
    """Case-fold and collapse runs of whitespace."""
    return " ".join(text.casefold().split())


@dataclass(frozen=True, order=True)
class AliasEntry:
    entity: EntityId
    category: Category
    priority: int = 0


@dataclass(frozen=True)
class Mention:
    start: int
    end: int
    surface: str
    entity: EntityId
    category: Category

    def to_json(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "surface": self.surface,
            "entity_id": self.entity,
            "category": self.category.value,
        }


@dataclass(frozen=True)
class AliasTable:
    entries: Mapping[str, tuple[AliasEntry, ...]]
    duplicates_dropped: int = 0
    _best: Mapping[str, AliasEntry] = field(default=MappingProxyType({}), repr=False, compare=False)
    _prefixes: frozenset[str] = field(default=frozenset(), repr=False, compare=False)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, EntityId, Category | str, int]]) -> "AliasTable":
        """Build a table from ``(alias, entity, category, priority)`` rows.

        A repeated (alias, entity) pair keeps its first row.
        """
        entries: dict[str, dict[EntityId, AliasEntry]] = {}
        dropped = 0
        for alias, entity, category, priority in rows:
            key = normalize(alias)
            if not key:
                raise ValueError(f"alias {alias!r} is empty after normalization")
            if priority < 0:
                raise ValueError(f"negative priority for alias {alias!r}")
            if not isinstance(category, Category):
                category = Category.parse(category)
            per_alias = entries.setdefault(key, {})
            if entity in per_alias:
                dropped += 1
                continue
            per_alias[entity] = AliasEntry(entity, category, int(priority))

        frozen = {k: tuple(sorted(v.values())) for k, v in entries.items()}
        best = {k: min(v, key=lambda e: (-e.priority, e.entity)) for k, v in frozen.items()}
        prefixes = {key[:i] for key in frozen for i in range(1, len(key) + 1)}
        return cls(
            entries=MappingProxyType(frozen),
            duplicates_dropped=dropped,
            _best=MappingProxyType(best),
            _prefixes=frozenset(prefixes),
        )

    def __len__(self) -> int:
        """Number of distinct (normalized alias, entity) pairs."""
        return sum(len(v) for v in self.entries.values())

    def lookup(self, alias: str) -> AliasEntry | None:
        """Resolve an alias: highest priority wins, then the smallest entity id."""
        return self._best.get(normalize(alias))

    def is_prefix(self, normalized: str) -> bool:
        return normalized in self._prefixes


def load_aliases(path) -> AliasTable:
    rows = []
    with open(Path(path), encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise AliasFormatError(path, line_no, f"expected 4 tab-separated fields, got {len(parts)}")
            alias, entity, category, priority = parts
            entity = entity.strip()
            if not normalize(alias) or not entity:
                raise AliasFormatError(path, line_no, "empty alias or entity id")
            try:
                cat = Category.parse(category)
                prio = int(priority)
            except ValueError as exc:
                raise AliasFormatError(path, line_no, str(exc)) from None
            if prio < 0:
                raise AliasFormatError(path, line_no, "priority must be >= 0")
            rows.append((alias, entity, cat, prio))
    table = AliasTable.from_rows(rows)
    log.info("loaded %d aliases (%d duplicate pairs dropped)", len(table), table.duplicates_dropped)
    return table


def _is_boundary(text: str, i: int) -> bool:
    if i <= 0 or i >= len(text):
        return True
    return not (text[i - 1].isalnum() and text[i].isalnum())


def link(text: str, aliases: AliasTable) -> list[Mention]:
    """Link alias mentions in ``text``; output is sorted and non-overlapping."""
    mentions: list[Mention] = []
    n = len(text)
    ends = [i for i in range(1, n + 1) if _is_boundary(text, i)]
    pos = 0
    end_cursor = 0
    while pos < n:
        if text[pos].isspace() or not _is_boundary(text, pos):
            pos += 1
            continue
        while end_cursor < len(ends) and ends[end_cursor] <= pos:
            end_cursor += 1
        best_end = -1
        best: AliasEntry | None = None
        for j in range(end_cursor, len(ends)):
            end = ends[j]
            if text[end - 1].isspace():
                continue
            key = normalize(text[pos:end])
            if not aliases.is_prefix(key):
                break
            entry = aliases._best.get(key)
            if entry is not None:
                best_end, best = end, entry
        if best is None:
            pos += 1
            continue
        mentions.append(Mention(pos, best_end, text[pos:best_end], best.entity, best.category))
        pos = best_end
    return mentions


def entity_set(mentions: Iterable[Mention]) -> set[EntityId]:
    return {m.entity for m in mentions}


def entity_categories(mentions: Iterable[Mention]) -> dict[EntityId, Category]:
    """Category of each linked entity, taken from its first mention."""
    out: dict[EntityId, Category] = {}
    for m in mentions:
        out.setdefault(m.entity, m.category)
    return out
