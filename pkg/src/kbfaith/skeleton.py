"""Replace typed entity mentions with ``[MASK:<category>:<index>]`` slots and fill them back."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .category import Category
from .entity_linker import AliasTable, Mention, link

PLACEHOLDER_RE = re.compile(r"\[MASK:([a-z_]+):(\d+)\]")


class MissingFillError(KeyError):
    def __init__(self, index: int, category: Category):
        self.index = index
        self.category = category
        super().__init__(f"no fill for slot {index} ({category.value})")


def placeholder(category: Category, index: int) -> str:
    return f"[MASK:{category.value}:{index}]"


@dataclass(frozen=True)
class MaskSlot:
    index: int
    category: Category
    original: Mention

    @property
    def placeholder(self) -> str:
        return placeholder(self.category, self.index)

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "category": self.category.value,
            "surface": self.original.surface,
            "entity_id": self.original.entity,
        }


@dataclass(frozen=True)
class SkeletonSummary:
    text: str
    slots: tuple[MaskSlot, ...]
    # placeholder offsets recorded at mask time; rebuilt from the text when absent
    spans: tuple[tuple[int, int], ...] | None = field(default=None, compare=False, repr=False)

    def originals(self) -> dict[int, str]:
        return {s.index: s.original.surface for s in self.slots}

    def placeholder_spans(self) -> dict[int, tuple[int, int]]:
        """Character span of each slot's placeholder in ``text``."""
        if self.spans is not None:
            return {s.index: span for s, span in zip(self.slots, self.spans)}
        by_key = {(s.category.value, s.index): s.index for s in self.slots}
        spans: dict[int, tuple[int, int]] = {}
        for m in PLACEHOLDER_RE.finditer(self.text):
            idx = by_key.get((m.group(1), int(m.group(2))))
            if idx is not None and idx not in spans:
                spans[idx] = (m.start(), m.end())
        if len(spans) != len(self.slots):
            raise ValueError("skeleton text does not contain a placeholder for every slot")
        return spans

    def to_json(self) -> dict:
        return {"skeleton": self.text, "slots": [s.to_json() for s in self.slots]}


def mask_mentions(summary: str, mentions: Iterable[Mention], categories: Iterable[Category]) -> SkeletonSummary:
    wanted = frozenset(categories)
    pieces: list[str] = []
    slots: list[MaskSlot] = []
    spans: list[tuple[int, int]] = []
    last = 0
    offset = 0
    for m in sorted(mentions, key=lambda m: m.start):
        if m.category not in wanted:
            continue
        slot = MaskSlot(len(slots), m.category, m)
        pieces.append(summary[last : m.start])
        offset += m.start - last
        pieces.append(slot.placeholder)
        spans.append((offset, offset + len(slot.placeholder)))
        offset += len(slot.placeholder)
        slots.append(slot)
        last = m.end
    pieces.append(summary[last:])
    return SkeletonSummary("".join(pieces), tuple(slots), tuple(spans))


def mask_entities(summary: str, aliases: AliasTable, categories: Iterable[Category]) -> SkeletonSummary:
    """Mask linked mentions whose category is in ``categories``; everything else is untouched."""
    return mask_mentions(summary, link(summary, aliases), categories)


def unmask(skeleton: SkeletonSummary, fills: Mapping[int, str]) -> str:
    """Substitute each slot's placeholder with its fill string."""
    for slot in skeleton.slots:
        if slot.index not in fills:
            raise MissingFillError(slot.index, slot.category)
    spans = skeleton.placeholder_spans()
    out: list[str] = []
    last = 0
    for idx, (start, end) in sorted(spans.items(), key=lambda kv: kv[1][0]):
        out.append(skeleton.text[last:start])
        out.append(fills[idx])
        last = end
    out.append(skeleton.text[last:])
    return "".join(out)
