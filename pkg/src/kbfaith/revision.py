"""Mask filling from a (subject, relation) -> object-set fact memory.

Candidates come from memory keys whose subject is linked in the source. Each
(key, object) pair is scored as

    w_type * [object category == slot category]
  + w_context * |fact words & context words| / |fact words|
  + w_salience * (mentions of the subject in the source / all source mentions)

where fact words are the relation label and object label words and the
context is ``context_window`` tokens either side of the mask. A key scores
the best of its pairs; only the ``top_k`` best keys contribute candidates,
and an entity scores the best pair it appears in.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

from .category import Category
from .coverage import Document
from .entity_linker import AliasTable, Mention, entity_set, link
from .kb_store import EntityId, Fact, KnowledgeBase, KnowledgeSubgraph, subgraph
from .skeleton import PLACEHOLDER_RE, MaskSlot, SkeletonSummary, unmask

Key = tuple[EntityId, str]

_WORD_RE = re.compile(r"\w+")


def words(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.casefold()))


@dataclass(frozen=True)
class RevisionConfig:
    top_k: int = 16
    w_type: float = 2.0
    w_context: float = 1.0
    w_salience: float = 0.5
    context_window: int = 10

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be positive")
        weights = (self.w_type, self.w_context, self.w_salience)
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ValueError("weights must be nonnegative with at least one positive")
        if self.context_window < 0:
            raise ValueError("context_window must be >= 0")


@dataclass(frozen=True)
class FactMemory:
    keys: tuple[Key, ...]
    values: Mapping[Key, frozenset[EntityId]]
    provenance: Mapping[Key, tuple[Fact, ...]]
    labels: Mapping[EntityId, str]
    categories: Mapping[EntityId, Category | None]

    def __len__(self) -> int:
        return len(self.keys)


def build_fact_memory(sub: KnowledgeSubgraph) -> FactMemory:
    """Group subgraph facts by (subject, relation).

    Literal objects are kept in the provenance but are not fillable values.
    """
    values: dict[Key, set[EntityId]] = {}
    provenance: dict[Key, list[Fact]] = {}
    labels: dict[EntityId, str] = {}
    categories: dict[EntityId, Category | None] = {}
    for fact in sub.facts:
        key = (fact.subject, fact.relation)
        provenance.setdefault(key, []).append(fact)
        objs = values.setdefault(key, set())
        if fact.object_is_entity:
            objs.add(fact.object)
            labels[fact.object] = fact.object_label
            categories[fact.object] = fact.object_category
    keys = tuple(sorted(values))
    return FactMemory(
        keys=keys,
        values=MappingProxyType({k: frozenset(values[k]) for k in keys}),
        provenance=MappingProxyType({k: tuple(sorted(provenance[k], key=lambda f: f.sort_key)) for k in keys}),
        labels=MappingProxyType(labels),
        categories=MappingProxyType(categories),
    )


@dataclass(frozen=True)
class Candidate:
    entity: EntityId
    score: float
    supporting_facts: tuple[Fact, ...]


def context_words(skeleton: SkeletonSummary, slot: MaskSlot, window: int) -> set[str]:
    """Words within ``window`` whitespace tokens either side of the slot's placeholder."""
    start, end = skeleton.placeholder_spans()[slot.index]
    left = skeleton.text[:start].split()
    right = skeleton.text[end:].split()
    tokens = (left[-window:] if window else []) + right[:window]
    out: set[str] = set()
    for tok in tokens:
        out |= words(PLACEHOLDER_RE.sub(" ", tok))
    return out


def score_candidates(
    slot: MaskSlot,
    skeleton: SkeletonSummary,
    source_mentions: Sequence[Mention],
    memory: FactMemory,
    cfg: RevisionConfig = RevisionConfig(),
) -> list[Candidate]:
    """Rank fill candidates for one slot, best first; ties go to the smaller entity id."""
    if not source_mentions:
        return []
    mention_counts = Counter(m.entity for m in source_mentions)
    n_mentions = len(source_mentions)
    ctx = context_words(skeleton, slot, cfg.context_window)

    key_pairs: list[tuple[float, Key, dict[EntityId, float]]] = []
    for key in memory.keys:
        subject, _ = key
        if subject not in mention_counts or not memory.values[key]:
            continue
        salience = mention_counts[subject] / n_mentions
        relation_label = memory.provenance[key][0].relation_label
        pair_scores: dict[EntityId, float] = {}
        for entity in memory.values[key]:
            fact_words = words(relation_label) | words(memory.labels[entity])
            overlap = len(fact_words & ctx) / len(fact_words) if fact_words else 0.0
            type_match = 1.0 if memory.categories.get(entity) == slot.category else 0.0
            pair_scores[entity] = cfg.w_type * type_match + cfg.w_context * overlap + cfg.w_salience * salience
        key_pairs.append((max(pair_scores.values()), key, pair_scores))

    key_pairs.sort(key=lambda t: (-t[0], t[1]))
    best: dict[EntityId, float] = {}
    support: dict[EntityId, list[tuple[float, Fact]]] = {}
    for _, key, pair_scores in key_pairs[: cfg.top_k]:
        for entity, score in pair_scores.items():
            if score > best.get(entity, float("-inf")):
                best[entity] = score
            for fact in memory.provenance[key]:
                if fact.object_is_entity and fact.object == entity:
                    support.setdefault(entity, []).append((score, fact))

    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    return [
        Candidate(
            entity,
            score,
            tuple(f for _, f in sorted(support[entity], key=lambda sf: (-sf[0], sf[1].sort_key))),
        )
        for entity, score in ranked
    ]


def copy_baseline(slot: MaskSlot, source_mentions: Sequence[Mention]) -> EntityId | None:
    """Most frequent source entity of the slot's category; ties go to the earliest first mention."""
    counts: Counter[EntityId] = Counter()
    first: dict[EntityId, int] = {}
    for m in source_mentions:
        if m.category != slot.category:
            continue
        counts[m.entity] += 1
        first.setdefault(m.entity, m.start)
    if not counts:
        return None
    return min(counts, key=lambda e: (-counts[e], first[e]))


@dataclass(frozen=True)
class SlotRevision:
    index: int
    category: Category
    original: Mention
    chosen_id: EntityId | None
    chosen_label: str
    score: float
    supporting_facts: tuple[Fact, ...]
    alternates: tuple[tuple[EntityId, float], ...]
    method: str  # "memory", "copy" or "kept"

    @property
    def entity(self) -> EntityId:
        """Entity the slot ends up denoting."""
        return self.chosen_id if self.chosen_id is not None else self.original.entity

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "category": self.category.value,
            "original_id": self.original.entity,
            "chosen_id": self.chosen_id,
            "chosen_label": self.chosen_label,
            "score": self.score,
            "method": self.method,
            "supporting_facts": [list(f.labels) for f in self.supporting_facts],
            "alternates": [{"entity_id": e, "score": s} for e, s in self.alternates],
        }


@dataclass(frozen=True)
class RevisionResult:
    doc_id: str
    slots: tuple[SlotRevision, ...]
    final_text: str

    def to_json(self) -> dict:
        return {"id": self.doc_id, "final_text": self.final_text, "slots": [s.to_json() for s in self.slots]}


def _label_for(entity: EntityId, kb: KnowledgeBase, fallback: str) -> str:
    return kb.labels.get(entity, fallback)


def revise_with(
    doc_id: str,
    skeleton: SkeletonSummary,
    source_mentions: Sequence[Mention],
    memory: FactMemory,
    kb: KnowledgeBase,
    cfg: RevisionConfig = RevisionConfig(),
) -> RevisionResult:
    revised: list[SlotRevision] = []
    for slot in skeleton.slots:
        ranking = score_candidates(slot, skeleton, source_mentions, memory, cfg)
        if ranking:
            top = ranking[0]
            revised.append(
                SlotRevision(
                    slot.index,
                    slot.category,
                    slot.original,
                    top.entity,
                    _label_for(top.entity, kb, memory.labels[top.entity]),
                    top.score,
                    top.supporting_facts,
                    tuple((c.entity, c.score) for c in ranking[1:]),
                    "memory",
                )
            )
            continue
        copied = copy_baseline(slot, source_mentions)
        if copied is not None:
            surface = next(m.surface for m in source_mentions if m.entity == copied)
            revised.append(
                SlotRevision(
                    slot.index, slot.category, slot.original, copied, _label_for(copied, kb, surface), 0.0, (), (), "copy"
                )
            )
        else:
            revised.append(
                SlotRevision(
                    slot.index, slot.category, slot.original, None, slot.original.surface, 0.0, (), (), "kept"
                )
            )
    final_text = unmask(skeleton, {s.index: s.chosen_label for s in revised})
    return RevisionResult(doc_id, tuple(revised), final_text)


def revise(
    doc: Document,
    skeleton: SkeletonSummary,
    kb: KnowledgeBase,
    aliases: AliasTable,
    cfg: RevisionConfig = RevisionConfig(),
    hops: int = 1,
) -> RevisionResult:
    """Fill every slot of ``skeleton`` using facts reachable from the document's source.

    Falls back to :func:`copy_baseline` when no memory candidate exists, and
    keeps the original surface when that fails too.
    """
    source_mentions = link(doc.source, aliases)
    sub = subgraph(kb, entity_set(source_mentions), hops)
    return revise_with(doc.id, skeleton, source_mentions, build_fact_memory(sub), kb, cfg)
