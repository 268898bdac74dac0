"""Triple store with a subject index and breadth-first k-hop subgraph extraction.

The KB only stores outgoing edges: a fact is reachable from its subject and
nothing else. Inverse edges must be present in the input file to be walked.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .category import Category

log = logging.getLogger(__name__)

EntityId = str

SEPARATOR = "[SEP]"
OBJECT_KINDS = ("entity", "literal")
MISSING_OBJECT_POLICIES = ("reject", "literal")


class KBFormatError(ValueError):
    """A KB input file has a malformed line."""

    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class UnknownEntityError(KeyError):
    pass


@dataclass(frozen=True)
class Fact:
    """A (subject, relation, object) triple carrying the labels needed to print it.

    Equality and hashing use only the identifying part of the triple, so two
    facts that differ in label text are still the same fact.
    """

    subject: EntityId
    relation: str
    object: str
    object_is_entity: bool = True
    subject_label: str = field(default="", compare=False)
    relation_label: str = field(default="", compare=False)
    object_label: str = field(default="", compare=False)
    object_category: Category | None = field(default=None, compare=False)

    @property
    def sort_key(self) -> tuple[str, str, str, str]:
        return (self.subject, self.relation, self.object, "e" if self.object_is_entity else "l")

    @property
    def labels(self) -> tuple[str, str, str]:
        return (self.subject_label, self.relation_label, self.object_label)

    def to_json(self) -> dict:
        return {
            "subject": self.subject,
            "relation": self.relation,
            "object": self.object,
            "object_kind": "entity" if self.object_is_entity else "literal",
            "labels": list(self.labels),
        }


def _object_order(fact: Fact) -> tuple[str, str, str]:
    return fact.sort_key[1:]


@dataclass(frozen=True)
class LoadStats:
    facts: int = 0
    entities: int = 0
    relations: int = 0
    duplicates_dropped: int = 0
    rejected_lines: int = 0
    literalized: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class KnowledgeBase:
    facts: tuple[Fact, ...]
    subject_index: Mapping[EntityId, tuple[Fact, ...]]
    labels: Mapping[EntityId, str]
    types: Mapping[EntityId, Category]
    stats: LoadStats = LoadStats()

    @classmethod
    def build(
        cls,
        facts: Iterable[Fact],
        labels: Mapping[EntityId, str],
        types: Mapping[EntityId, Category] | None = None,
        *,
        rejected_lines: int = 0,
        literalized: int = 0,
    ) -> "KnowledgeBase":
        """Deduplicate and index facts. Input order does not matter."""
        seen: set[Fact] = set()
        unique: list[Fact] = []
        dropped = 0
        for fact in facts:
            if fact in seen:
                dropped += 1
                continue
            seen.add(fact)
            unique.append(fact)
        unique.sort(key=lambda f: f.sort_key)

        index: dict[EntityId, list[Fact]] = {}
        for fact in unique:
            index.setdefault(fact.subject, []).append(fact)
        frozen_index = {s: tuple(sorted(fs, key=_object_order)) for s, fs in index.items()}

        stats = LoadStats(
            facts=len(unique),
            entities=len(labels),
            relations=len({f.relation for f in unique}),
            duplicates_dropped=dropped,
            rejected_lines=rejected_lines,
            literalized=literalized,
        )
        return cls(
            facts=tuple(unique),
            subject_index=MappingProxyType(frozen_index),
            labels=MappingProxyType(dict(labels)),
            types=MappingProxyType(dict(types or {})),
            stats=stats,
        )

    def __len__(self) -> int:
        return len(self.facts)


@dataclass(frozen=True)
class KnowledgeSubgraph:
    """Facts reachable within k hops of the seeds, each tagged with its minimal hop."""

    facts: tuple[Fact, ...]
    hop_of: Mapping[Fact, int]
    seeds: frozenset[EntityId]
    k: int

    def __len__(self) -> int:
        return len(self.facts)

    def entity_hops(self) -> dict[EntityId, int]:
        """Minimal hop at which each entity becomes part of the subgraph (seeds are 0)."""
        hops = {e: 0 for e in self.seeds}
        for fact in self.facts:
            hops.setdefault(fact.subject, self.hop_of[fact] - 1)
            if fact.object_is_entity:
                h = self.hop_of[fact]
                if hops.get(fact.object, h + 1) > h:
                    hops[fact.object] = h
        return hops

    def facts_within(self, hop: int) -> list[Fact]:
        return [f for f in self.facts if self.hop_of[f] <= hop]


def _check_label(path, line_no: int, what: str, value: str) -> str:
    value = value.strip()
    if not value:
        raise KBFormatError(path, line_no, f"empty {what}")
    if SEPARATOR in value:
        raise KBFormatError(path, line_no, f"{what} contains the reserved separator {SEPARATOR!r}")
    return value


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield line_no, line


def load_labels(path) -> tuple[dict[EntityId, str], dict[EntityId, Category]]:
    labels: dict[EntityId, str] = {}
    types: dict[EntityId, Category] = {}
    for line_no, line in _data_lines(Path(path)):
        parts = line.split("\t")
        if len(parts) != 3:
            raise KBFormatError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
        entity = parts[0].strip()
        if not entity:
            raise KBFormatError(path, line_no, "empty entity id")
        label = _check_label(path, line_no, "label", parts[1])
        try:
            category = Category.parse(parts[2])
        except ValueError as exc:
            raise KBFormatError(path, line_no, str(exc)) from None
        if entity in labels and (labels[entity], types[entity]) != (label, category):
            raise KBFormatError(path, line_no, f"conflicting duplicate entry for {entity}")
        labels[entity] = label
        types[entity] = category
    return labels, types


def load_kb(triples_path, labels_path, *, missing_object: str = "reject") -> KnowledgeBase:
    """Load the triples and labels TSV files into an indexed, deduplicated KB.

    ``missing_object`` controls entity-valued objects absent from the label
    table: ``"reject"`` drops the line, ``"literal"`` keeps the object id as a
    literal value. Lines whose subject has no label are always dropped.
    """
    if missing_object not in MISSING_OBJECT_POLICIES:
        raise ValueError(f"missing_object must be one of {MISSING_OBJECT_POLICIES}")
    labels, types = load_labels(labels_path)

    facts: list[Fact] = []
    rejected = literalized = 0
    for line_no, line in _data_lines(Path(triples_path)):
        parts = line.split("\t")
        if len(parts) != 5:
            raise KBFormatError(triples_path, line_no, f"expected 5 tab-separated fields, got {len(parts)}")
        subject, relation, relation_label, kind, value = (p.strip() for p in parts)
        if not subject or not relation:
            raise KBFormatError(triples_path, line_no, "empty subject or relation id")
        if kind not in OBJECT_KINDS:
            raise KBFormatError(triples_path, line_no, f"object_kind must be entity or literal, got {kind!r}")
        relation_label = _check_label(triples_path, line_no, "relation label", relation_label)
        value = _check_label(triples_path, line_no, "object value", value)

        if subject not in labels:
            log.debug("%s:%d: subject %s has no label, line dropped", triples_path, line_no, subject)
            rejected += 1
            continue
        is_entity = kind == "entity"
        if is_entity and value not in labels:
            if missing_object == "reject":
                log.debug("%s:%d: object %s has no label, line dropped", triples_path, line_no, value)
                rejected += 1
                continue
            is_entity = False
            literalized += 1

        facts.append(
            Fact(
                subject=subject,
                relation=relation,
                object=value,
                object_is_entity=is_entity,
                subject_label=labels[subject],
                relation_label=relation_label,
                object_label=labels[value] if is_entity else value,
                object_category=types[value] if is_entity else None,
            )
        )

    kb = KnowledgeBase.build(facts, labels, types, rejected_lines=rejected, literalized=literalized)
    log.info(
        "loaded KB: %d facts, %d entities, %d duplicates dropped, %d lines rejected",
        kb.stats.facts,
        kb.stats.entities,
        kb.stats.duplicates_dropped,
        kb.stats.rejected_lines,
    )
    return kb


def facts_from(kb: KnowledgeBase, subject: EntityId) -> list[Fact]:
    """Facts with the given subject, ordered by relation id then object."""
    return list(kb.subject_index.get(subject, ()))


def subgraph(kb: KnowledgeBase, seeds: Iterable[EntityId], k: int) -> KnowledgeSubgraph:
    """Breadth-first expansion from ``seeds`` for ``k`` hops.

    Hop-1 facts are those whose subject is a seed. The next frontier is the set
    of not-yet-visited entity objects of the current hop's facts; literal
    objects never expand.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    seed_set = frozenset(seeds)
    hop_of: dict[Fact, int] = {}
    visited = set(seed_set)
    frontier = sorted(seed_set)
    for hop in range(1, k + 1):
        if not frontier:
            break
        nxt: set[EntityId] = set()
        for entity in frontier:
            for fact in kb.subject_index.get(entity, ()):
                # each subject is expanded once, so a fact is first seen at its minimal hop
                hop_of[fact] = hop
                if fact.object_is_entity and fact.object not in visited:
                    nxt.add(fact.object)
        visited |= nxt
        frontier = sorted(nxt)

    ordered = tuple(sorted(hop_of, key=lambda f: (hop_of[f],) + f.sort_key))
    return KnowledgeSubgraph(facts=ordered, hop_of=MappingProxyType(hop_of), seeds=seed_set, k=k)


def entities_in(sub: KnowledgeSubgraph) -> set[EntityId]:
    """Seeds plus every subject and entity-valued object in the subgraph."""
    out = set(sub.seeds)
    for fact in sub.facts:
        out.add(fact.subject)
        if fact.object_is_entity:
            out.add(fact.object)
    return out


def canonical_label(kb: KnowledgeBase, entity: EntityId) -> str:
    try:
        return kb.labels[entity]
    except KeyError:
        raise UnknownEntityError(entity) from None
