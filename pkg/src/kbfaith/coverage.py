"""Target-entity provenance: in the source, reachable in the KB subgraph, or unsupported."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .category import Category
from .entity_linker import AliasTable, Mention, entity_categories, entity_set, link
from .kb_store import EntityId, KnowledgeBase, KnowledgeSubgraph, subgraph

log = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    id: str
    source: str
    target: str
    candidate: str | None = None

    def to_json(self) -> dict:
        row = {"id": self.id, "source": self.source, "target": self.target}
        if self.candidate is not None:
            row["candidate"] = self.candidate
        return row


def load_corpus(path) -> list[Document]:
    """Read a JSONL corpus. Ids must be unique; source and target non-empty."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(Path(path), encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}:{line_no}: expected a JSON object")
            doc_id = obj.get("id")
            source, target = obj.get("source"), obj.get("target")
            if doc_id is None or not isinstance(source, str) or not isinstance(target, str):
                raise CorpusFormatError(f"{path}:{line_no}: missing id, source or target")
            if not source.strip() or not target.strip():
                raise CorpusFormatError(f"{path}:{line_no}: empty source or target")
            doc_id = str(doc_id)
            if doc_id in seen:
                raise CorpusFormatError(f"{path}:{line_no}: duplicate document id {doc_id!r}")
            seen.add(doc_id)
            candidate = obj.get("candidate")
            docs.append(Document(doc_id, source, target, candidate if isinstance(candidate, str) else None))
    return docs


def write_corpus(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class Provenance:
    """Where a target entity is supported.

    ``hop`` is 0 for in-source entities, the minimal subgraph hop for KB-only
    entities, and None for unsupported ones.
    """

    kind: str
    hop: int | None

    @classmethod
    def in_kb_hop(cls, hop: int) -> "Provenance":
        if hop < 1:
            raise ValueError("KB hop must be >= 1")
        return cls("in_kb_hop", hop)

    def __str__(self) -> str:
        return f"in_kb_hop({self.hop})" if self.kind == "in_kb_hop" else self.kind


IN_SOURCE = Provenance("in_source", 0)
UNSUPPORTED = Provenance("unsupported", None)


def classify_entity(
    entity: EntityId,
    source_entities: set[EntityId] | frozenset[EntityId],
    sub: KnowledgeSubgraph,
    entity_hops: dict[EntityId, int] | None = None,
) -> Provenance:
    """Classify one target entity. Pass precomputed ``sub.entity_hops()`` when calling in a loop."""
    if entity in source_entities:
        return IN_SOURCE
    hops = entity_hops if entity_hops is not None else sub.entity_hops()
    hop = hops.get(entity)
    if hop is None:
        return UNSUPPORTED
    # an entity outside the source can only sit at hop >= 1
    return Provenance.in_kb_hop(max(hop, 1))


def split_entities(
    target_mentions: Sequence[Mention], source_entities: set[EntityId] | frozenset[EntityId]
) -> tuple[frozenset[EntityId], frozenset[EntityId]]:
    """Partition unique target entities into (abstractive, extractive)."""
    targets = entity_set(target_mentions)
    return frozenset(targets - set(source_entities)), frozenset(targets & set(source_entities))


@dataclass(frozen=True)
class DocumentCoverage:
    id: str
    classes: dict[EntityId, Provenance]
    categories: dict[EntityId, Category]


def document_coverage(doc: Document, kb: KnowledgeBase, aliases: AliasTable, k: int) -> DocumentCoverage:
    source_entities = entity_set(link(doc.source, aliases))
    sub = subgraph(kb, source_entities, k)
    hops = sub.entity_hops()
    target_categories = entity_categories(link(doc.target, aliases))
    classes = {e: classify_entity(e, source_entities, sub, hops) for e in target_categories}
    return DocumentCoverage(doc.id, classes, target_categories)


@dataclass
class CoverageReport:
    """Per-category cumulative coverage.

    ``new[c][h]`` counts target entities whose provenance hop is exactly h;
    ``covered[c][h]`` is the cumulative count up to hop h. Per category,
    ``sum(new[c]) + unsupported[c] == total[c]``.
    """

    k: int
    corpus_size: int
    total: dict[Category, int]
    new: dict[Category, list[int]]
    unsupported: dict[Category, int]
    empty_target_ids: list[str]

    @property
    def covered(self) -> dict[Category, list[int]]:
        out = {}
        for cat, counts in self.new.items():
            running, cum = 0, []
            for c in counts:
                running += c
                cum.append(running)
            out[cat] = cum
        return out

    def percent(self, category: Category, hop: int) -> float | None:
        total = self.total[category]
        if total == 0:
            return None
        return 100.0 * self.covered[category][hop] / total

    def to_json(self) -> dict:
        out: dict = {}
        covered = self.covered
        for cat in Category:
            out[cat.value] = {
                str(h): {
                    "count": covered[cat][h],
                    "new": self.new[cat][h],
                    "percent": self.percent(cat, h),
                    "total": self.total[cat],
                }
                for h in range(self.k + 1)
            }
        all_total = sum(self.total.values())
        all_cov = [sum(covered[c][h] for c in Category) for h in range(self.k + 1)]
        out["all"] = {
            str(h): {
                "count": all_cov[h],
                "new": sum(self.new[c][h] for c in Category),
                "percent": (100.0 * all_cov[h] / all_total) if all_total else None,
                "total": all_total,
            }
            for h in range(self.k + 1)
        }
        out["diagnostics"] = {
            "hops": self.k,
            "documents": self.corpus_size,
            "target_entities": all_total,
            "unsupported": {c.value: self.unsupported[c] for c in Category},
            "empty_target_documents": len(self.empty_target_ids),
            "empty_target_ids": list(self.empty_target_ids),
        }
        return out


def aggregate_coverage(per_doc: Iterable[DocumentCoverage], k: int) -> CoverageReport:
    total = {c: 0 for c in Category}
    new = {c: [0] * (k + 1) for c in Category}
    unsupported = {c: 0 for c in Category}
    empty: list[str] = []
    n = 0
    for dc in per_doc:
        n += 1
        if not dc.classes:
            empty.append(dc.id)
        for entity, prov in dc.classes.items():
            cat = dc.categories[entity]
            total[cat] += 1
            if prov.hop is None:
                unsupported[cat] += 1
            else:
                new[cat][prov.hop] += 1
    return CoverageReport(k, n, total, new, unsupported, sorted(empty))


def coverage_report(corpus: Sequence[Document], kb: KnowledgeBase, aliases: AliasTable, k: int) -> CoverageReport:
    """Classify each document's unique target entities and aggregate by category and hop."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    report = aggregate_coverage((document_coverage(d, kb, aliases, k) for d in corpus), k)
    if report.empty_target_ids:
        log.warning("%d documents have no linkable target entity", len(report.empty_target_ids))
    return report


def filter_abstractive_subset(
    corpus: Sequence[Document],
    kb: KnowledgeBase | None,
    aliases: AliasTable,
    category: Category,
) -> list[Document]:
    """Keep documents with at least one target entity of ``category`` missing from the source.

    When ``kb`` is given, only target entities present in its label table count.
    """
    kept = []
    for doc in corpus:
        source_entities = entity_set(link(doc.source, aliases))
        for m in link(doc.target, aliases):
            if m.category != category or m.entity in source_entities:
                continue
            if kb is not None and m.entity not in kb.labels:
                continue
            kept.append(doc)
            break
    return kept
