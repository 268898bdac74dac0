"""Entity-ID faithfulness metrics, ROUGE-1, and corpus evaluation."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .category import Category
from .coverage import Document, split_entities
from .entity_linker import AliasTable, Mention, entity_categories, entity_set, link
from .kb_store import EntityId, KnowledgeBase, subgraph
from .revision import RevisionConfig, RevisionResult, build_fact_memory, revise_with
from .skeleton import mask_mentions

log = logging.getLogger(__name__)

MODES = ("inference", "oracle", "predictions")


@dataclass(frozen=True)
class EntityScore:
    matched: int
    total: int
    breakdown: Mapping[str, "EntityScore"] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.matched <= self.total:
            raise ValueError(f"invalid score {self.matched}/{self.total}")

    @property
    def defined(self) -> bool:
        return self.total > 0

    @property
    def value(self) -> float | None:
        return self.matched / self.total if self.total else None

    def to_json(self) -> dict:
        out = {"matched": self.matched, "total": self.total, "value": self.value}
        for name, sub in self.breakdown.items():
            out[name] = sub.to_json()
        return out


def _split_score(
    predicted: set[EntityId], reference: set[EntityId], source_entities: set[EntityId] | None, categories
) -> dict[str, EntityScore]:
    breakdown: dict[str, EntityScore] = {}
    if source_entities is not None:
        abstractive = predicted - source_entities
        extractive = predicted & source_entities
        breakdown["abstractive"] = EntityScore(len(abstractive & reference), len(abstractive))
        breakdown["extractive"] = EntityScore(len(extractive & reference), len(extractive))
    if categories is not None:
        for cat in sorted({categories[e] for e in predicted}, key=lambda c: c.value):
            members = {e for e in predicted if categories[e] == cat}
            breakdown[cat.value] = EntityScore(len(members & reference), len(members))
    return breakdown


def entity_correctness(
    predicted: Iterable[EntityId],
    target: Iterable[EntityId],
    *,
    source_entities: Iterable[EntityId] | None = None,
    categories: Mapping[EntityId, Category] | None = None,
) -> EntityScore:
    """Fraction of predicted entities found in the target.

    The breakdown always carries the recall-oriented variant (fraction of
    target entities predicted); the abstractive/extractive split needs
    ``source_entities`` and the per-category split needs ``categories``.
    """
    p, t = set(predicted), set(target)
    s = set(source_entities) if source_entities is not None else None
    breakdown = {"recall": EntityScore(len(p & t), len(t))}
    breakdown.update(_split_score(p, t, s, categories))
    return EntityScore(len(p & t), len(p), breakdown)


def entity_consistency(
    predicted: Iterable[EntityId],
    source_entities: Iterable[EntityId],
    *,
    categories: Mapping[EntityId, Category] | None = None,
) -> EntityScore:
    """Fraction of predicted entities found in the source."""
    p, s = set(predicted), set(source_entities)
    return EntityScore(len(p & s), len(p), _split_score(p, s, None, categories))


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    defined: bool = True

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def canonicalize_mentions(text: str, mentions: Sequence[Mention]) -> str:
    """Replace each mention with a standalone ``[<entity id>]`` token."""
    out: list[str] = []
    last = 0
    for m in mentions:
        out.append(text[last : m.start])
        out.append(f" [{m.entity}] ")
        last = m.end
    out.append(text[last:])
    return "".join(out)


def rouge1(
    candidate: str,
    reference: str,
    canonical_mode: bool = False,
    aliases: AliasTable | None = None,
) -> RougeScore:
    """Unigram overlap with clipped counts on case-folded whitespace tokens.

    In canonical mode, linked mentions on both sides are first replaced by
    their entity id so surface-form variants of one entity match.
    """
    if canonical_mode:
        if aliases is None:
            raise ValueError("canonical mode needs an alias table")
        candidate = canonicalize_mentions(candidate, link(candidate, aliases))
        reference = canonicalize_mentions(reference, link(reference, aliases))
    cand = Counter(candidate.casefold().split())
    ref = Counter(reference.casefold().split())
    n_cand, n_ref = sum(cand.values()), sum(ref.values())
    if n_ref == 0:
        return RougeScore(0.0, 0.0, 0.0, defined=False)
    overlap = sum((cand & ref).values())
    precision = overlap / n_cand if n_cand else 0.0
    recall = overlap / n_ref
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return RougeScore(precision, recall, f1)


class Tally:
    """Micro (summed) and macro (per-document mean) accumulation of matched/total."""

    def __init__(self):
        self.matched = 0
        self.total = 0
        self.doc_values: list[float] = []

    def add(self, score: EntityScore | None) -> None:
        if score is None or not score.total:
            return
        self.matched += score.matched
        self.total += score.total
        self.doc_values.append(score.matched / score.total)

    def to_json(self) -> dict:
        return {
            "matched": self.matched,
            "total": self.total,
            "value": self.matched / self.total if self.total else None,
            "macro": sum(self.doc_values) / len(self.doc_values) if self.doc_values else None,
            "documents": len(self.doc_values),
        }


class TallyGroup(dict):
    def __missing__(self, key):
        self[key] = Tally()
        return self[key]

    def to_json(self) -> dict:
        return {k: self[k].to_json() for k in sorted(self)}


@dataclass
class DocumentEval:
    """Everything the corpus report needs from one document."""

    id: str
    predicted: dict[EntityId, Category]
    target_mentions: list[Mention]
    source_entities: set[EntityId]
    text: str
    target_text: str
    revision: RevisionResult | None = None
    factcc: float | None = None

    @property
    def target_entities(self) -> set[EntityId]:
        return entity_set(self.target_mentions)

    def correctness(self) -> EntityScore:
        return entity_correctness(
            self.predicted, self.target_entities, source_entities=self.source_entities, categories=self.predicted
        )

    def consistency(self) -> EntityScore:
        return entity_consistency(self.predicted, self.source_entities, categories=self.predicted)


def revised_entities(
    mentions: Sequence[Mention], masked_categories: Iterable[Category], result: RevisionResult, kb: KnowledgeBase
) -> dict[EntityId, Category]:
    """Entities of a revised summary: untouched mentions plus the filled slots."""
    wanted = frozenset(masked_categories)
    out: dict[EntityId, Category] = {}
    for m in mentions:
        if m.category not in wanted:
            out.setdefault(m.entity, m.category)
    for slot in result.slots:
        entity = slot.entity
        out.setdefault(entity, kb.types.get(entity, slot.category))
    return out


def evaluate_document(
    doc: Document,
    kb: KnowledgeBase,
    aliases: AliasTable,
    hops: int,
    mode: str,
    categories: Iterable[Category],
    cfg: RevisionConfig,
    prediction=None,
) -> DocumentEval | None:
    """Evaluate one document; returns None when there is nothing to evaluate."""
    source_mentions = link(doc.source, aliases)
    source_entities = entity_set(source_mentions)
    target_mentions = link(doc.target, aliases)
    factcc = None
    revision = None
    if mode == "predictions":
        if prediction is None:
            return None
        if isinstance(prediction, Mapping):
            factcc = prediction.get("factcc")
            prediction = prediction.get("prediction")
        if not isinstance(prediction, str):
            return None
        text = prediction
        predicted = entity_categories(link(text, aliases))
    else:
        summary = doc.target if mode == "oracle" else doc.candidate
        if summary is None:
            return None
        mentions = link(summary, aliases)
        skeleton = mask_mentions(summary, mentions, categories)
        memory = build_fact_memory(subgraph(kb, source_entities, hops))
        revision = revise_with(doc.id, skeleton, source_mentions, memory, kb, cfg)
        text = revision.final_text
        predicted = revised_entities(mentions, categories, revision, kb)
    return DocumentEval(doc.id, predicted, target_mentions, source_entities, text, doc.target, revision, factcc)


@dataclass
class EvalReport:
    mode: str
    hops: int
    categories: tuple[Category, ...]
    docs: list[DocumentEval]
    skipped: dict[str, list[str]]
    rouge_aliases: AliasTable | None = None
    extra: dict = field(default_factory=dict)

    def correctness(self) -> Tally:
        t = Tally()
        for d in self.docs:
            t.add(d.correctness())
        return t

    def consistency(self) -> Tally:
        t = Tally()
        for d in self.docs:
            t.add(d.consistency())
        return t

    def to_json(self) -> dict:
        correctness = Tally()
        recall = Tally()
        split = TallyGroup()
        recall_split = TallyGroup()
        by_cat = TallyGroup()
        recall_by_cat = TallyGroup()
        doc_subsets = TallyGroup()
        consistency = Tally()
        cons_by_cat = TallyGroup()
        slot_acc = TallyGroup()
        rouge_surface: list[RougeScore] = []
        rouge_canonical: list[RougeScore] = []
        factcc: list[float] = []
        no_entities: list[str] = []

        for d in self.docs:
            targets = d.target_entities
            abstractive_targets, extractive_targets = split_entities(d.target_mentions, d.source_entities)
            target_cats = entity_categories(d.target_mentions)

            rouge_surface.append(rouge1(d.text, d.target_text))
            if self.rouge_aliases is not None:
                rouge_canonical.append(rouge1(d.text, d.target_text, True, self.rouge_aliases))
            if d.factcc is not None:
                factcc.append(float(d.factcc))
            if d.revision is not None and self.mode == "oracle":
                for slot in d.revision.slots:
                    side = "extractive" if slot.original.entity in d.source_entities else "abstractive"
                    hit = int(slot.entity == slot.original.entity)
                    for bucket in (side, "all"):
                        slot_acc[bucket].add(EntityScore(hit, 1))

            if not d.predicted:
                no_entities.append(d.id)
                continue
            corr = d.correctness()
            correctness.add(corr)
            recall.add(corr.breakdown["recall"])
            for name in ("abstractive", "extractive"):
                split[name].add(corr.breakdown[name])
            p = set(d.predicted)
            recall_split["abstractive"].add(EntityScore(len(p & abstractive_targets), len(abstractive_targets)))
            recall_split["extractive"].add(EntityScore(len(p & extractive_targets), len(extractive_targets)))
            for cat in Category:
                if cat.value in corr.breakdown:
                    by_cat[cat.value].add(corr.breakdown[cat.value])
                members = {e for e in targets if target_cats[e] == cat}
                if members:
                    recall_by_cat[cat.value].add(EntityScore(len(p & members), len(members)))
            subset = "abstractive" if abstractive_targets else "extractive"
            doc_subsets[subset].add(EntityScore(corr.matched, corr.total))

            cons = d.consistency()
            consistency.add(cons)
            for cat in Category:
                if cat.value in cons.breakdown:
                    cons_by_cat[cat.value].add(cons.breakdown[cat.value])

        out = {
            "mode": self.mode,
            "hops": self.hops,
            "categories": [c.value for c in self.categories],
            "correctness": {
                **correctness.to_json(),
                **split.to_json(),
                "by_category": by_cat.to_json(),
                "subsets": doc_subsets.to_json(),
                "recall": {**recall.to_json(), **recall_split.to_json(), "by_category": recall_by_cat.to_json()},
            },
            "consistency": {**consistency.to_json(), "by_category": cons_by_cat.to_json()},
            "rouge1": {**_mean_rouge(rouge_surface), "canonical": _mean_rouge(rouge_canonical)},
            "factcc": sum(factcc) / len(factcc) if factcc else None,
        }
        if self.mode == "oracle":
            out["oracle_slots"] = slot_acc.to_json()
        out["diagnostics"] = {
            "documents": len(self.docs) + sum(len(v) for v in self.skipped.values()),
            "evaluated": len(self.docs) - len(no_entities),
            "no_predicted_entities": no_entities,
            **{k: v for k, v in sorted(self.skipped.items())},
        }
        out.update(self.extra)
        return out


def _mean_rouge(scores: Sequence[RougeScore]) -> dict:
    scores = [s for s in scores if s.defined]
    if not scores:
        return {"precision": None, "recall": None, "f1": None, "documents": 0}
    n = len(scores)
    return {
        "precision": sum(s.precision for s in scores) / n,
        "recall": sum(s.recall for s in scores) / n,
        "f1": sum(s.f1 for s in scores) / n,
        "documents": n,
    }


def evaluate_corpus(
    corpus: Sequence[Document],
    kb: KnowledgeBase,
    aliases: AliasTable,
    hops: int = 1,
    *,
    mode: str = "inference",
    categories: Iterable[Category] = (Category.LOCATION,),
    cfg: RevisionConfig = RevisionConfig(),
    predictions: Mapping[str, object] | None = None,
) -> EvalReport:
    """Evaluate a corpus in one of three modes.

    ``inference`` masks and revises each document's candidate, ``oracle``
    masks and revises the gold target, and ``predictions`` scores externally
    supplied texts keyed by document id. Entity scores are micro-averaged
    (``value``) with the per-document mean alongside (``macro``).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "predictions" and predictions is None:
        raise ValueError("predictions mode needs a predictions mapping")
    cats = tuple(sorted(set(categories), key=lambda c: c.value))
    docs: list[DocumentEval] = []
    skipped: dict[str, list[str]] = {"missing_prediction": [], "failed": []}
    for doc in sorted(corpus, key=lambda d: d.id):
        try:
            pred = predictions.get(doc.id) if predictions is not None else None
            de = evaluate_document(doc, kb, aliases, hops, mode, cats, cfg, pred)
        except (KeyError, ValueError) as exc:
            log.warning("document %s failed: %s", doc.id, exc)
            skipped["failed"].append(doc.id)
            continue
        if de is None:
            skipped["missing_prediction"].append(doc.id)
            continue
        docs.append(de)
    return EvalReport(mode, hops, cats, docs, skipped, rouge_aliases=aliases)
