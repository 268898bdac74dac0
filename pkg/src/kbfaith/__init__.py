"""Knowledge-grounded entity faithfulness for abstractive summaries."""

from .category import Category
from .coverage import (
    Document,
    Provenance,
    classify_entity,
    coverage_report,
    filter_abstractive_subset,
    load_corpus,
    split_entities,
)
from .entity_linker import AliasTable, Mention, canonical_label, link, load_aliases, normalize
from .kb_store import Fact, KnowledgeBase, KnowledgeSubgraph, entities_in, facts_from, load_kb, subgraph
from .linearizer import LinearizationConfig, augment_source, linearize, random_facts, random_words
from .metrics import entity_consistency, entity_correctness, evaluate_corpus, rouge1
from .revision import RevisionConfig, build_fact_memory, copy_baseline, revise, score_candidates
from .skeleton import SkeletonSummary, mask_entities, unmask

__all__ = [
    "AliasTable",
    "Category",
    "Document",
    "Fact",
    "KnowledgeBase",
    "KnowledgeSubgraph",
    "LinearizationConfig",
    "Mention",
    "Provenance",
    "RevisionConfig",
    "SkeletonSummary",
    "augment_source",
    "build_fact_memory",
    "canonical_label",
    "classify_entity",
    "copy_baseline",
    "coverage_report",
    "entities_in",
    "entity_consistency",
    "entity_correctness",
    "evaluate_corpus",
    "facts_from",
    "filter_abstractive_subset",
    "linearize",
    "link",
    "load_aliases",
    "load_corpus",
    "load_kb",
    "mask_entities",
    "normalize",
    "random_facts",
    "random_words",
    "revise",
    "rouge1",
    "score_candidates",
    "split_entities",
    "subgraph",
    "unmask",
]
