"""Fact linearization, budgeted source augmentation, and the random control baselines.

Token counts here are whitespace tokens, not model subwords.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .category import Category
from .entity_linker import Mention
from .kb_store import SEPARATOR, Fact, KnowledgeBase, KnowledgeSubgraph

log = logging.getLogger(__name__)

ORDERINGS = ("subject_mention_order", "lexicographic")


@dataclass(frozen=True)
class LinearizationConfig:
    budget_tokens: int = 1024
    separator: str = SEPARATOR
    category_filter: Category | None = None
    ordering: str = "subject_mention_order"

    def __post_init__(self):
        if self.budget_tokens < 1:
            raise ValueError("budget_tokens must be positive")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")
        if not self.separator.strip() or len(self.separator.split()) != 1:
            raise ValueError("separator must be a single whitespace-free token")


def fact_text(fact: Fact) -> str:
    return " ".join(fact.labels)


def linearize(facts: Sequence[Fact], separator: str = SEPARATOR) -> str:
    """``[SEP] s r o [SEP] s r o [SEP]``; an empty list gives a lone separator."""
    return separator + "".join(f" {fact_text(f)} {separator}" for f in facts)


def split_linearized(text: str, separator: str = SEPARATOR) -> list[str]:
    """Inverse of :func:`linearize` at the level of per-fact label strings."""
    parts = text.split(separator)
    if len(parts) < 2 or parts[0] or parts[-1]:
        raise ValueError("not a linearized fact string")
    return [p.strip() for p in parts[1:-1]]


def fact_token_cost(fact: Fact) -> int:
    """Whitespace tokens a fact adds to a linearization, its trailing separator included."""
    return len(fact_text(fact).split()) + 1


def order_facts(
    sub: KnowledgeSubgraph,
    ordering: str = "subject_mention_order",
    source_mentions: Sequence[Mention] | None = None,
) -> list[Fact]:
    if ordering == "lexicographic":
        return sorted(sub.facts, key=lambda f: f.sort_key)
    first_seen: dict[str, int] = {}
    for m in source_mentions or ():
        first_seen.setdefault(m.entity, m.start)
    never = float("inf")
    return sorted(sub.facts, key=lambda f: (first_seen.get(f.subject, never), sub.hop_of[f], f.sort_key))


@dataclass(frozen=True)
class AugmentedSource:
    text: str
    facts_used: int
    pruned: int
    source_truncated: bool = False

    @property
    def degenerate(self) -> bool:
        """True when facts were available but none fit in the budget."""
        return self.facts_used == 0 and self.pruned > 0

    def __str__(self) -> str:
        return self.text


def _truncate_tokens(text: str, limit: int) -> str:
    tokens = text.split()
    if len(tokens) <= limit:
        return text
    return " ".join(tokens[:limit])


def append_facts(source: str, facts: Sequence[Fact], budget: int, separator: str = SEPARATOR) -> AugmentedSource:
    """Append as long a prefix of ``facts`` as fits in ``budget`` whitespace tokens.

    Stops at the first fact that does not fit, so a larger budget always
    yields an extension of a smaller budget's output.
    """
    source_tokens = len(source.split())
    if source_tokens > budget:
        log.warning("source has %d tokens, over the %d-token budget; truncating", source_tokens, budget)
        return AugmentedSource(_truncate_tokens(source, budget), 0, len(facts), source_truncated=True)

    used = source_tokens + 1  # leading separator
    kept = 0
    for fact in facts:
        cost = fact_token_cost(fact)
        if used + cost > budget:
            break
        used += cost
        kept += 1
    if kept == 0:
        if facts:
            log.warning("budget of %d tokens leaves no room for a single fact", budget)
        return AugmentedSource(source, 0, len(facts))
    lin = linearize(facts[:kept], separator)
    text = f"{source} {lin}" if source.strip() else lin
    return AugmentedSource(text, kept, len(facts) - kept)


def augment_source(
    source: str,
    sub: KnowledgeSubgraph,
    cfg: LinearizationConfig = LinearizationConfig(),
    source_mentions: Sequence[Mention] | None = None,
) -> AugmentedSource:
    """Source followed by the subgraph's linearized facts, pruned to the token budget.

    ``source_mentions`` drive the default ordering (facts about entities
    mentioned earlier come first); without them that ordering falls back to
    hop then lexicographic.
    """
    facts = order_facts(sub, cfg.ordering, source_mentions)
    if cfg.category_filter is not None:
        facts = [f for f in facts if f.object_is_entity and f.object_category == cfg.category_filter]
    return append_facts(source, facts, cfg.budget_tokens, cfg.separator)


def load_vocab(path) -> list[str]:
    with open(Path(path), encoding="utf-8") as fh:
        words = [w.strip() for w in fh if w.strip()]
    if not words:
        raise ValueError(f"vocabulary file {path} is empty")
    return words


def random_words(n: int, vocab, seed: int) -> str:
    """``n`` words drawn uniformly with replacement. ``vocab`` is a path or a word list."""
    words = list(vocab) if isinstance(vocab, (list, tuple)) else load_vocab(vocab)
    if not words:
        raise ValueError("empty vocabulary")
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = random.Random(seed)
    return " ".join(rng.choice(words) for _ in range(n))


def random_facts(
    kb: KnowledgeBase,
    n: int,
    category: Category | None = None,
    seed: int = 0,
    pool: Sequence[Fact] | None = None,
) -> list[Fact]:
    """Sample ``n`` facts uniformly, without replacement unless ``n`` exceeds the pool.

    The pool defaults to the whole KB; pass ``pool`` to sample per document.
    ``category`` filters on the object's category.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if pool is None:
        if not kb.facts:
            raise ValueError("knowledge base is empty")
        pool = kb.facts
    candidates = sorted(
        (f for f in pool if category is None or (f.object_is_entity and f.object_category == category)),
        key=lambda f: f.sort_key,
    )
    if n == 0:
        return []
    if not candidates:
        raise ValueError(f"no facts with object category {category} to sample from")
    rng = random.Random(seed)
    if n <= len(candidates):
        return rng.sample(candidates, n)
    return rng.choices(candidates, k=n)
