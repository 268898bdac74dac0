"""Command-line entry point.

Every flag can also come from a flat JSON config (``--config``); flags given
on the command line win. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Sequence

from .category import Category, parse_categories
from .coverage import (
    CorpusFormatError,
    Document,
    coverage_report,
    filter_abstractive_subset,
    load_corpus,
)
from .entity_linker import AliasFormatError, AliasTable, entity_set, link, load_aliases
from .kb_store import KBFormatError, KnowledgeBase, load_kb, subgraph
from .linearizer import (
    AugmentedSource,
    LinearizationConfig,
    append_facts,
    augment_source,
    linearize,
    load_vocab,
    order_facts,
    random_facts,
    random_words,
)
from .metrics import evaluate_corpus
from .revision import RevisionConfig, build_fact_memory, revise_with
from .skeleton import mask_mentions

log = logging.getLogger("kbfaith")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

BASELINES = ("kb", "none", "random-words", "random-facts")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    kb: str | None = None
    labels: str | None = None
    aliases: str | None = None
    corpus: str | None = None
    vocab: str | None = None
    predictions: str | None = None
    out: str | None = None
    hops: int = 1
    categories: str = "location"
    oracle: bool = False
    seed: int = 0
    missing_object: str = "reject"
    # linearization
    budget: int = 1024
    separator: str = "[SEP]"
    category_filter: str | None = None
    ordering: str = "subject_mention_order"
    baseline: str = "kb"
    random_pool: str = "kb"
    # subset
    category: str = "location"
    # revision
    top_k: int = 16
    w_type: float = 2.0
    w_context: float = 1.0
    w_salience: float = 0.5
    context_window: int = 10

    PATH_KEYS = ("kb", "labels", "aliases", "corpus", "vocab", "predictions")

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def category_set(self) -> frozenset[Category]:
        return parse_categories(self.categories)

    def linearization(self) -> LinearizationConfig:
        cat = Category.parse(self.category_filter) if self.category_filter else None
        return LinearizationConfig(self.budget, self.separator, cat, self.ordering)

    def revision(self) -> RevisionConfig:
        return RevisionConfig(self.top_k, self.w_type, self.w_context, self.w_salience, self.context_window)

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if getattr(self, k) in (None, "")]
        if missing:
            raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
        for k in keys:
            if k in self.PATH_KEYS and not Path(getattr(self, k)).exists():
                raise UsageError(f"--{k}: no such file: {getattr(self, k)}")


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"--config: no such file: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config: invalid JSON ({exc.msg})") from None
        if not isinstance(loaded, dict):
            raise UsageError("--config must hold a flat JSON object")
        values.update(loaded)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError("unknown config key(s): " + ", ".join(unknown))
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if isinstance(values.get("categories"), list):
        values["categories"] = ",".join(values["categories"])
    cfg = RunConfig(**values)
    try:
        cfg.category_set()
        cfg.linearization()
        cfg.revision()
        Category.parse(cfg.category)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cfg.hops < 1:
        raise UsageError("--hops must be >= 1")
    if cfg.baseline not in BASELINES:
        raise UsageError(f"--baseline must be one of {BASELINES}")
    if cfg.random_pool not in ("kb", "document"):
        raise UsageError("--random-pool must be kb or document")
    return cfg


# ---------------------------------------------------------------- io helpers


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


def emit_json(cfg: RunConfig, name: str, payload: dict) -> None:
    payload = {**payload, "seed": cfg.seed}
    text = json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def emit_jsonl(cfg: RunConfig, name: str, rows: Sequence[dict]) -> None:
    text = "".join(_dumps(r) + "\n" for r in rows)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_kb(cfg: RunConfig) -> KnowledgeBase:
    cfg.require("kb", "labels")
    return load_kb(cfg.kb, cfg.labels, missing_object=cfg.missing_object)


def _load_aliases(cfg: RunConfig) -> AliasTable:
    cfg.require("aliases")
    return load_aliases(cfg.aliases)


def _load_corpus(cfg: RunConfig) -> list[Document]:
    cfg.require("corpus")
    return sorted(load_corpus(cfg.corpus), key=lambda d: d.id)


def _per_doc(docs: Sequence[Document], fn: Callable[[Document], Any]) -> list[Any]:
    """Run ``fn`` per document, logging and skipping failures and None results."""
    out = []
    for doc in docs:
        try:
            row = fn(doc)
        except (KeyError, ValueError) as exc:
            log.warning("document %s skipped: %s", doc.id, exc)
            continue
        if row is not None:
            out.append(row)
    return out


# ---------------------------------------------------------------- commands


def kb_stats(cfg: RunConfig) -> dict:
    kb = _load_kb(cfg)
    report: dict[str, Any] = {
        "facts": kb.stats.facts,
        "entities": kb.stats.entities,
        "relations": kb.stats.relations,
        "subjects": len(kb.subject_index),
        "duplicates_dropped": kb.stats.duplicates_dropped,
        "rejected_lines": kb.stats.rejected_lines,
        "literalized": kb.stats.literalized,
    }
    if cfg.aliases:
        report["aliases"] = len(_load_aliases(cfg))
    if cfg.corpus:
        aliases = _load_aliases(cfg)
        docs = _load_corpus(cfg)
        sums = [0] * cfg.hops
        for doc in docs:
            sub = subgraph(kb, entity_set(link(doc.source, aliases)), cfg.hops)
            for h in range(1, cfg.hops + 1):
                sums[h - 1] += len(sub.facts_within(h))
        report["documents"] = len(docs)
        report["mean_subgraph_facts"] = {
            str(h): (sums[h - 1] / len(docs) if docs else 0.0) for h in range(1, cfg.hops + 1)
        }
    return report


def cmd_kb_stats(cfg: RunConfig) -> None:
    emit_json(cfg, "kb_stats.json", kb_stats(cfg))


def cmd_coverage(cfg: RunConfig) -> None:
    kb, aliases, docs = _load_kb(cfg), _load_aliases(cfg), _load_corpus(cfg)
    report = coverage_report(docs, kb, aliases, cfg.hops)
    emit_json(cfg, "coverage.json", report.to_json())


def cmd_subset(cfg: RunConfig) -> None:
    aliases, docs = _load_aliases(cfg), _load_corpus(cfg)
    kb = _load_kb(cfg) if cfg.kb and cfg.labels else None
    kept = filter_abstractive_subset(docs, kb, aliases, Category.parse(cfg.category))
    log.info("kept %d of %d documents", len(kept), len(docs))
    emit_jsonl(cfg, "subset.jsonl", [d.to_json() for d in kept])


def augment_rows(cfg: RunConfig, kb: KnowledgeBase, aliases: AliasTable, docs: Sequence[Document]) -> list[dict]:
    lin = cfg.linearization()
    vocab = load_vocab(cfg.vocab) if cfg.baseline == "random-words" else None

    def one(doc: Document) -> dict:
        # each document draws from its own seed so output is independent of corpus order
        doc_seed = f"{cfg.seed}:{doc.id}"
        mentions = link(doc.source, aliases)
        sub = subgraph(kb, entity_set(mentions), cfg.hops)
        if cfg.baseline == "kb":
            aug = augment_source(doc.source, sub, lin, mentions)
        elif cfg.baseline == "none":
            aug = AugmentedSource(doc.source, 0, 0)
        elif cfg.baseline == "random-facts":
            n = len(sub.facts)
            pool = sub.facts if cfg.random_pool == "document" else None
            facts = random_facts(kb, n, lin.category_filter, seed=_seed_int(doc_seed), pool=pool) if n else []
            aug = append_facts(doc.source, facts, lin.budget_tokens, lin.separator)
        else:
            room = max(lin.budget_tokens - len(doc.source.split()), 0)
            words = random_words(room, vocab, _seed_int(doc_seed))
            text = f"{doc.source} {words}" if words else doc.source
            aug = AugmentedSource(text, 0, 0)
        return {
            "id": doc.id,
            "augmented_source": aug.text,
            "facts_used": aug.facts_used,
            "pruned": aug.pruned,
            "source_truncated": aug.source_truncated,
            "baseline": cfg.baseline,
            "seed": cfg.seed,
        }

    return _per_doc(docs, one)


def _seed_int(seed: str) -> int:
    # stable across processes, unlike hash()
    return int.from_bytes(hashlib.sha256(seed.encode("utf-8")).digest()[:8], "big")


def cmd_augment(cfg: RunConfig) -> None:
    if cfg.baseline == "random-words":
        cfg.require("vocab")
    kb, aliases, docs = _load_kb(cfg), _load_aliases(cfg), _load_corpus(cfg)
    emit_jsonl(cfg, "augment.jsonl", augment_rows(cfg, kb, aliases, docs))


def _summary_for(cfg: RunConfig, doc: Document) -> str | None:
    if cfg.oracle:
        return doc.target
    if doc.candidate is None:
        log.warning("document %s has no candidate summary; skipped (use --oracle to mask targets)", doc.id)
    return doc.candidate


def mask_rows(cfg: RunConfig, aliases: AliasTable, docs: Sequence[Document]) -> list[dict]:
    cats = cfg.category_set()

    def one(doc: Document):
        summary = _summary_for(cfg, doc)
        if summary is None:
            return None
        skeleton = mask_mentions(summary, link(summary, aliases), cats)
        return {"id": doc.id, **skeleton.to_json()}

    return _per_doc(docs, one)


def cmd_mask(cfg: RunConfig) -> None:
    aliases, docs = _load_aliases(cfg), _load_corpus(cfg)
    emit_jsonl(cfg, "mask.jsonl", mask_rows(cfg, aliases, docs))


def revise_rows(cfg: RunConfig, kb: KnowledgeBase, aliases: AliasTable, docs: Sequence[Document]) -> list[dict]:
    cats = cfg.category_set()
    rcfg = cfg.revision()

    def one(doc: Document):
        summary = _summary_for(cfg, doc)
        if summary is None:
            return None
        skeleton = mask_mentions(summary, link(summary, aliases), cats)
        source_mentions = link(doc.source, aliases)
        memory = build_fact_memory(subgraph(kb, entity_set(source_mentions), cfg.hops))
        return revise_with(doc.id, skeleton, source_mentions, memory, kb, rcfg).to_json()

    return _per_doc(docs, one)


def cmd_revise(cfg: RunConfig) -> None:
    kb, aliases, docs = _load_kb(cfg), _load_aliases(cfg), _load_corpus(cfg)
    emit_jsonl(cfg, "revise.jsonl", revise_rows(cfg, kb, aliases, docs))


def load_predictions(path) -> dict[str, dict]:
    preds: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "id" not in obj or not isinstance(obj.get("prediction"), str):
                raise CorpusFormatError(f"{path}:{line_no}: expected an object with id and prediction")
            preds[str(obj["id"])] = obj
    return preds


def eval_report(cfg: RunConfig, kb: KnowledgeBase, aliases: AliasTable, docs: Sequence[Document]) -> dict:
    if cfg.predictions:
        cfg.require("predictions")
        mode, preds = "predictions", load_predictions(cfg.predictions)
    else:
        mode, preds = ("oracle" if cfg.oracle else "inference"), None
    report = evaluate_corpus(
        docs, kb, aliases, cfg.hops, mode=mode, categories=cfg.category_set(), cfg=cfg.revision(), predictions=preds
    )
    return report.to_json()


def cmd_eval(cfg: RunConfig) -> None:
    kb, aliases, docs = _load_kb(cfg), _load_aliases(cfg), _load_corpus(cfg)
    emit_json(cfg, "eval.json", eval_report(cfg, kb, aliases, docs))


def cmd_pipeline(cfg: RunConfig) -> None:
    cfg.require("out")
    kb, aliases, docs = _load_kb(cfg), _load_aliases(cfg), _load_corpus(cfg)

    def links(doc: Document) -> dict:
        row = {
            "id": doc.id,
            "source": [m.to_json() for m in link(doc.source, aliases)],
            "target": [m.to_json() for m in link(doc.target, aliases)],
        }
        if doc.candidate is not None:
            row["candidate"] = [m.to_json() for m in link(doc.candidate, aliases)]
        return row

    def subgraphs(doc: Document) -> dict:
        mentions = link(doc.source, aliases)
        sub = subgraph(kb, entity_set(mentions), cfg.hops)
        return {
            "id": doc.id,
            "seeds": sorted(sub.seeds),
            "facts": [{**f.to_json(), "hop": sub.hop_of[f]} for f in sub.facts],
            "linearized": linearize(order_facts(sub, cfg.ordering, mentions), cfg.separator),
        }

    emit_jsonl(cfg, "links.jsonl", _per_doc(docs, links))
    emit_jsonl(cfg, "subgraphs.jsonl", _per_doc(docs, subgraphs))
    emit_jsonl(cfg, "mask.jsonl", mask_rows(cfg, aliases, docs))
    emit_jsonl(cfg, "revise.jsonl", revise_rows(cfg, kb, aliases, docs))
    emit_json(cfg, "eval.json", eval_report(cfg, kb, aliases, docs))
    emit_json(cfg, "run.json", {"config": cfg.to_json(), "documents": len(docs)})


COMMANDS: dict[str, tuple[Callable[[RunConfig], None], str]] = {
    "kb-stats": (cmd_kb_stats, "KB counts and mean subgraph size per hop"),
    "coverage": (cmd_coverage, "target-entity coverage by category and hop"),
    "subset": (cmd_subset, "keep documents with an out-of-source target entity of --category"),
    "augment": (cmd_augment, "append linearized facts (or a random baseline) to each source"),
    "mask": (cmd_mask, "mask typed entities in candidates (or targets with --oracle)"),
    "revise": (cmd_revise, "mask and fill entities from the fact memory"),
    "eval": (cmd_eval, "entity correctness/consistency and ROUGE-1"),
    "pipeline": (cmd_pipeline, "link, subgraph, mask, revise and evaluate, writing every artifact"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("inputs and run settings")
    g.add_argument("--config", help="flat JSON file with defaults for any option below")
    g.add_argument("--kb", help="triples TSV")
    g.add_argument("--labels", help="entity labels TSV")
    g.add_argument("--aliases", help="aliases TSV")
    g.add_argument("--corpus", help="corpus JSONL")
    g.add_argument("--vocab", help="one word per line, for the random-words baseline")
    g.add_argument("--predictions", help="predictions JSONL for eval")
    g.add_argument("--out", help="output directory (stdout when omitted, except pipeline)")
    g.add_argument("--hops", type=int)
    g.add_argument("--categories", help="comma-separated categories to mask")
    g.add_argument("--oracle", action="store_const", const=True, help="mask gold targets instead of candidates")
    g.add_argument("--seed", type=int)
    g.add_argument("--missing-object", dest="missing_object", choices=("reject", "literal"))
    g.add_argument("--budget", type=int, help="token budget for augmented sources")
    g.add_argument("--separator")
    g.add_argument("--category-filter", dest="category_filter")
    g.add_argument("--ordering", choices=("subject_mention_order", "lexicographic"))
    g.add_argument("--baseline", choices=BASELINES)
    g.add_argument("--random-pool", dest="random_pool", choices=("kb", "document"))
    g.add_argument("--category", help="category for subset filtering")
    g.add_argument("--top-k", dest="top_k", type=int)
    g.add_argument("--w-type", dest="w_type", type=float)
    g.add_argument("--w-context", dest="w_context", type=float)
    g.add_argument("--w-salience", dest="w_salience", type=float)
    g.add_argument("--context-window", dest="context_window", type=int)
    g.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="kbfaith", description="Knowledge-grounded entity faithfulness toolkit.")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        subs.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = build_config(args)
        COMMANDS[args.command][0](cfg)
    except UsageError as exc:
        print(f"kbfaith {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KBFormatError, AliasFormatError, CorpusFormatError, ValueError, OSError) as exc:
        print(f"kbfaith {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
