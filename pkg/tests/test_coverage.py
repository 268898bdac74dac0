import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbfaith.category import Category
from kbfaith.coverage import (
    IN_SOURCE,
    UNSUPPORTED,
    CorpusFormatError,
    Document,
    Provenance,
    classify_entity,
    coverage_report,
    filter_abstractive_subset,
    load_corpus,
    split_entities,
)
from kbfaith.entity_linker import AliasTable, Mention, link
from kbfaith.kb_store import subgraph
from randgen import brute_force_subgraph, kb_alias_rows, random_corpus, random_kb

LOC = Category.LOCATION


def _corpus_setup(seed, n_docs=50):
    rng = random.Random(seed)
    kb = random_kb(rng, n_entities=40, n_facts=160, literal_rate=0.1)
    aliases = AliasTable.from_rows(kb_alias_rows(kb))
    docs, truth = random_corpus(rng, kb, n_docs)
    return kb, aliases, docs, truth


def _oracle_hop(kb, source, entity, k):
    if entity in source:
        return 0
    best = None
    for fact, hop in brute_force_subgraph(kb.facts, source, k).items():
        if fact.object_is_entity and fact.object == entity:
            best = hop if best is None else min(best, hop)
    return best


def test_load_corpus_round_trip(tmp_path, fire_doc):
    assert fire_doc.id == "fire" and fire_doc.candidate is not None
    p = tmp_path / "c.jsonl"
    p.write_text('{"id": 1, "source": "s", "target": "t"}\n\n', encoding="utf-8")
    (doc,) = load_corpus(p)
    assert doc == Document("1", "s", "t", None)


@pytest.mark.parametrize(
    "body",
    [
        '{"id": "a", "source": "s"}',
        '{"id": "a", "source": " ", "target": "t"}',
        "not json",
        '{"id": "a", "source": "s", "target": "t"}\n{"id": "a", "source": "s", "target": "t"}',
    ],
)
def test_load_corpus_errors(tmp_path, body):
    p = tmp_path / "c.jsonl"
    p.write_text(body + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        load_corpus(p)


def test_classify_fire(fire_kb):
    source = {"Q_wimblington"}
    sub = subgraph(fire_kb, source, 1)
    assert classify_entity("Q_wimblington", source, sub) == IN_SOURCE
    assert classify_entity("Q_cambridgeshire", source, sub) == Provenance.in_kb_hop(1)
    assert classify_entity("Q_oxfordshire", source, sub) == UNSUPPORTED


def test_classify_matches_brute_force():
    rng = random.Random(17)
    for _ in range(30):
        kb = random_kb(rng, n_entities=30, n_facts=90)
        source = set(rng.sample(sorted(kb.labels), 2))
        for k in (1, 2, 3):
            sub = subgraph(kb, source, k)
            hops = sub.entity_hops()
            for e in kb.labels:
                prov = classify_entity(e, source, sub, hops)
                assert prov.hop == _oracle_hop(kb, source, e, k)
                assert prov.hop is None or prov.hop <= k


def test_fully_extractive_corpus_is_full_at_hop0(fire_kb, fire_aliases):
    docs = [Document("a", "Plasgran in Wimblington", "Wimblington news"), Document("b", "the US", "the US")]
    report = coverage_report(docs, fire_kb, fire_aliases, 2)
    assert report.percent(LOC, 0) == 100.0
    assert report.to_json()["all"]["0"]["percent"] == 100.0


def test_fire_location_coverage(fire_kb, fire_aliases, fire_doc):
    report = coverage_report([fire_doc], fire_kb, fire_aliases, 1)
    assert report.percent(LOC, 0) == 0.0
    assert report.percent(LOC, 1) == 100.0
    # plastics factory is neither in the source nor one hop away
    assert report.total[Category.OTHER] == 1 and report.unsupported[Category.OTHER] == 1


def test_empty_target_flagged(fire_kb, fire_aliases):
    docs = [Document("z", "Plasgran", "nothing linkable here")]
    data = coverage_report(docs, fire_kb, fire_aliases, 1).to_json()
    assert data["diagnostics"]["empty_target_ids"] == ["z"]
    assert data["all"]["1"]["total"] == 0


def test_report_json_shape(fire_kb, fire_aliases, fire_doc):
    data = json.loads(json.dumps(coverage_report([fire_doc], fire_kb, fire_aliases, 2).to_json()))
    assert set(data) == {c.value for c in Category} | {"all", "diagnostics"}
    assert set(data["location"]) == {"0", "1", "2"}
    assert {"count", "percent"} <= set(data["location"]["1"])


def test_report_cells_match_per_document_oracle():
    kb, aliases, docs, truth = _corpus_setup(23)
    k = 2
    report = coverage_report(docs, kb, aliases, k)
    expected_new = {c: [0] * (k + 1) for c in Category}
    expected_total = {c: 0 for c in Category}
    for doc in docs:
        src = truth[doc.id]["source"]
        for e in truth[doc.id]["target"]:
            cat = kb.types[e]
            expected_total[cat] += 1
            hop = _oracle_hop(kb, src, e, k)
            if hop is not None:
                expected_new[cat][hop] += 1
    assert report.total == expected_total
    assert report.new == expected_new
    for c in Category:
        assert sum(report.new[c]) + report.unsupported[c] == report.total[c]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_hop_monotonicity(seed):
    kb, aliases, docs, _ = _corpus_setup(seed, n_docs=15)
    report = coverage_report(docs, kb, aliases, 3)
    for c in Category:
        pcts = [report.percent(c, h) for h in range(4)]
        if pcts[0] is not None:
            assert pcts == sorted(pcts)


def test_filter_subset_examples(fire_kb, fire_aliases, fire_doc):
    extractive = [Document("a", "Wimblington and Plasgran", "Wimblington")]
    assert filter_abstractive_subset(extractive, fire_kb, fire_aliases, LOC) == []
    assert filter_abstractive_subset([fire_doc], fire_kb, fire_aliases, LOC) == [fire_doc]
    assert filter_abstractive_subset([fire_doc], None, fire_aliases, Category.PERSON) == []


def test_filter_subset_matches_set_difference():
    kb, aliases, docs, truth = _corpus_setup(31)
    for cat in Category:
        got = filter_abstractive_subset(docs, kb, aliases, cat)
        expected = [
            d for d in docs if any(kb.types[e] == cat for e in truth[d.id]["target"] - truth[d.id]["source"])
        ]
        assert got == expected
        assert filter_abstractive_subset(got, kb, aliases, cat) == got


def _mention(entity, start=0):
    return Mention(start, start + 1, "x", entity, LOC)


def test_split_entities_examples():
    assert split_entities([_mention("A"), _mention("B")], {"A", "B", "C"}) == (frozenset(), {"A", "B"})
    abstractive, extractive = split_entities(
        [_mention("Q_cambridgeshire"), _mention("Q_plastics_factory")], {"Q_plasgran", "Q_wimblington"}
    )
    assert abstractive == {"Q_cambridgeshire", "Q_plastics_factory"} and extractive == set()


@given(st.sets(st.sampled_from("ABCDEFGH")), st.sets(st.sampled_from("ABCDEFGH")))
def test_split_entities_partition(targets, source):
    abstractive, extractive = split_entities([_mention(e) for e in sorted(targets)], source)
    assert abstractive == targets - source and extractive == targets & source
    assert abstractive | extractive == targets and not abstractive & extractive


def test_link_sees_random_corpus_truth():
    # guards the oracle above: the generated texts link to exactly the planted entities
    kb, aliases, docs, truth = _corpus_setup(5, n_docs=20)
    for d in docs:
        assert {m.entity for m in link(d.source, aliases)} == truth[d.id]["source"]
        assert {m.entity for m in link(d.target, aliases)} == truth[d.id]["target"]
