import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbfaith.kb_store import (
    Fact,
    KBFormatError,
    KnowledgeBase,
    canonical_label,
    entities_in,
    facts_from,
    load_kb,
    subgraph,
)
from randgen import brute_force_subgraph, random_kb, write_kb


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def labels_file(tmp_path):
    return _write(tmp_path / "labels.tsv", "A\tAlpha\tlocation\nB\tBeta\tperson\nC\tGamma\tother\n")


def test_empty_triples_file(tmp_path, labels_file):
    kb = load_kb(_write(tmp_path / "t.tsv", ""), labels_file)
    assert len(kb) == 0
    assert kb.stats.facts == 0


def test_exact_duplicate_is_dropped(tmp_path, labels_file):
    triples = _write(
        tmp_path / "t.tsv",
        "A\tP1\tnear\tentity\tB\nA\tP1\tnear\tentity\tB\nA\tP2\tpopulation\tliteral\t42\n",
    )
    kb = load_kb(triples, labels_file)
    assert len(kb) == 2
    assert kb.stats.duplicates_dropped == 1


def test_comments_and_blank_lines_ignored(tmp_path, labels_file):
    triples = _write(tmp_path / "t.tsv", "# header\n\nA\tP1\tnear\tentity\tB\n")
    assert len(load_kb(triples, labels_file)) == 1


def test_random_fixture_matches_line_dedup(tmp_path):
    rng = random.Random(7)
    base = random_kb(rng, n_entities=80, n_facts=700)
    # resample with deliberate repeats so the file holds 1000 lines
    lines = write_kb(list(base.facts), base.labels, base.types, tmp_path / "t.tsv", tmp_path / "l.tsv")
    lines = lines + [rng.choice(lines) for _ in range(1000 - len(lines))]
    rng.shuffle(lines)
    (tmp_path / "t.tsv").write_text("".join(lines), encoding="utf-8")

    kb = load_kb(tmp_path / "t.tsv", tmp_path / "l.tsv")
    assert len(kb) == len(set(lines))
    assert kb.stats.duplicates_dropped == 1000 - len(set(lines))


@pytest.mark.parametrize(
    "line, fragment",
    [
        ("A\tP1\tnear\tentity", "5 tab-separated"),
        ("A\tP1\tnear\tthing\tB", "object_kind"),
        ("A\tP1\t\tentity\tB", "empty relation label"),
        ("A\tP1\tnear [SEP] far\tentity\tB", "separator"),
    ],
)
def test_malformed_triple_reports_line_number(tmp_path, labels_file, line, fragment):
    triples = _write(tmp_path / "t.tsv", "A\tP1\tnear\tentity\tB\n" + line + "\n")
    with pytest.raises(KBFormatError) as err:
        load_kb(triples, labels_file)
    assert err.value.line_no == 2
    assert fragment in str(err.value)


def test_malformed_label_line(tmp_path):
    labels = _write(tmp_path / "l.tsv", "A\tAlpha\tlocation\nB\tBeta\n")
    with pytest.raises(KBFormatError, match=":2:"):
        load_kb(_write(tmp_path / "t.tsv", ""), labels)
    labels = _write(tmp_path / "l.tsv", "A\tAlpha\tplanet\n")
    with pytest.raises(KBFormatError, match="unknown category"):
        load_kb(_write(tmp_path / "t.tsv", ""), labels)


def test_missing_object_policy(tmp_path, labels_file):
    triples = _write(tmp_path / "t.tsv", "A\tP1\tnear\tentity\tZ\nA\tP1\tnear\tentity\tB\n")
    kb = load_kb(triples, labels_file)
    assert len(kb) == 1
    assert kb.stats.rejected_lines == 1

    kb = load_kb(triples, labels_file, missing_object="literal")
    assert len(kb) == 2
    (lit,) = [f for f in kb.facts if not f.object_is_entity]
    assert lit.object == "Z" and lit.object_label == "Z"
    assert kb.stats.literalized == 1


def test_subject_without_label_is_dropped(tmp_path, labels_file):
    kb = load_kb(_write(tmp_path / "t.tsv", "Z\tP1\tnear\tentity\tA\n"), labels_file)
    assert len(kb) == 0 and kb.stats.rejected_lines == 1


def test_facts_from_fire(fire_kb):
    triples = [f.labels for f in facts_from(fire_kb, "Q_wimblington")]
    assert ("Wimblington", "historic county", "Cambridgeshire") in triples
    assert facts_from(fire_kb, "Q_nowhere") == []


def test_facts_from_equals_linear_scan():
    rng = random.Random(3)
    kb = random_kb(rng)
    for entity in list(kb.labels) + ["missing"]:
        scan = sorted((f for f in kb.facts if f.subject == entity), key=lambda f: (f.relation, f.object))
        got = facts_from(kb, entity)
        assert got == scan
        assert [(f.relation, f.object) for f in got] == sorted((f.relation, f.object) for f in got)


def test_subgraph_empty_seeds(fire_kb):
    sub = subgraph(fire_kb, set(), 3)
    assert len(sub) == 0 and entities_in(sub) == set()


def test_subgraph_rejects_zero_hops(fire_kb):
    with pytest.raises(ValueError):
        subgraph(fire_kb, {"Q_wimblington"}, 0)


def test_one_hop_is_outgoing_facts(fire_kb):
    sub = subgraph(fire_kb, {"Q_wimblington"}, 1)
    assert set(sub.facts) == set(facts_from(fire_kb, "Q_wimblington"))
    assert all(sub.hop_of[f] == 1 for f in sub.facts)


def test_literals_do_not_expand():
    labels = {"A": "a", "B": "b"}
    facts = [
        Fact("A", "P", "B", False, "a", "p", "B"),  # literal that happens to equal an entity id
        Fact("B", "P", "A", True, "b", "p", "a"),
    ]
    kb = KnowledgeBase.build(facts, labels)
    sub = subgraph(kb, {"A"}, 3)
    assert len(sub) == 1
    assert entities_in(sub) == {"A"}


def test_entities_in_examples(fire_kb):
    sub = subgraph(fire_kb, {"Q30"}, 1)
    assert entities_in(sub) == {"Q30"}
    sub = subgraph(fire_kb, {"Q_wimblington", "Q_plasgran"}, 1)
    assert {"Q_cambridgeshire", "Q_plastic_recycling"} <= entities_in(sub)


def test_entities_in_equals_union_over_facts():
    rng = random.Random(11)
    kb = random_kb(rng)
    seeds = set(rng.sample(sorted(kb.labels), 3))
    sub = subgraph(kb, seeds, 2)
    union = set(seeds)
    for f in sub.facts:
        union |= {f.subject} | ({f.object} if f.object_is_entity else set())
    assert entities_in(sub) == union


def test_subgraph_matches_brute_force_small():
    rng = random.Random(5)
    for _ in range(20):
        kb = random_kb(rng, n_entities=rng.randint(5, 40), n_facts=rng.randint(0, 120))
        seeds = set(rng.sample(sorted(kb.labels), rng.randint(1, 3)))
        for k in (1, 2, 3):
            sub = subgraph(kb, seeds, k)
            assert dict(sub.hop_of) == brute_force_subgraph(kb.facts, seeds, k)


def test_canonical_label(fire_kb):
    assert canonical_label(fire_kb, "Q30") == "United States of America"
    with pytest.raises(KeyError):
        canonical_label(fire_kb, "Q_missing")


def test_canonical_label_round_trips_file(fixtures_dir, fire_kb):
    for line in (fixtures_dir / "labels.tsv").read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            continue
        entity, label, _ = line.split("\t")
        assert canonical_label(fire_kb, entity) == label


kb_params = st.tuples(st.integers(0, 10**6), st.integers(2, 30), st.integers(0, 90))


@settings(max_examples=60, deadline=None)
@given(kb_params, st.integers(1, 3))
def test_hop_monotonicity_and_universe(params, k):
    seed, n_ent, n_facts = params
    rng = random.Random(seed)
    kb = random_kb(rng, n_entities=n_ent, n_facts=n_facts)
    seeds = set(rng.sample(sorted(kb.labels), min(2, n_ent)))
    small, big = subgraph(kb, seeds, k), subgraph(kb, seeds, k + 1)
    assert set(small.facts) <= set(big.facts)
    assert set(big.facts) <= set(kb.facts)
    assert all(1 <= small.hop_of[f] <= k for f in small.facts)
    assert all(big.hop_of[f] == small.hop_of[f] for f in small.facts)


@settings(max_examples=30, deadline=None)
@given(kb_params)
def test_subgraph_deterministic_under_input_order(params):
    seed, n_ent, n_facts = params
    rng = random.Random(seed)
    kb = random_kb(rng, n_entities=n_ent, n_facts=n_facts)
    shuffled = list(kb.facts)
    rng.shuffle(shuffled)
    kb2 = KnowledgeBase.build(shuffled, kb.labels, kb.types)
    seeds = sorted(kb.labels)[:2]
    a, b = subgraph(kb, seeds, 2), subgraph(kb2, reversed(seeds), 2)
    assert a.facts == b.facts
    assert dict(a.hop_of) == dict(b.hop_of)
