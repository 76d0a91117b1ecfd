import hashlib

import pytest
from hypothesis import given, settings, strategies as st

from htm_ear.errors import FileUnreadable, InvalidScenario, MalformedLine
from htm_ear.retrieval import Cohort
from htm_ear.workload import (
    Scenario, cohort_counts, extract_entities, generate_synthetic, make_bgl_queries, parse_bgl, parse_bgl_line,
    read_facts, read_queries, synthetic_bgl_lines, write_facts, write_queries,
)

BGL_LINE = (
    "- 1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.675872 "
    "R02-M1-N0-C:J12-U11 RAS KERNEL INFO instruction cache parity error corrected"
)


@pytest.mark.parametrize("prob,imp", [(0.0, 0.5), (1.0, 0.95)])
def test_degenerate_probabilities(prob, imp):
    facts, queries = generate_synthetic(Scenario(n_facts=3, essential_keyword_prob=prob))
    assert [f.importance for f in facts] == [imp] * 3
    assert [q.gold_id for q in queries] == [f.id for f in facts]


def test_essential_count_scenario_b():
    facts, _ = generate_synthetic(Scenario())
    assert abs(sum(f.importance == 0.95 for f in facts) - 3750) <= 200


def test_invalid_scenario():
    with pytest.raises(InvalidScenario):
        generate_synthetic(Scenario(n_facts=0))


def test_unique_entities_and_query_shape():
    facts, queries = generate_synthetic(Scenario(n_facts=500, seed=3))
    for i, (f, q) in enumerate(zip(facts, queries)):
        assert f.entities == {f"ent-{i:06d}"}
        assert q.entities == f.entities
        assert f.seq == i
    counts = cohort_counts(queries)
    assert counts[Cohort.ACTIVE] == 100 and counts[Cohort.HISTORY] == 100


def test_reproducible():
    def digest(seed):
        f, q = generate_synthetic(Scenario(n_facts=2000, seed=seed))
        return hashlib.sha256(repr((f, q)).encode()).hexdigest()

    assert digest(7) == digest(7)
    assert digest(7) != digest(8)


def test_scaled():
    s = Scenario().scaled(0.1)
    assert (s.n_facts, s.l1_capacity, s.l2_capacity) == (1500, 50, 500)


class TestEntities:
    def test_examples(self):
        assert extract_entities("kernel panic on ent-000042") == {"ent-000042"}
        assert extract_entities("all systems nominal") == set()
        assert extract_entities("R02-M1-N0-C:J12-U11") == {"r02-m1-n0-c:j12-u11"}
        assert extract_entities("node-42 and core.1234 at node-a") == {"node-42", "core.1234", "node-a"}

    @given(st.text(max_size=60))
    def test_entities_are_lowercase_tokens(self, text):
        for e in extract_entities(text):
            assert e == e.lower() and e


class TestBgl:
    def test_line(self):
        f = parse_bgl_line(BGL_LINE, 0)
        assert f.text == "INFO KERNEL instruction cache parity error corrected"
        assert f.entities == {"r02-m1-n0-c:j12-u11"}
        assert f.importance == 0.5 and f.id == "bgl-000000"

    def test_severity_and_keywords(self):
        fatal = BGL_LINE.replace("INFO instruction cache parity error corrected", "FATAL data TLB error interrupt")
        assert parse_bgl_line(fatal, 0).importance == 0.95
        panic = BGL_LINE.replace("parity error", "parity panic")
        assert parse_bgl_line(panic, 0).importance == 0.95

    def test_malformed(self):
        with pytest.raises(MalformedLine):
            parse_bgl_line("- 1117838570 2005.06.03 R02", 0)

    def test_file_limit_and_skips(self, tmp_path):
        lines = synthetic_bgl_lines(2500, seed=1)
        lines.insert(10, "garbage line")
        path = tmp_path / "bgl.log"
        path.write_text("\n".join(lines) + "\n")
        skipped = []
        facts = parse_bgl(path, limit=2000, skipped=skipped)
        assert len(facts) == 2000
        assert skipped == [11]
        assert [f.seq for f in facts] == list(range(2000))
        assert all(f.text for f in facts)
        assert len(parse_bgl(path, limit=100)) == 100

    def test_unreadable(self, tmp_path):
        with pytest.raises(FileUnreadable):
            parse_bgl(tmp_path / "missing.log")

    def test_queries(self, tmp_path):
        facts = [parse_bgl_line(BGL_LINE, 0)]
        no_ent = BGL_LINE.split()
        facts.append(parse_bgl_line(" ".join(no_ent[:3] + ["node"] + no_ent[4:5] + ["node", "RAS", "KERNEL", "INFO", "shutdown complete"]), 1))
        assert not facts[1].entities
        queries = make_bgl_queries(facts)
        assert len(queries) == 1
        assert "r02-m1-n0-c:j12-u11" in queries[0].text.split()
        assert queries[0].gold_id == "bgl-000000"
        words = [w for w in queries[0].text.split() if w not in facts[0].entities]
        assert 2 <= len(words) <= 3


def test_tsv_round_trip(tmp_path):
    facts, queries = generate_synthetic(Scenario(n_facts=250, seed=5))
    write_facts(facts, tmp_path / "f.tsv")
    write_queries(queries, tmp_path / "q.tsv")
    assert read_facts(tmp_path / "f.tsv") == facts
    assert read_queries(tmp_path / "q.tsv") == queries
    header = (tmp_path / "f.tsv").read_text().splitlines()[0]
    assert header.split("\t")[:4] == ["seq", "id", "importance", "text"]


def test_bgl_round_trip(tmp_path):
    path = tmp_path / "bgl.log"
    path.write_text("\n".join(synthetic_bgl_lines(300, seed=2)) + "\n")
    facts = parse_bgl(path)
    write_facts(facts, tmp_path / "f.tsv")
    assert read_facts(tmp_path / "f.tsv", source="bgl") == facts
