import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from htm_ear.ann_index import SearchHit
from htm_ear.memory_tiers import Residency, SystemConfig, TieredMemory
from htm_ear.retrieval import (
    Cohort, Query, Retriever, Route, ScoreFileReranker, assign_cohort, gate, gate_check, lexical_score,
    rerank, retrieve, score_candidate,
)
from htm_ear.workload import extract_entities

from conftest import make_fact

CFG = SystemConfig()


def q(text, gold="f0", qid="q0"):
    return Query(qid, text, extract_entities(text), gold)


def ents(mapping):
    return lambda fid: frozenset(mapping[fid])


class TestGate:
    def test_passes_when_similar_and_covered(self):
        query = Query("q", "x", frozenset({"a"}), "f")
        assert gate(query, [SearchHit("f", 0.85)], ents({"f": {"a", "b"}}), CFG)

    def test_fails_below_threshold(self):
        query = Query("q", "x", frozenset({"a"}), "f")
        assert not gate(query, [SearchHit("f", 0.83)], ents({"f": {"a"}}), CFG)

    def test_fails_on_missing_entity(self):
        query = Query("q", "x", frozenset({"a", "z"}), "f")
        passed, sim, covered = gate_check(query, [SearchHit("f", 0.99)], ents({"f": {"a"}}), CFG)
        assert (passed, covered) == (False, False) and sim == 0.99

    def test_threshold_inclusive(self):
        query = Query("q", "x", frozenset(), "f")
        assert gate(query, [SearchHit("f", 0.84)], ents({"f": set()}), CFG)

    def test_empty_l1(self):
        assert not gate(Query("q", "x", frozenset(), "f"), [], ents({}), CFG)

    @given(st.floats(-1, 1), st.sets(st.sampled_from("abcd")), st.sets(st.sampled_from("abcd")))
    def test_soundness(self, sim, qe, fe):
        query = Query("q", "x", frozenset(qe), "f")
        passed, s, covered = gate_check(query, [SearchHit("f", sim)], ents({"f": fe}), CFG)
        if passed:
            assert s >= 0.84 and covered


class TestScoreCandidate:
    def test_examples(self):
        assert score_candidate(1.0, 0, 0.0, CFG) == pytest.approx(1.0)
        assert score_candidate(0.9, 2, 0.95, CFG) == pytest.approx(0.729 + 1.6 + 0.095)
        assert score_candidate(0.9, 2, 0.95, CFG) == pytest.approx(2.424)

    def test_overlap_dominates_similarity_gap(self):
        # one shared entity outweighs going from sim 0.6 to 1.0
        assert score_candidate(1.0, 0, 0.5, CFG) - score_candidate(0.6, 0, 0.5, CFG) == pytest.approx(0.784)
        assert score_candidate(0.6, 1, 0.5, CFG) > score_candidate(1.0, 0, 0.5, CFG)

    def test_cubic_gap(self):
        assert score_candidate(0.95, 0, 0, CFG) - score_candidate(0.84, 0, 0, CFG) == pytest.approx(0.95**3 - 0.84**3)
        assert 0.95**3 - 0.84**3 == pytest.approx(0.264, abs=1e-3)

    def test_monotone_in_sim(self):
        grid = np.linspace(0, 1, 201)
        for overlap in (0, 1, 3):
            for imp in (0.5, 0.95):
                s = [score_candidate(x, overlap, imp, CFG) for x in grid]
                assert all(a < b for a, b in zip(s, s[1:]))


def test_assign_cohort():
    assert assign_cohort(0, 15000) is Cohort.HISTORY
    assert assign_cohort(99, 15000) is Cohort.HISTORY
    assert assign_cohort(100, 15000) is Cohort.OTHER
    assert assign_cohort(14900, 15000) is Cohort.ACTIVE
    assert assign_cohort(50, 150) is Cohort.ACTIVE  # overlap goes to active


class TestRerank:
    def _cands(self, texts):
        from htm_ear.memory_tiers import MemoryItem
        return [(MemoryItem(make_fact(i, text=t), np.zeros(64)), 1.0 - i * 0.1) for i, t in enumerate(texts)]

    def test_entity_match_wins(self):
        cands = self._cands(["disk check on ent-000002", "disk check on ent-000001"])
        out = rerank(q("disk check ent-000001"), cands, CFG)
        assert [it.fact.id for it, _ in out] == ["f1", "f0"]
        assert out[0][1] == pytest.approx(lexical_score(q("disk check ent-000001"), cands[1][0].fact))

    def test_lexical_score_value(self):
        # tokens {a, b} vs {a, c}: jaccard 1/3, no entities
        assert lexical_score(q("a b"), make_fact(0, text="a c")) == pytest.approx(1 / 3)
        assert lexical_score(q("x ent-1"), make_fact(0, text="x ent-1")) == pytest.approx(2.0)

    def test_ties_keep_pipeline_order(self):
        cands = self._cands(["same text", "same text", "same text"])
        out = rerank(q("same text"), cands, CFG)
        assert [it.fact.id for it, _ in out] == ["f0", "f1", "f2"]

    def test_no_ce_is_identity(self):
        cands = self._cands(["zzz", "disk ent-000001"])
        cfg = SystemConfig(mode="no_ce")
        assert rerank(q("disk ent-000001"), cands, cfg) == cands

    def test_too_many_candidates(self):
        with pytest.raises(ValueError):
            rerank(q("x"), self._cands(["t"] * 21), CFG)

    def test_score_file(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text("q0\tf1\t9.5\n")
        scorer = ScoreFileReranker.load(path)
        cands = self._cands(["disk ent-000001", "other"])
        out = rerank(q("disk ent-000001"), cands, CFG, scorer)
        assert [it.fact.id for it, _ in out] == ["f1", "f0"]
        assert out[0][1] == 9.5


def _memory(l1=2, l2=5, frac=0.5, mode="full", index="flat"):
    return TieredMemory(SystemConfig(mode=mode, l1_capacity=l1, l2_capacity=l2, evict_fraction=frac, index=index))


TEXTS = [
    "checkpoint on ent-000000 finished cleanly",
    "scheduler queue ent-000001 drained",
    "network link ent-000002 flapped twice",
]


def _three(mode="full"):
    mem = _memory(mode=mode)
    for seq, t in enumerate(TEXTS):
        mem.insert_fact(make_fact(seq, text=t))
    return mem


def test_gold_only_memory():
    mem = _memory()
    mem.insert_fact(make_fact(0, text=TEXTS[0]))
    res = retrieve(q("checkpoint on ent-000000 finished"), mem)
    assert res.ids == ["f0"]
    assert res.route is Route.L1_ONLY
    assert res.latency_ms > 0
    assert mem.get("f0").usage == 1


def test_l2_fallback_finds_gold():
    mem = _three()
    assert mem.residency("f0") is Residency.L2
    retr = Retriever(mem)
    res = retr.retrieve(q("checkpoint on ent-000000 finished"))
    assert res.route is Route.L1_PLUS_L2
    assert not res.gate_covered
    assert res.ids[0] == "f0"
    assert retr.stats.l2_searches == 1


def test_no_gate_cannot_see_l2():
    mem = _three("no_gate")
    retr = Retriever(mem)
    res = retr.retrieve(q("checkpoint on ent-000000 finished"))
    assert res.route is Route.L1_ONLY
    assert "f0" not in res.ids
    assert retr.stats.l2_searches == 0 and retr.stats.gate_decisions == 0


def test_oracle_route_is_flat():
    mem = TieredMemory(SystemConfig(mode="oracle_unbounded", index="flat"))
    for seq, t in enumerate(TEXTS):
        mem.insert_fact(make_fact(seq, text=t))
    retr = Retriever(mem)
    res = retr.retrieve(q("checkpoint on ent-000000 finished"))
    assert res.route is Route.FLAT and res.ids[0] == "f0"
    assert retr.stats.gate_decisions == 0


def test_empty_memory():
    res = retrieve(q("anything"), _memory())
    assert res.ranked == []


def test_touch_every_returned_id():
    mem = _three()
    res = retrieve(q("scheduler queue ent-000001"), mem)
    for fid in res.ids:
        assert mem.get(fid).usage == 1
    assert res.route is Route.L1_ONLY and len(res.ids) == len(mem.l1)


def _populated(mode, n=120):
    mem = TieredMemory(SystemConfig(mode=mode, l1_capacity=30, l2_capacity=60, index="hnsw", seed=7))
    for seq in range(n):
        mem.insert_fact(make_fact(seq, 0.95 if seq % 4 == 0 else 0.5, text=f"event {seq % 7} on ent-{seq:06d} seen"))
    return mem


def test_mode_isolation_candidates_identical(monkeypatch):
    """no_ce and full see the same scored candidates; only the rerank step differs."""
    import htm_ear.retrieval as r

    seen = {}
    real = r.rerank

    def spy(query, cands, cfg, scorer=lexical_score):
        seen.setdefault(cfg.mode, []).append([(it.id, s) for it, s in cands])
        return real(query, cands, cfg, scorer)

    monkeypatch.setattr(r, "rerank", spy)
    for mode in ("full", "no_ce"):
        retr = Retriever(_populated(mode))
        for i in (3, 50, 110):
            retr.retrieve(q(f"event {i % 7} on ent-{i:06d}", gold=f"f{i}", qid=f"q{i}"))
    assert seen["full"] == seen["no_ce"]


def test_deterministic_results():
    def run():
        retr = Retriever(_populated("full"))
        out = []
        for i in range(0, 120, 9):
            res = retr.retrieve(q(f"event {i % 7} on ent-{i:06d}", gold=f"f{i}", qid=f"q{i}"))
            out.append((res.ranked, res.route, res.gate_sim, res.gate_covered))
        return out

    assert run() == run()


def test_cfg_mismatch_rejected():
    mem = _memory()
    with pytest.raises(ValueError):
        retrieve(q("x"), mem, SystemConfig())
