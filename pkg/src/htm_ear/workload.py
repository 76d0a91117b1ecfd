"""Fact/query streams: seeded synthetic saturation data and BGL log ingestion."""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .embedding import tokenize
from .errors import FileUnreadable, InvalidScenario, MalformedLine
from .memory_tiers import Fact
from .retrieval import Cohort, Query, assign_cohort

log = logging.getLogger(__name__)

DEFAULT_KEYWORDS = frozenset({"panic", "fatal", "critical", "corruption"})
ESSENTIAL_IMPORTANCE = 0.95
BASE_IMPORTANCE = 0.5
COHORT_WINDOW = 100

_JOINED = re.compile(r"[^\W_]+(?:[-:][^\W_]+)+")


def extract_entities(text: str) -> frozenset[str]:
    """Identifier-like tokens: anything with a digit, or alphanumerics joined by ``-``/``:``."""
    out = set()
    for tok in tokenize(text):
        if any(ch.isdigit() for ch in tok) or _JOINED.fullmatch(tok):
            out.add(tok)
    return frozenset(out)


@dataclass
class Scenario:
    n_facts: int = 15000
    l1_capacity: int = 500
    l2_capacity: int = 5000
    seed: int = 42
    essential_keyword_prob: float = 0.25
    keywords: frozenset[str] = field(default_factory=lambda: DEFAULT_KEYWORDS)

    def validate(self) -> None:
        if self.n_facts <= 0:
            raise InvalidScenario(f"n_facts must be positive, got {self.n_facts}")
        if not 0.0 <= self.essential_keyword_prob <= 1.0:
            raise InvalidScenario("essential_keyword_prob outside [0, 1]")
        if not self.keywords:
            raise InvalidScenario("keyword set is empty")
        if self.l1_capacity <= 0 or self.l2_capacity <= 0:
            raise InvalidScenario("capacities must be positive")

    def scaled(self, factor: float) -> "Scenario":
        """Shrink (or grow) the stream and both capacities together."""
        return Scenario(
            n_facts=max(1, round(self.n_facts * factor)),
            l1_capacity=max(1, round(self.l1_capacity * factor)),
            l2_capacity=max(1, round(self.l2_capacity * factor)),
            seed=self.seed,
            essential_keyword_prob=self.essential_keyword_prob,
            keywords=self.keywords,
        )


# {e}: the fact's unique entity, {k}: optional keyword slot, {a}/{b}: fillers
_TEMPLATES = (
    "service {e} reported {k}{a} in {b}",
    "node {e} logged {k}{a} for the {b}",
    "worker {e} finished {k}{a} against {b}",
    "agent {e} observed {k}{a} inside {b}",
    "{b} replica {e} entered {k}{a} state",
    "job {e} triggered {k}{a} on {b}",
    "client {e} requested {k}{a} from {b}",
    "daemon {e} emitted {k}{a} about {b}",
    "volume {e} began {k}{a} with {b}",
    "cluster member {e} skipped {k}{a} at {b}",
)
_ACTIVITIES = (
    "checkpoint", "replication", "handshake", "compaction",
    "rollover", "backup", "heartbeat", "migration",
)
_SUBSYSTEMS = (
    "storage", "scheduler", "gateway", "cache",
    "index", "queue", "ledger", "router",
)


def synthetic_entity(i: int) -> str:
    return f"ent-{i:06d}"


def generate_synthetic(scn: Scenario) -> tuple[list[Fact], list[Query]]:
    """Build ``scn.n_facts`` facts, each paired with one recall query.

    Every fact carries a unique entity token. With probability
    ``essential_keyword_prob`` a keyword is spliced into the sentence and
    the fact is marked essential. The query repeats the fact's sentence
    without the keyword, so it shares the entity and context words but not
    the importance marker.
    """
    scn.validate()
    rng = random.Random(scn.seed)
    keywords = sorted(scn.keywords)
    facts: list[Fact] = []
    queries: list[Query] = []
    for i in range(scn.n_facts):
        template = _TEMPLATES[rng.randrange(len(_TEMPLATES))]
        a = _ACTIVITIES[rng.randrange(len(_ACTIVITIES))]
        b = _SUBSYSTEMS[rng.randrange(len(_SUBSYSTEMS))]
        essential = rng.random() < scn.essential_keyword_prob
        kw = rng.choice(keywords) if essential else ""
        ent = synthetic_entity(i)
        text = template.format(e=ent, k=f"{kw} " if kw else "", a=a, b=b)
        qtext = template.format(e=ent, k="", a=a, b=b)
        fid = f"fact-{i:06d}"
        facts.append(Fact(
            id=fid,
            text=text,
            entities=extract_entities(text),
            importance=ESSENTIAL_IMPORTANCE if essential else BASE_IMPORTANCE,
            seq=i,
            source="synthetic",
        ))
        queries.append(Query(
            id=f"q-{i:06d}",
            text=qtext,
            entities=extract_entities(qtext),
            gold_id=fid,
            cohort=assign_cohort(i, scn.n_facts, COHORT_WINDOW),
        ))
    return facts, queries


# -- BGL ----------------------------------------------------------------------

BGL_SEVERE_LEVELS = frozenset({"FATAL", "SEVERE"})
_STOPWORDS = frozenset({
    "the", "and", "for", "from", "was", "were", "with", "that", "this", "are",
    "has", "had", "have", "not", "but", "all", "any", "into", "during", "per",
})


def parse_bgl_line(line: str, seq: int, keywords: frozenset[str] = DEFAULT_KEYWORDS) -> Fact:
    """Parse one BGL record.

    Layout: label, epoch, date, node, timestamp, node, type, component,
    level, content. Raises :class:`MalformedLine` with fewer than 9 fields.
    """
    parts = line.split(maxsplit=9)
    if len(parts) < 9:
        raise MalformedLine(f"expected >= 9 fields, got {len(parts)}")
    node, component, level = parts[3], parts[7], parts[8]
    content = parts[9].strip() if len(parts) > 9 else ""
    text = " ".join(p for p in (level, component, content) if p)
    content_tokens = set(tokenize(content))
    essential = level.upper() in BGL_SEVERE_LEVELS or bool(content_tokens & keywords)
    return Fact(
        id=f"bgl-{seq:06d}",
        text=text,
        entities=extract_entities(node) | extract_entities(content),
        importance=ESSENTIAL_IMPORTANCE if essential else BASE_IMPORTANCE,
        seq=seq,
        source="bgl",
    )


def parse_bgl(
    path: str | Path,
    limit: int = 2000,
    keywords: frozenset[str] = DEFAULT_KEYWORDS,
    skipped: Optional[list[int]] = None,
) -> list[Fact]:
    """Read up to ``limit`` facts from a BGL log file.

    Malformed lines are skipped; their 1-based line numbers are appended to
    ``skipped`` when a list is supplied, and a warning with the count is logged.
    """
    if limit <= 0:
        raise ValueError("limit must be positive")
    facts: list[Fact] = []
    bad: list[int] = []
    try:
        fh = open(path, encoding="utf-8", errors="replace")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if len(facts) >= limit:
                break
            if not line.strip():
                continue
            try:
                facts.append(parse_bgl_line(line, len(facts), keywords))
            except MalformedLine:
                bad.append(lineno)
    if bad:
        log.warning("skipped %d malformed BGL line(s) in %s", len(bad), path)
    if skipped is not None:
        skipped.extend(bad)
    return facts


# Message shapes modelled on real BGL RAS records; used only to produce
# BGL-formatted smoke-test files when the public log is not at hand.
_BGL_MESSAGES = (
    ("RAS", "KERNEL", "INFO", "instruction cache parity error corrected"),
    ("RAS", "KERNEL", "INFO", "generating core.{n}"),
    ("RAS", "KERNEL", "INFO", "{n} double-hummer alignment exceptions"),
    ("RAS", "KERNEL", "INFO", "CE sym {n}, at 0x{h}, mask 0x{m}"),
    ("RAS", "KERNEL", "FATAL", "data TLB error interrupt"),
    ("RAS", "KERNEL", "FATAL", "data storage interrupt"),
    ("RAS", "APP", "FATAL", "ciod: failed to read message prefix on control stream (CioStream socket to 172.16.96.116:{n}"),
    ("RAS", "KERNEL", "INFO", "total of {n} ddr error(s) detected and corrected"),
    ("RAS", "MMCS", "ERROR", "idoproxydb hit ASSERT condition: ASSERT expression=0"),
    ("RAS", "KERNEL", "SEVERE", "machine check interrupt"),
    ("RAS", "LINKCARD", "FATAL", "MidplaneSwitchController performing bit sparing on R{r:02d}-M{mp}-L{lc}-U{u:02d}-A bit {n}"),
    ("RAS", "KERNEL", "INFO", "shutdown complete"),
)


def synthetic_bgl_lines(n: int, seed: int = 0, alert_prob: float = 0.1) -> list[str]:
    """``n`` lines in BGL record layout with random nodes and timestamps."""
    import datetime as _dt

    rng = random.Random(seed)
    t = 1117838570
    lines = []
    for _ in range(n):
        t += rng.randrange(0, 40)
        r, mp, nd, j, u = rng.randrange(80), rng.randrange(2), rng.randrange(16), rng.randrange(2, 19), rng.randrange(12)
        node = f"R{r:02d}-M{mp}-N{nd:X}-C:J{j:02d}-U{u:02d}"
        mtype, comp, level, msg = _BGL_MESSAGES[rng.randrange(len(_BGL_MESSAGES))]
        msg = msg.format(
            n=rng.randrange(1, 5000), h=f"{rng.randrange(1 << 32):08x}", m=f"{rng.randrange(256):02x}",
            r=r, mp=mp, lc=rng.randrange(4), u=u,
        )
        stamp = _dt.datetime.fromtimestamp(t, _dt.timezone.utc)
        label = "-" if level not in ("FATAL", "SEVERE") or rng.random() > alert_prob * 5 else "KERNDTLB"
        lines.append(
            f"{label} {t} {stamp:%Y.%m.%d} {node} {stamp:%Y-%m-%d-%H.%M.%S}.{rng.randrange(10**6):06d} "
            f"{node} {mtype} {comp} {level} {msg}"
        )
    return lines


def _keywords(tokens: list[str]) -> list[str]:
    seen: list[str] = []
    for tok in tokens:
        if tok.isalpha() and len(tok) >= 3 and tok not in _STOPWORDS and tok not in seen:
            seen.append(tok)
    return seen


def make_bgl_queries(facts: list[Fact], window: int = COHORT_WINDOW) -> list[Query]:
    """One query per entity-bearing fact: its entities plus 2-3 content words.

    Words come from the free-text message (the text minus its leading level
    and component); the level/component words are used only when the
    message has fewer than two usable words.
    """
    queries = []
    n = len(facts)
    for fact in facts:
        if not fact.entities:
            continue
        tokens = tokenize(fact.text)
        words = _keywords(tokens[2:])
        if len(words) < 2:
            words = _keywords(tokens)
        words = words[: 2 + fact.seq % 2]
        text = " ".join(sorted(fact.entities) + words)
        queries.append(Query(
            id=f"q-{fact.id}",
            text=text,
            entities=extract_entities(text),
            gold_id=fact.id,
            cohort=assign_cohort(fact.seq, n, window),
        ))
    return queries


# -- dataset files --------------------------------------------------------------

FACT_HEADER = ("seq", "id", "importance", "text", "entities")
QUERY_HEADER = ("seq", "id", "gold_id", "text")


def _clean(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ")


def write_facts(facts: Iterable[Fact], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(FACT_HEADER) + "\n")
        for f in facts:
            fh.write(f"{f.seq}\t{f.id}\t{f.importance:.6f}\t{_clean(f.text)}\t{' '.join(sorted(f.entities))}\n")


def write_queries(queries: Iterable[Query], path: str | Path, seq_of: Optional[dict[str, int]] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(QUERY_HEADER) + "\n")
        for i, q in enumerate(queries):
            seq = seq_of[q.gold_id] if seq_of else i
            fh.write(f"{seq}\t{q.id}\t{q.gold_id}\t{_clean(q.text)}\n")


def _rows(path: str | Path, header: tuple[str, ...]):
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    with fh:
        first = fh.readline().rstrip("\n").split("\t")
        if tuple(first[:4]) != header[:4]:
            raise ValueError(f"{path}: unexpected header {first}")
        for line in fh:
            if line.strip():
                yield line.rstrip("\n").split("\t")


def read_facts(path: str | Path, source: str = "synthetic") -> list[Fact]:
    """Inverse of :func:`write_facts`; a missing entity column is re-extracted."""
    facts = []
    for row in _rows(path, FACT_HEADER):
        text = row[3]
        ents = frozenset(row[4].split()) if len(row) > 4 else extract_entities(text)
        facts.append(Fact(row[1], text, ents, float(row[2]), int(row[0]), source))
    return facts


def read_queries(path: str | Path, n_facts: Optional[int] = None) -> list[Query]:
    rows = list(_rows(path, QUERY_HEADER))
    n = n_facts if n_facts is not None else len(rows)
    return [
        Query(r[1], r[3], extract_entities(r[3]), r[2], assign_cohort(int(r[0]), n, COHORT_WINDOW))
        for r in rows
    ]


def cohort_counts(queries: Iterable[Query]) -> dict[Cohort, int]:
    counts = {c: 0 for c in Cohort}
    for q in queries:
        counts[q.cohort] += 1
    return counts
