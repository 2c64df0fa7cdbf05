"""Corpus ingestion, relation schema, gold interaction maps, overlap patterns.

The dataset format is JSONL: one object per line with a ``text`` field and a
``triple_list`` of ``[subject, relation, object]`` string triples. Relation
labels map to single verbalizer words through a two-column TSV file.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

OVERLAP_PATTERNS = ("Normal", "SEO", "EPO", "SOO")
TRIPLE_COUNT_BUCKETS = ("1", "2", "3", "4", "5+")

GOLD_MAP_MODES = ("single_token", "multi_token_head", "multi_token_tail",
                  "multi_token_cross")


class DatasetError(ValueError):
    """Unrecoverable ingestion problem (bad schema reference, bad file)."""


@dataclass(frozen=True)
class EntitySpan:
    """Inclusive token span; single-token entities have head == tail."""
    head: int
    tail: int

    def __post_init__(self):
        if self.head > self.tail:
            raise ValueError(f"span head {self.head} > tail {self.tail}")

    @classmethod
    def single(cls, index: int) -> "EntitySpan":
        return cls(index, index)


@dataclass(frozen=True)
class Triple:
    subject: EntitySpan
    relation_id: int
    object: EntitySpan


@dataclass(frozen=True)
class RelationSchema:
    """Ordered (label, verbal word) pairs; ids are dense 0..M-1 in list order."""
    relations: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(self.relations) < 1:
            raise DatasetError("relation schema must contain at least one relation")
        labels = [lab for lab, _ in self.relations]
        words = [w for _, w in self.relations]
        if len(set(labels)) != len(labels):
            raise DatasetError("relation labels must be unique")
        if len(set(words)) != len(words):
            raise DatasetError("relation verbal words must be unique "
                               "(capitalization distinguishes)")
        for lab, w in self.relations:
            if not w or any(c.isspace() for c in w):
                raise DatasetError(f"verbal word for '{lab}' must be a single token, got {w!r}")
        object.__setattr__(self, "_label_to_id",
                           {lab: i for i, (lab, _) in enumerate(self.relations)})

    @property
    def size(self) -> int:
        return len(self.relations)

    def label(self, relation_id: int) -> str:
        return self.relations[relation_id][0]

    def word(self, relation_id: int) -> str:
        return self.relations[relation_id][1]

    def id_of(self, label: str) -> int:
        try:
            return self._label_to_id[label]
        except KeyError:
            raise DatasetError(f"unknown relation label: {label!r}") from None


def verbalize(schema: RelationSchema) -> list[str]:
    """Verbal word per relation, in schema order."""
    return [word for _, word in schema.relations]


def load_relation_map(path) -> RelationSchema:
    """Parse a ``label<TAB>word`` file; '#' lines are comments."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected 'label<TAB>word', got {line!r}")
        pairs.append((parts[0], parts[1]))
    return RelationSchema(tuple(pairs))


def save_relation_map(schema: RelationSchema, path) -> None:
    lines = [f"{label}\t{word}" for label, word in schema.relations]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class AnnotatedSentence:
    text: str
    tokens: tuple[str, ...]
    triples: tuple[Triple, ...]

    def __post_init__(self):
        n = len(self.tokens)
        for t in self.triples:
            if t.subject.tail >= n or t.object.tail >= n:
                raise ValueError("triple span outside sentence")


def tokenize(text: str) -> tuple[str, ...]:
    """Whitespace tokenization; one word is one token."""
    return tuple(text.split())


@dataclass
class IngestionReport:
    total: int = 0
    accepted: int = 0
    rejected: int = 0
    reasons: Counter = field(default_factory=Counter)
    duplicate_mention_sentences: int = 0

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "reasons": dict(sorted(self.reasons.items())),
            "duplicate_mention_sentences": self.duplicate_mention_sentences,
        }


def find_span(tokens: Sequence[str], entity_tokens: Sequence[str]) -> EntitySpan | None:
    """First occurrence of the entity token subsequence, or None."""
    k = len(entity_tokens)
    if k == 0:
        return None
    for start in range(len(tokens) - k + 1):
        if tuple(tokens[start:start + k]) == tuple(entity_tokens):
            return EntitySpan(start, start + k - 1)
    return None


def _count_occurrences(tokens: Sequence[str], entity_tokens: Sequence[str]) -> int:
    k = len(entity_tokens)
    if k == 0:
        return 0
    return sum(1 for s in range(len(tokens) - k + 1)
               if tuple(tokens[s:s + k]) == tuple(entity_tokens))


def _parse_line(line: str, schema: RelationSchema, max_seq_len: int):
    """Returns (sentence, duplicate_mention_flag) or (reject_reason, None)."""
    try:
        obj = json.loads(line)
        text = obj["text"]
        items = [(s, r, o) for s, r, o in obj.get("triple_list", [])]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        return "bad_record", None
    tokens = tokenize(text)
    if not tokens:
        return "empty_text", None
    if len(tokens) + schema.size > max_seq_len:
        return "too_long", None
    triples = []
    has_duplicate = False
    for subj, rel, obj_str in items:
        rel_id = schema.id_of(rel)  # unknown label raises DatasetError
        subj_tokens = tokenize(subj)
        obj_tokens = tokenize(obj_str)
        subj_span = find_span(tokens, subj_tokens)
        obj_span = find_span(tokens, obj_tokens)
        if subj_span is None or obj_span is None:
            return "entity_not_found", None
        if (_count_occurrences(tokens, subj_tokens) > 1
                or _count_occurrences(tokens, obj_tokens) > 1):
            has_duplicate = True
        triples.append(Triple(subj_span, rel_id, obj_span))
    return AnnotatedSentence(text, tokens, tuple(triples)), has_duplicate


def load_dataset(path, schema: RelationSchema, *, format: str = "jsonl_triple_list",
                 max_seq_len: int = 100,
                 workers: int = 1) -> tuple[list[AnnotatedSentence], IngestionReport]:
    """Ingest a JSONL corpus, resolving entity strings to token spans.

    Sentences whose entities cannot be located, or that exceed ``max_seq_len``
    including the relation positions, are rejected and counted in the report.
    An unknown relation label is a hard error naming the label.
    """
    if format != "jsonl_triple_list":
        raise DatasetError(f"unsupported dataset format: {format}")
    p = Path(path)
    if not p.exists():
        raise DatasetError(f"dataset file not found: {p}")
    lines = [ln for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]
    report = IngestionReport(total=len(lines))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parsed = list(pool.map(lambda ln: _parse_line(ln, schema, max_seq_len), lines))
    else:
        parsed = [_parse_line(ln, schema, max_seq_len) for ln in lines]
    sentences = []
    for result, dup in parsed:
        if isinstance(result, str):
            report.rejected += 1
            report.reasons[result] += 1
            continue
        report.accepted += 1
        if dup:
            report.duplicate_mention_sentences += 1
        sentences.append(result)
    return sentences, report


def save_dataset(records: Iterable[dict], path) -> None:
    """Write JSONL records ({"text", "triple_list", ...}) one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass(frozen=True)
class GoldMap:
    """Boolean target matrix over sentence tokens (0..N-1) and relations (N..N+M-1)."""
    n: int
    m: int
    cells: np.ndarray

    @property
    def size(self) -> int:
        return self.n + self.m

    def entity_entity(self) -> np.ndarray:
        return self.cells[:self.n, :self.n]

    def subject_relation(self) -> np.ndarray:
        return self.cells[:self.n, self.n:]

    def relation_object(self) -> np.ndarray:
        return self.cells[self.n:, :self.n]

    def relation_relation(self) -> np.ndarray:
        return self.cells[self.n:, self.n:]


def _anchors(triple: Triple, mode: str) -> tuple[int, int]:
    """(subject anchor, object anchor) token indices under the given mode."""
    if mode in ("single_token", "multi_token_head"):
        return triple.subject.head, triple.object.head
    if mode == "multi_token_tail":
        return triple.subject.tail, triple.object.tail
    if mode == "multi_token_cross":
        return triple.subject.head, triple.object.tail
    raise ValueError(f"unknown gold map mode: {mode}")


def build_gold_map(sentence: AnnotatedSentence, m: int,
                   mode: str = "single_token") -> GoldMap:
    """Target matrix: symmetric entity-entity cells plus the two directed
    entity-relation quadrants; the relation-relation quadrant stays false."""
    if mode not in GOLD_MAP_MODES:
        raise ValueError(f"unknown gold map mode: {mode}")
    n = len(sentence.tokens)
    size = n + m
    cells = np.zeros((size, size), dtype=bool)
    for t in sentence.triples:
        if t.relation_id >= m:
            raise ValueError(f"relation id {t.relation_id} outside schema of size {m}")
        a, b = _anchors(t, mode)
        cells[a, b] = True
        cells[b, a] = True
        cells[a, n + t.relation_id] = True
        cells[n + t.relation_id, b] = True
    return GoldMap(n, m, cells)


def anchor_triples(sentence: AnnotatedSentence) -> set[Triple]:
    """Triples collapsed to single-token head anchors (main setting)."""
    return {Triple(EntitySpan.single(t.subject.head), t.relation_id,
                   EntitySpan.single(t.object.head))
            for t in sentence.triples}


def classify_overlap(sentence: AnnotatedSentence) -> str:
    """EPO > SOO > SEO > Normal, deciding by entity spans."""
    triples = set(sentence.triples)
    pairs = Counter(frozenset((t.subject, t.object)) for t in triples)
    if any(c >= 2 for c in pairs.values()):
        return "EPO"
    if any(t.subject == t.object for t in triples):
        return "SOO"
    entity_uses = Counter()
    for t in triples:
        entity_uses[t.subject] += 1
        entity_uses[t.object] += 1
    if any(c >= 2 for c in entity_uses.values()):
        return "SEO"
    return "Normal"


def bucket_by_count(sentence: AnnotatedSentence) -> str:
    """Triple-count bucket label; counts above 5 clamp to '5+'.

    Sentences with no triples land in bucket '1' so the buckets partition
    every corpus.
    """
    count = max(1, min(len(sentence.triples), 5))
    return TRIPLE_COUNT_BUCKETS[count - 1]
