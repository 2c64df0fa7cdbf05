"""Synthetic corpus generator: templated sentences with guaranteed overlap
patterns, emitted in the same JSONL/TSV formats real corpora use.

Every triple's entities appear verbatim in the text and the relation's verbal
word is planted between them, so models can both memorize and generalize.
Returned records carry the intended pattern and collision-free labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import AnnotatedSentence, EntitySpan, RelationSchema, Triple, anchor_triples
from .decoder import ee_collision_free_multi, ee_collision_free_single

_VERBAL_WORDS = (
    "leads", "owns", "makes", "joins", "visits", "rules", "funds", "hosts",
    "trains", "guards", "sells", "hires", "meets", "backs", "cites", "links",
    "marks", "names", "rates", "seeks",
)

PATTERNS = ("normal", "seo", "epo", "soo")


@dataclass(frozen=True)
class SynthConfig:
    relations: int = 5
    sentences: int = 200
    vocab: int = 120
    max_triples: int = 3
    overlap_mix: tuple[str, ...] = PATTERNS
    seed: int = 0
    max_entity_tokens: int = 1

    def __post_init__(self):
        if self.relations < 1:
            raise ValueError("need at least one relation")
        if self.sentences < len(self.overlap_mix):
            raise ValueError("too few sentences to realize every requested pattern")
        if self.max_triples < 1:
            raise ValueError("max_triples must be at least 1")
        for p in self.overlap_mix:
            if p not in PATTERNS:
                raise ValueError(f"unknown overlap pattern {p!r}")
        if self.max_entity_tokens < 1:
            raise ValueError("max_entity_tokens must be at least 1")


@dataclass
class SynthResult:
    schema: RelationSchema
    sentences: list[AnnotatedSentence]
    records: list[dict] = field(default_factory=list)


def _relation_schema(count: int) -> RelationSchema:
    pairs = []
    for i in range(count):
        if i < len(_VERBAL_WORDS):
            word = _VERBAL_WORDS[i]
        else:
            word = f"relates{i}"
        pairs.append((f"/syn/{word}", word))
    return RelationSchema(tuple(pairs))


def _pools(cfg: SynthConfig) -> tuple[list[tuple[str, ...]], list[str]]:
    """(entity surfaces, filler tokens) within the vocabulary budget."""
    fillers_n = max(3, cfg.vocab // 8)
    suffix_n = cfg.vocab // 8 if cfg.max_entity_tokens > 1 else 0
    entity_n = cfg.vocab - 2 - cfg.relations - fillers_n - suffix_n
    if entity_n < max(6, 2 * cfg.max_triples):
        raise ValueError(f"vocab budget {cfg.vocab} too small for "
                         f"{cfg.relations} relations and {cfg.max_triples} triples")
    bases = [f"ent{i}" for i in range(entity_n)]
    suffixes = [f"sub{i}" for i in range(suffix_n)]
    fillers = [f"w{i}" for i in range(fillers_n)]
    surfaces: list[tuple[str, ...]] = []
    for i, base in enumerate(bases):
        if suffixes and i % 2 == 1:
            surfaces.append((base, suffixes[i % len(suffixes)]))
        else:
            surfaces.append((base,))
    return surfaces, fillers


class _SentenceBuilder:
    def __init__(self, rng: np.random.Generator, fillers: list[str]):
        self.rng = rng
        self.fillers = fillers
        self.tokens: list[str] = []
        self.spans: dict[tuple[str, ...], EntitySpan] = {}

    def filler(self, max_count: int = 2) -> None:
        for _ in range(int(self.rng.integers(0, max_count + 1))):
            self.tokens.append(self.fillers[int(self.rng.integers(0, len(self.fillers)))])

    def entity(self, surface: tuple[str, ...]) -> EntitySpan:
        if surface not in self.spans:
            start = len(self.tokens)
            self.tokens.extend(surface)
            self.spans[surface] = EntitySpan(start, start + len(surface) - 1)
        return self.spans[surface]

    def word(self, w: str) -> None:
        self.tokens.append(w)


def _build_sentence(rng: np.random.Generator, pattern: str, cfg: SynthConfig,
                    schema: RelationSchema, surfaces: list[tuple[str, ...]],
                    fillers: list[str]) -> tuple[AnnotatedSentence, list[tuple[str, ...]]]:
    """One sentence of the given pattern; returns it with its entity surfaces
    ordered as (subject, object) per triple for the JSONL record."""
    m = schema.size
    b = _SentenceBuilder(rng, fillers)
    distinct = max(6, 2 * cfg.max_triples)
    picks = [surfaces[i] for i in rng.choice(len(surfaces), size=distinct, replace=False)]
    triples: list[Triple] = []
    surface_pairs: list[tuple[tuple[str, ...], tuple[str, ...]]] = []

    def emit(subj: tuple[str, ...], rel: int, obj: tuple[str, ...]) -> None:
        s_span = b.entity(subj)
        b.word(schema.word(rel))
        o_span = b.entity(obj)
        triples.append(Triple(s_span, rel, o_span))
        surface_pairs.append((subj, obj))

    b.filler(1)
    if pattern == "normal":
        count = int(rng.integers(1, cfg.max_triples + 1))
        for j in range(count):
            emit(picks[2 * j], int(rng.integers(0, m)), picks[2 * j + 1])
            b.filler(1)
    elif pattern == "seo":
        a, c, e = picks[0], picks[1], picks[2]
        r1, r2 = int(rng.integers(0, m)), int(rng.integers(0, m))
        emit(a, r1, c)
        # second triple shares exactly one entity with the first
        variant = int(rng.integers(0, 4))
        second = [(a, r2, e), (c, r2, e), (e, r2, c), (e, r2, a)][variant]
        s_span = b.entity(second[0])
        b.word(schema.word(second[1]))
        o_span = b.entity(second[2])
        triples.append(Triple(s_span, second[1], o_span))
        surface_pairs.append((second[0], second[2]))
        b.filler(1)
    elif pattern == "epo":
        a, c = picks[0], picks[1]
        r1 = int(rng.integers(0, m))
        r2 = int(rng.integers(0, m))
        if m > 1:
            while r2 == r1:
                r2 = int(rng.integers(0, m))
        emit(a, r1, c)
        swap = bool(rng.integers(0, 2)) or m == 1
        subj, obj = (c, a) if swap else (a, c)
        b.word(schema.word(r2))
        triples.append(Triple(b.entity(subj), r2, b.entity(obj)))
        surface_pairs.append((subj, obj))
        b.filler(1)
    elif pattern == "soo":
        a = picks[0]
        r = int(rng.integers(0, m))
        span = b.entity(a)
        b.word(schema.word(r))
        triples.append(Triple(span, r, span))
        surface_pairs.append((a, a))
        b.filler(1)
    else:
        raise ValueError(f"unknown pattern {pattern!r}")

    sentence = AnnotatedSentence(" ".join(b.tokens), tuple(b.tokens), tuple(triples))
    return sentence, surface_pairs


def _record(sentence: AnnotatedSentence, surface_pairs, schema: RelationSchema,
            pattern: str) -> dict:
    triple_list = [[" ".join(subj), schema.label(t.relation_id), " ".join(obj)]
                   for t, (subj, obj) in zip(sentence.triples, surface_pairs)]
    return {
        "text": sentence.text,
        "triple_list": triple_list,
        "pattern": pattern,
        "collision_free_single": ee_collision_free_single(list(anchor_triples(sentence))),
        "collision_free_multi": ee_collision_free_multi(sentence.triples),
    }


def make_synthetic(cfg: SynthConfig) -> SynthResult:
    """Deterministic corpus; patterns round-robin so each requested one appears."""
    rng = np.random.default_rng(cfg.seed)
    schema = _relation_schema(cfg.relations)
    surfaces, fillers = _pools(cfg)
    result = SynthResult(schema, [])
    for i in range(cfg.sentences):
        pattern = cfg.overlap_mix[i % len(cfg.overlap_mix)]
        sentence, pairs = _build_sentence(rng, pattern, cfg, schema, surfaces, fillers)
        result.sentences.append(sentence)
        result.records.append(_record(sentence, pairs, schema, pattern))
    return result


def make_ablation_fixture(seed: int, *, frequent_relations: int = 3,
                          rare_relations: int = 3, frequent_count: int = 60,
                          rare_count: int = 5, heldout_per_relation: int = 10,
                          entity_pool: int = 40):
    """Single-triple corpus with frequent and rare relations plus a held-out
    split whose rare-relation entity pairs never occur in training.

    Returns (schema, train_sentences, heldout_sentences, rare_relation_ids).
    """
    rng = np.random.default_rng(seed)
    total = frequent_relations + rare_relations
    schema = _relation_schema(total)
    surfaces = [(f"ent{i}",) for i in range(entity_pool)]
    fillers = [f"w{i}" for i in range(6)]
    rare_ids = list(range(frequent_relations, total))

    def build(rel: int, used: set[tuple[int, int]] | None) -> AnnotatedSentence:
        while True:
            i, j = (int(v) for v in rng.choice(entity_pool, size=2, replace=False))
            if used is None or (i, j) not in used:
                break
        b = _SentenceBuilder(rng, fillers)
        b.filler(1)
        span_s = b.entity(surfaces[i])
        b.word(schema.word(rel))
        span_o = b.entity(surfaces[j])
        b.filler(1)
        if used is not None:
            used.add((i, j))
        return AnnotatedSentence(" ".join(b.tokens), tuple(b.tokens),
                                 (Triple(span_s, rel, span_o),))

    train: list[AnnotatedSentence] = []
    train_pairs: dict[int, set[tuple[int, int]]] = {r: set() for r in range(total)}
    for rel in range(total):
        count = rare_count if rel in rare_ids else frequent_count
        for _ in range(count):
            train.append(build(rel, train_pairs[rel]))
    heldout: list[AnnotatedSentence] = []
    for rel in range(total):
        seen = set(train_pairs[rel])
        for _ in range(heldout_per_relation):
            sent = build(rel, seen)
            heldout.append(sent)
    order = rng.permutation(len(train))
    train = [train[i] for i in order]
    return schema, train, heldout, rare_ids
