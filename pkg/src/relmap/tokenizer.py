"""Vocabulary and the concatenated sentence+relation input encoding."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .dataset import AnnotatedSentence, RelationSchema, verbalize

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    """Bijective token/id mapping with PAD=0 and UNK=1."""
    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[:2] != (PAD_TOKEN, UNK_TOKEN):
            raise VocabError("vocab must start with the PAD and UNK specials")
        if len(set(self.tokens)) != len(self.tokens):
            raise VocabError("vocab tokens must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]


def build_vocab(corpus: Iterable[AnnotatedSentence], schema: RelationSchema,
                min_freq: int = 1) -> Vocab:
    """Whitespace vocabulary over the corpus plus every relation verbal word.

    Verbal words are always included regardless of frequency; other tokens
    need ``min_freq`` occurrences. Ordered by descending frequency, then
    alphabetically, so builds are deterministic.
    """
    corpus = list(corpus)
    if not corpus:
        raise VocabError("cannot build a vocabulary from an empty corpus")
    words = verbalize(schema)
    for w in words:
        if w in (PAD_TOKEN, UNK_TOKEN):
            raise VocabError(f"relation word {w!r} collides with a special token")
    counts = Counter(tok for sent in corpus for tok in sent.tokens)
    kept = sorted((tok for tok, c in counts.items()
                   if c >= min_freq and tok not in (PAD_TOKEN, UNK_TOKEN)),
                  key=lambda tok: (-counts[tok], tok))
    seen = set(words)
    ordered = [PAD_TOKEN, UNK_TOKEN, *words]
    for tok in kept:
        if tok not in seen:
            seen.add(tok)
            ordered.append(tok)
    return Vocab(tuple(ordered))


@dataclass(frozen=True)
class EncodedInput:
    """Sentence ids followed by the M relation word ids, no separators."""
    ids: tuple[int, ...]
    n: int
    m: int

    def __post_init__(self):
        if len(self.ids) != self.n + self.m:
            raise VocabError("encoded length must equal N + M")

    @property
    def size(self) -> int:
        return self.n + self.m

    @property
    def relation_offset(self) -> int:
        return self.n


def encode_concat(tokens: Sequence[str], schema: RelationSchema, vocab: Vocab) -> EncodedInput:
    """Concatenate sentence token ids with the schema's verbal word ids.

    Unknown sentence tokens become UNK; relation words must be in the vocab.
    """
    relation_ids = []
    for word in verbalize(schema):
        if word not in vocab:
            raise VocabError(f"relation word {word!r} missing from vocabulary")
        relation_ids.append(vocab.id_of(word))
    sentence_ids = [vocab.id_of(tok) for tok in tokens]
    return EncodedInput(tuple(sentence_ids + relation_ids), len(sentence_ids),
                        len(relation_ids))


def save_vocab(vocab: Vocab, path) -> None:
    """Newline-delimited tokens; the line number is the id."""
    Path(path).write_text("\n".join(vocab.tokens) + "\n", encoding="utf-8")


def load_vocab(path) -> Vocab:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return Vocab(tuple(lines))
