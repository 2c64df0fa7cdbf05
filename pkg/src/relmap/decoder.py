"""Deterministic decoding of thresholded interaction maps into triples.

Per relation, subjects come from its column and objects from its row; a
candidate pair survives only if an entity-entity cell links it. Entity-entity
checks accept either orientation, since predictions need not be symmetric.
The relation-relation quadrant is never read.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .dataset import AnnotatedSentence, EntitySpan, Triple


def _as_cells(cells, n: int, m: int) -> np.ndarray:
    arr = np.asarray(cells, dtype=bool)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"interaction cells must be square, got {arr.shape}")
    if arr.shape[0] != n + m:
        raise ValueError(f"cells of size {arr.shape[0]} do not match N+M = {n + m}")
    return arr


def _ee(cells: np.ndarray, a: int, b: int) -> bool:
    return bool(cells[a, b] or cells[b, a])


def decode_single(cells, n: int, m: int) -> set[Triple]:
    """Anchor-level triples from one map.

    Subject/object candidate sets are read per relation, then every pair with
    an entity-entity link is emitted; overlapping triples fall out naturally.
    """
    arr = _as_cells(cells, n, m)
    out: set[Triple] = set()
    for r in range(m):
        subjects = np.flatnonzero(arr[:n, n + r])
        objects = np.flatnonzero(arr[n + r, :n])
        for i in subjects:
            for j in objects:
                if _ee(arr, i, j):
                    out.add(Triple(EntitySpan.single(int(i)), r, EntitySpan.single(int(j))))
    return out


def oracle_decode_single(cells, n: int, m: int) -> set[Triple]:
    """Exhaustive check of every (subject, relation, object) anchor candidate."""
    arr = _as_cells(cells, n, m)
    out: set[Triple] = set()
    for r in range(m):
        for i in range(n):
            for j in range(n):
                if arr[i, n + r] and arr[n + r, j] and _ee(arr, i, j):
                    out.add(Triple(EntitySpan.single(i), r, EntitySpan.single(j)))
    return out


def decode_multi(cells_head, cells_tail, cells_cross, n: int, m: int) -> set[Triple]:
    """Full-span triples from the head, tail and head-to-tail maps.

    A span quadruple is emitted when all four entity-relation cells fire in
    their own maps and the three entity-entity checks agree: heads linked in
    the head map, tails in the tail map, subject-head to object-tail in the
    cross map. No uniqueness of spans is assumed.
    """
    head = _as_cells(cells_head, n, m)
    tail = _as_cells(cells_tail, n, m)
    cross = _as_cells(cells_cross, n, m)
    out: set[Triple] = set()
    for r in range(m):
        col = n + r
        subj_heads = np.flatnonzero(head[:n, col])
        obj_heads = np.flatnonzero(head[col, :n])
        subj_tails = np.flatnonzero(tail[:n, col])
        obj_tails = np.flatnonzero(tail[col, :n])
        for sh in subj_heads:
            for st in subj_tails:
                if st < sh:
                    continue
                for oh in obj_heads:
                    if not _ee(head, sh, oh):
                        continue
                    for ot in obj_tails:
                        if ot < oh:
                            continue
                        if _ee(tail, st, ot) and _ee(cross, sh, ot):
                            out.add(Triple(EntitySpan(int(sh), int(st)), r,
                                           EntitySpan(int(oh), int(ot))))
    return out


def oracle_decode_multi(cells_head, cells_tail, cells_cross, n: int, m: int) -> set[Triple]:
    """Exhaustive enumeration of all span quadruples per relation."""
    head = _as_cells(cells_head, n, m)
    tail = _as_cells(cells_tail, n, m)
    cross = _as_cells(cells_cross, n, m)
    out: set[Triple] = set()
    for r in range(m):
        col = n + r
        for sh in range(n):
            for st in range(sh, n):
                for oh in range(n):
                    for ot in range(oh, n):
                        if (head[sh, col] and head[col, oh]
                                and tail[st, col] and tail[col, ot]
                                and _ee(head, sh, oh) and _ee(tail, st, ot)
                                and _ee(cross, sh, ot)):
                            out.add(Triple(EntitySpan(sh, st), r, EntitySpan(oh, ot)))
    return out


def _gold_ee_pairs(triples: Iterable[Triple], anchor) -> set[tuple[int, int]]:
    pairs = set()
    for t in triples:
        a, b = anchor(t)
        pairs.add((a, b))
        pairs.add((b, a))
    return pairs


def ee_collision_free_single(triples: Sequence[Triple]) -> bool:
    """True when no entity-entity edge licenses a non-gold candidate.

    Works on anchor triples: enumerates every subject/object combination a
    decoder would consider and checks it against the gold set directly.
    """
    gold = {(t.subject.head, t.relation_id, t.object.head) for t in triples}
    ee = _gold_ee_pairs(triples, lambda t: (t.subject.head, t.object.head))
    by_rel: dict[int, tuple[set[int], set[int]]] = {}
    for t in triples:
        subs, objs = by_rel.setdefault(t.relation_id, (set(), set()))
        subs.add(t.subject.head)
        objs.add(t.object.head)
    for r, (subs, objs) in by_rel.items():
        for a in subs:
            for b in objs:
                if (a, b) in ee and (a, r, b) not in gold:
                    return False
    return True


def ee_collision_free_multi(triples: Sequence[Triple]) -> bool:
    """Span-level analog over the three gold maps' checks."""
    gold = {(t.subject, t.relation_id, t.object) for t in triples}
    ee_head = _gold_ee_pairs(triples, lambda t: (t.subject.head, t.object.head))
    ee_tail = _gold_ee_pairs(triples, lambda t: (t.subject.tail, t.object.tail))
    ee_cross = _gold_ee_pairs(triples, lambda t: (t.subject.head, t.object.tail))
    by_rel: dict[int, tuple[set[int], set[int], set[int], set[int]]] = {}
    for t in triples:
        sh, oh, st, ot = by_rel.setdefault(t.relation_id, (set(), set(), set(), set()))
        sh.add(t.subject.head)
        oh.add(t.object.head)
        st.add(t.subject.tail)
        ot.add(t.object.tail)
    for r, (subj_heads, obj_heads, subj_tails, obj_tails) in by_rel.items():
        for sh in subj_heads:
            for st in subj_tails:
                if st < sh:
                    continue
                for oh in obj_heads:
                    for ot in obj_tails:
                        if ot < oh:
                            continue
                        if ((sh, oh) in ee_head and (st, ot) in ee_tail
                                and (sh, ot) in ee_cross
                                and (EntitySpan(sh, st), r, EntitySpan(oh, ot)) not in gold):
                            return False
    return True


def triples_to_json(sentence: AnnotatedSentence, triples: Iterable[Triple],
                    relation_labels: Sequence[str]) -> dict:
    """Prediction record mirroring the ingestion format, with span indices."""
    triple_list = []
    spans = []
    for t in sorted(triples, key=lambda t: (t.relation_id, t.subject.head, t.object.head,
                                            t.subject.tail, t.object.tail)):
        subj = " ".join(sentence.tokens[t.subject.head:t.subject.tail + 1])
        obj = " ".join(sentence.tokens[t.object.head:t.object.tail + 1])
        triple_list.append([subj, relation_labels[t.relation_id], obj])
        spans.append([[t.subject.head, t.subject.tail], [t.object.head, t.object.tail]])
    return {"text": sentence.text, "triple_list": triple_list, "spans": spans}
