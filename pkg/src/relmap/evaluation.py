"""Exact-match micro metrics, pattern/count breakdowns, timing bench."""

from __future__ import annotations

import copy
import statistics
import time
from dataclasses import dataclass
from typing import Sequence

from .dataset import (AnnotatedSentence, OVERLAP_PATTERNS, TRIPLE_COUNT_BUCKETS,
                      Triple, bucket_by_count, classify_overlap)


@dataclass(frozen=True)
class PRF:
    correct: int
    predicted: int
    gold: int

    @property
    def precision(self) -> float:
        return self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


def micro_prf(predicted: Sequence[set[Triple]], gold: Sequence[set[Triple]]) -> PRF:
    """Micro-aggregated exact-match counts over aligned sentences.

    A predicted triple is correct only when relation and both spans match a
    gold triple of the same sentence; with zero predictions precision is 0.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"predicted {len(predicted)} sentences vs gold {len(gold)}")
    correct = sum(len(p & g) for p, g in zip(predicted, gold))
    return PRF(correct, sum(len(p) for p in predicted), sum(len(g) for g in gold))


@dataclass(frozen=True)
class GroupMetrics:
    label: str
    sentences: int
    prf: PRF

    @property
    def applicable(self) -> bool:
        """A group with no gold and no predicted triples has no defined score."""
        return self.prf.gold > 0 or self.prf.predicted > 0


@dataclass(frozen=True)
class EvalReport:
    overall: PRF
    patterns: tuple[GroupMetrics, ...]
    buckets: tuple[GroupMetrics, ...]


def breakdown(predicted: Sequence[set[Triple]], gold: Sequence[set[Triple]],
              sentences: Sequence[AnnotatedSentence]) -> EvalReport:
    """Micro metrics per overlap pattern and per triple-count bucket."""
    if not len(predicted) == len(gold) == len(sentences):
        raise ValueError("predicted, gold and sentences must align")
    overall = micro_prf(predicted, gold)

    def group(labels: Sequence[str], label_of) -> tuple[GroupMetrics, ...]:
        by_label: dict[str, list[int]] = {lab: [] for lab in labels}
        for i, sent in enumerate(sentences):
            by_label[label_of(sent)].append(i)
        out = []
        for lab in labels:
            idx = by_label[lab]
            prf = micro_prf([predicted[i] for i in idx], [gold[i] for i in idx])
            out.append(GroupMetrics(lab, len(idx), prf))
        return tuple(out)

    return EvalReport(overall,
                      group(OVERLAP_PATTERNS, classify_overlap),
                      group(TRIPLE_COUNT_BUCKETS, bucket_by_count))


def _metric_cells(g: GroupMetrics) -> tuple[str, str, str]:
    if not g.applicable:
        return ("n/a", "n/a", "n/a")
    return (f"{g.prf.precision:.4f}", f"{g.prf.recall:.4f}", f"{g.prf.f1:.4f}")


def render_report(report: EvalReport) -> str:
    rows = [("group", "sentences", "prec", "rec", "f1")]
    o = report.overall
    rows.append(("overall", str(sum(g.sentences for g in report.patterns)),
                 f"{o.precision:.4f}", f"{o.recall:.4f}", f"{o.f1:.4f}"))
    for g in report.patterns:
        rows.append((g.label, str(g.sentences), *_metric_cells(g)))
    for g in report.buckets:
        rows.append((f"L={g.label}", str(g.sentences), *_metric_cells(g)))
    widths = [max(len(r[c]) for r in rows) for c in range(5)]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                     for row in rows)


def report_json(report: EvalReport) -> dict:
    def entry(g: GroupMetrics) -> dict:
        base = {"sentences": g.sentences, "correct": g.prf.correct,
                "predicted": g.prf.predicted, "gold": g.prf.gold}
        if g.applicable:
            base.update(precision=g.prf.precision, recall=g.prf.recall, f1=g.prf.f1)
        else:
            base.update(precision=None, recall=None, f1=None)
        return base

    o = report.overall
    return {
        "overall": {"precision": o.precision, "recall": o.recall, "f1": o.f1,
                    "correct": o.correct, "predicted": o.predicted, "gold": o.gold},
        "patterns": {g.label: entry(g) for g in report.patterns},
        "buckets": {g.label: entry(g) for g in report.buckets},
    }


@dataclass(frozen=True)
class BenchResult:
    mode: str
    value: float
    unit: str
    runs: tuple[float, ...]


def bench(params, examples, mode: str, *, train_config=None, repeats: int = 3,
          threshold: float = 0.5) -> BenchResult:
    """Median wall-clock timing: seconds per training epoch, or milliseconds
    per predicted sample at batch size one."""
    from . import trainer as _trainer  # local import; trainer logs dev F1 via this module

    if not examples:
        raise ValueError(f"bench mode {mode!r} needs a nonempty dataset")
    if repeats < 3:
        raise ValueError("bench needs at least 3 runs for a stable median")
    runs: list[float] = []
    if mode == "train_epoch":
        cfg = train_config or _trainer.TrainConfig(epochs=1)
        for _ in range(repeats):
            scratch = copy.deepcopy(params)
            one_epoch = _trainer.TrainConfig(**{**cfg.__dict__, "epochs": 1, "eval_every": 0})
            start = time.perf_counter()
            _trainer.train(scratch, examples, one_epoch)
            runs.append(time.perf_counter() - start)
        return BenchResult(mode, statistics.median(runs), "s/epoch", tuple(runs))
    if mode == "inference":
        for _ in range(repeats):
            start = time.perf_counter()
            for ex in examples:
                _trainer.predict_triples(params, ex.encoded, threshold)
            runs.append((time.perf_counter() - start) / len(examples) * 1000.0)
        return BenchResult(mode, statistics.median(runs), "ms/sample", tuple(runs))
    raise ValueError(f"unknown bench mode: {mode!r}")
