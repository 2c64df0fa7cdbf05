"""Interaction map head: score all token/relation pairs in one matrix.

The head averages per-head query/key dot products from the last full layer's
output and squashes them with a sigmoid; no softmax, no value mixing. The
whole prediction space is a single (N+M) x (N+M) matrix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import tensor as T
from .dataset import GoldMap
from .encoder import EncoderState, ModelParams
from .tensor import Tensor, observe_allocations

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class InteractionMap:
    """Cell probabilities plus the decision threshold."""
    probs: np.ndarray
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.probs.ndim != 2 or self.probs.shape[0] != self.probs.shape[1]:
            raise ValueError(f"interaction map must be square, got {self.probs.shape}")

    @property
    def size(self) -> int:
        return self.probs.shape[0]


def score_map(state: EncoderState, params: ModelParams) -> Tensor:
    """Pairwise logits: mean over heads of Q_t K_t^T / sqrt(d_head).

    The per-head sum collapses into one product of the column-concatenated
    projections, so the scoring path materializes exactly one square matrix.
    """
    h = state.final
    cfg = params.config
    queries = [T.matmul(h, params[f"score.head{t}.wq"]) for t in range(cfg.heads)]
    keys = [T.matmul(h, params[f"score.head{t}.wk"]) for t in range(cfg.heads)]
    q_cat = T.concat_cols(queries)
    k_cat = T.concat_cols(keys)
    q_cat = T.scale(q_cat, 1.0 / (cfg.heads * math.sqrt(cfg.d_head)))
    return T.matmul(q_cat, T.transpose(k_cat))


def audit_score_allocations():
    """Context manager recording every array shape the scoring path allocates."""
    return observe_allocations()


def to_probs(logits: Tensor, threshold: float = DEFAULT_THRESHOLD) -> InteractionMap:
    return InteractionMap(expit(logits.data), threshold)


def predict_cells(imap: InteractionMap) -> np.ndarray:
    """A cell is predicted true only when its probability exceeds the threshold."""
    return imap.probs > imap.threshold


def map_loss(logits: Tensor, gold: GoldMap) -> Tensor:
    """Mean binary cross entropy over all (N+M)^2 cells."""
    if logits.shape != gold.cells.shape:
        raise ValueError(f"logits shape {logits.shape} does not match gold map "
                         f"shape {gold.cells.shape}")
    return T.bce_with_logits(logits, gold.cells.astype(logits.dtype))


def map_to_csv(imap: InteractionMap, labels: list[str], path) -> None:
    """Probabilities with a header row/column of token and relation strings."""
    if len(labels) != imap.size:
        raise ValueError(f"{len(labels)} labels for a map of size {imap.size}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", *labels])
        for label, row in zip(labels, imap.probs):
            writer.writerow([label, *(f"{p:.6f}" for p in row)])


def map_to_pgm(imap: InteractionMap, path) -> None:
    """8-bit grayscale PGM; pixel value = round(prob * 255)."""
    pixels = np.rint(imap.probs * 255.0).astype(np.uint8)
    header = f"P5\n{imap.size} {imap.size}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())


def load_pgm(path) -> np.ndarray:
    """Read back a P5 map export (used by inspection tooling and tests)."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM file")
    width, height = (int(v) for v in parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8, count=width * height)
    return data.reshape(height, width)
