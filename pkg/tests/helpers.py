"""Shared test utilities: finite-difference oracle and small fixtures."""

from __future__ import annotations

import numpy as np

from relmap.dataset import AnnotatedSentence, EntitySpan, RelationSchema, Triple
from relmap.tensor import Tensor

FD_STEP = 1e-5


def central_fd(f, x: np.ndarray, index: tuple, h: float = FD_STEP) -> float:
    """Central finite difference of a scalar function at one array entry."""
    orig = x[index]
    x[index] = orig + h
    up = f()
    x[index] = orig - h
    down = f()
    x[index] = orig
    return (up - down) / (2.0 * h)


def rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)


def check_grad(build, inputs: list[Tensor], rng: np.random.Generator,
               samples: int = 6, tol: float = 1e-4) -> None:
    """Compare analytic gradients of a scalar graph against central FD.

    ``build`` maps nothing to a scalar Tensor and must re-read the inputs'
    data on every call so FD perturbations take effect.
    """
    loss = build()
    loss.backward()
    for t in inputs:
        assert t.grad is not None, "input did not receive a gradient"
        flat = [tuple(idx) for idx in np.ndindex(*t.data.shape)] or [()]
        chosen = [flat[i] for i in rng.choice(len(flat), size=min(samples, len(flat)),
                                              replace=False)]
        for index in chosen:
            numeric = central_fd(lambda: build().item(), t.data, index)
            analytic = float(t.grad[index])
            assert rel_err(analytic, numeric) < tol, (
                f"gradient mismatch at {index}: analytic {analytic}, fd {numeric}")


def four_triple_example() -> tuple[AnnotatedSentence, RelationSchema]:
    """The running four-triple example over five tokens and three relations."""
    schema = RelationSchema((("lives_in", "lives"), ("contains", "contains"),
                             ("is_capital_of", "capital")))
    tokens = ("Holmes", "lodges", "in", "London", "UK")
    holmes, london, uk = 0, 3, 4
    triples = (
        Triple(EntitySpan.single(holmes), 0, EntitySpan.single(london)),
        Triple(EntitySpan.single(holmes), 0, EntitySpan.single(uk)),
        Triple(EntitySpan.single(uk), 1, EntitySpan.single(london)),
        Triple(EntitySpan.single(london), 2, EntitySpan.single(uk)),
    )
    return AnnotatedSentence(" ".join(tokens), tokens, triples), schema


def six_triple_example() -> tuple[AnnotatedSentence, RelationSchema]:
    """Six overlapping triples over geographic entities, one a two-way pair."""
    schema = RelationSchema((("country", "country"),
                             ("administrative_divisions", "divisions"),
                             ("contains", "contains")))
    tokens = ("Jinghong", "sits", "in", "Yunnan", "China", "near", "Thailand",
              "and", "Chiang", "Mai")
    jinghong, yunnan, china, thailand, chiang = 0, 3, 4, 6, 8
    triples = (
        Triple(EntitySpan.single(yunnan), 0, EntitySpan.single(china)),
        Triple(EntitySpan.single(china), 1, EntitySpan.single(yunnan)),
        Triple(EntitySpan.single(thailand), 2, EntitySpan.single(chiang)),
        Triple(EntitySpan.single(yunnan), 2, EntitySpan.single(jinghong)),
        Triple(EntitySpan.single(china), 2, EntitySpan.single(jinghong)),
        Triple(EntitySpan.single(china), 2, EntitySpan.single(yunnan)),
    )
    return AnnotatedSentence(" ".join(tokens), tokens, triples), schema
