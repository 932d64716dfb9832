"""Softmax selection over node scores."""

from __future__ import annotations

from typing import Sequence

import numpy as np


class EmptyTree(LookupError):
    pass


def softmax(values: Sequence[float]) -> np.ndarray:
    f = np.asarray(values, dtype=np.float64)
    if f.size == 0:
        raise EmptyTree("no values")
    e = np.exp(f - f.max())
    return e / e.sum()


def sample_index(values: Sequence[float], rng: np.random.Generator) -> int:
    p = softmax(values)
    return int(rng.choice(len(p), p=p))
