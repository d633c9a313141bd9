"""Seeded second-order Markov sources for desk-scale benchmarks."""

from __future__ import annotations

from typing import Sequence

import numpy as np


class SyntheticLanguage:
    """Every context ``(a, b)`` owns ``len(weights)`` distinct successors.

    Successor sets depend only on ``(seed, a, b)``, so two languages built
    with the same seed and vocabulary share their support. ``rotate`` shifts
    which successor receives which weight, which moves the argmax while
    leaving the support alone.
    """

    def __init__(self, vocab_size: int = 40, weights: Sequence[float] = (0.6, 0.3, 0.1), seed: int = 0, rotate: int = 0):
        if len(weights) > vocab_size:
            raise ValueError("more successors than vocabulary entries")
        w = np.asarray(weights, dtype=float)
        self.vocab_size = vocab_size
        self.weights = np.roll(w / w.sum(), rotate)
        self.seed = seed
        self.rotate = rotate
        self._succ: dict[tuple[int, int], np.ndarray] = {}

    def successors(self, a: int, b: int) -> np.ndarray:
        succ = self._succ.get((a, b))
        if succ is None:
            rng = np.random.default_rng([self.seed, a, b])
            succ = self._succ[(a, b)] = rng.choice(self.vocab_size, size=len(self.weights), replace=False)
        return succ

    def distribution(self, a: int, b: int) -> dict[int, float]:
        return {int(t): float(p) for t, p in zip(self.successors(a, b), self.weights)}

    def sample(self, length: int, rng: np.random.Generator, start: Sequence[int] | None = None) -> list[int]:
        seq = list(start) if start is not None else [int(t) for t in rng.integers(self.vocab_size, size=2)]
        cum = np.cumsum(self.weights)
        while len(seq) < length:
            succ = self.successors(seq[-2], seq[-1])
            seq.append(int(succ[min(int(np.searchsorted(cum, rng.random(), side="right")), len(succ) - 1)]))
        return seq[:length]

    def corpus(self, documents: int, length: int, seed: int = 0) -> list[list[int]]:
        rng = np.random.default_rng(seed)
        return [self.sample(length, rng) for _ in range(documents)]


def chain_corpus(length: int, vocab_size: int | None = None) -> list[int]:
    """Deterministic cycle ``0, 1, ..., V-1, 0, 1, ...``: every context has one successor."""
    v = vocab_size or length
    return [i % v for i in range(length)]
