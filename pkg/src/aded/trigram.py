"""The tri-gram matrix that stands in for the target model's next-token distribution.

Weights are stored rather than probabilities. A context's conditional
distribution is always ``weight / total`` over its retained continuations,
so every mutation keeps each context normalized by construction.
"""

from __future__ import annotations

import bisect
import math
from collections import ChainMap
from dataclasses import dataclass
from typing import Iterable, Mapping, MutableMapping, Sequence

from .corpus import TrigramCounts

DEFAULT_RETENTION = 64

# rescale a context's weights by a power of two once its total leaves this band;
# power-of-two scaling leaves every share bit-identical
_SCALE_HI = 2.0**256
_SCALE_LO = 2.0**-256


class ContinuationTable:
    """Immutable continuation list sorted by descending weight, ties by ascending token."""

    __slots__ = ("tokens", "weights", "total", "probs", "cumulative", "_index")

    def __init__(self, items: Iterable[tuple[int, float]], retention: int | None = DEFAULT_RETENTION):
        ordered = sorted(((int(t), float(w)) for t, w in items if w > 0), key=lambda e: (-e[1], e[0]))
        if retention is not None:
            del ordered[retention:]
        if not ordered:
            raise ValueError("continuation table needs at least one positive-weight entry")
        self.tokens: tuple[int, ...] = tuple(t for t, _ in ordered)
        self.weights: tuple[float, ...] = tuple(w for _, w in ordered)
        self.total = math.fsum(self.weights)
        self.probs: tuple[float, ...] = tuple(w / self.total for w in self.weights)
        acc, cum = 0.0, []
        for p in self.probs:
            acc += p
            cum.append(acc)
        cum[-1] = 1.0
        self.cumulative: tuple[float, ...] = tuple(cum)
        self._index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ContinuationTable):
            return NotImplemented
        return self.tokens == other.tokens and self.weights == other.weights

    def __repr__(self) -> str:
        body = ", ".join(f"{t}:{w:g}" for t, w in zip(self.tokens, self.weights))
        return f"ContinuationTable({body})"

    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.tokens, self.weights))

    def weight(self, token: int) -> float:
        i = self._index.get(token)
        return 0.0 if i is None else self.weights[i]

    def prob(self, token: int) -> float:
        i = self._index.get(token)
        return 0.0 if i is None else self.probs[i]

    def argmax(self) -> int:
        return self.tokens[0]

    def sample(self, u: float) -> int:
        """Inverse-CDF draw for ``u`` in [0, 1)."""
        return self.tokens[min(bisect.bisect_right(self.cumulative, u), len(self.tokens) - 1)]

    def distribution(self) -> dict[int, float]:
        return dict(zip(self.tokens, self.probs))


@dataclass(frozen=True)
class AdjustPolicy:
    increment: float = 0.05
    max_prob: float = 0.95
    max_length: int = 64

    def __post_init__(self):
        if not 0 < self.max_prob <= 1:
            raise ValueError("max_prob must lie in (0, 1]")
        if not 0 < self.increment <= self.max_prob:
            raise ValueError("increment must be positive and no larger than max_prob")
        if self.max_length < 1:
            raise ValueError("max_length must be positive")


class TrigramMatrix:
    """Pruned map from a two-token context to a weighted continuation table.

    ``bigrams`` and ``unigrams`` are the static backoff levels consulted by
    :meth:`lookup` when a context is unknown; ``conditional`` never backs off.
    """

    def __init__(
        self,
        vocab_size: int,
        threshold: int = 1,
        retention: int = DEFAULT_RETENTION,
        contexts: MutableMapping[tuple[int, int], ContinuationTable] | None = None,
        bigrams: Mapping[int, ContinuationTable] | None = None,
        unigrams: ContinuationTable | None = None,
    ):
        self.vocab_size = int(vocab_size)
        self.threshold = threshold
        self.retention = retention
        self.contexts: MutableMapping[tuple[int, int], ContinuationTable] = {} if contexts is None else contexts
        self.bigrams: Mapping[int, ContinuationTable] = {} if bigrams is None else bigrams
        self.unigrams = unigrams

    def __len__(self) -> int:
        return len(self.contexts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigramMatrix):
            return NotImplemented
        return (
            self.vocab_size == other.vocab_size
            and dict(self.contexts) == dict(other.contexts)
            and dict(self.bigrams) == dict(other.bigrams)
            and self.unigrams == other.unigrams
        )

    @property
    def has_backoff(self) -> bool:
        return bool(self.bigrams) or self.unigrams is not None

    @property
    def entry_count(self) -> int:
        return sum(len(t) for t in self.contexts.values())

    def table(self, context: tuple[int, int]) -> ContinuationTable | None:
        return self.contexts.get(context)

    def conditional(self, context: tuple[int, int]) -> dict[int, float]:
        table = self.contexts.get(tuple(context))
        return {} if table is None else table.distribution()

    def lookup(self, prev: int, cur: int) -> ContinuationTable | None:
        """Continuations for ``(prev, cur)`` with bi-gram then unigram backoff."""
        table = self.contexts.get((prev, cur))
        if table is not None:
            return table
        table = self.bigrams.get(cur)
        if table is not None:
            return table
        return self.unigrams

    def fork(self) -> "TrigramMatrix":
        """Copy-on-write view: adjustments land in a private layer, the base stays untouched."""
        return TrigramMatrix(
            self.vocab_size,
            self.threshold,
            self.retention,
            contexts=ChainMap({}, self.contexts),
            bigrams=self.bigrams,
            unigrams=self.unigrams,
        )

    def adjust_from_recent(self, tokens: Sequence[int], policy: AdjustPolicy = AdjustPolicy()) -> "TrigramMatrix":
        start = max(0, len(tokens) - policy.max_length)
        window = tokens[start:]
        for i in range(2, len(window)):
            self._reinforce((window[i - 2], window[i - 1]), window[i], policy)
        return self

    def _reinforce(self, ctx: tuple[int, int], token: int, policy: AdjustPolicy) -> None:
        table = self.contexts.get(ctx)
        if table is None:
            self.contexts[ctx] = ContinuationTable([(token, 1.0)], self.retention)
            return
        current = table.weight(token)
        rest = table.total - current
        if rest <= 0.0:
            # sole continuation: its share is already 1
            return
        if current > 0.0:
            target = min(current / table.total + policy.increment, policy.max_prob)
        else:
            target = min(policy.increment, policy.max_prob)
        if target >= 1.0:
            self.contexts[ctx] = ContinuationTable([(token, current or 1.0)], self.retention)
            return
        weights = {t: w for t, w in table.items()}
        weights[token] = target * rest / (1.0 - target)
        weights = _cap_shares(weights, policy.max_prob)
        total = math.fsum(weights.values())
        if total > _SCALE_HI or total < _SCALE_LO:
            shift = -math.frexp(total)[1]
            weights = {t: math.ldexp(w, shift) for t, w in weights.items()}
        self.contexts[ctx] = ContinuationTable(weights.items(), self.retention)


def _cap_shares(weights: dict[int, float], cap: float) -> dict[int, float]:
    """Water-fill so no share exceeds ``cap``; uniform when the cap is infeasible."""
    total = math.fsum(weights.values())
    k = len(weights)
    if k * cap < 1.0:
        return {t: total / k for t in weights}
    if max(weights.values()) <= cap * total:
        return weights
    capped: set[int] = set()
    while True:
        free = {t: w for t, w in weights.items() if t not in capped}
        free_mass = 1.0 - cap * len(capped)
        free_total = math.fsum(free.values())
        over = {t for t, w in free.items() if w / free_total * free_mass > cap}
        if not over:
            break
        capped |= over
    out = {t: cap * total for t in capped}
    for t, w in free.items():
        out[t] = w / free_total * free_mass * total
    return out


def _prune(counter: Mapping[int, int], t: int, retention: int) -> ContinuationTable | None:
    kept = [(tok, c) for tok, c in counter.items() if c >= t]
    return ContinuationTable(kept, retention) if kept else None


def finalize_matrix(
    counts: TrigramCounts,
    t: int = 1,
    vocab_size: int | None = None,
    retention: int = DEFAULT_RETENTION,
    backoff: bool = True,
) -> TrigramMatrix:
    """Drop every n-gram seen fewer than ``t`` times and freeze raw counts as weights."""
    if t < 1:
        raise ValueError("threshold must be >= 1")
    contexts = {}
    for ctx, table in counts.trigrams.items():
        pruned = _prune(table, t, retention)
        if pruned is not None:
            contexts[ctx] = pruned
    bigrams, unigrams = {}, None
    if backoff:
        for prev, table in counts.bigrams.items():
            pruned = _prune(table, t, retention)
            if pruned is not None:
                bigrams[prev] = pruned
        unigrams = _prune(counts.unigrams, t, retention)
    if vocab_size is None:
        vocab_size = max(counts.unigrams, default=-1) + 1
    return TrigramMatrix(vocab_size, t, retention, contexts, bigrams, unigrams)


def conditional(matrix: TrigramMatrix, context: tuple[int, int]) -> dict[int, float]:
    return matrix.conditional(context)


def adjust_from_recent(matrix: TrigramMatrix, tokens: Sequence[int], policy: AdjustPolicy = AdjustPolicy()) -> TrigramMatrix:
    return matrix.adjust_from_recent(tokens, policy)
