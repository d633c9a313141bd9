"""Exact-match acceptance of a draft tree against the target's distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .draft_tree import ROOT, DraftTree
from .errors import ContractViolationError
from .target import Distribution, NodeDistributions


@dataclass(frozen=True)
class VerifyOutcome:
    accepted: tuple[int, ...]
    bonus: int
    leaf_depth: int

    @property
    def accept_length(self) -> int:
        return len(self.accepted) + 1

    @property
    def tokens(self) -> tuple[int, ...]:
        return self.accepted + (self.bonus,)


def _walk(tree: DraftTree, dists: NodeDistributions, pick: Callable[[Distribution], int]) -> VerifyOutcome:
    if len(dists.nodes) != len(tree):
        raise ContractViolationError(f"{len(dists.nodes)} distributions for a tree of {len(tree)} nodes")
    accepted = []
    pos = ROOT
    dist = dists.head
    children = tree._children
    while True:
        g = pick(dist)
        nxt = children[pos + 1].get(g) if children else None
        if nxt is None:
            return VerifyOutcome(tuple(accepted), g, len(accepted))
        accepted.append(g)
        pos = nxt
        dist = dists.nodes[pos]


def verify_greedy(tree: DraftTree, dists: NodeDistributions) -> VerifyOutcome:
    """Accept draft tokens while they equal the target argmax (ties to the lowest id)."""
    return _walk(tree, dists, Distribution.argmax)


def verify_sampled(
    tree: DraftTree,
    dists: NodeDistributions,
    temperature: float,
    top_p: float,
    rng: np.random.Generator,
) -> VerifyOutcome:
    """Accept draft tokens while they equal a token sampled from the shaped target distribution."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if not 0 < top_p <= 1:
        raise ValueError("top_p must lie in (0, 1]")

    def pick(dist: Distribution) -> int:
        shaped = dist.shaped(temperature, top_p)
        if len(shaped) == 1:
            return shaped.tokens[0]
        u = rng.random()
        acc = 0.0
        for tok, p in zip(shaped.tokens, shaped.probs):
            acc += p
            if u < acc:
                return tok
        return shaped.tokens[-1]

    return _walk(tree, dists, pick)
