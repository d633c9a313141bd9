"""Prefix-shared draft trees flattened into a pseudo-sequence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROOT = -1


@dataclass(frozen=True)
class DraftTree:
    """Flattened trie of draft candidates.

    ``tokens[j]`` hangs below ``parents[j]`` (``-1`` is the context root) and
    nodes are laid out breadth-first, so every parent precedes its children.
    ``leaves[i]`` is the node that ends candidate ``i``.
    """

    tokens: tuple[int, ...] = ()
    parents: tuple[int, ...] = ()
    leaves: tuple[int, ...] = ()
    depths: tuple[int, ...] = ()
    _children: tuple[dict[int, int], ...] = field(default=(), repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def max_depth(self) -> int:
        return max(self.depths, default=0)

    def children_of(self, index: int) -> dict[int, int]:
        """Map token -> node index below ``index`` (``-1`` for the root)."""
        return self._children[index + 1]

    def path(self, index: int) -> tuple[int, ...]:
        out = []
        while index != ROOT:
            out.append(self.tokens[index])
            index = self.parents[index]
        return tuple(reversed(out))

    def leaf_paths(self) -> list[tuple[int, ...]]:
        return [self.path(i) for i in self.leaves]

    @property
    def mask(self) -> np.ndarray:
        return mask_of(self)


def build_tree(candidates: Iterable[Sequence[int]]) -> DraftTree:
    """Merge candidates so each shared prefix appears once.

    Accepts raw token sequences or objects with a ``tokens`` attribute.
    Nodes are ordered by depth, then by the rank of the first candidate
    that introduced them.
    """
    paths = [tuple(getattr(c, "tokens", c)) for c in candidates]
    paths = [p for p in paths if p]
    if not paths:
        return DraftTree(_children=({},))

    # prefix -> rank of the first candidate reaching it
    first_seen: dict[tuple[int, ...], int] = {}
    for rank, p in enumerate(paths):
        for d in range(1, len(p) + 1):
            first_seen.setdefault(p[:d], rank)
    order = sorted(first_seen, key=lambda pre: (len(pre), first_seen[pre]))
    index = {pre: i for i, pre in enumerate(order)}

    tokens = tuple(pre[-1] for pre in order)
    parents = tuple(index[pre[:-1]] if len(pre) > 1 else ROOT for pre in order)
    depths = tuple(len(pre) for pre in order)
    children: list[dict[int, int]] = [{} for _ in range(len(order) + 1)]
    for i, (tok, par) in enumerate(zip(tokens, parents)):
        children[par + 1][tok] = i
    leaves = tuple(index[p] for p in paths)
    return DraftTree(tokens, parents, leaves, depths, tuple(children))


def mask_of(tree: DraftTree) -> np.ndarray:
    """Reflexive ancestor mask: ``mask[j, k]`` iff ``k`` lies on the root-to-``j`` path."""
    n = len(tree)
    mask = np.zeros((n, n), dtype=bool)
    for j, par in enumerate(tree.parents):
        if par != ROOT:
            mask[j] = mask[par]
        mask[j, j] = True
    return mask


def tree_from_parents(tokens: Sequence[int], parents: Sequence[int]) -> DraftTree:
    """Rebuild a tree from its wire form (flat tokens plus parent indices)."""
    if len(tokens) != len(parents):
        raise ValueError("tokens and parents differ in length")
    depths = []
    children: list[dict[int, int]] = [{} for _ in range(len(tokens) + 1)]
    for j, (tok, par) in enumerate(zip(tokens, parents)):
        if not ROOT <= par < j:
            raise ValueError(f"node {j} has parent {par}; parents must precede children")
        if tok in children[par + 1]:
            raise ValueError(f"duplicate sibling token {tok} under node {par}")
        children[par + 1][tok] = j
        depths.append(1 if par == ROOT else depths[par] + 1)
    has_child = {p for p in parents}
    leaves = tuple(j for j in range(len(tokens)) if j not in has_child)
    return DraftTree(tuple(int(t) for t in tokens), tuple(int(p) for p in parents), leaves, tuple(depths), tuple(children))
