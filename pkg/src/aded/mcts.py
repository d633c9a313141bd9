"""PUCT-guided Monte Carlo Tree Search over tri-gram continuations.

Each decode step builds a fresh tree rooted at the last two emitted tokens.
An iteration runs selection, expansion, a sampled rollout up to the draft
depth, and backpropagation of the rollout score. The best root-to-node paths
become draft candidates.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .trigram import TrigramMatrix


class ScoreMode(str, Enum):
    PROBABILITY_SUM = "probability-sum"
    LOG_LIKELIHOOD = "log-likelihood"


class Ranking(str, Enum):
    SCORE = "score"
    VISITS = "visits"


class Selection(str, Enum):
    PUCT = "puct"
    PUCT_CLASSIC = "puct-classic"
    UCT = "uct"
    UCB = "ucb"


@dataclass(frozen=True)
class SearchConfig:
    iterations: int = 150
    c1: float = 32.0
    c2: float = 8.0
    depth: int = 4
    candidates: int = 24
    score_mode: ScoreMode = ScoreMode.LOG_LIKELIHOOD
    selection: Selection = Selection.PUCT
    ranking: Ranking = Ranking.SCORE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "score_mode", ScoreMode(self.score_mode))
        object.__setattr__(self, "selection", Selection(self.selection))
        object.__setattr__(self, "ranking", Ranking(self.ranking))
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.c2 <= 0:
            raise ValueError("c2 must be positive")
        if self.depth < 1 or self.candidates < 1:
            raise ValueError("depth and candidates must be positive")


class SearchNode:
    __slots__ = ("prev", "token", "prior", "visits", "score", "children", "expanded", "parent", "depth", "child_visits")

    def __init__(self, prev: int, token: int, prior: float = 1.0, parent: "SearchNode | None" = None, depth: int = 0):
        self.prev = prev
        self.token = token
        self.prior = prior
        self.visits = 0
        self.score = 0.0
        self.children: list[SearchNode] = []
        self.expanded = False
        self.parent = parent
        self.depth = depth
        # sum of the children's visit counts
        self.child_visits = 0

    def __repr__(self) -> str:
        return f"SearchNode(({self.prev}, {self.token}), P={self.prior:.4g}, N={self.visits}, W={self.score:.4g})"

    @property
    def q(self) -> float:
        return self.score / self.visits if self.visits else 0.0

    def path(self) -> tuple[int, ...]:
        out = []
        node = self
        while node.parent is not None:
            out.append(node.token)
            node = node.parent
        return tuple(reversed(out))


@dataclass(frozen=True)
class DraftCandidate:
    tokens: tuple[int, ...]
    score: float
    visits: int


def exploration_constant(total_visits: int, c1: float, c2: float) -> float:
    """``c1 + ln((total_visits + c2 + 1) / c2)``."""
    return c1 + math.log1p((total_visits + 1) / c2)


def puct_score(q: float, prior: float, visits: int, parent_visits: int, c1: float, c2: float) -> float:
    e = exploration_constant(parent_visits, c1, c2)
    return q + e * prior * math.sqrt(parent_visits) / (1 + visits)


def selection_score(node: SearchNode, cfg: SearchConfig) -> float:
    """Score ``node`` as a child of its parent under ``cfg.selection``."""
    parent_n = node.parent.child_visits if node.parent is not None else 0
    mode = cfg.selection
    if mode is Selection.PUCT:
        return puct_score(node.q, node.prior, node.visits, parent_n, cfg.c1, cfg.c2)
    if mode is Selection.PUCT_CLASSIC:
        log_n = math.log(parent_n) if parent_n > 1 else 0.0
        return node.q + cfg.c1 * node.prior * math.sqrt(log_n / (1 + node.visits))
    if node.visits == 0:
        return math.inf
    log_n = math.log(parent_n) if parent_n > 1 else 0.0
    if mode is Selection.UCT:
        return node.q + cfg.c1 * math.sqrt(log_n / node.visits)
    return node.q + math.sqrt(2.0 * log_n / node.visits)


def visit_distribution(node: SearchNode) -> dict[int, float]:
    """Smoothed visit-count policy ``(1 + n_a) / (|A| + sum_b n_b)`` over the children."""
    if not node.children:
        raise ValueError("node has no children")
    denom = len(node.children) + sum(c.visits for c in node.children)
    return {c.token: (1 + c.visits) / denom for c in node.children}


def _uniforms(seed: int, step: int, count: int) -> list[float]:
    key = np.array([seed % 2**64, step % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).random(count).tolist()


class DraftSearch:
    """One search tree over ``matrix``; ``root`` stays available for inspection."""

    def __init__(self, matrix: TrigramMatrix, cfg: SearchConfig = SearchConfig()):
        self.matrix = matrix
        self.cfg = cfg
        self.root: SearchNode | None = None

    def run(self, tail: Sequence[int], step: int = 0) -> list[DraftCandidate]:
        cfg = self.cfg
        prev, cur = tail
        root = self.root = SearchNode(prev, cur)
        lookup = self.matrix.lookup
        limit = cfg.depth
        log_mode = cfg.score_mode is ScoreMode.LOG_LIKELIHOOD
        puct = cfg.selection is Selection.PUCT
        c1, c2 = cfg.c1, cfg.c2
        u = _uniforms(cfg.seed, step, cfg.iterations * limit)
        ui = 0

        for _ in range(cfg.iterations):
            node = root
            # selection
            while node.expanded and node.children and node.depth < limit:
                if puct:
                    total = node.child_visits
                    e_sqrt = (c1 + math.log1p((total + 1) / c2)) * math.sqrt(total)
                    best, best_val = None, -math.inf
                    for child in node.children:
                        n = child.visits
                        val = (child.score / n if n else 0.0) + e_sqrt * child.prior / (1 + n)
                        if val >= best_val:
                            best, best_val = child, val
                    node = best
                else:
                    node = max(reversed(node.children), key=lambda c: selection_score(c, cfg))
            # expansion: children in ascending prior, descend into the last one
            if not node.expanded and node.depth < limit:
                node.expanded = True
                table = lookup(node.prev, node.token)
                if table is not None:
                    d = node.depth + 1
                    for tok, p in sorted(zip(table.tokens, table.probs), key=lambda e: (e[1], -e[0])):
                        node.children.append(SearchNode(node.token, tok, p, node, d))
                    node = node.children[-1]
            # transitions along the tree path
            probs = []
            walk = node
            while walk.parent is not None:
                probs.append(walk.prior)
                walk = walk.parent
            probs.reverse()
            # simulation
            p_tok, c_tok, d = node.prev, node.token, node.depth
            while d < limit:
                table = lookup(p_tok, c_tok)
                if table is None:
                    break
                i = min(bisect_right(table.cumulative, u[ui]), len(table.tokens) - 1)
                ui += 1
                probs.append(table.probs[i])
                p_tok, c_tok = c_tok, table.tokens[i]
                d += 1
            if log_mode:
                score = math.fsum(math.log(p) for p in probs)
            else:
                score = 1.0
                for p in probs:
                    score += p
            # backpropagation
            walk = node
            while walk is not None:
                walk.visits += 1
                walk.score += score
                if walk.parent is not None:
                    walk.parent.child_visits += 1
                walk = walk.parent

        return self.candidates()

    def candidates(self) -> list[DraftCandidate]:
        """Rank visited frontier paths.

        A frontier node was visited but none of its children were. The default
        order is mean score, then depth, then tokens; a depth-``l`` node is
        only ever reached with no rollout left, so its mean is the exact path
        score. ``Ranking.VISITS`` orders by visit count first instead.
        """
        if self.root is None:
            return []
        found = []
        stack = list(self.root.children)
        while stack:
            node = stack.pop()
            if node.visits == 0:
                continue
            if node.child_visits == 0:
                found.append(node)
            else:
                stack.extend(node.children)
        if self.cfg.ranking is Ranking.VISITS:
            ranked = sorted(
                ((n.visits, round(n.score / n.visits, 9), n.path(), n) for n in found),
                key=lambda e: (-e[0], -e[1], e[2]),
            )
        else:
            ranked = sorted(
                ((round(n.score / n.visits, 9), n.depth, n.path(), n) for n in found),
                key=lambda e: (-e[0], -e[1], e[2]),
            )
        return [DraftCandidate(path, n.score / n.visits, n.visits) for _, _, path, n in ranked[: self.cfg.candidates]]


def run_search(matrix: TrigramMatrix, tail: Sequence[int], cfg: SearchConfig = SearchConfig(), step: int = 0) -> list[DraftCandidate]:
    return DraftSearch(matrix, cfg).run(tail, step)


def greedy_chain(matrix: TrigramMatrix, tail: Sequence[int], depth: int) -> list[int]:
    """Follow the matrix argmax for ``depth`` tokens; the fixed-draft baseline."""
    prev, cur = tail
    out = []
    for _ in range(depth):
        table = matrix.lookup(prev, cur)
        if table is None:
            break
        nxt = table.argmax()
        out.append(nxt)
        prev, cur = cur, nxt
    return out
