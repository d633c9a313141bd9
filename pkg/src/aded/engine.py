"""Draft-verify decode loop plus the autoregressive and greedy-draft baselines."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .draft_tree import DraftTree, build_tree
from .mcts import DraftSearch, SearchConfig, greedy_chain
from .trigram import AdjustPolicy, TrigramMatrix
from .verify import VerifyOutcome, verify_greedy, verify_sampled

PHASES = ("search", "build", "verify", "adjust")


class Strategy(str, Enum):
    ADED = "aded"
    AUTOREGRESSIVE = "autoregressive"
    GREEDY_DRAFT = "greedy-draft"


class Verification(str, Enum):
    GREEDY = "greedy"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class SessionConfig:
    search: SearchConfig = SearchConfig()
    adjust: AdjustPolicy = AdjustPolicy()
    adaptive: bool = True
    strategy: Strategy = Strategy.ADED
    max_new_tokens: int = 64
    stop_tokens: frozenset = frozenset()
    verification: Verification = Verification.GREEDY
    temperature: float = 1.0
    top_p: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "verification", Verification(self.verification))
        object.__setattr__(self, "stop_tokens", frozenset(self.stop_tokens))
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass
class DecodeMetrics:
    emitted: int = 0
    forward_passes: int = 0
    accept_lengths: list[int] = field(default_factory=list)
    phase_seconds: dict[str, float] = field(default_factory=lambda: dict.fromkeys(PHASES, 0.0), compare=False)
    speedup: float | None = field(default=None, compare=False)

    @property
    def accept_length_avg(self) -> float:
        if not self.accept_lengths:
            return 0.0
        return sum(self.accept_lengths) / len(self.accept_lengths)

    @property
    def pass_reduction(self) -> float:
        return self.emitted / self.forward_passes if self.forward_passes else 0.0

    @property
    def wall_seconds(self) -> float:
        return sum(self.phase_seconds.values())

    def to_dict(self, timings: bool = False) -> dict:
        out = {
            "emitted": self.emitted,
            "forward_passes": self.forward_passes,
            "accept_length_avg": self.accept_length_avg,
            "pass_reduction": self.pass_reduction,
            "accept_lengths": list(self.accept_lengths),
        }
        if self.speedup is not None:
            out["speedup"] = self.speedup
        if timings:
            out["phase_seconds"] = dict(self.phase_seconds)
            out["wall_seconds"] = self.wall_seconds
        return out


class DecodeSession:
    """Sequential decode of one prompt.

    With adaptivity on, updates go to a private copy-on-write view of the
    matrix so the caller's matrix is never touched.
    """

    def __init__(self, prompt: Sequence[int], matrix: TrigramMatrix, target, cfg: SessionConfig = SessionConfig()):
        self.prompt = [int(t) for t in prompt]
        self.sequence = list(self.prompt)
        self.output: list[int] = []
        self.target = target
        self.cfg = cfg
        self.matrix = matrix.fork() if cfg.adaptive and cfg.strategy is not Strategy.AUTOREGRESSIVE else matrix
        self.metrics = DecodeMetrics()
        self.steps = 0
        self.finished = False
        self._search = DraftSearch(self.matrix, dataclasses.replace(cfg.search, seed=cfg.seed))
        self._rng = np.random.Generator(np.random.Philox(cfg.seed))

    def _draft(self) -> DraftTree:
        cfg = self.cfg
        if cfg.strategy is Strategy.AUTOREGRESSIVE or len(self.sequence) < 2:
            return build_tree([])
        tail = self.sequence[-2:]
        t0 = time.perf_counter()
        if cfg.strategy is Strategy.ADED:
            candidates = self._search.run(tail, self.steps)
        else:
            chain = greedy_chain(self.matrix, tail, cfg.search.depth)
            candidates = [chain] if chain else []
        t1 = time.perf_counter()
        tree = build_tree(candidates)
        self.metrics.phase_seconds["search"] += t1 - t0
        self.metrics.phase_seconds["build"] += time.perf_counter() - t1
        return tree

    def _verify(self, tree: DraftTree) -> VerifyOutcome:
        t0 = time.perf_counter()
        dists = self.target.score_tree(self.sequence, tree)
        self.metrics.forward_passes += 1
        if self.cfg.verification is Verification.GREEDY:
            outcome = verify_greedy(tree, dists)
        else:
            outcome = verify_sampled(tree, dists, self.cfg.temperature, self.cfg.top_p, self._rng)
        self.metrics.phase_seconds["verify"] += time.perf_counter() - t0
        return outcome

    def step(self) -> list[int]:
        """Run one draft-verify step and return the tokens it emitted."""
        if self.finished:
            return []
        cfg = self.cfg
        outcome = self._verify(self._draft())
        self.steps += 1
        emitted = []
        budget = cfg.max_new_tokens - len(self.output)
        for tok in outcome.tokens[:budget]:
            emitted.append(tok)
            if tok in cfg.stop_tokens:
                self.finished = True
                break
        self.output.extend(emitted)
        self.sequence.extend(emitted)
        self.metrics.emitted += len(emitted)
        self.metrics.accept_lengths.append(len(emitted))
        if len(self.output) >= cfg.max_new_tokens:
            self.finished = True
        if cfg.adaptive and cfg.strategy is not Strategy.AUTOREGRESSIVE:
            t0 = time.perf_counter()
            # recent output, plus the two prompt tokens that open its first tri-gram
            self.matrix.adjust_from_recent(self.sequence[max(len(self.prompt) - 2, 0):], cfg.adjust)
            self.metrics.phase_seconds["adjust"] += time.perf_counter() - t0
        return emitted

    def run(self) -> list[int]:
        while not self.finished:
            self.step()
        return self.output


def decode(prompt: Sequence[int], matrix: TrigramMatrix, target, cfg: SessionConfig = SessionConfig()) -> tuple[list[int], DecodeMetrics]:
    session = DecodeSession(prompt, matrix, target, cfg)
    session.run()
    return session.output, session.metrics


def collect_metrics(session: DecodeSession, baseline: DecodeSession | DecodeMetrics | None = None) -> DecodeMetrics:
    """Finished-session metrics with ``speedup`` filled in.

    Speedup is baseline wall-clock over this session's wall-clock when a
    baseline run is given, otherwise the pass-reduction factor.
    """
    metrics = session.metrics
    base = baseline.metrics if isinstance(baseline, DecodeSession) else baseline
    if base is not None and base.wall_seconds > 0 and metrics.wall_seconds > 0:
        metrics.speedup = base.wall_seconds / metrics.wall_seconds
    else:
        metrics.speedup = metrics.pass_reduction
    return metrics
