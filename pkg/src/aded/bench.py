"""Scenario-driven benchmark sweeps over decoding strategies.

A scenario file is line-oriented ``key = value`` text. Keys before any
section header, or under ``[base]``, set the baseline cell. Each ``[sweep]``
section names one ``axis`` and its ``values``; sweeps vary one axis at a
time from the baseline. ``#`` starts a comment. See ``SCENARIO_KEYS`` for
every recognised key.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .corpus import TokenizerMode, TrigramCounts, Vocabulary, read_documents, tokenize
from .engine import DecodeMetrics, SessionConfig, Strategy, decode
from .errors import ScenarioError
from .mcts import SearchConfig
from .synthetic import SyntheticLanguage
from .target import OracleModelSpec, build_oracle
from .trigram import AdjustPolicy, finalize_matrix

_BOOL = {"on": True, "off": False, "true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _bool(v: str) -> bool:
    try:
        return _BOOL[v.lower()]
    except KeyError:
        raise ScenarioError(f"expected on/off, got {v!r}") from None


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(",", " ").split())


def _words(v: str) -> tuple[str, ...]:
    return tuple(v.replace(",", " ").split())


SCENARIO_KEYS: dict[str, tuple[Any, Any]] = {
    # data
    "name": (str, "scenario"),
    "source": (str, "synthetic"),
    "vocab": (int, 40),
    "weights": (_floats, (0.4, 0.3, 0.2, 0.1)),
    "language_seed": (int, 1),
    "target_rotate": (int, 0),
    "matrix_docs": (int, 100),
    "doc_length": (int, 100),
    "target_docs": (int, 400),
    "target_doc_length": (int, 400),
    "corpus": (_words, ()),
    "target_corpus": (_words, ()),
    "tokenizer": (str, TokenizerMode.WHITESPACE.value),
    "per_line": (_bool, True),
    "corpus_fraction": (float, 1.0),
    "threshold": (int, 1),
    "oracle_order": (int, 3),
    "pattern_length": (int, 0),
    "pattern_repeats": (int, 400),
    # prompts
    "prompts": (int, 30),
    "prompt_length": (int, 12),
    "max_new_tokens": (int, 40),
    # strategies and search
    "strategies": (_words, ("aded", "greedy-draft")),
    "adaptive": (_bool, False),
    "iterations": (int, 150),
    "c1": (float, 32.0),
    "c2": (float, 8.0),
    "depth": (int, 4),
    "candidates": (int, 24),
    "score_mode": (str, "log-likelihood"),
    "selection": (str, "puct"),
    "ranking": (str, "score"),
    "increment": (float, 0.05),
    "max_prob": (float, 0.95),
    "window": (int, 64),
    "verification": (str, "greedy"),
    "temperature": (float, 1.0),
    "top_p": (float, 1.0),
    "seed": (int, 0),
}

# keys whose change forces rebuilding the matrix or the oracle
_DATA_KEYS = (
    "source", "vocab", "weights", "language_seed", "target_rotate", "matrix_docs", "doc_length",
    "target_docs", "target_doc_length", "corpus", "target_corpus", "tokenizer", "per_line",
    "corpus_fraction", "threshold", "oracle_order", "pattern_length", "pattern_repeats",
    "prompts", "prompt_length", "seed",
)


@dataclass
class Scenario:
    base: dict[str, Any]
    sweeps: list[tuple[str, list[Any]]] = field(default_factory=list)
    root: Path = Path(".")

    def cells(self) -> list[tuple[str, Any, dict[str, Any]]]:
        if not self.sweeps:
            return [("base", None, dict(self.base))]
        out = []
        for axis, values in self.sweeps:
            for v in values:
                params = dict(self.base)
                params[axis] = v
                out.append((axis, v, params))
        return out


def _coerce(key: str, raw: str, lineno: int) -> Any:
    if key not in SCENARIO_KEYS:
        raise ScenarioError(f"line {lineno}: unknown key {key!r}")
    conv = SCENARIO_KEYS[key][0]
    try:
        return conv(raw)
    except (ValueError, ScenarioError) as exc:
        raise ScenarioError(f"line {lineno}: bad value for {key}: {exc}") from None


def parse_scenario(text: str, root: Path | str = ".") -> Scenario:
    base = {k: default for k, (_, default) in SCENARIO_KEYS.items()}
    sweeps: list[tuple[str, list[Any]]] = []
    section = "base"
    pending: dict[str, str] = {}
    start_line = 0

    def close_sweep():
        if section != "sweep":
            return
        if "axis" not in pending or "values" not in pending:
            raise ScenarioError(f"line {start_line}: [sweep] needs both axis and values")
        axis = pending["axis"]
        if axis not in SCENARIO_KEYS or axis == "name":
            raise ScenarioError(f"line {start_line}: cannot sweep {axis!r}")
        conv = SCENARIO_KEYS[axis][0]
        if conv in (_floats, _words):
            values = [conv(v) for v in pending["values"].split(";")]
        else:
            values = [_coerce(axis, v, start_line) for v in _words(pending["values"])]
        if not values:
            raise ScenarioError(f"line {start_line}: empty sweep")
        sweeps.append((axis, values))

    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            close_sweep()
            section = line[1:-1].strip().lower()
            if section not in ("base", "sweep"):
                raise ScenarioError(f"line {lineno}: unknown section [{section}]")
            pending, start_line = {}, lineno
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(f"line {lineno}: expected key = value")
        key, value = key.strip(), value.strip()
        if section == "sweep":
            if key not in ("axis", "values"):
                raise ScenarioError(f"line {lineno}: [sweep] accepts only axis and values")
            pending[key] = value
        else:
            base[key] = _coerce(key, value, lineno)
    close_sweep()
    return Scenario(base, sweeps, Path(root))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), path.parent)


# --- cell data --------------------------------------------------------------


def _subset(docs: list[list[int]], fraction: float) -> list[list[int]]:
    if not 0 < fraction <= 1:
        raise ScenarioError("corpus_fraction must lie in (0, 1]")
    keep = max(1, round(len(docs) * fraction))
    return docs[:keep]


def _pattern(rng: np.random.Generator, counts: TrigramCounts, vocab: int, length: int) -> list[int]:
    """A token cycle none of whose tri-grams occur in ``counts``."""
    for _ in range(1000):
        pat = [int(x) for x in rng.choice(vocab, size=length, replace=length > vocab)]
        cyc = pat + pat[:2]
        if all(counts.count(cyc[i], cyc[i + 1], cyc[i + 2]) == 0 for i in range(length)):
            return pat
    raise ScenarioError("could not find a pattern absent from the matrix corpus")


def build_cell_data(p: dict[str, Any], root: Path = Path(".")):
    """Return ``(matrix, oracle, prompts)`` for one parameter set, deterministically."""
    rng = np.random.default_rng([p["seed"], 7])
    if p["source"] == "synthetic":
        lang = SyntheticLanguage(p["vocab"], p["weights"], p["language_seed"])
        tlang = SyntheticLanguage(p["vocab"], p["weights"], p["language_seed"], rotate=p["target_rotate"])
        matrix_docs = lang.corpus(p["matrix_docs"], p["doc_length"], seed=p["seed"] * 2 + 1)
        target_docs = tlang.corpus(p["target_docs"], p["target_doc_length"], seed=p["seed"] * 2 + 2)
        vocab_size = p["vocab"]
        prompt_rng = np.random.default_rng([p["seed"], 11])
        prompts = [tlang.sample(p["prompt_length"], prompt_rng) for _ in range(p["prompts"])]
    elif p["source"] == "files":
        if not p["corpus"]:
            raise ScenarioError("source = files needs a corpus")
        mode = TokenizerMode(p["tokenizer"])
        vocab = Vocabulary.byte_level() if mode is TokenizerMode.BYTE else Vocabulary()
        tok = lambda paths: [  # noqa: E731
            tokenize(doc, vocab, mode) for f in paths for doc in read_documents(root / f, p["per_line"])
        ]
        matrix_docs = tok(p["corpus"])
        target_docs = tok(p["target_corpus"] or p["corpus"])
        vocab_size = len(vocab)
        long_docs = [d for d in target_docs if len(d) >= p["prompt_length"]]
        if not long_docs:
            raise ScenarioError("no target document is as long as prompt_length")
        prompts = []
        for _ in range(p["prompts"]):
            doc = long_docs[int(rng.integers(len(long_docs)))]
            start = int(rng.integers(len(doc) - p["prompt_length"] + 1))
            prompts.append(doc[start:start + p["prompt_length"]])
    else:
        raise ScenarioError(f"unknown source {p['source']!r}")

    counts = TrigramCounts()
    for doc in _subset(matrix_docs, p["corpus_fraction"]):
        counts.add_document(doc)
    if p["pattern_length"] > 0:
        pat = _pattern(rng, counts, vocab_size, p["pattern_length"])
        target_docs = target_docs + [pat * p["pattern_repeats"]]
        prompts = [pr + pat * 2 for pr in prompts]
    matrix = finalize_matrix(counts, p["threshold"], vocab_size=vocab_size)
    oracle = build_oracle(OracleModelSpec(p["oracle_order"], vocab_size=vocab_size), target_docs)
    return matrix, oracle, prompts


def session_config(p: dict[str, Any], strategy: str, prompt_index: int) -> SessionConfig:
    search = SearchConfig(
        iterations=p["iterations"], c1=p["c1"], c2=p["c2"], depth=p["depth"], candidates=p["candidates"],
        score_mode=p["score_mode"], selection=p["selection"], ranking=p["ranking"],
    )
    adjust = AdjustPolicy(p["increment"], p["max_prob"], p["window"])
    return SessionConfig(
        search=search, adjust=adjust, adaptive=p["adaptive"], strategy=strategy,
        max_new_tokens=p["max_new_tokens"], verification=p["verification"],
        temperature=p["temperature"], top_p=p["top_p"], seed=p["seed"] * 100003 + prompt_index,
    )


@dataclass
class BenchRow:
    axis: str
    value: Any
    strategy: str
    accept_length_avg: float
    forward_passes: int
    emitted: int
    speedup: float
    wall_seconds: float | None = None
    first_half_accept: float | None = None
    second_half_accept: float | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(d["value"], tuple):
            d["value"] = list(d["value"])
        return {k: v for k, v in d.items() if v is not None or k in ("value",)}


def run_strategy(matrix, oracle, prompts, p: dict[str, Any], strategy: str) -> tuple[DecodeMetrics, float, float, float]:
    """Decode every prompt; return pooled metrics, wall-clock and half-split accept lengths."""
    pooled = DecodeMetrics()
    halves: tuple[list[int], list[int]] = ([], [])
    half = p["max_new_tokens"] / 2
    t0 = time.perf_counter()
    for i, prompt in enumerate(prompts):
        _, m = decode(prompt, matrix, oracle, session_config(p, strategy, i))
        pooled.emitted += m.emitted
        pooled.forward_passes += m.forward_passes
        pooled.accept_lengths.extend(m.accept_lengths)
        pos = 0
        for n in m.accept_lengths:
            halves[0 if pos < half else 1].append(n)
            pos += n
        for k, v in m.phase_seconds.items():
            pooled.phase_seconds[k] += v
    wall = time.perf_counter() - t0
    avg = lambda xs: sum(xs) / len(xs) if xs else 0.0  # noqa: E731
    return pooled, wall, avg(halves[0]), avg(halves[1])


def run_cell(cell: tuple[str, Any, dict[str, Any]], root: Path = Path("."), timings: bool = False) -> list[BenchRow]:
    axis, value, p = cell
    matrix, oracle, prompts = build_cell_data(p, root)
    strategies = [Strategy(s).value for s in p["strategies"] if Strategy(s) is not Strategy.AUTOREGRESSIVE]
    results = {}
    for strategy in [Strategy.AUTOREGRESSIVE.value] + strategies:
        results[strategy] = run_strategy(matrix, oracle, prompts, p, strategy)
    ar_metrics, ar_wall, _, _ = results[Strategy.AUTOREGRESSIVE.value]
    rows = []
    for strategy, (m, wall, h1, h2) in results.items():
        if timings and wall > 0:
            speedup = ar_wall / wall
        else:
            speedup = m.pass_reduction / ar_metrics.pass_reduction if ar_metrics.pass_reduction else 0.0
        rows.append(
            BenchRow(
                axis, value, strategy, m.accept_length_avg, m.forward_passes, m.emitted, speedup,
                wall if timings else None, h1, h2,
            )
        )
    return rows


def _run_cell_job(args):
    return run_cell(*args)


@dataclass
class BenchReport:
    name: str
    rows: list[BenchRow]
    sweeps: list[tuple[str, list[Any]]]

    def series(self) -> dict[str, dict]:
        """Plot-ready ``{axis: {"values": [...], "series": {strategy: [accept...]}}}``."""
        out: dict[str, dict] = {}
        for row in self.rows:
            entry = out.setdefault(row.axis, {"values": [], "series": {}})
            value = list(row.value) if isinstance(row.value, tuple) else row.value
            if value not in entry["values"]:
                entry["values"].append(value)
            entry["series"].setdefault(row.strategy, []).append(row.accept_length_avg)
        return out

    def to_json(self) -> str:
        return json.dumps(
            {"name": self.name, "rows": [r.to_dict() for r in self.rows], "axes": self.series()},
            indent=2, sort_keys=True,
        )

    def table(self) -> str:
        timed = any(r.wall_seconds is not None for r in self.rows)
        head = f"{'axis':<16} {'value':>14} {'strategy':<15} {'accept':>8} {'passes':>8} {'emitted':>8} {'speedup':>8}"
        if timed:
            head += f" {'wall_s':>9}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            value = " ".join(str(x) for x in r.value) if isinstance(r.value, tuple) else str(r.value)
            line = (
                f"{r.axis:<16} {value:>14} {r.strategy:<15} {r.accept_length_avg:>8.4f} "
                f"{r.forward_passes:>8d} {r.emitted:>8d} {r.speedup:>8.4f}"
            )
            if timed:
                line += f" {r.wall_seconds:>9.3f}"
            lines.append(line)
        return "\n".join(lines)


def run_bench(scenario: Scenario, workers: int = 1, timings: bool = False) -> BenchReport:
    """Run every cell; rows come back in scenario order whatever the pool size."""
    cells = scenario.cells()
    jobs = [(cell, scenario.root, timings) for cell in cells]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_cell_job, jobs))
    else:
        parts = [_run_cell_job(j) for j in jobs]
    rows = [r for part in parts for r in part]
    return BenchReport(scenario.base["name"], rows, scenario.sweeps)
