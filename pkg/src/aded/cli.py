"""Command line entry point: ``aded build | decode | bench | inspect | serve``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

from .bench import load_scenario, run_bench
from .corpus import (
    TokenizerMode,
    Vocabulary,
    count_corpus,
    detokenize,
    read_documents,
    read_pretokenized,
    tokenize,
)
from .engine import DecodeSession, SessionConfig, Strategy, Verification, collect_metrics
from .errors import AdedError
from .matrix_io import load_matrix, save_matrix
from .mcts import Ranking, ScoreMode, SearchConfig, Selection
from .target import ModelServer, OracleModelSpec, RemoteModel, ScriptedModel, build_oracle
from .trigram import AdjustPolicy, finalize_matrix

log = logging.getLogger("aded")


def vocab_path(matrix_path: str | Path) -> Path:
    return Path(f"{matrix_path}.vocab.json")


def _load_docs(paths: Sequence[str], vocab: Vocabulary, mode: TokenizerMode, per_line: bool) -> list[list[int]]:
    if mode is TokenizerMode.PRETOKENIZED:
        docs = [doc for p in paths for doc in read_pretokenized(p)]
        for doc in docs:
            tokenize(doc, vocab, mode)  # range check
        return docs
    return [tokenize(text, vocab, mode) for p in paths for text in read_documents(p, per_line)]


def _build_vocab(args) -> Vocabulary:
    mode = TokenizerMode(args.tokenizer)
    if mode is TokenizerMode.BYTE:
        return Vocabulary.byte_level()
    if mode is TokenizerMode.PRETOKENIZED:
        size = args.vocab_size
        if size is None:
            size = 1 + max((t for p in args.corpus for doc in read_pretokenized(p) for t in doc), default=-1)
        return Vocabulary(str(i) for i in range(size)).freeze()
    return Vocabulary()


def cmd_build(args) -> int:
    mode = TokenizerMode(args.tokenizer)
    vocab = _build_vocab(args)
    docs = _load_docs(args.corpus, vocab, mode, args.docs == "line")
    vocab.freeze()
    log.info("tokenized %d documents, vocabulary %d", len(docs), len(vocab))
    counts = count_corpus(docs, workers=args.workers)
    matrix = finalize_matrix(counts, args.threshold, vocab_size=len(vocab), retention=args.retention, backoff=not args.no_backoff)
    save_matrix(matrix, args.output)
    vocab_path(args.output).write_text(vocab.to_json(mode), encoding="utf-8")
    stats = counts.stats().as_dict()
    stats.update(contexts_kept=len(matrix), entries_kept=matrix.entry_count, vocab_size=len(vocab))
    print(json.dumps(stats, sort_keys=True))
    if len(matrix) == 0:
        print(f"warning: no tri-gram reached threshold {args.threshold}; the matrix is empty", file=sys.stderr)
    return 0


def _load_vocab(args) -> tuple[Vocabulary, TokenizerMode]:
    path = Path(args.vocab) if getattr(args, "vocab", None) else vocab_path(args.matrix)
    return Vocabulary.from_json(path.read_text(encoding="utf-8"))


def _make_target(args, vocab: Vocabulary, mode: TokenizerMode):
    kind, _, rest = args.target.partition(":")
    if kind == "oracle":
        order = int(rest or 3)
        if not args.target_corpus:
            raise SystemExit("error: --target oracle:K needs --target-corpus")
        docs = _load_docs(args.target_corpus, vocab, mode, args.docs == "line")
        return build_oracle(OracleModelSpec(order, vocab_size=len(vocab)), docs)
    if kind == "scripted":
        return ScriptedModel.from_json(rest)
    if kind == "remote":
        # shaping happens once, locally, in the verifier
        return RemoteModel(rest, top_m=args.top_m)
    raise SystemExit(f"error: unknown target {args.target!r}")


def _session_config(args, stop: frozenset) -> SessionConfig:
    search = SearchConfig(
        iterations=args.iterations, c1=args.c1, c2=args.c2, depth=args.depth, candidates=args.candidates,
        score_mode=args.score_mode, selection=args.selection, ranking=args.ranking,
    )
    return SessionConfig(
        search=search,
        adjust=AdjustPolicy(args.increment, args.max_prob, args.window),
        adaptive=args.adaptive == "on",
        strategy=args.strategy,
        max_new_tokens=args.max_new_tokens,
        stop_tokens=stop,
        verification=args.verification,
        temperature=args.temperature,
        top_p=args.top_p,
        seed=args.seed,
    )


def cmd_decode(args) -> int:
    matrix = load_matrix(args.matrix)
    vocab, mode = _load_vocab(args)
    prompt_src = args.prompt if args.prompt is not None else sys.stdin.read()
    if mode is TokenizerMode.PRETOKENIZED:
        prompt = tokenize(prompt_src.split(), vocab, mode)
        stop = frozenset(int(s) for s in args.stop)
    else:
        prompt = tokenize(prompt_src, vocab, mode)
        stop = frozenset(t for s in args.stop for t in tokenize(s, vocab, mode))
    target = _make_target(args, vocab, mode)
    cfg = _session_config(args, stop)
    session = DecodeSession(prompt, matrix, target, cfg)
    baseline = None
    if args.timings and cfg.strategy is not Strategy.AUTOREGRESSIVE:
        baseline = DecodeSession(prompt, matrix, target, dataclasses.replace(cfg, strategy=Strategy.AUTOREGRESSIVE))
        t0 = time.perf_counter()
        baseline.run()
        baseline.metrics.phase_seconds["verify"] = time.perf_counter() - t0
    stream = not args.json
    while not session.finished:
        piece = session.step()
        log.debug("step %d accepted %d tokens", session.steps, len(piece))
        if stream and piece:
            sys.stdout.write(detokenize(piece, vocab, mode) + (" " if mode is not TokenizerMode.BYTE else ""))
            sys.stdout.flush()
    if stream:
        sys.stdout.write("\n")
    metrics = collect_metrics(session, baseline if args.timings else None)
    result = {
        "text": detokenize(session.output, vocab, mode),
        "tokens": session.output,
        "metrics": metrics.to_dict(timings=args.timings),
    }
    print(json.dumps(result, sort_keys=True, ensure_ascii=False))
    return 0


def cmd_bench(args) -> int:
    scenario = load_scenario(args.scenario)
    report = run_bench(scenario, workers=args.workers, timings=args.timings)
    print(report.table())
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


def cmd_inspect(args) -> int:
    matrix = load_matrix(args.matrix)
    try:
        vocab, mode = _load_vocab(args)
    except FileNotFoundError:
        vocab, mode = None, None
    info = {
        "vocab_size": matrix.vocab_size,
        "contexts": len(matrix),
        "entries": matrix.entry_count,
        "backoff": matrix.has_backoff,
    }
    if args.context:
        if vocab is not None and mode is not TokenizerMode.PRETOKENIZED:
            ids = tokenize(" ".join(args.context), vocab, mode)
        else:
            ids = [int(t) for t in args.context]
        if len(ids) != 2:
            raise SystemExit("error: --context needs exactly two tokens")
        dist = sorted(matrix.conditional((ids[0], ids[1])).items(), key=lambda kv: (-kv[1], kv[0]))[: args.top]
        label = (lambda t: vocab.surface(t)) if vocab is not None else str
        info["context"] = ids
        info["continuations"] = [[t, label(t), p] for t, p in dist]
    print(json.dumps(info, sort_keys=True, ensure_ascii=False))
    return 0


def cmd_serve(args) -> int:
    vocab, mode = Vocabulary.from_json(Path(args.vocab).read_text(encoding="utf-8"))
    model = _make_target(args, vocab, mode)
    host, _, port = args.listen.rpartition(":")
    with ModelServer(model, host or "127.0.0.1", int(port)) as server:
        print(f"serving on {server.address}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0


def _add_target_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", default="oracle:3", help="oracle:K | scripted:PATH | remote:HOST:PORT")
    p.add_argument("--target-corpus", nargs="+", default=[])
    p.add_argument("--docs", choices=["file", "line"], default="file", help="document boundary for corpus files")
    p.add_argument("--top-m", type=int, default=32)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-p", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aded", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="count a corpus into a tri-gram matrix file")
    b.add_argument("corpus", nargs="+")
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--tokenizer", choices=[m.value for m in TokenizerMode], default=TokenizerMode.WHITESPACE.value)
    b.add_argument("--docs", choices=["file", "line"], default="file")
    b.add_argument("--threshold", type=int, default=12)
    b.add_argument("--retention", type=int, default=64)
    b.add_argument("--vocab-size", type=int, default=None, help="vocabulary size for pretokenized input")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--no-backoff", action="store_true")
    b.set_defaults(func=cmd_build)

    d = sub.add_parser("decode", help="decode one prompt and print text plus metrics")
    d.add_argument("matrix")
    d.add_argument("--prompt", default=None, help="prompt text; stdin when omitted")
    d.add_argument("--vocab", default=None, help="vocabulary sidecar (default MATRIX.vocab.json)")
    d.add_argument("--stop", nargs="*", default=[])
    d.add_argument("--max-new-tokens", type=int, default=64)
    d.add_argument("--iterations", type=int, default=150)
    d.add_argument("--c1", type=float, default=32.0)
    d.add_argument("--c2", type=float, default=8.0)
    d.add_argument("--depth", type=int, default=4)
    d.add_argument("--candidates", type=int, default=24)
    d.add_argument("--score-mode", choices=[m.value for m in ScoreMode], default=ScoreMode.LOG_LIKELIHOOD.value)
    d.add_argument("--selection", choices=[m.value for m in Selection], default=Selection.PUCT.value)
    d.add_argument("--ranking", choices=[m.value for m in Ranking], default=Ranking.SCORE.value)
    d.add_argument("--increment", type=float, default=0.05)
    d.add_argument("--max-prob", type=float, default=0.95)
    d.add_argument("--window", type=int, default=64)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.ADED.value)
    d.add_argument("--adaptive", choices=["on", "off"], default="on")
    d.add_argument("--verification", choices=[v.value for v in Verification], default=Verification.GREEDY.value)
    d.add_argument("--timings", action="store_true", help="include wall-clock figures (output no longer reproducible)")
    d.add_argument("--json", action="store_true", help="print only the final JSON object")
    _add_target_flags(d)
    d.set_defaults(func=cmd_decode)

    be = sub.add_parser("bench", help="run a scenario file")
    be.add_argument("scenario")
    be.add_argument("--workers", type=int, default=1)
    be.add_argument("--json", default=None, help="also write the JSON report here")
    be.add_argument("--timings", action="store_true")
    be.set_defaults(func=cmd_bench)

    i = sub.add_parser("inspect", help="summarise a matrix file")
    i.add_argument("matrix")
    i.add_argument("--vocab", default=None)
    i.add_argument("--context", nargs="+", default=None, help="two tokens to look up")
    i.add_argument("--top", type=int, default=10)
    i.set_defaults(func=cmd_inspect)

    s = sub.add_parser("serve", help="serve a local target over the verification protocol")
    s.add_argument("--vocab", required=True)
    s.add_argument("--listen", default="127.0.0.1:0")
    _add_target_flags(s)
    s.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("ADED_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AdedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
