"""Verifying models: anything that yields next-token distributions for a draft tree.

Three targets ship: an order-k n-gram oracle, a scripted reply table for
tests, and a client for the newline-delimited JSON verification protocol.
:class:`ModelServer` exposes any local target over that same protocol.
"""

from __future__ import annotations

import json
import math
import socket
import socketserver
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .draft_tree import DraftTree, tree_from_parents
from .errors import MalformedResponseError, NodeCountMismatchError, TransportError


class Distribution:
    """Next-token distribution sorted by descending probability, ties by ascending token."""

    __slots__ = ("tokens", "probs")

    def __init__(self, pairs: Iterable[tuple[int, float]], normalize: bool = True):
        items = sorted(((int(t), float(p)) for t, p in pairs if p > 0), key=lambda e: (-e[1], e[0]))
        if not items:
            raise ValueError("distribution has no positive mass")
        if normalize:
            total = math.fsum(p for _, p in items)
            items = [(t, p / total) for t, p in items]
        self.tokens = tuple(t for t, _ in items)
        self.probs = tuple(p for _, p in items)

    @classmethod
    def one_hot(cls, token: int) -> "Distribution":
        return cls([(token, 1.0)])

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float]) -> "Distribution":
        return cls(mapping.items())

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.tokens == other.tokens and self.probs == other.probs

    def __repr__(self) -> str:
        head = ", ".join(f"{t}:{p:.3g}" for t, p in zip(self.tokens[:5], self.probs))
        more = ", ..." if len(self.tokens) > 5 else ""
        return f"Distribution({head}{more})"

    def argmax(self) -> int:
        return self.tokens[0]

    def prob(self, token: int) -> float:
        try:
            return self.probs[self.tokens.index(token)]
        except ValueError:
            return 0.0

    def pairs(self) -> list[list]:
        return [[t, p] for t, p in zip(self.tokens, self.probs)]

    def top(self, m: int) -> "Distribution":
        if m >= len(self.tokens):
            return self
        return Distribution(zip(self.tokens[:m], self.probs[:m]))

    def shaped(self, temperature: float = 1.0, top_p: float = 1.0) -> "Distribution":
        """Temperature scaling followed by nucleus truncation, renormalized."""
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0 < top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if temperature == 1.0 and top_p == 1.0:
            return self
        logs = [math.log(p) / temperature for p in self.probs]
        hi = max(logs)
        weights = [math.exp(v - hi) for v in logs]
        total = math.fsum(weights)
        probs = [w / total for w in weights]
        order = sorted(range(len(probs)), key=lambda i: (-probs[i], self.tokens[i]))
        kept, acc = [], 0.0
        for i in order:
            if probs[i] <= 0.0:
                break
            kept.append((self.tokens[i], probs[i]))
            acc += probs[i]
            if acc >= top_p:
                break
        return Distribution(kept)


@dataclass(frozen=True)
class NodeDistributions:
    head: Distribution
    nodes: tuple[Distribution, ...] = ()


class TargetModel:
    """Base for local targets: subclasses provide :meth:`next_distribution`."""

    def __init__(self):
        self.forward_passes = 0

    def next_distribution(self, context: Sequence[int]) -> Distribution:
        raise NotImplementedError

    def score_tree(self, context: Sequence[int], tree: DraftTree | None = None) -> NodeDistributions:
        """One logical forward pass over the context and every draft node."""
        self.forward_passes += 1
        context = tuple(context)
        head = self.next_distribution(context)
        if tree is None or len(tree) == 0:
            return NodeDistributions(head)
        paths: list[tuple[int, ...]] = []
        for tok, par in zip(tree.tokens, tree.parents):
            paths.append((paths[par] if par >= 0 else context) + (tok,))
        return NodeDistributions(head, tuple(self.next_distribution(p) for p in paths))


@dataclass(frozen=True)
class OracleModelSpec:
    order: int = 3
    backoff: bool = True
    vocab_size: int | None = None

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("oracle order must be >= 2")


class OracleModel(TargetModel):
    """Order-k count model with stupid backoff (factor 0.4 per level).

    Backoff is decided per context: the longest suffix of the context that
    was seen in training supplies the estimate. Renormalizing the scaled
    estimate leaves its maximum-likelihood shape, so a seen context always
    yields exactly its relative frequencies.
    """

    ALPHA = 0.4

    def __init__(self, order: int, counts: list[dict[tuple[int, ...], Counter]], vocab_size: int, backoff: bool = True):
        super().__init__()
        self.order = order
        self.counts = counts
        self.vocab_size = vocab_size
        self.backoff = backoff
        self._cache: dict[tuple[int, ...], Distribution] = {}

    def next_distribution(self, context: Sequence[int]) -> Distribution:
        key = tuple(context[-(self.order - 1):]) if len(context) else ()
        dist = self._cache.get(key)
        if dist is None:
            dist = self._cache[key] = self._estimate(key)
        return dist

    def _estimate(self, key: tuple[int, ...]) -> Distribution:
        top = self.order - 1
        levels = range(min(top, len(key)), -1, -1) if self.backoff else ([top] if len(key) >= top else [])
        for n in levels:
            ctx = key[len(key) - n:] if n else ()
            table = self.counts[n].get(ctx)
            if table:
                scale = self.ALPHA ** (top - n)
                return Distribution((t, scale * c) for t, c in table.items())
        return Distribution((t, 1.0) for t in range(self.vocab_size))


def build_oracle(spec: OracleModelSpec, tokens: Sequence[int] | Iterable[Sequence[int]]) -> OracleModel:
    """Count every order up to ``spec.order`` over one sequence or many documents."""
    docs = list(tokens)
    if docs and not isinstance(docs[0], (list, tuple)):
        docs = [docs]
    if not any(docs):
        raise ValueError("oracle needs a non-empty token source")
    k = spec.order
    counts: list[dict[tuple[int, ...], Counter]] = [{} for _ in range(k)]
    top_token = -1
    for doc in docs:
        doc = [int(t) for t in doc]
        top_token = max(top_token, max(doc, default=-1))
        for i, tok in enumerate(doc):
            for n in range(k):
                if i - n < 0:
                    break
                ctx = tuple(doc[i - n:i])
                table = counts[n].get(ctx)
                if table is None:
                    table = counts[n][ctx] = Counter()
                table[tok] += 1
    vocab_size = spec.vocab_size if spec.vocab_size is not None else top_token + 1
    return OracleModel(k, counts, vocab_size, spec.backoff)


class ScriptedModel(TargetModel):
    """Explicit reply table keyed by the context's trailing tokens.

    Keys are single tokens or token tuples; the longest matching suffix wins,
    and ``default`` answers everything else.
    """

    def __init__(self, replies: Mapping, default=None):
        super().__init__()
        self.replies: dict[tuple[int, ...], Distribution] = {}
        for key, reply in replies.items():
            key = (key,) if isinstance(key, int) else tuple(key)
            self.replies[key] = _as_distribution(reply)
        self.default = None if default is None else _as_distribution(default)
        self._longest = max((len(k) for k in self.replies), default=0)

    def next_distribution(self, context: Sequence[int]) -> Distribution:
        context = tuple(context)
        for n in range(min(self._longest, len(context)), 0, -1):
            reply = self.replies.get(context[-n:])
            if reply is not None:
                return reply
        if self.default is None:
            raise KeyError(f"no scripted reply for context ending {context[-2:]}")
        return self.default

    @classmethod
    def from_json(cls, path: str | Path) -> "ScriptedModel":
        """Load ``{"default": reply, "replies": {"3": reply, "1 2": reply}}``.

        A reply is a token id or a list of ``[token, prob]`` pairs.
        """
        data = json.loads(Path(path).read_text())
        replies = {tuple(int(t) for t in k.split()): v for k, v in data.get("replies", {}).items()}
        return cls(replies, data.get("default"))


def _as_distribution(reply) -> Distribution:
    if isinstance(reply, Distribution):
        return reply
    if isinstance(reply, int):
        return Distribution.one_hot(reply)
    if isinstance(reply, Mapping):
        return Distribution.from_mapping({int(k): v for k, v in reply.items()})
    return Distribution((int(t), float(p)) for t, p in reply)


# --- newline-delimited JSON verification protocol -------------------------


def encode_request(req_id: int, context: Sequence[int], tree: DraftTree, top_m: int, temperature: float, top_p: float) -> bytes:
    msg = {
        "id": req_id,
        "context": list(context),
        "nodes": list(tree.tokens),
        "parents": list(tree.parents),
        "top_m": top_m,
        "temperature": temperature,
        "top_p": top_p,
    }
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode("utf-8")


def _parse_dist(raw) -> Distribution:
    if not isinstance(raw, list) or not raw:
        raise MalformedResponseError("distribution must be a non-empty list of [token, prob] pairs")
    try:
        pairs = [(int(t), float(p)) for t, p in raw]
    except (TypeError, ValueError) as exc:
        raise MalformedResponseError(f"bad distribution entry: {exc}") from None
    if any(t < 0 or not (p >= 0) for t, p in pairs):
        raise MalformedResponseError("negative token or probability in distribution")
    try:
        return Distribution(pairs)
    except ValueError as exc:
        raise MalformedResponseError(str(exc)) from None


def decode_response(line: bytes | str, req_id: int, n_nodes: int) -> NodeDistributions:
    try:
        msg = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedResponseError(f"response is not JSON: {exc}") from None
    if not isinstance(msg, dict):
        raise MalformedResponseError("response must be a JSON object")
    if "error" in msg:
        raise MalformedResponseError(f"server error: {msg['error']}")
    if msg.get("id") != req_id:
        raise MalformedResponseError(f"response id {msg.get('id')!r} does not match request {req_id}")
    if "head" not in msg or "dists" not in msg or not isinstance(msg["dists"], list):
        raise MalformedResponseError("response lacks head or dists")
    if len(msg["dists"]) != n_nodes:
        raise NodeCountMismatchError(f"expected {n_nodes} node distributions, got {len(msg['dists'])}")
    return NodeDistributions(_parse_dist(msg["head"]), tuple(_parse_dist(d) for d in msg["dists"]))


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {addr!r}")
    return host, int(port)


class RemoteModel:
    """Client for a verification server; one request in flight per connection."""

    def __init__(self, address: str, top_m: int = 32, temperature: float = 1.0, top_p: float = 1.0, timeout: float = 30.0):
        self.host, self.port = parse_address(address)
        self.top_m = top_m
        self.temperature = temperature
        self.top_p = top_p
        self.timeout = timeout
        self.forward_passes = 0
        self._next_id = 0
        self._sock: socket.socket | None = None
        self._reader = None
        self._lock = threading.Lock()

    def _connect(self):
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
            except OSError as exc:
                raise TransportError(f"cannot reach {self.host}:{self.port}: {exc}") from None
            self._reader = self._sock.makefile("rb")

    def close(self) -> None:
        if self._sock is not None:
            self._reader.close()
            self._sock.close()
            self._sock = self._reader = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def score_tree(self, context: Sequence[int], tree: DraftTree | None = None) -> NodeDistributions:
        tree = tree if tree is not None else DraftTree(_children=({},))
        with self._lock:
            self._connect()
            self.forward_passes += 1
            req_id = self._next_id
            self._next_id += 1
            payload = encode_request(req_id, context, tree, self.top_m, self.temperature, self.top_p)
            try:
                self._sock.sendall(payload)
                line = self._reader.readline()
            except OSError as exc:
                self.close()
                raise TransportError(f"transport failure: {exc}") from None
            if not line:
                self.close()
                raise TransportError("server closed the connection")
        return decode_response(line, req_id, len(tree))


def answer_request(model: TargetModel, msg: dict) -> dict:
    """Serve one decoded request against a local model."""
    req_id = msg.get("id")
    try:
        tree = tree_from_parents(msg.get("nodes", []), msg.get("parents", []))
        top_m = int(msg.get("top_m", 32))
        temperature = float(msg.get("temperature", 1.0))
        top_p = float(msg.get("top_p", 1.0))
        dists = model.score_tree(msg["context"], tree)
        shape = lambda d: d.shaped(temperature, top_p).top(top_m).pairs()  # noqa: E731
        return {"id": req_id, "head": shape(dists.head), "dists": [shape(d) for d in dists.nodes]}
    except (KeyError, TypeError, ValueError) as exc:
        return {"id": req_id, "error": str(exc)}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            try:
                msg = json.loads(line)
                reply = answer_request(self.server.model, msg) if isinstance(msg, dict) else {"id": None, "error": "not an object"}
            except json.JSONDecodeError as exc:
                reply = {"id": None, "error": f"bad JSON: {exc}"}
            self.wfile.write((json.dumps(reply, separators=(",", ":")) + "\n").encode("utf-8"))
            self.wfile.flush()


class ModelServer(socketserver.ThreadingTCPServer):
    """Serve a local target over the verification protocol (``port=0`` picks a free port)."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, model: TargetModel, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.model = model

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "ModelServer":
        threading.Thread(target=self.serve_forever, daemon=True).start()
        return self
