"""Corpus ingestion: tokenization, vocabularies and tri-gram counting."""

from __future__ import annotations

import json
import struct
import unicodedata
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import MalformedInputError


class TokenizerMode(str, Enum):
    WHITESPACE = "whitespace-word"
    BYTE = "byte-level"
    PRETOKENIZED = "external-pretokenized"


class Vocabulary:
    """Bijective surface <-> id map.

    Ids are handed out by first occurrence while the vocabulary is mutable.
    ``freeze()`` appends the unknown and start sentinels; their surfaces
    carry a leading space so whitespace tokenization can never produce them.
    """

    UNK = " <unk>"
    START = " <s>"

    def __init__(self, surfaces: Iterable[str] = (), mutable: bool = True):
        self._surfaces: list[str] = []
        self._ids: dict[str, int] = {}
        self.unk_id: int | None = None
        self.start_id: int | None = None
        self.mutable = True
        for s in surfaces:
            self.add(s)
        self.mutable = mutable

    @classmethod
    def byte_level(cls) -> "Vocabulary":
        vocab = cls(chr(b) for b in range(256))
        vocab.freeze()
        return vocab

    def __len__(self) -> int:
        return len(self._surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._ids

    def add(self, surface: str) -> int:
        idx = self._ids.get(surface)
        if idx is not None:
            return idx
        if not self.mutable:
            raise ValueError("vocabulary is frozen")
        idx = len(self._surfaces)
        self._surfaces.append(surface)
        self._ids[surface] = idx
        return idx

    def id_of(self, surface: str) -> int:
        idx = self._ids.get(surface)
        if idx is not None:
            return idx
        if self.mutable:
            return self.add(surface)
        if self.unk_id is None:
            raise KeyError(surface)
        return self.unk_id

    def surface(self, idx: int) -> str:
        return self._surfaces[idx]

    def freeze(self) -> "Vocabulary":
        if self.unk_id is None:
            self.mutable = True
            self.unk_id = self.add(self.UNK)
            self.start_id = self.add(self.START)
        self.mutable = False
        return self

    def to_json(self, mode: TokenizerMode | str) -> str:
        return json.dumps(
            {
                "mode": TokenizerMode(mode).value,
                "surfaces": self._surfaces,
                "unk_id": self.unk_id,
                "start_id": self.start_id,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, text: str) -> tuple["Vocabulary", TokenizerMode]:
        data = json.loads(text)
        vocab = cls()
        vocab._surfaces = list(data["surfaces"])
        vocab._ids = {s: i for i, s in enumerate(vocab._surfaces)}
        vocab.unk_id = data.get("unk_id")
        vocab.start_id = data.get("start_id")
        vocab.mutable = False
        return vocab, TokenizerMode(data["mode"])


def normalize(text: str) -> str:
    """NFC plus whitespace collapsing; the canonical whitespace-word form."""
    return " ".join(unicodedata.normalize("NFC", text).split())


def tokenize(text, vocab: Vocabulary, mode: TokenizerMode | str = TokenizerMode.WHITESPACE) -> list[int]:
    mode = TokenizerMode(mode)
    if mode is TokenizerMode.WHITESPACE:
        return [vocab.id_of(s) for s in normalize(text).split(" ") if s]
    if mode is TokenizerMode.BYTE:
        if isinstance(text, str):
            text = unicodedata.normalize("NFC", text).encode("utf-8")
        return list(bytes(text))
    ids = [int(t) for t in text]
    size = len(vocab)
    for t in ids:
        if t < 0 or t >= size:
            raise MalformedInputError(f"token id {t} outside vocabulary of size {size}")
    return ids


def detokenize(ids: Sequence[int], vocab: Vocabulary, mode: TokenizerMode | str = TokenizerMode.WHITESPACE) -> str:
    mode = TokenizerMode(mode)
    if mode is TokenizerMode.BYTE:
        return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")
    if mode is TokenizerMode.PRETOKENIZED:
        return " ".join(str(i) for i in ids)
    return " ".join(vocab.surface(i) for i in ids)


@dataclass(frozen=True)
class CorpusStats:
    documents: int
    tokens: int
    distinct_trigrams: int
    distinct_contexts: int

    def as_dict(self) -> dict:
        return {
            "documents": self.documents,
            "tokens": self.tokens,
            "distinct_trigrams": self.distinct_trigrams,
            "distinct_contexts": self.distinct_contexts,
        }


class TrigramCounts:
    """Exact, unpruned n-gram counts accumulated over documents.

    Holds the tri-gram table keyed by two-token context, the context totals,
    and the bi-gram/unigram tables that back off unknown contexts.
    """

    def __init__(self):
        self.trigrams: dict[tuple[int, int], Counter] = {}
        self.contexts: Counter = Counter()
        self.bigrams: dict[int, Counter] = {}
        self.unigrams: Counter = Counter()
        self.documents = 0
        self.tokens = 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigramCounts):
            return NotImplemented
        return (
            self.trigrams == other.trigrams
            and self.contexts == other.contexts
            and self.bigrams == other.bigrams
            and self.unigrams == other.unigrams
            and self.documents == other.documents
            and self.tokens == other.tokens
        )

    def count(self, a: int, b: int, c: int) -> int:
        table = self.trigrams.get((a, b))
        return table[c] if table else 0

    def add_document(self, tokens: Sequence[int]) -> "TrigramCounts":
        self.documents += 1
        self.tokens += len(tokens)
        return count_trigrams(tokens, self)

    def merge(self, other: "TrigramCounts") -> "TrigramCounts":
        for ctx, table in other.trigrams.items():
            self.trigrams.setdefault(ctx, Counter()).update(table)
        self.contexts.update(other.contexts)
        for prev, table in other.bigrams.items():
            self.bigrams.setdefault(prev, Counter()).update(table)
        self.unigrams.update(other.unigrams)
        self.documents += other.documents
        self.tokens += other.tokens
        return self

    def stats(self) -> CorpusStats:
        return CorpusStats(
            documents=self.documents,
            tokens=self.tokens,
            distinct_trigrams=sum(len(t) for t in self.trigrams.values()),
            distinct_contexts=len(self.trigrams),
        )


def count_trigrams(tokens: Sequence[int], accumulator: TrigramCounts) -> TrigramCounts:
    """Slide a width-3 window over one document; shorter documents add nothing."""
    n = len(tokens)
    if n < 3:
        return accumulator
    tri = accumulator.trigrams
    bi = accumulator.bigrams
    for i in range(2, n):
        ctx = (tokens[i - 2], tokens[i - 1])
        table = tri.get(ctx)
        if table is None:
            table = tri[ctx] = Counter()
        table[tokens[i]] += 1
        accumulator.contexts[ctx] += 1
    for i in range(1, n):
        table = bi.get(tokens[i - 1])
        if table is None:
            table = bi[tokens[i - 1]] = Counter()
        table[tokens[i]] += 1
    accumulator.unigrams.update(tokens)
    return accumulator


def _count_shard(docs: list[list[int]]) -> TrigramCounts:
    acc = TrigramCounts()
    for doc in docs:
        acc.add_document(doc)
    return acc


def count_corpus(documents: Iterable[Sequence[int]], workers: int = 1) -> TrigramCounts:
    """Count many tokenized documents, optionally sharded over processes."""
    docs = [list(d) for d in documents]
    if workers <= 1 or len(docs) < 2 * workers:
        return _count_shard(docs)
    shards = [docs[i::workers] for i in range(workers)]
    total = TrigramCounts()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_count_shard, shards):
            total.merge(part)
    return total


def read_documents(path: str | Path, per_line: bool = False) -> Iterator[str]:
    text = Path(path).read_text(encoding="utf-8")
    if per_line:
        for line in text.splitlines():
            if line.strip():
                yield line
    else:
        yield text


_U32 = struct.Struct("<I")


def write_pretokenized(path: str | Path, documents: Iterable[Sequence[int]]) -> None:
    with open(path, "wb") as fh:
        for doc in documents:
            fh.write(_U32.pack(len(doc)))
            fh.write(struct.pack(f"<{len(doc)}I", *doc))


def read_pretokenized(path: str | Path) -> Iterator[list[int]]:
    data = Path(path).read_bytes()
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise MalformedInputError(f"{path}: truncated record header at byte {pos}")
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        end = pos + 4 * n
        if end > len(data):
            raise MalformedInputError(f"{path}: record claims {n} ids but file ends early")
        yield list(struct.unpack_from(f"<{n}I", data, pos))
        pos = end
