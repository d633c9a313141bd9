"""Binary AD3G matrix files.

Layout, all integers little-endian::

    magic "AD3G" | u16 version | u32 vocab size | u8 flags | u64 context count
    per context (ascending ids): u32 prev | u32 cur | u16 n | n x (u32 token, f64 weight)
    if flags & BACKOFF:
        u32 bigram count, per bigram (ascending): u32 prev | u16 n | entries
        u16 unigram n | entries
    u64 FNV-1a checksum of every preceding byte
"""

from __future__ import annotations

import struct
from pathlib import Path

from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    MatrixFormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .trigram import ContinuationTable, TrigramMatrix

MAGIC = b"AD3G"
VERSION = 1
FLAG_BACKOFF = 0x01

_HEADER = struct.Struct("<4sHIBQ")
_CTX = struct.Struct("<IIH")
_BIGRAM = struct.Struct("<IH")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_ENTRY = struct.Struct("<Id")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


def _pack_table(out: bytearray, table: ContinuationTable) -> None:
    for tok, w in zip(table.tokens, table.weights):
        out += _ENTRY.pack(tok, w)


def to_bytes(matrix: TrigramMatrix) -> bytes:
    flags = FLAG_BACKOFF if matrix.has_backoff else 0
    out = bytearray(_HEADER.pack(MAGIC, VERSION, matrix.vocab_size, flags, len(matrix.contexts)))
    for (a, b) in sorted(matrix.contexts):
        table = matrix.contexts[(a, b)]
        if len(table) > 0xFFFF:
            raise ValueError("continuation table too large for the file format")
        out += _CTX.pack(a, b, len(table))
        _pack_table(out, table)
    if flags & FLAG_BACKOFF:
        out += _U32.pack(len(matrix.bigrams))
        for prev in sorted(matrix.bigrams):
            table = matrix.bigrams[prev]
            out += _BIGRAM.pack(prev, len(table))
            _pack_table(out, table)
        uni = matrix.unigrams
        out += _U16.pack(0 if uni is None else len(uni))
        if uni is not None:
            _pack_table(out, uni)
    out += _U64.pack(fnv1a64(out))
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes, end: int):
        self.data = data
        self.pos = 0
        self.end = end

    def take(self, st: struct.Struct) -> tuple:
        if self.pos + st.size > self.end:
            raise TruncatedFileError(f"file ends inside a record at byte {self.pos}")
        vals = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return vals

    def table(self, n: int, retention: int | None) -> ContinuationTable:
        items = [self.take(_ENTRY) for _ in range(n)]
        if not items or any(not (w > 0) for _, w in items):
            raise MatrixFormatError("continuation table is empty or holds a non-positive weight")
        return ContinuationTable(items, retention=None)


def from_bytes(data: bytes, retention: int = 64) -> TrigramMatrix:
    if len(data) < _HEADER.size + 8:
        if data[:4] and data[:4] != MAGIC[: len(data[:4])]:
            raise BadMagicError("not an AD3G matrix file")
        raise TruncatedFileError("file shorter than header plus checksum")
    magic, version, vocab_size, flags, n_ctx = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    body_end = len(data) - 8
    (stored,) = _U64.unpack_from(data, body_end)
    checksum_ok = fnv1a64(data[:body_end]) == stored

    reader = _Reader(data, body_end)
    reader.pos = _HEADER.size
    try:
        contexts = {}
        for _ in range(n_ctx):
            a, b, n = reader.take(_CTX)
            contexts[(a, b)] = reader.table(n, retention)
        bigrams, unigrams = {}, None
        if flags & FLAG_BACKOFF:
            (n_bi,) = reader.take(_U32)
            for _ in range(n_bi):
                prev, n = reader.take(_BIGRAM)
                bigrams[prev] = reader.table(n, retention)
            (n_uni,) = reader.take(_U16)
            if n_uni:
                unigrams = reader.table(n_uni, retention)
    except TruncatedFileError:
        # a short structure with a bad checksum is a truncation; any other
        # parse failure under a bad checksum is corruption
        raise
    except MatrixFormatError:
        if not checksum_ok:
            raise ChecksumMismatchError("checksum mismatch") from None
        raise
    if not checksum_ok or reader.pos != body_end:
        raise ChecksumMismatchError("checksum mismatch")
    return TrigramMatrix(vocab_size, threshold=0, retention=retention, contexts=contexts, bigrams=bigrams, unigrams=unigrams)


def save_matrix(matrix: TrigramMatrix, destination: str | Path) -> None:
    Path(destination).write_bytes(to_bytes(matrix))


def load_matrix(source: str | Path, retention: int = 64) -> TrigramMatrix:
    return from_bytes(Path(source).read_bytes(), retention)
