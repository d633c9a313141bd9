from __future__ import annotations

import struct

import pytest

from aded.errors import (
    BadMagicError,
    ChecksumMismatchError,
    MatrixFormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from aded.matrix_io import fnv1a64, from_bytes, load_matrix, save_matrix, to_bytes
from aded.trigram import AdjustPolicy

from conftest import matrix_from


@pytest.fixture
def matrix(language):
    return matrix_from(language.corpus(10, 60, seed=5), vocab_size=30)


def test_fnv1a64_reference_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_round_trip_is_byte_identical(matrix, tmp_path):
    data = to_bytes(matrix)
    back = from_bytes(data)
    assert back == matrix
    assert to_bytes(back) == data
    save_matrix(matrix, tmp_path / "m.ad3g")
    assert (tmp_path / "m.ad3g").read_bytes() == data
    assert load_matrix(tmp_path / "m.ad3g") == matrix


def test_adjusted_fork_round_trips(matrix):
    fork = matrix.fork()
    fork.adjust_from_recent([1, 2, 3, 4, 5, 1, 2, 3], AdjustPolicy())
    assert from_bytes(to_bytes(fork)) == fork


def test_no_backoff_round_trip(language):
    m = matrix_from(language.corpus(3, 30), backoff=False)
    assert not from_bytes(to_bytes(m)).has_backoff


def test_encoding_is_order_independent(language):
    docs = language.corpus(8, 40, seed=9)
    assert to_bytes(matrix_from(docs)) == to_bytes(matrix_from(docs[::-1]))


def test_bad_magic(matrix):
    data = bytearray(to_bytes(matrix))
    data[:4] = b"XXXX"
    with pytest.raises(BadMagicError):
        from_bytes(bytes(data))


def test_unsupported_version(matrix):
    data = bytearray(to_bytes(matrix))
    struct.pack_into("<H", data, 4, 99)
    with pytest.raises(UnsupportedVersionError):
        from_bytes(bytes(data))


@pytest.mark.parametrize("cut", [1, 9, 40, 200])
def test_truncation(matrix, cut):
    data = to_bytes(matrix)
    with pytest.raises(TruncatedFileError):
        from_bytes(data[: len(data) - cut])


def test_flipped_byte_fails_checksum(matrix):
    data = bytearray(to_bytes(matrix))
    for pos in (30, len(data) // 2, len(data) - 12):
        bad = bytearray(data)
        bad[pos] ^= 0x40
        with pytest.raises(ChecksumMismatchError):
            from_bytes(bytes(bad))


def test_trailing_bytes_rejected(matrix):
    with pytest.raises(MatrixFormatError):
        from_bytes(to_bytes(matrix) + b"\0")


def test_empty_input_rejected():
    with pytest.raises(MatrixFormatError):
        from_bytes(b"")
