from __future__ import annotations

import pytest

from aded.corpus import TrigramCounts
from aded.synthetic import SyntheticLanguage
from aded.target import OracleModelSpec, build_oracle
from aded.trigram import finalize_matrix


def matrix_from(docs, t=1, vocab_size=None, backoff=True):
    counts = TrigramCounts()
    for d in docs:
        counts.add_document(d)
    return finalize_matrix(counts, t, vocab_size=vocab_size, backoff=backoff)


@pytest.fixture(scope="session")
def language():
    return SyntheticLanguage(30, (0.6, 0.3, 0.1), seed=4)


@pytest.fixture(scope="session")
def small_setup(language):
    docs = language.corpus(40, 80, seed=1)
    matrix = matrix_from(docs, t=1, vocab_size=30)
    oracle = build_oracle(OracleModelSpec(3, vocab_size=30), language.corpus(80, 80, seed=2))
    return matrix, oracle


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
