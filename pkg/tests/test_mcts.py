from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aded.mcts import (
    DraftSearch,
    SearchConfig,
    SearchNode,
    exploration_constant,
    greedy_chain,
    puct_score,
    run_search,
    visit_distribution,
)
from aded.trigram import ContinuationTable, TrigramMatrix

from oracles import brute_force_best, random_toy_matrix


def test_exploration_constant_at_zero_visits():
    assert abs(exploration_constant(0, 32, 8) - (32 + math.log(9 / 8))) < 1e-12


@given(st.integers(0, 10**6), st.floats(0.1, 100), st.floats(0.1, 100))
def test_exploration_constant_closed_form(n, c1, c2):
    assert exploration_constant(n, c1, c2) == pytest.approx(c1 + math.log((n + c2 + 1) / c2), rel=1e-12)


@given(st.floats(-50, 5), st.floats(0, 1), st.integers(0, 100))
def test_puct_reduces_to_q_without_parent_visits(q, prior, visits):
    assert puct_score(q, prior, visits, 0, 32, 8) == q


def test_puct_by_hand():
    e = 32 + math.log((16 + 9) / 8)
    assert puct_score(-1.0, 0.5, 3, 16, 32, 8) == pytest.approx(-1.0 + e * 0.5 * 4 / 4, abs=1e-12)


def _node_with_visits(visits):
    root = SearchNode(0, 1)
    for i, n in enumerate(visits):
        child = SearchNode(1, i, 1 / len(visits), root, 1)
        child.visits = n
        root.children.append(child)
    return root


@pytest.mark.parametrize("k", [1, 2, 7])
def test_visit_distribution_uniform_at_zero_visits(k):
    assert visit_distribution(_node_with_visits([0] * k)) == {i: 1 / k for i in range(k)}


def test_visit_distribution_by_hand():
    assert visit_distribution(_node_with_visits([3, 0, 1])) == pytest.approx({0: 4 / 7, 1: 1 / 7, 2: 2 / 7})


def test_visit_distribution_sums_to_one_on_random_nodes():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        dist = visit_distribution(_node_with_visits(rng.integers(0, 1000, size=int(rng.integers(1, 20))).tolist()))
        assert abs(math.fsum(dist.values()) - 1.0) < 1e-12


def test_visit_distribution_needs_children():
    with pytest.raises(ValueError):
        visit_distribution(SearchNode(0, 1))


def chain_matrix():
    return TrigramMatrix(5, contexts={(i, (i + 1) % 5): ContinuationTable([((i + 2) % 5, 1.0)]) for i in range(5)})


def test_deterministic_chain_yields_single_full_path():
    cands = run_search(chain_matrix(), (0, 1), SearchConfig(iterations=20, depth=4))
    assert cands[0].tokens == (2, 3, 4, 0)
    assert len(cands) == 1


def test_search_is_reproducible(small_setup):
    matrix, _ = small_setup
    cfg = SearchConfig(iterations=100, seed=5)
    a = run_search(matrix, (3, 4), cfg, step=2)
    b = run_search(matrix, (3, 4), cfg, step=2)
    assert a == b


def test_candidates_respect_limits(small_setup):
    matrix, _ = small_setup
    cfg = SearchConfig(iterations=150, depth=3, candidates=5)
    cands = run_search(matrix, (1, 2), cfg)
    assert 1 <= len(cands) <= 5
    assert all(1 <= len(c.tokens) <= 3 for c in cands)
    assert len({c.tokens for c in cands}) == len(cands)


def test_zero_iterations_gives_no_candidates(small_setup):
    assert run_search(small_setup[0], (1, 2), SearchConfig(iterations=0)) == []


def test_unknown_context_without_backoff_gives_no_candidates():
    assert run_search(chain_matrix(), (4, 4), SearchConfig(iterations=10)) == []


@pytest.mark.parametrize("selection", ["puct", "puct-classic", "uct", "ucb"])
def test_every_selection_rule_finds_the_chain(selection):
    cands = run_search(chain_matrix(), (2, 3), SearchConfig(iterations=30, selection=selection))
    assert cands[0].tokens == (4, 0, 1, 2)


def test_visit_ranking_orders_by_visits(small_setup):
    cands = run_search(small_setup[0], (1, 2), SearchConfig(iterations=200, ranking="visits"))
    visits = [c.visits for c in cands]
    assert visits == sorted(visits, reverse=True)


def test_root_statistics_are_consistent(small_setup):
    search = DraftSearch(small_setup[0], SearchConfig(iterations=120))
    search.run((1, 2))
    root = search.root
    assert root.visits == 120
    assert root.child_visits == sum(c.visits for c in root.children)
    priors = [c.prior for c in root.children]
    assert math.isclose(sum(priors), 1.0, abs_tol=1e-12)


def test_greedy_chain_follows_argmax():
    table = ContinuationTable([(3, 0.7), (4, 0.3)])
    m = TrigramMatrix(6, contexts={(1, 2): table, (2, 3): ContinuationTable([(5, 1.0)])})
    assert greedy_chain(m, (1, 2), 4) == [3, 5]


@pytest.mark.parametrize("mode", ["log-likelihood", "probability-sum"])
def test_rank_one_matches_brute_force(mode):
    rng = np.random.default_rng(42 if mode == "log-likelihood" else 43)
    for _ in range(20):
        depth = int(rng.integers(2, 5))
        matrix = random_toy_matrix(rng, depth)
        cfg = SearchConfig(iterations=2000, depth=depth, score_mode=mode)
        best = run_search(matrix, (0, 1), cfg)[0]
        assert best.tokens in brute_force_best(matrix, (0, 1), depth, mode)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_candidate_scores_are_exact_for_full_paths(seed):
    rng = np.random.default_rng(seed)
    matrix = random_toy_matrix(rng, 3)
    for cand in run_search(matrix, (0, 1), SearchConfig(iterations=400, depth=3)):
        prev, cur = 0, 1
        logp = 0.0
        for tok in cand.tokens:
            logp += math.log(matrix.lookup(prev, cur).prob(tok))
            prev, cur = cur, tok
        if len(cand.tokens) == 3 or matrix.lookup(prev, cur) is None:
            assert cand.score == pytest.approx(logp, abs=1e-9)


@pytest.mark.parametrize("kwargs", [dict(iterations=-1), dict(c2=0), dict(depth=0), dict(candidates=0), dict(score_mode="nope")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SearchConfig(**kwargs)
