from __future__ import annotations

import numpy as np
import pytest

from aded.engine import DecodeSession, SessionConfig, collect_metrics, decode
from aded.matrix_io import to_bytes
from aded.mcts import SearchConfig
from aded.target import ModelServer, RemoteModel

FAST = SearchConfig(iterations=40)


def prompts(language, n=8, length=8, seed=0):
    rng = np.random.default_rng(seed)
    return [language.sample(length, rng) for _ in range(n)]


@pytest.mark.parametrize("strategy", ["aded", "greedy-draft"])
@pytest.mark.parametrize("adaptive", [True, False])
def test_output_matches_autoregressive(small_setup, language, strategy, adaptive):
    matrix, oracle = small_setup
    for p in prompts(language):
        ref, _ = decode(p, matrix, oracle, SessionConfig(strategy="autoregressive", max_new_tokens=30))
        out, m = decode(p, matrix, oracle, SessionConfig(FAST, strategy=strategy, adaptive=adaptive, max_new_tokens=30))
        assert out == ref
        assert m.emitted == 30 == sum(m.accept_lengths)


def test_autoregressive_metrics_are_exactly_one(small_setup, language):
    matrix, oracle = small_setup
    _, m = decode(prompts(language)[0], matrix, oracle, SessionConfig(strategy="autoregressive", max_new_tokens=17))
    assert m.forward_passes == 17 and m.accept_length_avg == 1.0 and m.pass_reduction == 1.0


def test_speculation_saves_passes(small_setup, language):
    matrix, oracle = small_setup
    _, m = decode(prompts(language)[1], matrix, oracle, SessionConfig(FAST, max_new_tokens=40))
    assert m.forward_passes < 40
    assert m.emitted / m.forward_passes == pytest.approx(m.accept_length_avg, abs=1e-12)


def test_stop_token_is_emitted_and_ends_the_session(small_setup, language):
    matrix, oracle = small_setup
    p = prompts(language)[2]
    ref, _ = decode(p, matrix, oracle, SessionConfig(strategy="autoregressive", max_new_tokens=30))
    stop = ref[5]
    out, _ = decode(p, matrix, oracle, SessionConfig(FAST, max_new_tokens=30, stop_tokens={stop}))
    assert out == ref[: ref.index(stop) + 1]


def test_budget_truncates_the_last_step(small_setup, language):
    matrix, oracle = small_setup
    out, m = decode(prompts(language)[3], matrix, oracle, SessionConfig(FAST, max_new_tokens=3))
    assert len(out) == 3 and m.emitted == 3


def test_short_prompt_falls_back_to_single_token_steps(small_setup):
    matrix, oracle = small_setup
    session = DecodeSession([4], matrix, oracle, SessionConfig(FAST, max_new_tokens=5))
    assert len(session.step()) == 1
    session.run()
    assert len(session.output) == 5


def test_adaptive_session_leaves_the_shared_matrix_alone(small_setup, language):
    matrix, oracle = small_setup
    before = to_bytes(matrix)
    decode(prompts(language)[4], matrix, oracle, SessionConfig(FAST, adaptive=True, max_new_tokens=40))
    assert to_bytes(matrix) == before


def test_decoding_is_deterministic(small_setup, language):
    matrix, oracle = small_setup
    cfg = SessionConfig(FAST, max_new_tokens=30, seed=9)
    p = prompts(language)[5]
    assert decode(p, matrix, oracle, cfg) == decode(p, matrix, oracle, cfg)


def test_sampled_verification_is_reproducible(small_setup, language):
    matrix, oracle = small_setup
    cfg = SessionConfig(FAST, max_new_tokens=30, verification="sampled", temperature=0.8, top_p=0.95, seed=3)
    p = prompts(language)[6]
    a, ma = decode(p, matrix, oracle, cfg)
    b, mb = decode(p, matrix, oracle, cfg)
    assert a == b and ma == mb and len(a) == 30


def test_remote_target_gives_the_same_output(small_setup, language):
    matrix, oracle = small_setup
    server = ModelServer(oracle).start()
    try:
        p = prompts(language)[7]
        cfg = SessionConfig(FAST, max_new_tokens=20)
        with RemoteModel(server.address, top_m=64) as remote:
            assert decode(p, matrix, remote, cfg)[0] == decode(p, matrix, oracle, cfg)[0]
    finally:
        server.shutdown()
        server.server_close()


def test_collect_metrics_speedup(small_setup, language):
    matrix, oracle = small_setup
    p = prompts(language)[0]
    session = DecodeSession(p, matrix, oracle, SessionConfig(FAST, max_new_tokens=20))
    session.run()
    assert collect_metrics(session).speedup == session.metrics.pass_reduction
    base = DecodeSession(p, matrix, oracle, SessionConfig(strategy="autoregressive", max_new_tokens=20))
    base.run()
    m = collect_metrics(session, base)
    assert m.speedup == pytest.approx(base.metrics.wall_seconds / session.metrics.wall_seconds)
    assert "phase_seconds" not in m.to_dict() and "phase_seconds" in m.to_dict(timings=True)


def test_config_validation():
    with pytest.raises(ValueError):
        SessionConfig(max_new_tokens=0)
    with pytest.raises(ValueError):
        SessionConfig(strategy="beam")
