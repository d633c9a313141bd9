from __future__ import annotations

import json
import subprocess
import sys

import pytest

from aded.cli import main
from aded.synthetic import SyntheticLanguage


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    docs = SyntheticLanguage(25, seed=2).corpus(40, 80, seed=1)
    path = root / "train.txt"
    path.write_text("\n".join(" ".join(f"w{t}" for t in d) for d in docs), encoding="utf-8")
    return root, path


@pytest.fixture(scope="module")
def built(corpus):
    root, path = corpus
    out = root / "m.ad3g"
    assert main(["build", str(path), "-o", str(out), "--docs", "line", "--threshold", "1"]) == 0
    return root, path, out


def test_build_writes_matrix_and_vocab(built, capsys):
    root, path, out = built
    assert out.exists() and (root / "m.ad3g.vocab.json").exists()
    assert main(["build", str(path), "-o", str(root / "again.ad3g"), "--docs", "line", "--threshold", "1"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["documents"] == 40 and stats["tokens"] == 3200
    assert (root / "again.ad3g").read_bytes() == out.read_bytes()


def test_build_warns_on_empty_matrix(corpus, capsys):
    root, path = corpus
    assert main(["build", str(path), "-o", str(root / "e.ad3g"), "--docs", "line", "--threshold", "100000"]) == 0
    assert "empty" in capsys.readouterr().err


def _decode(out, path, *extra):
    return ["decode", str(out), "--prompt", "w1 w2 w3", "--target", "oracle:3", "--target-corpus", str(path),
            "--docs", "line", "--max-new-tokens", "12", "--iterations", "30", *extra]


def test_decode_output_is_reproducible(built, capsys):
    _, path, out = built
    assert main(_decode(out, path)) == 0
    first = capsys.readouterr().out
    assert main(_decode(out, path)) == 0
    assert capsys.readouterr().out == first
    result = json.loads(first.splitlines()[-1])
    assert len(result["tokens"]) == 12
    assert result["metrics"]["emitted"] == 12
    assert first.splitlines()[0].strip() == result["text"]


def test_decode_strategies_agree(built, capsys):
    _, path, out = built
    texts = []
    for strategy in ("aded", "autoregressive", "greedy-draft"):
        assert main(_decode(out, path, "--strategy", strategy, "--json")) == 0
        texts.append(json.loads(capsys.readouterr().out)["text"])
    assert texts[0] == texts[1] == texts[2]


def test_decode_with_timings(built, capsys):
    _, path, out = built
    assert main(_decode(out, path, "--timings", "--json")) == 0
    metrics = json.loads(capsys.readouterr().out)["metrics"]
    assert "wall_seconds" in metrics and metrics["speedup"] > 0


def test_decode_scripted_target(built, tmp_path, capsys):
    _, _, out = built
    script = tmp_path / "s.json"
    script.write_text(json.dumps({"default": 0}))
    assert main(["decode", str(out), "--prompt", "w1 w2", "--target", f"scripted:{script}", "--max-new-tokens", "4", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["tokens"] == [0, 0, 0, 0]


def test_inspect(built, capsys):
    _, _, out = built
    assert main(["inspect", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["contexts"] > 0 and info["backoff"] is True
    assert main(["inspect", str(out), "--context", "w1", "w2", "--top", "2"]) == 0
    assert len(json.loads(capsys.readouterr().out)["continuations"]) <= 2


def test_corrupted_matrix_is_reported(built, tmp_path, capsys):
    _, _, out = built
    bad = tmp_path / "bad.ad3g"
    data = bytearray(out.read_bytes())
    data[40] ^= 1
    bad.write_bytes(bytes(data))
    assert main(["inspect", str(bad)]) == 1
    assert "checksum" in capsys.readouterr().err


def test_bench_command(tmp_path, capsys):
    scenario = tmp_path / "s.txt"
    scenario.write_text("vocab = 15\nmatrix_docs = 10\nprompts = 2\nmax_new_tokens = 6\niterations = 10\n")
    report = tmp_path / "r.json"
    assert main(["bench", str(scenario), "--json", str(report)]) == 0
    assert "autoregressive" in capsys.readouterr().out
    assert json.loads(report.read_text())["rows"]


def test_pretokenized_and_byte_builds(tmp_path, capsys):
    from aded.corpus import write_pretokenized

    write_pretokenized(tmp_path / "d.bin", [[1, 2, 3, 1, 2, 3, 1, 2, 4]])
    assert main(["build", str(tmp_path / "d.bin"), "-o", str(tmp_path / "p.ad3g"), "--tokenizer", "external-pretokenized", "--threshold", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["vocab_size"] == 5 + 2
    (tmp_path / "t.txt").write_text("abcabcabd")
    assert main(["build", str(tmp_path / "t.txt"), "-o", str(tmp_path / "b.ad3g"), "--tokenizer", "byte-level", "--threshold", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["vocab_size"] == 258


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "aded", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "decode" in proc.stdout
