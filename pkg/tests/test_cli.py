import json
import subprocess
import sys

import numpy as np
import pytest

from plmdecode import cli, lm
from plmdecode.alphabet import build_alphabet
from plmdecode.data_io import Checkpoint, save_checkpoint, write_transcripts
from plmdecode.synthetic import LanguageFamily


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    fam = LanguageFamily(3, 20, seed=1)
    for l in fam.languages:
        (d / f"{l.name}.lex").write_text(l.lexicon_tsv(), encoding="utf-8")
        write_transcripts(d / f"{l.name}.train", l.transcripts(40, 1).items())
        write_transcripts(d / f"{l.name}.test", l.transcripts(6, 2).items())
    return d


def run(d, *argv, log="runs.jsonl"):
    return cli.main(["--run-log", str(d / log), *[str(a) for a in argv]])


def records(d, log="runs.jsonl"):
    return [json.loads(l) for l in (d / log).read_text().splitlines()]


@pytest.fixture(scope="module")
def trained(files):
    d = files
    code = run(d, "train", "--corpus", f"L0={d/'L0.train'}", "--corpus", f"L1={d/'L1.train'}",
               "--lexicon", f"L0={d/'L0.lex'}", "--lexicon", f"L1={d/'L1.lex'}",
               "--embed", 8, "--hidden", 16, "--epochs", 2, "--seed", 3, "--out", d / "m.ckpt")
    assert code == 0
    return d / "m.ckpt"


def test_train_is_reproducible_and_logged(files, trained, capsys):
    d = files
    rec = [r for r in records(d) if r["command"] == "train"][-1]
    assert rec["seed"] == 3 and rec["exit"] == 0
    assert str(trained) in rec["outputs"]
    assert rec["wall_time"] >= 0
    # replaying the logged run rewrites the checkpoint with identical bytes
    before = trained.read_bytes()
    trained.unlink()
    n = len(records(d))
    assert run(d, "replay", "--log", d / "runs.jsonl", "--index", n - 1) == 0
    assert trained.read_bytes() == before
    assert records(d)[-2]["outputs"] == rec["outputs"]


def test_ppl_two_decimals(files, trained, capsys):
    d = files
    assert run(d, "ppl", "--ckpt", trained, "--corpus", d / "L0.test", "--lexicon", d / "L0.lex",
               "--lang", "L0") == 0
    out = capsys.readouterr().out.strip()
    assert out.count(".") == 1 and len(out.split(".")[1]) == 2


def test_ppl_uniform_fixture_prints_mask_size(tmp_path, capsys):
    a = build_alphabet({"x": {"a", "b", "c"}})
    save_checkpoint(Checkpoint(a, lm.zero_params(len(a), 4, 4, a.hash)), tmp_path / "u.ckpt")
    (tmp_path / "lex").write_text("ab\ta b\nc\tc\n")
    (tmp_path / "c.txt").write_text("u1\tab c ab\nu2\tc\n")
    assert run(tmp_path, "ppl", "--ckpt", tmp_path / "u.ckpt", "--corpus", tmp_path / "c.txt",
               "--lexicon", tmp_path / "lex") == 0
    assert capsys.readouterr().out.strip() == "5.00"


@pytest.fixture(scope="module")
def pipeline(files, trained):
    d = files
    assert run(d, "adapt", "--ckpt", trained, "--target-corpus", d / "L2.train",
               "--target-lexicon", d / "L2.lex", "--target-lang", "L2", "--fraction", 0.5,
               "--epochs", 2, "--out", d / "a.ckpt") == 0
    assert run(d, "synth", "--corpus", d / "L2.test", "--lexicon", d / "L2.lex", "--lang", "L2",
               "--noise", 0, "--out-dir", d / "clean") == 0
    assert run(d, "synth", "--corpus", d / "L2.test", "--lexicon", d / "L2.lex", "--lang", "L2",
               "--noise", 0.4, "--binary", "--seed", 2, "--out-dir", d / "noisy") == 0
    return d


def test_end_to_end_noise_free_zero_wer(pipeline, capsys):
    d = pipeline
    assert run(d, "decode", "--mode", "lexicon", "--post-dir", d / "clean", "--ckpt", d / "a.ckpt",
               "--lexicon", d / "L2.lex", "--lang", "L2", "--out", d / "hyp.txt") == 0
    capsys.readouterr()
    assert run(d, "wer", "--ref", d / "L2.test", "--hyp", d / "hyp.txt") == 0
    assert capsys.readouterr().out.startswith("WER 0.0 ")
    rec = records(d)[-2]
    assert rec["command"] == "decode"
    assert "beam=40 α=1.0 β=0.35" in rec["summary"]


def test_decode_independent_of_jobs(pipeline):
    d = pipeline
    outs = []
    for jobs in (1, 3):
        out = d / f"hyp_j{jobs}.txt"
        assert run(d, "decode", "--mode", "lexicon", "--post-dir", d / "noisy", "--ckpt",
                   d / "a.ckpt", "--lexicon", d / "L2.lex", "--lang", "L2", "--beam", 8,
                   "--jobs", jobs, "--out", out) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    ids = [l.split("\t")[0] for l in outs[0].splitlines()]
    assert ids == sorted(ids)


def test_open_and_greedy_modes_and_scoring(pipeline, capsys):
    d = pipeline
    assert run(d, "decode", "--mode", "greedy", "--post-dir", d / "noisy",
               "--out", d / "greedy.txt") == 0
    assert run(d, "decode", "--mode", "open", "--post-dir", d / "noisy", "--ckpt", d / "a.ckpt",
               "--lang", "L2", "--beam", 8, "--out", d / "open.txt") == 0
    assert run(d, "decode", "--mode", "lexicon", "--post-dir", d / "noisy", "--ckpt", d / "a.ckpt",
               "--lexicon", d / "L2.lex", "--lang", "L2", "--beam", 8, "--out", d / "lex.txt") == 0
    capsys.readouterr()
    assert run(d, "bootstrap", "--ref", d / "L2.test", "--hyp1", d / "lex.txt",
               "--hyp2", d / "greedy.txt", "--resamples", 2000, "--seed", 1) == 0
    out = capsys.readouterr().out
    assert "probability of improvement" in out
    p = float(out.split(":")[1].split()[0])
    assert 0.5 <= p <= 1.0


def test_small_commands(files, trained, capsys):
    d = files
    assert run(d, "oov", "--train-corpus", d / "L0.train", "--eval-corpus", d / "L0.test") == 0
    assert capsys.readouterr().out.startswith("OOV ")
    assert run(d, "params", "--ckpt", trained) == 0
    ck = lm.param_count(len(cli.data_io.load_checkpoint(trained).alphabet), 8, 16)
    assert capsys.readouterr().out.strip() == str(ck)
    assert run(d, "sample", "--ckpt", trained, "--lang", "L1", "--seed", 5, "--count", 3) == 0
    first = capsys.readouterr().out
    assert run(d, "sample", "--ckpt", trained, "--lang", "L1", "--seed", 5, "--count", 3) == 0
    assert capsys.readouterr().out == first
    assert run(d, "alphabet", "dump", "--ckpt", trained) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[-1].split("\t")[1:] == ["<sos>_L1", "sos", "L1"]


def test_validate_exit_codes(files, trained, capsys):
    d = files
    assert run(d, "validate", "--kind", "checkpoint", trained) == 0
    (d / "junk.ckpt").write_bytes(b"junk")
    assert run(d, "validate", "--kind", "checkpoint", trained, d / "junk.ckpt") == 2
    lines = capsys.readouterr().out.splitlines()
    assert [json.loads(l)["ok"] for l in lines[-2:]] == [True, False]


def test_usage_errors_exit_1(files, capsys):
    d = files
    assert run(d) == 1
    with pytest.raises(SystemExit) as e:
        run(d, "decode", "--post-dir", d)
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        run(d, "frobnicate")
    assert e.value.code == 1
    assert run(d, "train", "--corpus", "nolang", "--lexicon", "x=y", "--out", d / "o") == 1
    assert run(d, "decode", "--mode", "lexicon", "--post-dir", d, "--out", d / "o") == 1


def test_data_errors_exit_2(files, trained, capsys):
    d = files
    (d / "bad.ckpt").write_bytes(b"PLMCKPT\x00 broken")
    assert run(d, "params", "--ckpt", d / "bad.ckpt") == 2
    assert run(d, "params", "--ckpt", d / "missing.ckpt") == 2
    (d / "emptydir").mkdir(exist_ok=True)
    assert run(d, "decode", "--mode", "greedy", "--post-dir", d / "emptydir", "--out", d / "o") == 2
    assert run(d, "ppl", "--ckpt", trained, "--corpus", d / "L0.test", "--lexicon", d / "L0.lex",
               "--lang", "L0", "--oov-policy", "strict") == 0
    assert run(d, "ppl", "--ckpt", trained, "--corpus", d / "L2.test", "--lexicon", d / "L0.lex",
               "--lang", "L0", "--oov-policy", "strict") == 2
    assert "error" not in capsys.readouterr().out


def test_numeric_failure_exit_3(tmp_path):
    a = build_alphabet({"x": {"a", "b"}})
    p = lm.zero_params(len(a), 2, 2, a.hash)
    p.W_out[0, 0] = np.nan
    save_checkpoint(Checkpoint(a, p), tmp_path / "nan.ckpt")
    (tmp_path / "lex").write_text("ab\ta b\n")
    (tmp_path / "c.txt").write_text("u1\tab\n")
    assert run(tmp_path, "ppl", "--ckpt", tmp_path / "nan.ckpt", "--corpus", tmp_path / "c.txt",
               "--lexicon", tmp_path / "lex") == 3
    assert records(tmp_path)[-1]["exit"] == 3


def test_help_documents_formats(capsys):
    with pytest.raises(SystemExit):
        cli.main(["decode", "--help"])
    out = capsys.readouterr().out
    assert "CTCPOST v1" in out and "word<TAB>phoneme" in out
    assert "--ins-penalty" in out and "--jobs" in out


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "plmdecode", "--run-log", "", "--version"],
                       capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode == 0 and r.stdout.strip()
