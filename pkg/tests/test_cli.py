import json
import shutil
import subprocess
import sys
from importlib.resources import files

import pytest

from hrm.cli import main, read_hypotheses

TINY = "embed_dim = 8\nhidden_dim = 8\nattn_heads = 2\nattn_layers = 1\nmax_epochs = 2\nbatch_size = 16\n"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    shutil.copy(files("hrm") / "resources" / "e2e_sample.csv", root / "sample.csv")
    (root / "cfg.txt").write_text(TINY)
    assert main(["prepare", "--in", f"train={root / 'sample.csv'}", "--in", f"test={root / 'sample.csv'}",
                 "--out", str(root / "data")]) == 0
    return root


def test_prepare_writes_canonical_files(workdir, capsys):
    data = workdir / "data"
    assert sorted(p.name for p in data.iterdir()) == ["freq.tsv", "test.jsonl", "train.jsonl", "vocab.json"]
    assert len((data / "train.jsonl").read_text().splitlines()) == 32
    first = (data / "train.jsonl").read_bytes()
    assert main(["prepare", "--in", str(workdir / "sample.csv"), "--out", str(workdir / "again")]) == 0
    assert (workdir / "again" / "train.jsonl").read_bytes() == first
    assert "train: 32 DAs" in capsys.readouterr().out


def test_malformed_input_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text('mr,ref\n"name[x",hello\n')
    assert main(["prepare", "--in", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("hrm prepare: error:") and "row 2" in err and "\n" not in err


def test_missing_input_exits_nonzero(tmp_path):
    assert main(["prepare", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 2


def test_train_generate_trace_evaluate(workdir, capsys):
    run, data = workdir / "run", workdir / "data"
    assert main(["train", "--config", str(workdir / "cfg.txt"), "--data", str(data), "--out", str(run),
                 "--switch", "gumbel", "--seed", "3"]) == 0
    assert (run / "best.npz").exists() and (run / "config.json").exists()
    records = [json.loads(x) for x in (run / "records.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in records] == [1, 2]

    gen = workdir / "gen"
    assert main(["generate", "--checkpoint", str(run), "--data", str(data), "--beam", "3", "--topk", "2",
                 "--out", str(gen)]) == 0
    hyps = read_hypotheses(gen / "hypotheses.txt")
    assert len(hyps) == 32
    topk = [json.loads(x) for x in (gen / "topk.jsonl").read_text().splitlines()]
    assert all(1 <= len(t["hypotheses"]) <= 2 for t in topk)

    tr = workdir / "tr"
    assert main(["trace", "--checkpoint", str(run / "best.npz"), "--data", str(data), "--beam", "3",
                 "--out", str(tr)]) == 0
    assert len((tr / "traces.jsonl").read_text().splitlines()) == 32

    ev = workdir / "ev"
    capsys.readouterr()
    assert main(["evaluate", "--data", str(data), "--hyp", str(gen / "hypotheses.txt"),
                 "--traces", str(tr / "traces.jsonl"), "--out", str(ev)]) == 0
    assert "BLEU" in capsys.readouterr().out
    report = json.loads((ev / "report.json").read_text())
    assert report["n_examples"] == 32 and 0.0 <= report["bleu"] <= 1.0


def test_dimension_mismatch_is_reported(workdir, tmp_path, capsys):
    if not (workdir / "run" / "best.npz").exists():
        pytest.skip("needs the training run")
    other = tmp_path / "big.txt"
    other.write_text(TINY.replace("hidden_dim = 8", "hidden_dim = 16") + "switch = gumbel\n")
    code = main(["generate", "--checkpoint", str(workdir / "run"), "--config", str(other), "--data",
                 str(workdir / "data"), "--out", str(tmp_path / "g")])
    assert code == 2
    assert "hidden_dim" in capsys.readouterr().err


def test_resume_without_checkpoint(workdir, tmp_path):
    assert main(["train", "--data", str(workdir / "data"), "--out", str(tmp_path / "r"), "--resume"]) == 2


def test_same_seed_same_outputs(workdir, tmp_path):
    outs = []
    for k in range(2):
        run = tmp_path / f"run{k}"
        assert main(["train", "--config", str(workdir / "cfg.txt"), "--data", str(workdir / "data"),
                     "--out", str(run), "--switch", "vq", "--seed", "7", "--epochs", "1"]) == 0
        assert main(["generate", "--checkpoint", str(run), "--data", str(workdir / "data"), "--beam", "2",
                     "--topk", "1", "--out", str(run / "gen")]) == 0
        records = [json.loads(x) for x in (run / "records.jsonl").read_text().splitlines()]
        for r in records:
            r.pop("elapsed")  # wall clock
        outs.append((records, (run / "gen" / "hypotheses.txt").read_bytes()))
    assert outs[0] == outs[1]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hrm", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("prepare", "train", "generate", "trace", "evaluate"):
        assert cmd in res.stdout
